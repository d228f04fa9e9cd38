"""Fundamental solution of d_t - mu a(x) d_xx on the periodic unit interval.

Construction: freeze the coefficient at the evaluation point x to obtain the
parametrix P(x, y, t), measure its defect Q = L_x P, and correct it through
the Volterra equation

    psi(t) = P(t) - int_0^t psi(t - t') Q(t') dt'

(kernels compose over the middle variable with the grid weight h).  The
correction R = psi - P vanishes like sqrt(t), so it is stored on nodes
t_j = T (j / M)^2, uniform in sigma = sqrt(t), and interpolated by cubic
Lagrange polynomials in sigma.  Time integrals are taken in sigma with
Gauss-Legendre panels graded geometrically toward both ends.

On the grid the parametrix is the band-limited kernel
    P[x, y](t) = sum_k exp(-t mu a(x) (2 pi k)^2) exp(2 pi i k (x - y)),
which has unit mass and reduces to the identity (divided by h) at t = 0;
with constant a it is exact and Q vanishes identically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

ROUNDING_TAIL = 1e-14


# --------------------------------------------------------------------------
# continuous frozen-coefficient kernel


def local_parametrix(x, y, t, a_x, mu: float, tail: float = ROUNDING_TAIL) -> np.ndarray:
    """Periodised Gaussian (4 pi mu a(x) t)^(-1/2) exp(-|x - y + m|^2 / (4 mu a(x) t)) summed over images m."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("parametrix needs t > 0")
    x, y, t, a_x = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), t, np.asarray(a_x, float))
    var = 4.0 * mu * a_x * t
    r = (x - y + 0.5) % 1.0 - 0.5
    images = int(np.ceil(np.sqrt(var.max() * np.log(1.0 / tail)))) + 1
    total = np.zeros_like(r)
    for m in range(-images, images + 1):
        total += np.exp(-((r + m) ** 2) / var)
    return total / np.sqrt(np.pi * var)


def periodic_heat_kernel(r, t, mu: float, modes: int = 200) -> np.ndarray:
    """Fourier series of the unit-coefficient periodic heat kernel."""
    r = np.asarray(r, float)
    k = np.arange(1, modes + 1)
    series = np.exp(-4 * np.pi**2 * mu * t * k**2)[None, :] * np.cos(2 * np.pi * np.outer(r.ravel(), k))
    return (1.0 + 2.0 * series.sum(axis=1)).reshape(r.shape)


# --------------------------------------------------------------------------
# discrete kernels


@dataclass
class ParametrixProblem:
    a: np.ndarray              # coefficient samples on the grid, strictly positive
    mu: float = 0.1
    T: float = 0.1
    M: int = 20
    K: int = 60                # iteration cap for the successive approximations
    tol: float = 1e-13
    panel_points: int = 10
    grading_levels: int = 16

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.a.ndim != 1 or self.a.size < 4:
            raise ValueError("coefficient must be sampled on at least 4 points")
        if np.any(self.a <= 0):
            raise ValueError("coefficient must be strictly positive")
        if not self.mu > 0 or not self.T > 0 or self.M < 1 or self.K < 1:
            raise ValueError("need mu > 0, T > 0, M >= 1, K >= 1")

    @classmethod
    def from_function(cls, a_func, res: int, **kw) -> "ParametrixProblem":
        x = np.arange(res) / res
        return cls(np.asarray(a_func(x), float) * np.ones(res), **kw)

    @property
    def res(self) -> int:
        return self.a.size

    @property
    def h(self) -> float:
        return 1.0 / self.res

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.res) * self.h

    @property
    def times(self) -> np.ndarray:
        return self.T * (np.arange(self.M + 1) / self.M) ** 2


class DiscreteKernels:
    """Grid parametrix P(s), its defect Q(s) and the spectral second derivative."""

    def __init__(self, problem: ParametrixProblem):
        self.problem = problem
        N = problem.res
        self.N = N
        k = np.fft.fftfreq(N, d=1.0 / N)
        self.k2 = (2 * np.pi * k) ** 2
        idx = np.arange(N)
        self.offset = (idx[:, None] - idx[None, :]) % N          # x - y
        column = np.real(np.fft.ifft(-self.k2))                # second-derivative stencil
        self.D2 = column[self.offset]                            # exactly circulant
        self.scaled_a = problem.mu * problem.a

    def profile(self, s: float) -> np.ndarray:
        """G[x, r] = sum_k exp(-s mu a(x) (2 pi k)^2) exp(2 pi i k r / N)."""
        E = np.exp(-s * np.outer(self.scaled_a, self.k2))
        return np.real(np.fft.ifft(E, axis=1)) * self.N

    def parametrix(self, s: float) -> np.ndarray:
        return self.profile(s)[np.arange(self.N)[:, None], self.offset]

    def defect(self, s: float) -> np.ndarray:
        """Q = d_s P - mu a(x) D2 P.

        d_s P is mu a(x) times the second derivative of the frozen profile,
        sum_z D2[x, z] G[x, z - y]; with D2 circulant this is the gathered
        product (D2 G^T)[x - y, x], so Q costs two matrix products.
        """
        G = self.profile(s)
        rows = np.arange(self.N)[:, None]
        P = G[rows, self.offset]
        frozen = (self.D2 @ G.T)[self.offset, rows]
        return self.scaled_a[:, None] * (frozen - self.D2 @ P)


def lagrange_weights(nodes: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights on `nodes` (len 4 or fewer) evaluated at points `at`."""
    at = np.asarray(at, float)
    W = np.ones((len(at), len(nodes)))
    for j, xj in enumerate(nodes):
        for m, xm in enumerate(nodes):
            if m != j:
                W[:, j] *= (at - xm) / (xj - xm)
    return W


def _graded_panels(a: float, b: float, toward_a: bool, toward_b: bool, levels: int,
                   ratio: float = 0.35) -> list[tuple[float, float]]:
    """Split [a, b] into panels shrinking geometrically toward the flagged ends."""
    edges = [a, b]
    width = b - a
    if toward_a:
        edges += [a + width * 0.5 * ratio**m for m in range(levels)]
    if toward_b:
        edges += [b - width * 0.5 * ratio**m for m in range(levels)]
    if toward_a and toward_b:
        edges.append(a + 0.5 * width)
    edges = np.unique(np.clip(edges, a, b))
    return list(zip(edges[:-1], edges[1:]))


@dataclass
class VolterraResult:
    problem: ParametrixProblem
    times: np.ndarray
    P: np.ndarray               # (M+1, N, N), P[0] = I / h
    R: np.ndarray               # correction psi - P
    iterate_differences: list[float]
    converged: bool
    sigma_nodes: np.ndarray = field(repr=False, default=None)

    @property
    def psi(self) -> np.ndarray:
        return self.P + self.R

    def correction_norm(self) -> float:
        """max |R| relative to max |P| over positive times."""
        return float(np.abs(self.R[1:]).max() / np.abs(self.P[1:]).max())

    def contraction_ratios(self) -> np.ndarray:
        d = np.asarray(self.iterate_differences)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]

    def correction_at(self, t: float) -> np.ndarray:
        sig = np.sqrt(t)
        nodes = self.sigma_nodes
        i = int(np.clip(np.searchsorted(nodes, sig) - 1, 0, len(nodes) - 2))
        stencil = np.arange(max(i - 1, 0), min(i + 3, len(nodes)))
        w = lagrange_weights(nodes[stencil], np.array([sig]))[0]
        return np.tensordot(w, self.R[stencil], axes=1)

    def psi_at(self, t: float) -> np.ndarray:
        return DiscreteKernels(self.problem).parametrix(t) + self.correction_at(t)

    def apply(self, u0: np.ndarray, m: int = -1) -> np.ndarray:
        """Solution at node m: h * sum_y psi(x, y, t_m) u0(y)."""
        return self.problem.h * self.psi[m] @ u0


def volterra_solve(problem: ParametrixProblem) -> VolterraResult:
    """Successive approximation of the correction R on the sigma-uniform time nodes."""
    kern = DiscreteKernels(problem)
    N, M, h = problem.res, problem.M, problem.h
    times = problem.times
    sig_nodes = np.sqrt(times)
    gl_x, gl_w = np.polynomial.legendre.leggauss(problem.panel_points)
    P = np.stack([kern.parametrix(t) for t in times])
    A = np.zeros((M + 1, N, N))
    B = {}
    for n in range(1, M + 1):
        tn = times[n]
        # integrate over sigma in [0, sigma_n] with s = sigma^2 = t_n - t'
        for k in range(n):
            lo, hi = sig_nodes[k], sig_nodes[k + 1]
            panels = _graded_panels(lo, hi, toward_a=(k == 0), toward_b=(k == n - 1),
                                    levels=problem.grading_levels)
            stencil = np.arange(max(k - 1, 0), min(k + 3, n + 1))
            for p_lo, p_hi in panels:
                half = 0.5 * (p_hi - p_lo)
                sig = p_lo + half * (gl_x + 1.0)
                wts = half * gl_w * 2.0 * sig                 # ds = 2 sigma d sigma
                lag = lagrange_weights(sig_nodes[stencil], sig)
                for q, (sg, w) in enumerate(zip(sig, wts)):
                    s = sg * sg
                    Qm = kern.defect(max(tn - s, 0.0))
                    A[n] += w * (kern.parametrix(s) @ Qm) * h
                    for j, lw in zip(stencil, lag[q]):
                        if j == 0:
                            continue                          # R(0) = 0
                        key = (n, int(j))
                        if key not in B:
                            B[key] = np.zeros((N, N))
                        B[key] += (w * lw) * Qm
    R = np.zeros_like(P)
    diffs = []
    converged = False
    scale = np.abs(P[1:]).max()
    for _ in range(problem.K):
        new = np.zeros_like(R)
        for n in range(1, M + 1):
            acc = -A[n]
            for (nn, j), Bm in B.items():
                if nn == n:
                    acc = acc - h * (R[j] @ Bm)
            new[n] = acc
        diff = float(np.abs(new - R).max())
        diffs.append(diff)
        R = new
        if diff <= problem.tol * scale:
            converged = True
            break
    return VolterraResult(problem, times, P, R, diffs, converged, sig_nodes)


# --------------------------------------------------------------------------
# independent reference and diagnostics


def reference_solution(problem: ParametrixProblem, u0: np.ndarray, t: float,
                       rtol: float = 1e-11, atol: float = 1e-13) -> np.ndarray:
    """Implicit (Radau) integration of u' = mu a(x) D2 u from u0 to time t."""
    kern = DiscreteKernels(problem)
    Amat = problem.mu * problem.a[:, None] * kern.D2
    sol = solve_ivp(lambda _t, u: Amat @ u, (0.0, t), np.asarray(u0, float), method="Radau",
                    jac=Amat, rtol=rtol, atol=atol)
    return sol.y[:, -1]


@dataclass
class GaussianFit:
    c: float
    c_prime: float
    max_violation: float
    samples: int


def resolved_time_window(problem: ParametrixProblem, cutoff: float = 40.0,
                         spread: float = 0.15) -> tuple[float, float]:
    """Times where the grid kernel is a resolved Gaussian of modest width.

    Lower end: the highest grid mode has decayed by exp(-cutoff).  Upper end:
    the variance 2 mu a t stays below spread^2 so periodic images are negligible.
    """
    k_top = np.pi * problem.res
    lo = cutoff / (problem.mu * problem.a.min() * k_top**2)
    hi = spread**2 / (2 * problem.mu * problem.a.max())
    return float(lo), float(hi)


def gaussian_bound_check(times: np.ndarray, kernels: np.ndarray, x: np.ndarray, t_max: float = 0.02,
                         d_max: float = 0.3, floor: float = 1e-12, t_min: float = 0.0) -> GaussianFit:
    """Fit log|psi| <= log c - 0.5 log t - c' d^2 / t on small-time, near-diagonal samples.

    c' comes from least squares of log|psi| + 0.5 log t against d^2 / t;
    c is then raised until no sample lies above the envelope.
    """
    d = np.abs((x[:, None] - x[None, :] + 0.5) % 1.0 - 0.5)
    rows_y, rows_z = [], []
    for t, K in zip(times, kernels):
        if t <= max(t_min, 0.0) or t > t_max:
            continue
        mask = (d <= d_max) & (np.abs(K) > floor)
        rows_y.append(np.log(np.abs(K[mask])) + 0.5 * np.log(t))
        rows_z.append(d[mask] ** 2 / t)
    if not rows_y:
        raise ValueError("no time node lies in the fitting window")
    y = np.concatenate(rows_y)
    z = np.concatenate(rows_z)
    slope, _ = np.polyfit(z, y, 1)
    c_prime = -slope
    log_c = float(np.max(y + c_prime * z))
    violation = float(np.max(y - (log_c - c_prime * z)))
    return GaussianFit(float(np.exp(log_c)), float(c_prime), violation, int(y.size))


def diagonal_slope(result: VolterraResult, t_max: float | None = None,
                   which: str = "diagonal") -> tuple[float, np.ndarray, np.ndarray]:
    """Log-log slope in t of max_x |psi - P| on the diagonal (or over all pairs)."""
    times = result.times[1:]
    R = result.R[1:]
    if which == "diagonal":
        vals = np.array([np.abs(np.diag(r)).max() for r in R])
    else:
        vals = np.abs(R).reshape(len(R), -1).max(axis=1)
    keep = np.ones_like(times, dtype=bool) if t_max is None else times <= t_max
    keep &= vals > 0
    slope = np.polyfit(np.log(times[keep]), np.log(vals[keep]), 1)[0]
    return float(slope), times, vals
