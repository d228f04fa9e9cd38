"""Mild formulation of the forced transport problem and its solvers.

With F = Psi(pi f, u0) the co-closed velocity solves

    v + Psi_v pi N(v) = F,

where Psi_v is the Duhamel potential and pi the Leray projector.  The
pressure is recovered afterwards from the exact part of f - N(v).
Convergence is measured in the sup over time nodes of the spatial L2 norm.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .derham_complex import codifferential, differential
from .hodge_theory import (
    harmonic_projection,
    leray_projection,
    potential_phi,
)
from .nonlinearity import (
    Nonlinearity,
    advect,
    advect_derivative,
    m1,
    projected_advect,
    projected_advect_derivative,
)
from .parabolic_potentials import (
    ETD,
    apply_parabolic_operator,
    cauchy_solve,
    duhamel,
)
from .spectral_field import (
    ConfigurationError,
    FormField,
    Grid,
    SpaceTimeField,
    node_pairings,
    random_field,
)

log = logging.getLogger(__name__)

PICARD = "picard"
NEWTON = "newton"


class NotCoClosedError(ValueError):
    """Initial datum is far from divergence free."""


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 1.0
    T: float = 0.1
    M: int = 8
    res: int | tuple = 16
    n: int = 2
    tol_fixed_point: float = 1e-10
    tol_linear: float = 1e-12
    max_iter: int = 100
    method: str = PICARD
    relaxation: float = 1.0
    quadrature: str = ETD
    auto_project: bool = False
    linear_method: str = "gmres"

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigurationError("viscosity must be positive")
        if not self.T > 0 or int(self.M) < 1:
            raise ConfigurationError("need T > 0 and M >= 1")
        if not (self.tol_fixed_point > 0 and self.tol_linear > 0):
            raise ConfigurationError("tolerances must be positive")
        if int(self.max_iter) < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if self.method not in (PICARD, NEWTON):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if not 0 < self.relaxation <= 1:
            raise ConfigurationError("relaxation must lie in (0, 1]")
        if self.linear_method not in ("gmres", "neumann"):
            raise ConfigurationError(f"unknown linear method {self.linear_method!r}")

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.res)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, int(self.M) + 1)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["res"] = list(self.res) if isinstance(self.res, tuple) else self.res
        return out


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_history: list[float]
    method: str
    message: str = ""
    pde_residual: dict | None = None
    energy: "EnergyLedger | None" = None
    pressure: SpaceTimeField | None = None
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "converged": self.converged,
            "iterations": self.iterations,
            "method": self.method,
            "message": self.message,
            "residual_history": [float(r) for r in self.residual_history],
            "diagnostics": self.diagnostics,
        }
        if self.pde_residual is not None:
            out["pde_residual"] = {k: [float(x) for x in v] for k, v in self.pde_residual.items()}
        if self.energy is not None:
            out["energy_max_imbalance"] = self.energy.max_imbalance
        return out


def trajectory_norm(u: SpaceTimeField) -> float:
    """Sup over time nodes of the L2 norm."""
    return u.sup_norm()


def _coclosed_defect(u: FormField) -> float:
    nrm = u.norm()
    return (u - leray_projection(u)).norm() / nrm if nrm > 0 else 0.0


def assemble_rhs(f: SpaceTimeField | None, u0: FormField, mu: float, times=None,
                 auto_project: bool = False, method: str = ETD) -> SpaceTimeField:
    """F = Psi(pi f, pi u0); u0 must already be (nearly) co-closed."""
    defect = _coclosed_defect(u0)
    if defect > 1e-6 and not auto_project:
        raise NotCoClosedError(f"initial datum has relative non-solenoidal part {defect:.3e}")
    if defect > 1e-12:
        warnings.warn(f"projecting initial datum (relative defect {defect:.3e})", stacklevel=2)
    u0p = leray_projection(u0)
    if f is None:
        if times is None:
            raise ConfigurationError("need a time grid when f is omitted")
        f = SpaceTimeField.zeros(u0.grid, u0.degree, times)
    return cauchy_solve(leray_projection(f), u0p.to(f.space), mu, method=method)


def _picard_map(v: SpaceTimeField, F: SpaceTimeField, mu: float, nl, method: str) -> SpaceTimeField:
    return F - duhamel(projected_advect(v, nl), mu, method)


def fixed_point_residual(v: SpaceTimeField, F: SpaceTimeField, mu: float,
                         nonlinearity: Nonlinearity | None = None, method: str = ETD) -> SpaceTimeField:
    """v + Psi_v pi N(v) - F."""
    return v - _picard_map(v, F, mu, nonlinearity, method)


def _is_harmonic_only(F: SpaceTimeField) -> bool:
    rest = F - harmonic_projection(F)
    return rest.sup_norm() <= 1e-14 * max(F.sup_norm(), 1e-300)


def solve_fixed_point(F: SpaceTimeField, cfg: SolverConfig, initial: SpaceTimeField | None = None,
                      nonlinearity: Nonlinearity | None = None) -> tuple[SpaceTimeField, SolveReport]:
    """Solve v + Psi_v pi N(v) = F by relaxed Picard or Newton-Kantorovich iteration."""
    F = F.spectral()
    nl = nonlinearity
    if _is_harmonic_only(F):
        res = fixed_point_residual(F, F, cfg.mu, nl, cfg.quadrature).sup_norm()
        report = SolveReport(True, 0, [res], cfg.method, "harmonic datum: closed form")
        report.diagnostics["fast_path"] = True
        return F.physical(), report
    v = F if initial is None else initial.spectral()
    scale = max(F.sup_norm(), 1.0)
    theta = cfg.relaxation
    history = []
    r = fixed_point_residual(v, F, cfg.mu, nl, cfg.quadrature)
    res = r.sup_norm()
    history.append(res)
    inner_iterations = []
    for it in range(1, cfg.max_iter + 1):
        if res <= cfg.tol_fixed_point * scale:
            return v.physical(), SolveReport(True, it - 1, history, cfg.method, "converged",
                                  diagnostics={"relaxation": theta, "inner_iterations": inner_iterations})
        if cfg.method == PICARD:
            candidate = v - r * theta
        else:
            delta, info = solve_linearized(v, -r, cfg, nonlinearity=nl, return_info=True)
            inner_iterations.append(info["iterations"])
            candidate = v + delta.spectral()
        r_new = fixed_point_residual(candidate, F, cfg.mu, nl, cfg.quadrature)
        res_new = r_new.sup_norm()
        if cfg.method == PICARD and res_new > res and theta > 1.0 / 64:
            theta *= 0.5
            log.debug("residual grew to %.3e; relaxation halved to %.4f", res_new, theta)
        v, r, res = candidate, r_new, res_new
        history.append(res)
        if len(history) > 5 and history[-1] > 10 * history[-6]:
            return v.physical(), SolveReport(False, it, history, cfg.method, "diverged",
                                  diagnostics={"relaxation": theta})
        if not np.isfinite(res):
            return v.physical(), SolveReport(False, it, history, cfg.method, "non-finite residual")
    converged = res <= cfg.tol_fixed_point * scale
    return v.physical(), SolveReport(converged, cfg.max_iter, history, cfg.method,
                          "converged" if converged else "max_iter exceeded",
                          diagnostics={"relaxation": theta, "inner_iterations": inner_iterations})


# --------------------------------------------------------------------------
# linearized problem


def linearized_operator(u_lin: SpaceTimeField, cfg: SolverConfig, nonlinearity=None):
    """v -> v + Psi_v pi N'(u_lin) v on physical trajectories."""
    u_lin = u_lin.physical()

    def apply(v: SpaceTimeField) -> SpaceTimeField:
        return v + duhamel(projected_advect_derivative(u_lin, v, nonlinearity), cfg.mu, cfg.quadrature)

    return apply


def solve_linearized(u_lin: SpaceTimeField, F: SpaceTimeField, cfg: SolverConfig,
                     nonlinearity=None, method: str | None = None, return_info: bool = False):
    """Solve (I + Psi_v pi N'(u_lin)) v = F with GMRES or a Neumann iteration."""
    method = method or cfg.linear_method
    F = F.physical()
    apply = linearized_operator(u_lin, cfg, nonlinearity)
    shape = F.data.shape
    rhs = np.array(F.data.ravel())
    bnorm = np.linalg.norm(rhs)
    info = {"iterations": 0, "residual": 0.0}
    if bnorm == 0:
        out = F.with_data(np.zeros(shape))
        return (out, info) if return_info else out

    def matvec(x):
        return np.array(apply(F.with_data(np.asarray(x, float).reshape(shape))).data.ravel())

    if method == "gmres":
        count = [0]

        def callback(_):
            count[0] += 1

        op = LinearOperator((rhs.size, rhs.size), matvec=matvec, dtype=float)
        x, code = gmres(op, rhs, rtol=cfg.tol_linear, atol=0.0, restart=min(200, rhs.size),
                        maxiter=50, callback=callback, callback_type="pr_norm")
        info["iterations"] = count[0]
        info["code"] = int(code)
    else:
        x = rhs.copy()
        for it in range(1, 500):
            r = rhs - matvec(x)
            x = x + r
            info["iterations"] = it
            if np.linalg.norm(r) <= cfg.tol_linear * bnorm:
                break
    info["residual"] = float(np.linalg.norm(rhs - matvec(x)) / bnorm)
    if info["residual"] > max(cfg.tol_linear, 1e-14) * 100:
        log.warning("linear solve stagnated at relative residual %.3e", info["residual"])
    out = F.with_data(x.reshape(shape))
    return (out, info) if return_info else out


def dense_linearized_matrix(u_lin: SpaceTimeField, cfg: SolverConfig, nonlinearity=None) -> np.ndarray:
    """Assemble I + Psi_v pi N'(u_lin) column by column on physical trajectory data."""
    apply = linearized_operator(u_lin, cfg, nonlinearity)
    proto = u_lin.physical()
    shape = proto.data.shape
    size = int(np.prod(shape))
    A = np.empty((size, size))
    e = np.zeros(size)
    for j in range(size):
        e[j] = 1.0
        A[:, j] = apply(proto.with_data(e.reshape(shape))).data.ravel()
        e[j] = 0.0
    return A


# --------------------------------------------------------------------------
# pressure, residuals and energy


def recover_pressure(v: SpaceTimeField, f: SpaceTimeField | None, nonlinearity=None) -> SpaceTimeField:
    """p = Phi (I - pi)(f - N(v)), a co-closed, harmonic-free form of degree i - 1."""
    rhs = -advect(v.physical(), nonlinearity)
    if f is not None:
        rhs = rhs + f.physical()
    exact = rhs - leray_projection(rhs)
    return potential_phi(exact).physical()


def pde_residual(v: SpaceTimeField, p: SpaceTimeField, f: SpaceTimeField | None, u0: FormField,
                 mu: float, nonlinearity=None) -> dict:
    """Per-node norms of L v + N(v) + d p - f, d* v, d* p and the initial mismatch."""
    v = v.physical()
    res = apply_parabolic_operator(v, mu) + advect(v, nonlinearity) + differential(p.spectral()).physical()
    if f is not None:
        res = res - f.physical()
    initial = (v.frame(0) - u0).norm()
    return {
        "equation": res.node_norms(),
        "div_v": codifferential(v.spectral()).node_norms(),
        "div_p": codifferential(p.spectral()).node_norms() if p.degree > 0 else np.zeros(len(v.times)),
        "initial": np.array([initial]),
    }


@dataclass
class EnergyLedger:
    times: np.ndarray
    kinetic_rate: np.ndarray       # d/dt of |v|^2 / 2
    dissipation: np.ndarray        # mu |dv|^2
    transport: np.ndarray          # (first(dv, v), v)
    forcing: np.ndarray            # (f, v)

    @property
    def imbalance(self) -> np.ndarray:
        return self.kinetic_rate + self.dissipation + self.transport - self.forcing

    @property
    def max_imbalance(self) -> float:
        return float(np.abs(self.imbalance).max())

    def rows(self):
        for j, t in enumerate(self.times):
            yield (t, self.kinetic_rate[j], self.dissipation[j], self.transport[j],
                   self.forcing[j], self.imbalance[j])


def energy_balance(v: SpaceTimeField, f: SpaceTimeField | None, mu: float, nonlinearity=None,
                   width: int = 5) -> EnergyLedger:
    """Energy identity terms per node; the time derivative uses polynomial stencils."""
    from .hoelder_norms import time_derivative_weights

    v = v.physical()
    energy = 0.5 * v.node_norms() ** 2
    rate = np.empty_like(energy)
    for m in range(len(v.times)):
        idx, w = time_derivative_weights(v.times, m, 1, width)
        rate[m] = w @ energy[idx]
    dv = differential(v.spectral())
    dissipation = mu * dv.node_norms() ** 2
    rot = m1(dv, v.spectral(), nonlinearity)
    transport = node_pairings(rot, v)
    forcing = node_pairings(f.physical(), v) if f is not None else np.zeros_like(energy)
    return EnergyLedger(np.asarray(v.times), rate, dissipation, transport, forcing)


# --------------------------------------------------------------------------
# full solve


def solve(f: SpaceTimeField | None, u0: FormField, cfg: SolverConfig, nonlinearity=None,
          initial=None) -> tuple[SpaceTimeField, SolveReport]:
    """Assemble F, solve for v, recover p, and attach residual and energy diagnostics."""
    F = assemble_rhs(f, u0, cfg.mu, cfg.times, cfg.auto_project, cfg.quadrature)
    v, report = solve_fixed_point(F, cfg, initial=initial, nonlinearity=nonlinearity)
    p = recover_pressure(v, f, nonlinearity)
    report.pressure = p
    report.pde_residual = pde_residual(v, p, f, leray_projection(u0), cfg.mu, nonlinearity)
    report.energy = energy_balance(v, None if f is None else leray_projection(f), cfg.mu, nonlinearity)
    return v, report


# --------------------------------------------------------------------------
# Taylor-Green vortex


def taylor_green_velocity(grid: Grid, t: float, mu: float) -> FormField:
    """(sin 2pi x cos 2pi y, -cos 2pi x sin 2pi y) exp(-8 pi^2 mu t), zero in other axes."""
    x, y = grid.mesh()[:2]
    decay = np.exp(-8.0 * np.pi**2 * mu * t)
    comps = {(0,): np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) * decay,
             (1,): -np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y) * decay}
    return FormField.from_components(grid, 1, comps)


def taylor_green_pressure(grid: Grid, t: float, mu: float) -> FormField:
    x, y = grid.mesh()[:2]
    decay = np.exp(-16.0 * np.pi**2 * mu * t)
    return FormField.from_components(grid, 0, {(): (np.cos(4 * np.pi * x) + np.cos(4 * np.pi * y)) / 4 * decay})


def taylor_green_trajectory(grid: Grid, times, mu: float) -> tuple[SpaceTimeField, SpaceTimeField]:
    times = np.asarray(times, float)
    v = SpaceTimeField.from_frames([taylor_green_velocity(grid, t, mu) for t in times], times)
    p = SpaceTimeField.from_frames([taylor_green_pressure(grid, t, mu) for t in times], times)
    return v, p


def mean_free(u: SpaceTimeField) -> SpaceTimeField:
    return u - harmonic_projection(u)


# --------------------------------------------------------------------------
# stability experiment


@dataclass
class StabilityRow:
    delta: float
    datum_norm: float
    solution_norm: float
    ratio: float
    converged: bool
    iterations: int


@dataclass
class StabilityResult:
    rows: list[StabilityRow]
    linear_ratio: float
    base_report: SolveReport

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows])

    def spread(self) -> float:
        """(max - min) / min over rows."""
        r = self.ratios
        return float((r.max() - r.min()) / r.min())


def perturbation_directions(grid: Grid, times, seed, kmax: int = 3) -> tuple[SpaceTimeField, FormField]:
    """Seeded co-closed unit directions for the forcing (steady) and initial datum."""
    rng = np.random.default_rng(seed)
    df = leray_projection(random_field(grid, 1, rng, kmax=kmax))
    du = leray_projection(random_field(grid, 1, rng, kmax=kmax))
    df = df / df.norm()
    du = du / du.norm()
    return SpaceTimeField.constant_in_time(df, times), du


def _datum_norm(df: SpaceTimeField, du: FormField, idx) -> float:
    from .hoelder_norms import HoelderIndex, anisotropic_norm, isotropic_norm

    f_idx = HoelderIndex(s=max(idx.s - 1, 0), k=idx.k, lam=idx.lam)
    return anisotropic_norm(df, f_idx) + isotropic_norm(du, 2 * idx.s + idx.k, idx.lam)


def _solution_norm(dv: SpaceTimeField, dp: SpaceTimeField, idx) -> float:
    from .hoelder_norms import HoelderIndex, anisotropic_norm

    p_idx = HoelderIndex(s=max(idx.s - 1, 0), k=idx.k + 1, lam=idx.lam)
    return anisotropic_norm(dv, idx) + anisotropic_norm(dp, p_idx)


def stability_experiment(f: SpaceTimeField | None, u0: FormField, deltas, cfg: SolverConfig,
                         seed=0, index=None, nonlinearity=None) -> StabilityResult:
    """Perturb the datum along fixed co-closed directions and record solution/datum norm ratios.

    Norms: velocity in C^{2s+k, lam, s, lam/2}, pressure one spatial order
    lower in time, forcing in C^{2(s-1)+k, ...} and the initial datum in C^{2s+k, lam}.
    """
    from .hoelder_norms import HoelderIndex

    idx = index or HoelderIndex(s=1, k=0, lam=0.5)
    times = cfg.times
    base_f = f.physical() if f is not None else SpaceTimeField.zeros(u0.grid, 1, times)
    v0, base_report = solve(base_f, u0, cfg, nonlinearity)
    p0 = base_report.pressure
    df, du = perturbation_directions(u0.grid, times, seed)

    # first-order prediction from the linearized problem
    F_lin = assemble_rhs(df, du, cfg.mu, method=cfg.quadrature)
    v_lin = solve_linearized(v0, F_lin, cfg, nonlinearity)
    rhs_p = df - advect_derivative(v0, v_lin, nonlinearity)
    p_lin = potential_phi(rhs_p - leray_projection(rhs_p)).physical()
    unit_datum = _datum_norm(df, du, idx)
    linear_ratio = _solution_norm(v_lin, p_lin, idx) / unit_datum

    rows = []
    for delta in deltas:
        if delta == 0:
            continue
        v, rep = solve(base_f + df * delta, u0 + du * delta, cfg, nonlinearity, initial=None)
        dsol = _solution_norm(v - v0, rep.pressure - p0, idx)
        ddat = unit_datum * abs(delta)
        rows.append(StabilityRow(float(delta), ddat, dsol, dsol / ddat, rep.converged, rep.iterations))
    return StabilityResult(rows, float(linear_ratio), base_report)


def spectral_decay_slope(u: FormField, kmin: int = 1, kmax: int | None = None) -> float:
    """Least-squares slope of log shell amplitude against log |k| over kmin..kmax."""
    spec = u.spectral().data
    grid = u.grid
    kmag = np.sqrt(grid.k_squared)
    amp = np.sqrt((np.abs(spec) ** 2).sum(axis=tuple(range(spec.ndim - grid.n))))
    kmax = kmax or min(grid.res) // 3
    shells, values = [], []
    for k in range(kmin, kmax + 1):
        mask = (kmag >= k - 0.5) & (kmag < k + 0.5) & grid.resolved
        if mask.any():
            level = np.sqrt((amp[mask] ** 2).sum())
            if level > 0:
                shells.append(np.log(k))
                values.append(np.log(level))
    return float(np.polyfit(shells, values, 1)[0])


def random_problem(grid: Grid, times, amplitude: float, seed, kmax: int = 3) -> tuple[SpaceTimeField, FormField]:
    """Seeded co-closed forcing (linear in time) and initial datum of the given L2 size."""
    rng = np.random.default_rng(seed)
    times = np.asarray(times, float)
    f0 = leray_projection(random_field(grid, 1, rng, kmax=kmax, amplitude=amplitude))
    f1 = leray_projection(random_field(grid, 1, rng, kmax=kmax, amplitude=amplitude))
    u0 = leray_projection(random_field(grid, 1, rng, kmax=kmax, amplitude=amplitude))
    span = times[-1] - times[0]
    frames = [f0 + (f1 - f0) * ((t - times[0]) / span) for t in times]
    return SpaceTimeField.from_frames(frames, times), u0
