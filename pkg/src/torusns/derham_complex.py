"""Exterior derivative, its formal adjoint and the Hodge Laplacian on the torus.

All operators are exact Fourier multipliers.  They accept fields (or
space-time trajectories) in either representation and return the result in
the representation of the input.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral_field import (
    SPECTRAL,
    DegreeError,
    FormField,
    basis_indices,
    comp_index,
    fiber_rank,
)


class TopDegreeError(DegreeError):
    """Differential requested above the top degree in strict mode."""


@dataclass(frozen=True)
class ComplexSpec:
    """The de Rham complex on the n-torus: degrees 0..n, ranks C(n, i)."""

    n: int

    @property
    def degrees(self) -> range:
        return range(self.n + 1)

    def fiber_rank(self, degree: int) -> int:
        return fiber_rank(self.n, degree)

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(self.fiber_rank(i) for i in self.degrees)

    def euler_characteristic(self) -> int:
        return sum((-1) ** i * r for i, r in enumerate(self.ranks))


@lru_cache(maxsize=None)
def incidence(n: int, degree: int) -> tuple[tuple[int, int, int, int], ...]:
    """Rows (out, in, axis, sign): (du)_J gets sign * d_axis u_I with J = I + {axis}."""
    out_basis = basis_indices(n, degree + 1)
    rows = []
    for a, I in enumerate(basis_indices(n, degree)):
        for j in range(n):
            if j in I:
                continue
            J = tuple(sorted(I + (j,)))
            sign = -1 if sum(1 for m in I if m < j) % 2 else 1
            rows.append((out_basis.index(J), a, j, sign))
    return tuple(rows)


def _spectral_apply(u: FormField, out_degree: int, kernel) -> FormField:
    """Run `kernel(spec_data) -> spec_data` and restore the input representation."""
    spec = u.spectral()
    data = kernel(spec.data)
    out = spec.with_data(data, degree=out_degree, space=SPECTRAL)
    return out.to(u.space)


def _zero_like(u: FormField, degree: int) -> FormField:
    lead = u.data.shape[: u.data.ndim - u.grid.n - 1]
    shape = lead + (fiber_rank(u.grid.n, degree),) + u.grid.shape
    return u.with_data(np.zeros(shape, dtype=u.data.dtype), degree=degree)


def differential(u: FormField, strict: bool = False) -> FormField:
    """Exterior derivative of a degree-i field, i -> i + 1.

    At the top degree the result is the empty degree-(n+1) field unless
    `strict`, which raises instead.
    """
    n, i = u.grid.n, u.degree
    if i >= n or i < 0:
        if strict:
            raise TopDegreeError(f"no differential out of degree {i} for n={n}")
        return _zero_like(u, i + 1)
    mult = u.grid.derivative_multipliers

    def kernel(data):
        out = np.zeros(data.shape[: data.ndim - n - 1] + (fiber_rank(n, i + 1),) + u.grid.shape,
                       dtype=complex)
        for o, a, j, s in incidence(n, i):
            out[comp_index(o, n)] += s * mult[j] * data[comp_index(a, n)]
        return out

    return _spectral_apply(u, i + 1, kernel)


def codifferential(u: FormField, strict: bool = False) -> FormField:
    """Formal L2 adjoint of the exterior derivative, i -> i - 1.

    Degree 0 maps to the empty degree -1 field (zero) unless `strict`.
    """
    n, i = u.grid.n, u.degree
    if i <= 0 or i > n:
        if strict:
            raise DegreeError(f"no codifferential out of degree {i} for n={n}")
        return _zero_like(u, i - 1)
    mult = u.grid.derivative_multipliers

    def kernel(data):
        out = np.zeros(data.shape[: data.ndim - n - 1] + (fiber_rank(n, i - 1),) + u.grid.shape,
                       dtype=complex)
        # adjoint of (o <- a) with multiplier s * 2 pi i k_j is (a <- o) with -s * 2 pi i k_j
        for o, a, j, s in incidence(n, i - 1):
            out[comp_index(a, n)] -= s * mult[j] * data[comp_index(o, n)]
        return out

    return _spectral_apply(u, i - 1, kernel)


def laplacian(u: FormField, composed: bool = False) -> FormField:
    """Hodge Laplacian d*d + dd*.

    The default evaluates the equivalent scalar multiplier 4 pi^2 |k|^2;
    `composed=True` evaluates the two compositions literally.
    """
    if composed:
        return codifferential(differential(u)) + differential(codifferential(u))
    omega = u.grid.laplace_symbol
    return _spectral_apply(u, u.degree, lambda data: data * omega)


def symbol_matrix(n: int, degree: int, xi) -> np.ndarray:
    """Real matrix S with sigma(d)(xi) = i S acting on the degree-`degree` fiber."""
    xi = np.asarray(xi, dtype=float)
    S = np.zeros((fiber_rank(n, degree + 1), fiber_rank(n, degree)))
    if 0 <= degree < n:
        for o, a, j, s in incidence(n, degree):
            S[o, a] += s * xi[j]
    return S


def laplace_symbol_matrix(n: int, degree: int, xi) -> np.ndarray:
    up = symbol_matrix(n, degree, xi)
    down = symbol_matrix(n, degree - 1, xi) if degree > 0 else np.zeros((fiber_rank(n, degree), 0))
    return up.T @ up + down @ down.T


@dataclass
class EllipticityReport:
    n: int
    degree: int
    directions: np.ndarray
    eigenvalues: np.ndarray
    max_deviation: float
    margin: float

    @property
    def elliptic(self) -> bool:
        return self.margin > 0 and self.max_deviation < 1e-12


def check_ellipticity(n: int, degree: int, directions=None, samples: int = 32, seed=0) -> EllipticityReport:
    """Compare the principal symbol of the Laplacian with |xi|^2 times the identity.

    `margin` is the smallest eigenvalue over |xi|^2 across the sampled directions.
    """
    if directions is None:
        rng = np.random.default_rng(seed)
        directions = rng.standard_normal((samples, n))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    norms = np.linalg.norm(directions, axis=1)
    if np.any(norms == 0):
        raise ValueError("symbol directions must be nonzero")
    eigs = np.array([np.linalg.eigvalsh(laplace_symbol_matrix(n, degree, xi)) for xi in directions])
    scaled = eigs / norms[:, None] ** 2
    return EllipticityReport(n, degree, directions, eigs,
                             float(np.abs(scaled - 1.0).max(initial=0.0)),
                             float(scaled.min(initial=np.inf)))


def complex_suite(grid, degree: int, samples: int = 10, seed=0, kmax: int = 4) -> dict[str, float]:
    """Worst relative defects of d o d = 0, the adjoint pairing and d*d + dd* = Laplacian.

    Also reports the ellipticity deviation of the principal symbol.
    """
    from .spectral_field import inner_product, random_field

    rng = np.random.default_rng(seed)
    worst = {"dd": 0.0, "adjoint": 0.0, "composed_laplacian": 0.0}
    for _ in range(samples):
        u = random_field(grid, degree, rng, kmax=kmax).spectral()
        scale = u.norm()
        if degree + 2 <= grid.n:
            worst["dd"] = max(worst["dd"], differential(differential(u)).norm() / scale)
        worst["composed_laplacian"] = max(
            worst["composed_laplacian"], (laplacian(u, composed=True) - laplacian(u)).norm() / scale)
        if degree < grid.n:
            v = random_field(grid, degree + 1, rng, kmax=kmax).spectral()
            gap = inner_product(differential(u), v) - inner_product(u, codifferential(v))
            worst["adjoint"] = max(worst["adjoint"], abs(gap) / (scale * v.norm()))
    worst["ellipticity"] = check_ellipticity(grid.n, degree, seed=seed).max_deviation
    return {k: float(v) for k, v in worst.items()}
