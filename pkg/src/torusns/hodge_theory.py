"""Harmonic projection, Green operator, potentials and the Leray projector.

On the flat torus the harmonic forms are the constant forms, so every
operator here is a diagonal Fourier multiplier (possibly mixing components
through d and d*).  Identities such as

    u = d Phi_{i-1} u + Phi_i d u + Pi u

hold to rounding for fields without Nyquist content.
"""
from __future__ import annotations

from collections import namedtuple

import numpy as np

from .derham_complex import codifferential, differential, laplacian
from .spectral_field import (
    SPECTRAL,
    DegreeError,
    FormField,
    basis_indices,
    fiber_rank,
    inner_product,
    random_field,
)

HodgeParts = namedtuple("HodgeParts", ["exact", "coexact", "harmonic"])


class PreconditionError(ValueError):
    """Input data violate a closedness or co-closedness requirement."""


def _multiply(u: FormField, mult: np.ndarray) -> FormField:
    spec = u.spectral()
    return spec.with_data(spec.data * mult, space=SPECTRAL).to(u.space)


def _zero_mode_mask(grid) -> np.ndarray:
    mask = np.zeros(grid.shape)
    mask[grid.zero_mode] = 1.0
    return mask


def _inverse_symbol(grid) -> np.ndarray:
    omega = grid.laplace_symbol
    out = np.zeros_like(omega)
    np.divide(1.0, omega, out=out, where=omega > 0)
    return out


def harmonic_basis(grid, degree: int) -> list[FormField]:
    """Constant unit forms dx^I, one per increasing multi-index; L2-orthonormal."""
    out = []
    for I in basis_indices(grid.n, degree):
        out.append(FormField.from_components(grid, degree, {I: 1.0}))
    return out


def harmonic_projection(u: FormField) -> FormField:
    """Orthogonal projection onto constant forms (keeps the k = 0 mode)."""
    return _multiply(u, _zero_mode_mask(u.grid))


def green_operator(u: FormField) -> FormField:
    """Inverse Laplacian on the complement of the harmonic forms: 1 / (4 pi^2 |k|^2)."""
    return _multiply(u, _inverse_symbol(u.grid))


def potential_phi(u: FormField) -> FormField:
    """d* G u: lowers the degree by one and lands in co-closed forms."""
    if u.degree < 1:
        raise DegreeError("potential_phi needs degree >= 1")
    return codifferential(green_operator(u.spectral())).to(u.space)


def potential_phi_hat(u: FormField) -> FormField:
    """d G u: raises the degree by one and lands in closed forms."""
    if u.degree >= u.grid.n:
        raise DegreeError("potential_phi_hat needs degree < n")
    return differential(green_operator(u.spectral())).to(u.space)


def leray_projection(u: FormField) -> FormField:
    """Projection onto co-closed forms: d* d G u + Pi u."""
    spec = u.spectral()
    out = codifferential(differential(green_operator(spec))) + harmonic_projection(spec)
    return out.to(u.space)


def leray_complement(u: FormField) -> FormField:
    """(I - pi) u on resolved modes, i.e. d d* G u (the exact part)."""
    spec = u.spectral()
    return differential(codifferential(green_operator(spec))).to(u.space)


def leray_projection_vector(u: FormField) -> FormField:
    """Classical 1-form projector I - k k^T / |k|^2 on resolved modes; for cross-checks."""
    if u.degree != 1:
        raise DegreeError("vector Leray projector acts on 1-forms")
    grid = u.grid
    spec = u.spectral().data
    k = [np.broadcast_to(kj.astype(float), grid.shape) for kj in grid.wavenumbers]
    k2 = sum(kj**2 for kj in k)
    inv = np.zeros(grid.shape)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    dot = sum(k[j] * spec[j] for j in range(grid.n))
    out = np.stack([spec[j] - k[j] * dot * inv for j in range(grid.n)])
    out = out * (grid.resolved | (k2 == 0))
    return u.spectral().with_data(out).to(u.space)


def hodge_decompose(u: FormField) -> HodgeParts:
    """Split u into exact, co-exact and harmonic parts (mutually L2-orthogonal)."""
    spec = u.spectral()
    green = green_operator(spec)
    exact = differential(codifferential(green))
    coexact = codifferential(differential(green))
    harmonic = harmonic_projection(spec)
    return HodgeParts(exact.to(u.space), coexact.to(u.space), harmonic.to(u.space))


def harmonic_pairings(u: FormField) -> np.ndarray:
    """Pairings (u, b_q) with every constant unit form of the same degree."""
    return np.array([inner_product(u, b) for b in harmonic_basis(u.grid, u.degree)])


def range_compatibility(f: FormField, g: FormField, tol: float = 1e-10,
                        precondition_tol: float = 1e-8) -> bool:
    """Solvability test for d u = f, d* u = g with f of degree i+1 and g of degree i-1.

    Requires f closed and g co-closed; the system is then solvable iff both
    are orthogonal to the harmonic forms.
    """
    if f.grid != g.grid or f.degree != g.degree + 2:
        raise DegreeError("need f of degree i+1 and g of degree i-1 on one grid")
    fnorm, gnorm = max(f.norm(), 1.0), max(g.norm(), 1.0)
    closed = differential(f.spectral()).norm() if f.degree < f.grid.n else 0.0
    coclosed = codifferential(g.spectral()).norm() if g.degree > 0 else 0.0
    if closed > precondition_tol * fnorm:
        raise PreconditionError(f"f is not closed: |df| = {closed:.3e}")
    if coclosed > precondition_tol * gnorm:
        raise PreconditionError(f"g is not co-closed: |d*g| = {coclosed:.3e}")
    pf = harmonic_pairings(f) if fiber_rank(f.grid.n, f.degree) else np.zeros(0)
    pg = harmonic_pairings(g) if fiber_rank(g.grid.n, g.degree) else np.zeros(0)
    worst = max(np.abs(pf).max(initial=0.0) / fnorm, np.abs(pg).max(initial=0.0) / gnorm)
    return bool(worst <= tol)


def _relative(residual: FormField, scale: float) -> float:
    return float(residual.norm() / scale) if scale > 0 else float(residual.norm())


def _pair_defect(value: float, left: FormField, right: FormField) -> float:
    denom = left.norm() * right.norm()
    return float(abs(value) / denom) if denom > 0 else float(abs(value))


def identity_suite(grid, degree: int, samples: int = 10, seed=0, kmax: int = 4) -> dict[str, float]:
    """Worst relative residual of every Hodge and Leray identity over random fields.

    Each entry is max over samples of |lhs - rhs| / |u| (pairings are
    normalised by the product of the two field norms).
    """
    rng = np.random.default_rng(seed)
    n = grid.n
    worst: dict[str, float] = {}

    def record(name, value):
        worst[name] = max(worst.get(name, 0.0), float(value))

    for _ in range(samples):
        u = random_field(grid, degree, rng, kmax=kmax).spectral()
        v = random_field(grid, degree, rng, kmax=kmax).spectral()
        scale = u.norm()
        Pu = harmonic_projection(u)
        record("projection_idempotent", _relative(harmonic_projection(Pu) - Pu, scale))
        record("d_annihilates_harmonic", _relative(differential(Pu), scale))
        record("codiff_annihilates_harmonic", _relative(codifferential(Pu), scale))
        record("harmonic_kills_codiff", _relative(harmonic_projection(codifferential(u)), scale))
        record("harmonic_kills_d", _relative(harmonic_projection(differential(u)), scale))
        record("green_kills_harmonic", _relative(green_operator(Pu), scale))
        record("harmonic_kills_green", _relative(harmonic_projection(green_operator(u)), scale))
        record("green_right_inverse", _relative(laplacian(green_operator(u)) + Pu - u, scale))
        record("green_left_inverse", _relative(green_operator(laplacian(u)) + Pu - u, scale))
        record("green_commutes_d", _relative(differential(green_operator(u)) - green_operator(differential(u)), scale))
        record("green_commutes_codiff",
               _relative(codifferential(green_operator(u)) - green_operator(codifferential(u)), scale))
        # potentials: Phi_i d u + d Phi_{i-1} u = u - Pi u and the hatted analogue
        total = u * 0.0
        if degree < n:
            total = total + potential_phi(differential(u))
            w = random_field(grid, degree + 1, rng, kmax=kmax).spectral()
            record("potential_kills_harmonic", _relative(potential_phi(harmonic_projection(w)), w.norm()))
        if degree >= 1:
            total = total + differential(potential_phi(u))
        record("homotopy_formula", _relative(total - (u - Pu), scale))
        hat_total = u * 0.0
        if degree < n:
            hat_total = hat_total + codifferential(potential_phi_hat(u))
        if degree >= 1:
            hat_total = hat_total + potential_phi_hat(codifferential(u))
        record("dual_homotopy_formula", _relative(hat_total - (u - Pu), scale))
        # Leray projector
        pu = leray_projection(u)
        record("leray_idempotent", _relative(leray_projection(pu) - pu, scale))
        record("leray_orthogonal", _pair_defect(inner_product(pu, u - pu), u, u))
        record("leray_self_adjoint", _pair_defect(inner_product(pu, v) - inner_product(u, leray_projection(v)), u, v))
        record("leray_coclosed", _relative(codifferential(pu), scale))
        if degree >= 1:
            w = random_field(grid, degree - 1, rng, kmax=kmax).spectral()
            dw = differential(w)
            record("leray_kills_exact", _relative(leray_projection(dw), dw.norm()))
        if degree == 1:
            record("leray_vector_oracle", _relative(pu - leray_projection_vector(u), scale))
        parts = hodge_decompose(u)
        record("decomposition_sum", _relative(parts.exact + parts.coexact + parts.harmonic - u, scale))
        for a, b, name in ((parts.exact, parts.coexact, "exact_coexact"),
                           (parts.exact, parts.harmonic, "exact_harmonic"),
                           (parts.coexact, parts.harmonic, "coexact_harmonic")):
            record(f"orthogonal_{name}", abs(inner_product(a, b)) / scale**2)
    return worst
