"""Discrete Hoelder norms of grid fields and space-time trajectories.

All suprema are taken over grid points, so every estimate is a lower bound
of the continuum quantity.  Point pairs are compared through lattice shifts:
for an integer offset m the periodic distance is

    d(m) = sqrt(sum_j (min(|m_j|, N_j - |m_j|) / N_j)^2),

and only pairs with d <= 1/2 (the injectivity radius of the unit torus)
enter the seminorm.  Fibre values are compared with the Euclidean norm over
components; on the flat torus no parallel transport is needed.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial

import numpy as np

from .spectral_field import ConfigurationError, FormField, SpaceTimeField

D0 = 0.5
EXHAUSTIVE_LIMIT = 16


@dataclass(frozen=True)
class HoelderIndex:
    s: int = 1
    k: int = 0
    lam: float = 0.5
    gamma: float | None = None      # None means lam / 2
    lam_prime: float | None = None

    def __post_init__(self):
        if self.s < 0 or self.k < 0:
            raise ConfigurationError("derivative orders must be nonnegative")
        if not 0 < self.lam < 1:
            raise ConfigurationError("Hoelder exponent must lie in (0, 1)")
        if self.gamma is not None and self.gamma not in (0.0, self.lam / 2):
            raise ConfigurationError("time exponent must be 0 or lam / 2")
        if self.lam_prime is not None and not self.lam < self.lam_prime < 1:
            raise ConfigurationError("need lam < lam_prime < 1")

    @property
    def time_exponent(self) -> float:
        return self.lam / 2 if self.gamma is None else self.gamma


# --------------------------------------------------------------------------
# spatial pieces


def _check_exponent(lam: float) -> None:
    if not 0 < lam < 1:
        raise ValueError(f"Hoelder exponent must lie in (0, 1), got {lam}")


def shift_distance(shift, res) -> float:
    return float(np.sqrt(sum((min(abs(m), r - abs(m)) / r) ** 2 for m, r in zip(shift, res))))


def _fibre_values(values: np.ndarray, n: int) -> np.ndarray:
    """(C, *grid) or (*grid) array -> (C, *grid)."""
    values = np.asarray(values, dtype=float)
    return values[None] if values.ndim == n else values


def _shift_max(vals: np.ndarray, shift, n: int) -> float:
    moved = np.roll(vals, shift=tuple(-m for m in shift), axis=tuple(range(1, n + 1)))
    return float(np.sqrt(((vals - moved) ** 2).sum(axis=0)).max())


def _shift_list(res, mode: str, samples: int, seed) -> list[tuple[int, ...]]:
    everything = [m for m in itertools.product(*(range(r) for r in res)) if any(m)]
    if mode == "exhaustive":
        return everything
    near = [m for m in everything if all(min(c, r - c) <= 2 for c, r in zip(m, res))]
    far = [m for m in everything if m not in set(near)]
    rng = np.random.default_rng(seed)
    take = min(samples, len(far))
    pick = rng.choice(len(far), size=take, replace=False) if take else []
    return near + [far[i] for i in sorted(pick)]


def spatial_seminorm(u, lam: float, mode: str = "auto", samples: int = 256, seed=0,
                     res=None) -> float:
    """<u>_lam over grid pairs with periodic distance <= 1/2.

    `u` is a FormField or an array shaped (C, *grid) / (*grid) with `res`
    given.  Mode "auto" is exhaustive up to 16 points per axis and samples
    shifts otherwise (all shifts of sup-norm at most 2 plus `samples` random
    ones; a lower bound of the exhaustive value).
    """
    _check_exponent(lam)
    if isinstance(u, FormField):
        res = u.grid.res
        vals = u.physical().data
    else:
        vals = np.asarray(u, dtype=float)
        res = tuple(res) if res is not None else vals.shape
    n = len(res)
    vals = _fibre_values(vals, n)
    if mode == "auto":
        mode = "exhaustive" if max(res) <= EXHAUSTIVE_LIMIT else "sampled"
    if mode not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    best = 0.0
    for shift in _shift_list(res, mode, samples, seed):
        d = shift_distance(shift, res)
        if d > D0:
            continue
        best = max(best, _shift_max(vals, shift, n) / d**lam)
    return best


def brute_force_seminorm(values: np.ndarray, lam: float) -> float:
    """Reference <u>_lam by looping over every ordered pair of grid points."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[None]
    res = values.shape[1:]
    if values.ndim - 1 != len(res):
        raise ValueError("expected (C, *grid)")
    points = list(itertools.product(*(range(r) for r in res)))
    best = 0.0
    for x in points:
        for y in points:
            if x == y:
                continue
            gaps = []
            for a, b, r in zip(x, y, res):
                g = abs(a / r - b / r)
                gaps.append(min(g, 1.0 - g))
            d = float(np.sqrt(sum(g**2 for g in gaps)))
            if d > D0:
                continue
            diff = float(np.sqrt(sum((values[(c,) + x] - values[(c,) + y]) ** 2
                                     for c in range(values.shape[0]))))
            best = max(best, diff / d**lam)
    return best


def derivative_tensor(u: FormField, order: int) -> np.ndarray:
    """Physical values of all order-`order` spatial derivatives, weighted so that
    the Euclidean norm over the leading axes equals the full tensor norm.

    Returns an array shaped (C * P, *lead, *grid) for P distinct sorted
    derivative multi-indices (ordered-index multiplicity folded into weights).
    """
    grid = u.grid
    spec = u.spectral().data
    if order == 0:
        vals = u.physical().data
        return np.moveaxis(vals, -grid.n - 1, 0)
    out = []
    for alpha in itertools.combinations_with_replacement(range(grid.n), order):
        counts = np.bincount(alpha, minlength=grid.n)
        weight = np.sqrt(factorial(order) / np.prod([factorial(c) for c in counts]))
        mult = np.ones(grid.shape, dtype=complex)
        for j in alpha:
            mult = mult * grid.derivative_multipliers[j]
        vals = grid.ifft_real(spec * mult) * weight
        out.append(np.moveaxis(vals, -grid.n - 1, 0))
    return np.concatenate(out, axis=0)


def sup_norm(values: np.ndarray) -> float:
    """Sup over points of the fibre norm; fibre axis first."""
    if values.shape[0] == 0:
        return 0.0
    return float(np.sqrt((values**2).sum(axis=0)).max())


def isotropic_norm(u: FormField, s: int, lam: float, mode: str = "auto", seed=0) -> float:
    """C^{s,lam}: sum_j sup |grad^j u| + sum_j <grad^j u>_lam for j <= s (lam = 0 drops seminorms)."""
    if isinstance(u, SpaceTimeField):
        raise ConfigurationError("isotropic norm takes a single time frame")
    total = 0.0
    for j in range(s + 1):
        vals = derivative_tensor(u, j)
        total += sup_norm(vals)
        if lam > 0:
            total += spatial_seminorm(vals, lam, mode=mode, seed=seed, res=u.grid.res)
    return total


# --------------------------------------------------------------------------
# time pieces


def time_derivative_weights(times: np.ndarray, m: int, order: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    width = min(max(width, order + 1), len(times))
    start = min(max(m - width // 2, 0), len(times) - width)
    idx = np.arange(start, start + width)
    offsets = times[idx] - times[m]
    scale = np.abs(offsets).max()
    V = np.vander(offsets / scale, width, increasing=True).T
    rhs = np.zeros(width)
    rhs[order] = factorial(order)
    return idx, np.linalg.solve(V, rhs) / scale**order


def time_derivative(u: SpaceTimeField, order: int, width: int = 5) -> SpaceTimeField:
    """Finite-difference d_t^order u at every node (polynomial stencils)."""
    if order == 0:
        return u
    if len(u.times) < order + 1:
        raise ConfigurationError(f"time grid with {len(u.times)} nodes is too coarse for order {order}")
    data = u.physical().data
    out = np.empty_like(data)
    for m in range(len(u.times)):
        idx, w = time_derivative_weights(u.times, m, order, width)
        out[m] = np.tensordot(w, data[idx], axes=1)
    return u.physical().with_data(out)


def time_seminorm(frames: np.ndarray, times: np.ndarray, gamma: float) -> float:
    """sup over node pairs of sup_x |u(t') - u(t'')| / |t' - t''|^gamma; frames shaped (M+1, F, *grid)."""
    best = 0.0
    for a in range(len(times)):
        for b in range(a + 1, len(times)):
            diff = np.sqrt(((frames[a] - frames[b]) ** 2).sum(axis=0)).max()
            best = max(best, float(diff) / (times[b] - times[a]) ** gamma)
    return best


def _parabolic_terms(u: SpaceTimeField, extra: int, s: int, lam: float, gamma: float,
                     mode: str, seed) -> float:
    """Norm of grad^extra u in C^{2s, lam, s, gamma}."""
    total = 0.0
    for j in range(s + 1):
        ut = time_derivative(u, j)
        for m in range(2 * s - 2 * j + 1):
            vals = derivative_tensor(ut, extra + m)        # (F, M+1, *grid)
            frames = np.moveaxis(vals, 1, 0)               # (M+1, F, *grid)
            per_time = []
            for frame in frames:
                value = sup_norm(frame)
                if lam > 0:
                    value += spatial_seminorm(frame, lam, mode=mode, seed=seed, res=u.grid.res)
                per_time.append(value)
            total += max(per_time)
            if gamma > 0:
                total += gamma * time_seminorm(frames, u.times, gamma)
    return total


def anisotropic_norm(u: SpaceTimeField, idx: HoelderIndex, mode: str = "auto", seed=0,
                     lam: float | None = None, extra_k: int = 0) -> float:
    """C^{2s+k, lam, s, gamma} norm: sum over l <= k of the C^{2s,lam,s,gamma} norm of grad^l u."""
    if not isinstance(u, SpaceTimeField):
        raise ConfigurationError("anisotropic norm needs a space-time field")
    lam = idx.lam if lam is None else lam
    gamma = 0.0 if idx.gamma == 0.0 else lam / 2
    if idx.s > 0 and len(u.times) < 2 * idx.s + 1:
        raise ConfigurationError("time grid too coarse for the requested time derivatives")
    return sum(_parabolic_terms(u, l, idx.s, lam, gamma, mode, seed) for l in range(idx.k + extra_k + 1))


def combined_norm(u: SpaceTimeField, idx: HoelderIndex, mode: str = "auto", seed=0) -> float:
    """Norm in C^{2s+k+1, lam, s, gamma} plus norm in C^{2s+k, lam', s, gamma'}."""
    if idx.lam_prime is None:
        raise ConfigurationError("combined norm needs lam_prime")
    return (anisotropic_norm(u, idx, mode=mode, seed=seed, extra_k=1)
            + anisotropic_norm(u, idx, mode=mode, seed=seed, lam=idx.lam_prime))


@dataclass
class EmbeddingResult:
    applicable: bool
    ratios: np.ndarray
    observed_constant: float
    bound: float
    violations: int

    @property
    def holds(self) -> bool:
        return self.applicable and self.violations == 0


def embedding_check(fields, source: tuple[int, float], target: tuple[int, float],
                    bound: float = 1.0, mode: str = "auto") -> EmbeddingResult:
    """Check |u|_{C^{s',lam'}} <= bound * |u|_{C^{s,lam}} over a corpus of fields.

    On the unit torus (pair distances <= 1/2) the constant 1 is valid for
    the continuum norms whenever s + lam >= s' + lam'.
    """
    (s, lam), (s2, lam2) = source, target
    if isinstance(fields, FormField):
        fields = [fields]
    if s + lam < s2 + lam2:
        return EmbeddingResult(False, np.zeros(0), float("nan"), bound, 0)
    ratios = []
    for u in fields:
        if isinstance(u, SpaceTimeField):
            hi = anisotropic_norm(u, HoelderIndex(s=s, lam=lam), mode=mode)
            lo = anisotropic_norm(u, HoelderIndex(s=s2, lam=lam2), mode=mode)
        else:
            hi = isotropic_norm(u, s, lam, mode=mode)
            lo = isotropic_norm(u, s2, lam2, mode=mode)
        ratios.append(lo / hi if hi > 0 else 0.0)
    ratios = np.asarray(ratios)
    return EmbeddingResult(True, ratios, float(ratios.max(initial=0.0)), bound,
                           int(np.sum(ratios > bound * (1 + 1e-12))))


def field_corpus(grid, degree: int = 0, count: int = 100, seed=0, kmax: int = 4) -> list[FormField]:
    """Seeded mix of test fields: band-limited noise with assorted spectra,
    narrow periodic bumps, and single Fourier modes."""
    from .spectral_field import random_field

    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    rank = FormField.zeros(grid, degree).data.shape[0]
    out = []
    for j in range(count):
        kind = j % 3
        if kind == 0:
            out.append(random_field(grid, degree, rng, kmax=kmax, spectrum_decay=rng.uniform(0, 3)))
            continue
        data = np.zeros((rank,) + grid.shape)
        for c in range(rank):
            if kind == 1:
                centre = rng.uniform(0, 1, grid.n)
                width = rng.uniform(0.08, 0.2)
                dist2 = sum((np.sin(np.pi * (x - x0)) / np.pi) ** 2 for x, x0 in zip(mesh, centre))
                data[c] = rng.normal() * np.exp(-dist2 / (2 * width**2))
            else:
                k = rng.integers(-kmax, kmax + 1, grid.n)
                phase = sum(2 * np.pi * kj * x for kj, x in zip(k, mesh))
                data[c] = rng.normal() * np.cos(phase + rng.uniform(0, 2 * np.pi))
        out.append(FormField(grid, degree, data))
    return out
