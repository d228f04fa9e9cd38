"""Differential forms on the flat unit torus [0, 1)^n.

A degree-i form is stored as C(n, i) scalar lattices, one per increasing
multi-index (lexicographic order, axes numbered from 0).  Every field carries
either its physical samples (real) or its Fourier coefficients (complex),
normalised so that a constant c has the single coefficient c at k = 0:

    u(x) = sum_k  u_hat[k] exp(2 pi i k.x)

Derivatives therefore map to the multiplier 2 pi i k_j.

Nyquist convention: a mode is *resolved* when none of its components equals
res/2.  The exterior-calculus operators act on resolved modes only and
annihilate the rest, which makes every algebraic identity of the complex exact
on Nyquist-free fields.  Random test fields are always band-limited.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import comb
from pathlib import Path

import numpy as np
import scipy.fft as sfft

PHYSICAL = "physical"
SPECTRAL = "spectral"

# worker count used by every FFT; the CLI sets this from --threads
FFT_WORKERS = 1


class ConfigurationError(ValueError):
    """Invalid grid or field configuration."""


class DegreeError(ValueError):
    """Form degree outside the range an operation accepts."""


def set_threads(n: int) -> None:
    global FFT_WORKERS
    FFT_WORKERS = max(1, int(n))


@lru_cache(maxsize=None)
def basis_indices(n: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Increasing multi-indices of length `degree` over axes 0..n-1."""
    if degree < 0 or degree > n:
        return ()
    return tuple(itertools.combinations(range(n), degree))


def fiber_rank(n: int, degree: int) -> int:
    return comb(n, degree) if 0 <= degree <= n else 0


def comp_index(c: int, n: int) -> tuple:
    """Index selecting component `c` of data shaped (..., C, *grid)."""
    return (Ellipsis, c) + (slice(None),) * n


def permutation_sign(seq) -> int:
    """Sign of the permutation sorting `seq` (entries distinct)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the unit n-torus.

    `res` may be a single int (same on every axis) or a per-axis tuple; each
    entry must be a power of two and at least 4.
    """

    n: int
    res: tuple[int, ...]
    L: float = 1.0

    def __init__(self, n: int, res, L: float = 1.0):
        if n < 1:
            raise ConfigurationError(f"dimension must be >= 1, got {n}")
        if np.isscalar(res):
            res = (int(res),) * n
        res = tuple(int(r) for r in res)
        if len(res) != n:
            raise ConfigurationError(f"need {n} resolutions, got {len(res)}")
        for r in res:
            if r < 4 or r & (r - 1):
                raise ConfigurationError(f"resolution {r} is not a power of two >= 4")
        if L != 1.0:
            raise ConfigurationError("torus period is fixed at L = 1")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "res", res)
        object.__setattr__(self, "L", 1.0)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.res

    @property
    def size(self) -> int:
        return int(np.prod(self.res))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / r for r in self.res)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.n, 0))

    # cached arrays are excluded from hashing/eq because the dataclass is frozen
    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, broadcastable to the grid shape.

        The Nyquist index is reported as +res/2.
        """
        out = []
        for ax, r in enumerate(self.res):
            k = np.fft.fftfreq(r, d=1.0 / r)
            k[r // 2] = r // 2
            shape = [1] * self.n
            shape[ax] = r
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def resolved(self) -> np.ndarray:
        """Boolean mask of modes without a Nyquist component."""
        mask = np.ones(self.res, dtype=bool)
        for k, r in zip(self.wavenumbers, self.res):
            mask &= np.abs(k) != r // 2
        return mask

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds truncation mask: keep |k_j| <= res_j / 3 on every axis."""
        mask = np.ones(self.res, dtype=bool)
        for k, r in zip(self.wavenumbers, self.res):
            mask &= np.abs(k) <= r // 3
        return mask

    @cached_property
    def derivative_multipliers(self) -> tuple[np.ndarray, ...]:
        """2 pi i k_j on resolved modes, zero elsewhere."""
        return tuple(2j * np.pi * k * self.resolved for k in self.wavenumbers)

    @cached_property
    def k_squared(self) -> np.ndarray:
        """|k|^2 using the true Nyquist wavenumber (all modes)."""
        return sum(k.astype(float) ** 2 for k in self.wavenumbers)

    @cached_property
    def laplace_symbol(self) -> np.ndarray:
        """Multiplier 4 pi^2 |k|^2 of the positive Laplacian on resolved modes."""
        return 4.0 * np.pi**2 * self.k_squared * self.resolved

    @cached_property
    def zero_mode(self) -> tuple[int, ...]:
        return (0,) * self.n

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Grid point coordinates x_j = j / res, broadcastable per axis."""
        out = []
        for ax, r in enumerate(self.res):
            shape = [1] * self.n
            shape[ax] = r
            out.append((np.arange(r) / r).reshape(shape))
        return tuple(out)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.broadcast_to(c, self.res) for c in self.coordinates())

    def fft(self, data: np.ndarray) -> np.ndarray:
        """Forward transform (coefficients normalised by the point count).

        Real input goes through a half-spectrum transform and the other half
        is filled in by conjugate symmetry.
        """
        if np.iscomplexobj(data):
            return sfft.fftn(data, axes=self.axes, norm="forward", workers=FFT_WORKERS)
        half = sfft.rfftn(data, axes=self.axes, norm="forward", workers=FFT_WORKERS)
        last = self.res[-1]
        out = np.empty(data.shape, dtype=complex)
        out[..., : last // 2 + 1] = half
        # X[-k] = conj(X[k]): reverse every spatial axis modulo its length
        mirror = np.conj(half[..., 1 : (last + 1) // 2])
        for ax in self.axes[:-1]:
            mirror = np.roll(np.flip(mirror, axis=ax), 1, axis=ax)
        out[..., last // 2 + 1 :] = mirror[..., ::-1]
        return out

    def ifft(self, data: np.ndarray) -> np.ndarray:
        return sfft.ifftn(data, axes=self.axes, norm="forward", workers=FFT_WORKERS)

    def ifft_real(self, data: np.ndarray) -> np.ndarray:
        """Inverse transform of conjugate-symmetric coefficients to real samples."""
        last = self.res[-1]
        return sfft.irfftn(data[..., : last // 2 + 1], s=self.res, axes=self.axes,
                           norm="forward", workers=FFT_WORKERS)

    def to_dict(self) -> dict:
        return {"n": self.n, "res": list(self.res)}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.flags.writeable:
        arr = arr.view()
        arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FormField:
    """A degree-`degree` form with components of shape grid.shape.

    `data` has shape (C(n, degree), *grid.shape); physical data is real,
    spectral data complex.  Instances are immutable.
    """

    grid: Grid
    degree: int
    data: np.ndarray
    space: str = PHYSICAL

    def __post_init__(self):
        rank = fiber_rank(self.grid.n, self.degree)
        if self.degree < -1 or self.degree > self.grid.n + 1:
            raise DegreeError(f"degree {self.degree} out of range for n={self.grid.n}")
        if self.space not in (PHYSICAL, SPECTRAL):
            raise ConfigurationError(f"unknown representation {self.space!r}")
        data = np.asarray(self.data)
        expected = self._lead_shape() + (rank,) + self.grid.shape
        if data.shape != expected:
            raise ConfigurationError(f"data shape {data.shape}, expected {expected}")
        dtype = np.float64 if self.space == PHYSICAL else np.complex128
        object.__setattr__(self, "data", _freeze(data.astype(dtype, copy=False)))

    def _lead_shape(self) -> tuple[int, ...]:
        return ()

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, grid: Grid, degree: int, space: str = PHYSICAL) -> "FormField":
        dtype = np.float64 if space == PHYSICAL else np.complex128
        return cls(grid, degree, np.zeros((fiber_rank(grid.n, degree),) + grid.shape, dtype), space)

    @classmethod
    def from_components(cls, grid: Grid, degree: int, components) -> "FormField":
        """Build a physical field from a mapping multi-index -> array (or scalar).

        Multi-indices use 0-based axes and may be given in any order; the
        permutation sign is applied.  Missing components are zero.
        """
        basis = basis_indices(grid.n, degree)
        data = np.zeros((len(basis),) + grid.shape)
        for idx, values in dict(components).items():
            idx = tuple(idx)
            key = tuple(sorted(idx))
            if key not in basis:
                raise DegreeError(f"multi-index {idx} invalid for degree {degree}")
            data[basis.index(key)] += permutation_sign(idx) * np.broadcast_to(values, grid.shape)
        return cls(grid, degree, data, PHYSICAL)

    def with_data(self, data: np.ndarray, degree: int | None = None, space: str | None = None):
        return FormField(self.grid, self.degree if degree is None else degree, data,
                         self.space if space is None else space)

    # representation ----------------------------------------------------
    def to(self, space: str):
        if space == self.space:
            return self
        if space == SPECTRAL:
            return self.with_data(self.grid.fft(self.data), space=SPECTRAL)
        if space == PHYSICAL:
            return self.with_data(self.grid.ifft_real(self.data), space=PHYSICAL)
        raise ConfigurationError(f"unknown representation {space!r}")

    def spectral(self):
        return self.to(SPECTRAL)

    def physical(self):
        return self.to(PHYSICAL)

    @property
    def rank(self) -> int:
        return fiber_rank(self.grid.n, self.degree)

    @property
    def basis(self) -> tuple[tuple[int, ...], ...]:
        return basis_indices(self.grid.n, self.degree)

    def component(self, idx) -> np.ndarray:
        return self.data[comp_index(self.basis.index(tuple(idx)), self.grid.n)]

    # arithmetic ----------------------------------------------------------
    def _check_compatible(self, other):
        if not isinstance(other, FormField) or other.grid != self.grid or other.degree != self.degree:
            raise DegreeError("fields must share grid and degree")

    def __add__(self, other):
        self._check_compatible(other)
        return self.with_data(self.data + other.to(self.space).data)

    def __sub__(self, other):
        self._check_compatible(other)
        return self.with_data(self.data - other.to(self.space).data)

    def __neg__(self):
        return self.with_data(-self.data)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        if self.space == PHYSICAL and np.iscomplexobj(scalar):
            raise TypeError("physical fields are real")
        return self.with_data(self.data * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def norm(self) -> float:
        """L2 norm over the unit torus."""
        return float(np.sqrt(max(inner_product(self, self), 0.0)))

    def max_abs(self) -> float:
        """Sup over grid points of the pointwise fiber norm."""
        phys = self.physical().data
        if phys.shape[-self.grid.n - 1] == 0:
            return 0.0
        return float(np.sqrt((phys**2).sum(axis=-self.grid.n - 1)).max())

    def is_resolved(self, tol: float = 0.0) -> bool:
        spec = self.spectral().data
        return bool(np.abs(spec[..., ~self.grid.resolved]).max(initial=0.0) <= tol)

    def conjugate_symmetry_defect(self) -> float:
        """max |u_hat(k) - conj(u_hat(-k))|; zero for real fields."""
        spec = self.spectral().data
        flipped = np.flip(spec, axis=self.grid.axes)
        flipped = np.roll(flipped, 1, axis=self.grid.axes)
        return float(np.abs(spec - flipped.conj()).max(initial=0.0))


@dataclass(frozen=True, eq=False)
class SpaceTimeField(FormField):
    """Time-sampled trajectory of forms: data shape (M+1, C(n,i), *grid.shape)."""

    times: np.ndarray = field(default=None)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ConfigurationError("need at least two time nodes")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ConfigurationError("time nodes must start at 0 and increase strictly")
        object.__setattr__(self, "times", _freeze(times))
        super().__post_init__()

    def _lead_shape(self) -> tuple[int, ...]:
        return (len(self.times),)

    @classmethod
    def zeros(cls, grid: Grid, degree: int, times, space: str = PHYSICAL) -> "SpaceTimeField":
        dtype = np.float64 if space == PHYSICAL else np.complex128
        times = np.asarray(times, dtype=float)
        data = np.zeros((len(times), fiber_rank(grid.n, degree)) + grid.shape, dtype)
        return cls(grid, degree, data, space, times)

    @classmethod
    def from_frames(cls, frames, times) -> "SpaceTimeField":
        frames = list(frames)
        space = frames[0].space
        data = np.stack([f.to(space).data for f in frames])
        return cls(frames[0].grid, frames[0].degree, data, space, np.asarray(times, float))

    @classmethod
    def constant_in_time(cls, frame: FormField, times) -> "SpaceTimeField":
        times = np.asarray(times, dtype=float)
        data = np.broadcast_to(frame.data, (len(times),) + frame.data.shape).copy()
        return cls(frame.grid, frame.degree, data, frame.space, times)

    def with_data(self, data, degree=None, space=None):
        return SpaceTimeField(self.grid, self.degree if degree is None else degree, data,
                              self.space if space is None else space, self.times)

    def _check_compatible(self, other):
        super()._check_compatible(other)
        if not isinstance(other, SpaceTimeField) or not np.array_equal(other.times, self.times):
            raise ConfigurationError("time grids differ")

    @property
    def num_steps(self) -> int:
        return len(self.times) - 1

    @property
    def is_uniform(self) -> bool:
        dt = np.diff(self.times)
        return bool(np.allclose(dt, dt[0], rtol=1e-12, atol=0.0))

    def frame(self, m: int) -> FormField:
        return FormField(self.grid, self.degree, self.data[m], self.space)

    def frames(self):
        return [self.frame(m) for m in range(len(self.times))]

    def node_norms(self) -> np.ndarray:
        """L2 norm of each time frame."""
        return np.sqrt(np.maximum(_pairing(self, self), 0.0))

    def sup_norm(self) -> float:
        """Sup over time nodes of the L2 space norm."""
        return float(self.node_norms().max())


# --------------------------------------------------------------------------
# operations


def transform(u: FormField, target: str) -> FormField:
    """Switch representation; identity if already in `target`."""
    return u.to(target)


def _pairing(a: FormField, b: FormField) -> np.ndarray:
    """L2 pairing reduced over component and grid axes only.

    Physical pairs use the grid mean, spectral pairs the Parseval sum; the
    two agree to rounding for every grid function (discrete Parseval).
    """
    if a.grid != b.grid or a.degree != b.degree:
        raise DegreeError("inner product needs equal grid and degree")
    axes = tuple(range(-a.grid.n - 1, 0))
    if a.space == PHYSICAL and b.space == PHYSICAL:
        return (a.data * b.data).sum(axis=axes) / a.grid.size
    sa = a.spectral().data
    sb = b.spectral().data
    return np.real(sa * sb.conj()).sum(axis=axes)


def node_pairings(a: "SpaceTimeField", b: "SpaceTimeField") -> np.ndarray:
    """L2 pairing of matching time frames."""
    return np.asarray(_pairing(a, b), dtype=float)


def inner_product(a: FormField, b: FormField) -> float:
    """(a, b) = integral of the fibre inner product over the unit torus."""
    if isinstance(a, SpaceTimeField) or isinstance(b, SpaceTimeField):
        raise DegreeError("inner_product takes single time frames; use node pairings")
    return float(_pairing(a, b))


def quadrature_inner_product(a: FormField, b: FormField) -> float:
    """Same pairing by grid quadrature in physical space."""
    if a.grid != b.grid or a.degree != b.degree:
        raise DegreeError("inner product needs equal grid and degree")
    return float((a.physical().data * b.physical().data).sum() / a.grid.size)


@lru_cache(maxsize=None)
def wedge_table(n: int, p: int, q: int) -> tuple[tuple[int, int, int, int], ...]:
    """Entries (out, left, right, sign) of dx^I ^ dx^J on increasing indices."""
    out_basis = basis_indices(n, p + q)
    rows = []
    for a, I in enumerate(basis_indices(n, p)):
        for b, J in enumerate(basis_indices(n, q)):
            if set(I) & set(J):
                continue
            joined = I + J
            rows.append((out_basis.index(tuple(sorted(joined))), a, b, permutation_sign(joined)))
    return tuple(rows)


def wedge(a: FormField, b: FormField) -> FormField:
    """Pointwise exterior product of two physical forms."""
    if a.grid != b.grid:
        raise ConfigurationError("wedge needs a common grid")
    n, p, q = a.grid.n, a.degree, b.degree
    if p + q > n:
        raise DegreeError(f"degree overflow: {p} + {q} > {n}")
    if a.space != PHYSICAL or b.space != PHYSICAL:
        raise ConfigurationError("wedge acts on physical fields")
    lead = a.data.shape[: a.data.ndim - n - 1]
    out = np.zeros(lead + (fiber_rank(n, p + q),) + a.grid.shape)
    for k, i, j, s in wedge_table(n, p, q):
        out[comp_index(k, n)] += s * a.data[comp_index(i, n)] * b.data[comp_index(j, n)]
    return a.with_data(out, degree=p + q)


@lru_cache(maxsize=None)
def star_table(n: int, degree: int) -> tuple[tuple[int, int, int], ...]:
    """Entries (out, in, sign) with star(dx^I) = sign dx^{I^c}."""
    out_basis = basis_indices(n, n - degree)
    rows = []
    for a, I in enumerate(basis_indices(n, degree)):
        comp = tuple(j for j in range(n) if j not in I)
        rows.append((out_basis.index(comp), a, permutation_sign(I + comp)))
    return tuple(rows)


def hodge_star(a: FormField) -> FormField:
    """Euclidean Hodge star; acts componentwise in either representation."""
    n = a.grid.n
    if not 0 <= a.degree <= n:
        raise DegreeError(f"degree {a.degree} out of range")
    out = np.zeros_like(a.data)
    for k, i, s in star_table(n, a.degree):
        out[comp_index(k, n)] = s * a.data[comp_index(i, n)]
    return a.with_data(out, degree=n - a.degree)


# --------------------------------------------------------------------------
# sampling helpers


def random_field(grid: Grid, degree: int, rng, kmax: int = 4, amplitude: float = 1.0,
                 spectrum_decay: float = 0.0) -> FormField:
    """Random real band-limited form with |k_j| <= kmax on every axis.

    The result is normalised to L2 norm `amplitude` (when nonzero).
    `spectrum_decay` > 0 weights modes by (1 + |k|^2)^(-decay/2).
    """
    rng = np.random.default_rng(rng)
    rank = fiber_rank(grid.n, degree)
    mask = np.ones(grid.shape, dtype=bool)
    for k in grid.wavenumbers:
        mask &= np.abs(k) <= kmax
    mask &= grid.resolved
    noise = rng.standard_normal((rank,) + grid.shape)
    spec = grid.fft(noise) * mask
    if spectrum_decay:
        spec = spec * (1.0 + grid.k_squared) ** (-spectrum_decay / 2)
    field_ = FormField(grid, degree, spec, SPECTRAL).physical()
    nrm = field_.norm()
    return field_ * (amplitude / nrm) if nrm > 0 else field_


# --------------------------------------------------------------------------
# serialization

_MAGIC = "torusns-field"


def field_header(u: FormField) -> dict:
    header = {
        "format": _MAGIC,
        "n": u.grid.n,
        "degree": u.degree,
        "res": list(u.grid.res),
        "repr": u.space,
        "components": [list(I) for I in u.basis],
    }
    if isinstance(u, SpaceTimeField):
        header["times"] = [float(t) for t in u.times]
    return header


def _field_from(header: dict, data: np.ndarray) -> FormField:
    if header.get("format") != _MAGIC:
        raise ConfigurationError("not a field file")
    grid = Grid(header["n"], tuple(header["res"]))
    degree = int(header["degree"])
    expected = [list(I) for I in basis_indices(grid.n, degree)]
    if header.get("components", expected) != expected:
        raise ConfigurationError("component order must be lexicographic increasing multi-indices")
    space = header["repr"]
    if "times" in header:
        times = np.asarray(header["times"], float)
        data = data.reshape((len(times), fiber_rank(grid.n, degree)) + grid.shape)
        return SpaceTimeField(grid, degree, data, space, times)
    return FormField(grid, degree, data.reshape((fiber_rank(grid.n, degree),) + grid.shape), space)


def save_field(u: FormField, path) -> None:
    """Write a field as JSON (``.json``) or header-line + raw little-endian binary."""
    path = Path(path)
    header = field_header(u)
    if path.suffix == ".json":
        flat = u.data.ravel()
        if u.space == SPECTRAL:
            payload = {"real": flat.real.tolist(), "imag": flat.imag.tolist()}
        else:
            payload = flat.tolist()
        path.write_text(json.dumps({"header": header, "data": payload}))
        return
    dtype = "<f8" if u.space == PHYSICAL else "<c16"
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(u.data, dtype=dtype).tobytes())


def load_field(path) -> FormField:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        header, payload = doc["header"], doc["data"]
        if isinstance(payload, dict):
            data = np.asarray(payload["real"]) + 1j * np.asarray(payload["imag"])
        else:
            data = np.asarray(payload, dtype=float)
        return _field_from(header, data)
    raw = path.read_bytes()
    split = raw.index(b"\n")
    header = json.loads(raw[:split].decode())
    dtype = "<f8" if header["repr"] == PHYSICAL else "<c16"
    return _field_from(header, np.frombuffer(raw[split + 1:], dtype=dtype).copy())
