"""Pointwise bilinear maps and the quadratic transport term built from them.

A bilinear map is a sparse coefficient table over basis multi-indices,

    out[o] += coef * left[a] * right[b],

evaluated in physical space with two-thirds dealiasing: inputs and output
are truncated to |k_j| <= res_j / 3 (which also removes the Nyquist plane).

For 1-forms the default pair is

    first(w, u)  = star(star w ^ u)         (w a 2-form, e.g. dv)
    second(v, u) = star(u ^ star v) / 2     (a 0-form)

and advect(v) = first(dv, v) + d second(v, v), which is v . grad v written
in Lamb form (curl v x v + grad |v|^2 / 2 in three dimensions).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .derham_complex import differential
from .hodge_theory import leray_projection
from .spectral_field import (
    PHYSICAL,
    SPECTRAL,
    ConfigurationError,
    DegreeError,
    FormField,
    basis_indices,
    comp_index,
    fiber_rank,
    star_table,
    wedge_table,
)


@dataclass(frozen=True)
class BilinearMap:
    n: int
    left_degree: int
    right_degree: int
    out_degree: int
    entries: tuple[tuple[int, int, int, float], ...]

    def __post_init__(self):
        shape = self.tensor_shape
        for o, a, b, _ in self.entries:
            if not (0 <= o < shape[0] and 0 <= a < shape[1] and 0 <= b < shape[2]):
                raise ConfigurationError(f"table entry ({o}, {a}, {b}) out of range for ranks {shape}")

    @property
    def tensor_shape(self) -> tuple[int, int, int]:
        return (fiber_rank(self.n, self.out_degree), fiber_rank(self.n, self.left_degree),
                fiber_rank(self.n, self.right_degree))

    def tensor(self) -> np.ndarray:
        T = np.zeros(self.tensor_shape)
        for o, a, b, c in self.entries:
            T[o, a, b] += c
        return T

    def bound_constant(self) -> float:
        """Upper bound of |B(w, u)| / (|w| |u|) over the fibres (Frobenius norm)."""
        return float(np.sqrt((self.tensor() ** 2).sum()))

    def sampled_constant(self, samples: int = 1000, seed=0) -> float:
        """Largest ratio |B(w, u)| / (|w| |u|) over random fibre vectors."""
        rng = np.random.default_rng(seed)
        T = self.tensor()
        w = rng.standard_normal((samples, T.shape[1]))
        u = rng.standard_normal((samples, T.shape[2]))
        out = np.einsum("oab,sa,sb->so", T, w, u)
        ratio = np.linalg.norm(out, axis=1) / (np.linalg.norm(w, axis=1) * np.linalg.norm(u, axis=1))
        return float(ratio.max(initial=0.0))

    def apply(self, left: FormField, right: FormField, dealias: bool = True,
              space: str = PHYSICAL) -> FormField:
        """Pointwise product of degree `out_degree`, returned in representation `space`."""
        if left.degree != self.left_degree or right.degree != self.right_degree:
            raise DegreeError(
                f"bilinear map takes degrees ({self.left_degree}, {self.right_degree}),"
                f" got ({left.degree}, {right.degree})")
        if left.grid != right.grid or left.grid.n != self.n:
            raise ConfigurationError("operands must share a grid of matching dimension")
        grid = left.grid
        a = _truncated(left, dealias)
        b = _truncated(right, dealias)
        lead = a.shape[: a.ndim - grid.n - 1]
        out = np.zeros(lead + (self.tensor_shape[0],) + grid.shape)
        for o, i, j, c in self.entries:
            out[comp_index(o, grid.n)] += c * a[comp_index(i, grid.n)] * b[comp_index(j, grid.n)]
        result = left.with_data(out, degree=self.out_degree, space=PHYSICAL)
        if dealias:
            spec = result.spectral()
            result = spec.with_data(spec.data * grid.dealias_mask)
        return result.to(space)

    def to_json(self) -> dict:
        return {"n": self.n, "degrees": [self.out_degree, self.left_degree, self.right_degree],
                "entries": [[o, a, b, c] for o, a, b, c in self.entries]}


def _truncated(u: FormField, dealias: bool) -> np.ndarray:
    if not dealias:
        return u.physical().data
    spec = u.spectral()
    return spec.with_data(spec.data * u.grid.dealias_mask).physical().data


def _compose_star_wedge_star(n: int, p: int, q: int, swap: bool, scale: float) -> BilinearMap:
    """Table of (w, u) -> scale * star(star w ^ u), or star(u ^ star w) when `swap`.

    w has degree p, u degree q; built from the star and wedge sign tables.
    """
    star_in = star_table(n, p)            # star w: degree n - p
    mid_deg = n - p + q
    wedge_rows = wedge_table(n, q, n - p) if swap else wedge_table(n, n - p, q)
    star_out = {i: (o, s) for o, i, s in star_table(n, mid_deg)}
    star_w = {}
    for o, i, s in star_in:
        star_w.setdefault(o, []).append((i, s))
    acc: dict[tuple[int, int, int], float] = {}
    for row in wedge_rows:
        if swap:
            k, b, a_star, s_w = row
        else:
            k, a_star, b, s_w = row
        o_final, s_out = star_out[k]
        for a, s_in in star_w.get(a_star, []):
            key = (o_final, a, b)
            acc[key] = acc.get(key, 0.0) + scale * s_in * s_w * s_out
    entries = tuple(sorted((o, a, b, c) for (o, a, b), c in acc.items() if c != 0.0))
    return BilinearMap(n, p, q, n - mid_deg, entries)


@dataclass(frozen=True)
class Nonlinearity:
    """A pair of bilinear maps acting on degree-`degree` fields."""

    degree: int
    first: BilinearMap
    second: BilinearMap
    name: str = "custom"

    def __post_init__(self):
        i = self.degree
        if (self.first.left_degree, self.first.right_degree, self.first.out_degree) != (i + 1, i, i):
            raise DegreeError("first map must send (degree i+1, degree i) to degree i")
        if (self.second.left_degree, self.second.right_degree, self.second.out_degree) != (i, i, i - 1):
            raise DegreeError("second map must send (degree i, degree i) to degree i-1")

    @property
    def c1(self) -> float:
        return self.first.bound_constant()

    @property
    def c2(self) -> float:
        return self.second.bound_constant()

    @classmethod
    def from_json(cls, source, n: int | None = None) -> "Nonlinearity":
        """Load {"degree", "first": table, "second": table} from a dict or path.

        A table is either {"n", "degrees": [out, left, right], "entries"} or a
        bare list of [out, left, right, coef]; indices are positions in the
        lexicographic basis or explicit multi-index lists.
        """
        doc = json.loads(Path(source).read_text()) if isinstance(source, (str, Path)) else source
        i = int(doc["degree"])
        n = int(doc.get("n", n))
        maps = []
        for key, degs in (("first", (i, i + 1, i)), ("second", (i - 1, i, i))):
            table = doc[key]
            entries = table["entries"] if isinstance(table, dict) else table
            out_deg, left_deg, right_deg = table.get("degrees", degs) if isinstance(table, dict) else degs
            rows = []
            for o, a, b, c in entries:
                rows.append((_index(n, out_deg, o), _index(n, left_deg, a), _index(n, right_deg, b), float(c)))
            maps.append(BilinearMap(n, left_deg, right_deg, out_deg, tuple(rows)))
        return cls(i, maps[0], maps[1], doc.get("name", "custom"))

    def to_json(self) -> dict:
        return {"name": self.name, "n": self.first.n, "degree": self.degree,
                "first": self.first.to_json(), "second": self.second.to_json()}


def _index(n: int, degree: int, idx) -> int:
    if isinstance(idx, (list, tuple)):
        return basis_indices(n, degree).index(tuple(sorted(idx)))
    return int(idx)


def derham_default(n: int, degree: int = 1) -> Nonlinearity:
    """The Lamb-form pair for 1-forms; other degrees need an explicit table."""
    if degree != 1:
        raise DegreeError("the default transport pair is defined for 1-forms only")
    first = _compose_star_wedge_star(n, 2, 1, swap=False, scale=1.0)
    second = _compose_star_wedge_star(n, 1, 1, swap=True, scale=0.5)
    return Nonlinearity(1, first, second, "derham-default")


def _resolve(v: FormField, nonlinearity: Nonlinearity | None) -> Nonlinearity:
    if nonlinearity is None:
        return derham_default(v.grid.n, v.degree)
    if nonlinearity.degree != v.degree:
        raise DegreeError("nonlinearity degree does not match the field")
    return nonlinearity


def m1(w: FormField, u: FormField, nonlinearity: Nonlinearity | None = None) -> FormField:
    return _resolve(u, nonlinearity).first.apply(w, u)


def m2(v: FormField, u: FormField, nonlinearity: Nonlinearity | None = None) -> FormField:
    return _resolve(v, nonlinearity).second.apply(v, u)


def advect(v: FormField, nonlinearity: Nonlinearity | None = None) -> FormField:
    """first(dv, v) + d second(v, v), in the representation of v."""
    nl = _resolve(v, nonlinearity)
    vs = v.spectral()
    rotational = nl.first.apply(differential(vs), vs, space=SPECTRAL)
    gradient = differential(nl.second.apply(vs, vs, space=SPECTRAL))
    return (rotational + gradient).to(v.space)


def advect_derivative(u0: FormField, v: FormField, nonlinearity: Nonlinearity | None = None) -> FormField:
    """Frechet derivative of advect at u0 applied to v."""
    nl = _resolve(v, nonlinearity)
    us, vs = u0.spectral(), v.spectral()
    rotational = (nl.first.apply(differential(vs), us, space=SPECTRAL)
                  + nl.first.apply(differential(us), vs, space=SPECTRAL))
    scalar = nl.second.apply(vs, us, space=SPECTRAL) + nl.second.apply(us, vs, space=SPECTRAL)
    return (rotational + differential(scalar)).to(v.space)


def projected_advect(v: FormField, nonlinearity: Nonlinearity | None = None) -> FormField:
    """Leray projection of advect(v), computed from the rotational part alone."""
    nl = _resolve(v, nonlinearity)
    vs = v.spectral()
    return leray_projection(nl.first.apply(differential(vs), vs, space=SPECTRAL)).to(v.space)


def projected_advect_derivative(u0: FormField, v: FormField,
                                nonlinearity: Nonlinearity | None = None) -> FormField:
    nl = _resolve(v, nonlinearity)
    us, vs = u0.spectral(), v.spectral()
    rotational = (nl.first.apply(differential(vs), us, space=SPECTRAL)
                  + nl.first.apply(differential(us), vs, space=SPECTRAL))
    return leray_projection(rotational).to(v.space)


def convective_term(v: FormField) -> FormField:
    """Direct v . grad v for a 1-form read as a vector field (no dealiasing)."""
    if v.degree != 1:
        raise DegreeError("convective term needs a 1-form")
    grid = v.grid
    spec = v.spectral().data
    vel = v.physical().data
    out = np.zeros_like(vel)
    for j, mult in enumerate(grid.derivative_multipliers):
        grad_j = grid.ifft_real(spec * mult)
        out += vel[comp_index(j, grid.n)][None] * grad_j
    return v.physical().with_data(out)
