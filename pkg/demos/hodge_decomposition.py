"""Split a random 1-form on the 3-torus into exact, co-exact and harmonic parts.

Run: python demos/hodge_decomposition.py
"""
import numpy as np

from torusns import Grid, codifferential, differential, hodge_decompose
from torusns.spectral_field import inner_product, random_field

grid = Grid(3, 16)
u = random_field(grid, 1, np.random.default_rng(0), kmax=3)
# lift the mean so the harmonic part is visible
u = u + random_field(grid, 1, np.random.default_rng(1), kmax=0)
parts = hodge_decompose(u)

print(f"|u|              = {u.norm():.6f}")
for name in parts._fields:
    print(f"|{name:<9}|      = {getattr(parts, name).norm():.6f}")

rebuilt = parts.exact + parts.coexact + parts.harmonic
print(f"reassembly error = {(rebuilt - u).norm():.2e}")
print(f"(exact, coexact) = {inner_product(parts.exact, parts.coexact):.2e}")
print(f"d(exact)         = {differential(parts.exact).norm():.2e}   (closed)")
print(f"d*(coexact)      = {codifferential(parts.coexact).norm():.2e}   (co-closed)")
