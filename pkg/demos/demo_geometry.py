"""Geometry of the direction set: the polytope, its orthogonalities, and the
inverse-design duality.

The constant K is the half-width at which the slab intersection
{ z : |l'z| <= K } captures probability 1 - alpha. For a symmetric design
the inverse matrix poses the *same* problem: identical directions,
identical polytope, identical constant.
"""

import numpy as np

import posikit as pk

rng = np.random.default_rng(5)
A = rng.standard_normal((4, 4))
S = A @ A.T + 4 * np.eye(4)
design = pk.CanonicalDesign.from_canonical(S, form="symmetric")
inverse = pk.CanonicalDesign.from_canonical(np.linalg.inv(S), form="symmetric")

report = pk.verify_duality(design)
print(f"duality check over {report.matched_pairs} (predictor, model) pairs:")
print(f"  worst direction mismatch : {report.max_direction_mismatch:.2e}")
print(f"  worst norm-product error : {report.max_norm_product_error:.2e}")

kA = pk.posi_constant(design, n_samples=50_000, seed=3, dedup="up_to_sign")
kB = pk.posi_constant(inverse, n_samples=50_000, seed=3, dedup="up_to_sign")
print(f"K(design) = {kA.k:.6f}, K(inverse) = {kB.k:.6f}, equal: {kA.k == kB.k}")

ds = pk.direction_stream(design)
census = pk.orthogonality_census(ds)
print(f"\northogonal-partner histogram over {ds.count} directions:")
for partners, how_many in sorted(census.histogram.items()):
    print(f"  {how_many:2d} directions with {partners} orthogonal partners")

poly = pk.PolytopeSpec(ds, kA.k)
inside = sum(
    pk.polytope_contains(poly, z) for z in rng.standard_normal((2_000, 4))
)
print(f"\nMonte Carlo polytope mass at K: {inside / 2_000:.3f} (target 0.95)")
z_edge = 1.001 * kA.k * next(iter(ds)).vector
print(f"just outside a face: contained = {pk.polytope_contains(poly, z_edge)}")
