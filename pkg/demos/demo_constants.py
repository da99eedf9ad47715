"""Walk through the constant calculations on a small collinear design.

The simultaneous max-|t| constant K sits between two references: the
orthogonal-design constant (the best any design can do) and the Scheffe
constant (protection for every linear combination). The gap between the
naive per-coefficient quantile 1.96 and K is the price of selection.
"""

import numpy as np

import posikit as pk

rng = np.random.default_rng(0)

# a 50-observation design with five correlated predictors
base = rng.standard_normal((50, 1))
X = 0.8 * base + 0.6 * rng.standard_normal((50, 5))
dm = pk.DesignMatrix(X, tuple(f"x{j}" for j in range(1, 6)))
design = pk.canonicalize(dm)
print(f"design: n={dm.n}, p={dm.p}, rank d={dm.rank}")

ds = pk.direction_stream(design)
print(f"direction count over all submodels: {ds.count} (p 2^(p-1) = {5 * 2**4})")

est = pk.posi_constant(design, alpha=0.05, n_samples=100_000, seed=1)
print(f"\nsimultaneous K     = {est.k:.4f}  (mc se {est.mc_standard_error:.4f})")
print(f"orthogonal floor   = {pk.orth_constant(0.05, design.d).k:.4f}")
print(f"scheffe ceiling    = {pk.scheffe_constant(0.05, design.d).k:.4f}")
print(f"naive z quantile   = 1.9600")

# the cap union bound needs only the direction count
bound = pk.cap_bonferroni_bound(ds.count, design.d, 0.05)
print(f"cap union bound    = {bound.k:.4f}  (valid for any set of {ds.count} directions)")

# one predictor of special interest: protect it across every model containing it
k1 = pk.posi1_constant(design, predictor=3, alpha=0.05, n_samples=100_000, seed=1)
print(f"single-predictor K = {k1.k:.4f}  (predictor x3 only)")

# finite error degrees of freedom widen everything
em = pk.ErrorModel.with_df(10)
est_r = pk.posi_constant(design, alpha=0.05, error_model=em,
                         n_samples=100_000, seed=1)
print(f"\nwith sigma-hat on 10 df: K = {est_r.k:.4f} "
      f"(scheffe {pk.scheffe_constant(0.05, design.d, em).k:.4f})")
