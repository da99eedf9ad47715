"""The two analytically tractable design families at desk scale.

Exchangeable designs (equal pairwise angles) keep the constant within a
log-rate band of the orthogonal case no matter how collinear they get.
The one-primary-predictor family shows the opposite extreme: its
single-predictor constant grows at a sqrt(p) rate, a fixed fraction of the
Scheffe rate, computable at p = 2000 via an order-statistic shortcut.
"""

import posikit as pk

print("exchangeable family: K against the orthogonal and Scheffe references")
p = 6
for a in (0.0, 0.5, 2.0, 10.0):
    est = pk.posi_constant(pk.exchangeable_design(p, a), n_samples=40_000, seed=0)
    cos = pk.exchangeable_cosine(p, a)
    print(f"  a={a:>5}: pairwise cosine {cos:+.3f}  K = {est.k:.3f}")
print(f"  orthogonal reference {pk.orth_constant(0.05, p).k:.3f}, "
      f"scheffe {pk.scheffe_constant(0.05, p).k:.3f}")

c = pk.exchangeable_inverse_param(p, 10.0)
print(f"  parameter duality: a=10 and a={c:.4f} give the same constant "
      "(inverse designs)")

print("\nsup over the family, in units of sqrt(2 log p):")
for row in pk.exchangeable_ratio_table([5, 8], n_samples=20_000, seed=0):
    print(f"  p={row.p}: sup K = {row.k:.3f} at a={row.best_a}  "
          f"ratio = {row.ratio:.3f} (limit value: 2)")

print("\nworst-case single-predictor family at p = 2000:")
rows = pk.worst_posi1_table(2000, n_samples=10_000, seed=0)
for row in rows[-3:]:
    print(f"  c={row.c:.5f}: K1/sqrt(p) = {row.ratio:.4f}")
r_star, f_star = pk.rate_function_max()
print(f"  asymptotic rate constant f(r*) = {f_star:.5f} at r* = {r_star:.5f}")
print(f"  Scheffe rate for comparison: K_sch/sqrt(p) -> 1; "
      f"cap-bound ceiling {pk.asymptotic_cap_constant(2.0):.4f}")
