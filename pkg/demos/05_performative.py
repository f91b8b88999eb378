"""Performative prediction: the data distribution shifts with the deployed estimate.

Gradient, curvature and time derivative are sample averages weighted by
Gaussian score ratios. First a Monte Carlo check against closed forms, then
the tracking comparison.
"""
import numpy as np

from pctrack import PerformativeScenario, build_config, monte_carlo, preset

scn = PerformativeScenario()
rng = np.random.default_rng(1)
theta, t = 0.8, 0.3
z = scn.mu(t) + scn.eps(t) * theta + scn.sigma * rng.standard_normal(200_000)
est, exact = scn.bundle_from_samples(theta, z, t), scn.exact_bundle(theta, t)
for name in ("gradient", "hessian", "cross"):
    print(f"{name:8s} sampled {np.ravel(getattr(est, name))[0]:+.4f}  exact {np.ravel(getattr(exact, name))[0]:+.4f}")

data = preset("performative")
data.update(hs=[1e-2], seed=7)
res = monte_carlo(build_config(data))
for m in ("gd", "pc"):
    finals = [r.final_error for r in res[(m, 1e-2)]]
    print(f"{m}: mean error at t=3 {np.mean(finals):.4f} over {len(finals)} runs")
