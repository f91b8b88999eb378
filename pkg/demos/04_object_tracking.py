"""Locating a target on a circle from squared-distance readings on an 11x11 sensor grid."""
from pctrack import build_config, monte_carlo, preset
from pctrack.harness import mean_error_curve

data = preset("object-tracking")
data.update(hs=[1e-2, 1e-3], seed=7)
results = monte_carlo(build_config(data))

for h in (1e-2, 1e-3):
    t, gd, _ = mean_error_curve(results[("gd", h)])
    _, pc, _ = mean_error_curve(results[("pc", h)])
    late = t >= 1
    print(f"h={h:g}: PC ahead at {(pc[late] < gd[late]).mean():.0%} of t>=1; "
          f"t=3 GD {gd[-1]:.4f}, PC {pc[-1]:.4f}")
