"""Least-squares regression with a rotating parameter and noisy responses.

Derivatives are estimated from a window of past observations. Writes the
per-step traces to out/demo-regression/.
"""
from pctrack import build_config, emit_csv, monte_carlo, preset, summarize
from pctrack.harness import mean_error_curve

data = preset("regression")
data.update(hs=[1e-2, 3e-3, 1e-3], seed=7)
cfg = build_config(data)
results = monte_carlo(cfg)

for h in cfg.hs:
    t, gd, _ = mean_error_curve(results[("gd", h)])
    _, pc, _ = mean_error_curve(results[("pc", h)])
    print(f"h={h:<6g} mean error at t=3: GD {gd[-1]:.4f}  PC {pc[-1]:.4f}")

slopes = summarize(results, "final").slopes
print({m: round(s, 2) for m, (s, _) in slopes.items()})
print("CSV:", *emit_csv(results, "out/demo-regression", "regression"))
