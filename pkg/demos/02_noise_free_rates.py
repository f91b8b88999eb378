"""Tracking error rates with exact derivatives.

On a quadratic whose minimizer follows a slow sinusoid, gradient descent
lags by O(h) while the predictor-corrector step lags by O(h^2).
"""
from pctrack import ExperimentConfig, monte_carlo, summarize

cfg = ExperimentConfig(
    scenario="quadratic",
    scenario_params={"trajectory": "sine", "frequency": 0.05},
    hs=(3e-2, 1e-2, 3e-3, 1e-3),
    reps=1,
    exact=True,
    init_offset=0.0,
    eta={"gd": 0.1, "pc": 0.1},
)
summary = summarize(monte_carlo(cfg))
for method in cfg.methods:
    for h in cfg.hs:
        print(f"{method} h={h:<6g} terminal error {summary.row(method, h)['terminal_error_mean']:.3e}")
for method, (slope, se) in summary.slopes.items():
    print(f"{method}: error ~ h^{slope:.2f} (+/- {se:.2f})")
