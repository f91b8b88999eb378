"""Moving-average weights for the current value and the time derivative.

The closed-form schemes are compared with the minimum-norm solution of the
moment constraints, then applied to a noisy affine signal.
"""
import numpy as np

from pctrack import alpha_weights, beta_weights, min_norm_weights_oracle

h = 0.01
a, b = alpha_weights(8), beta_weights(6, h)
print("alpha(m=8):", np.round(a.weights, 4))
print("beta(p=6, h=0.01):", np.round(b.weights, 2))

gap_a = np.abs(a.weights - min_norm_weights_oracle(8, [(0, 1), (1, 0)])).max()
gap_b = np.abs(b.weights - min_norm_weights_oracle(6, [(0, 0), (1, -1 / h)])).max()
print(f"largest gap to the min-norm oracle: alpha {gap_a:.1e}, beta {gap_b:.1e}")

# newest observation first: y(t - i h) = 2 + 3 (t - i h) + noise, with t = 0
rng = np.random.default_rng(0)
m = 200
lags = -np.arange(m) * h
y = 2 + 3 * lags + 0.1 * rng.standard_normal(m)
print(f"value estimate {alpha_weights(m).weights @ y:.3f} (truth 2)")
print(f"slope estimate {beta_weights(m, h).weights @ y:.3f} (truth 3)")
