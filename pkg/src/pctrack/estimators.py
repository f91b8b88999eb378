"""Moving-average weights for estimating a signal's current value (alpha
scheme) and its time derivative (beta scheme) from equally spaced history.

Both schemes are the minimum-norm weights under two moment constraints,
which makes them exact on affine signals and minimizes the variance under
white noise. Index 0 is the most recent sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import ObservationBuffer, TrackingError


class InvalidWindow(TrackingError, ValueError):
    pass


class InfeasibleConstraints(TrackingError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AlphaScheme:
    m: int
    weights: np.ndarray

    def residuals(self) -> tuple[float, float]:
        """``(sum(w) - 1, sum(i*w))``."""
        i = np.arange(self.m)
        return float(self.weights.sum() - 1.0), float(i @ self.weights)


@dataclass(frozen=True, eq=False)
class BetaScheme:
    p: int
    h: float
    weights: np.ndarray

    def residuals(self) -> tuple[float, float]:
        """``(sum(w), sum(j*w) + 1/h)``."""
        j = np.arange(self.p)
        return float(self.weights.sum()), float(j @ self.weights + 1.0 / self.h)


@lru_cache(maxsize=512)
def _alpha(m: int) -> np.ndarray:
    i = np.arange(m, dtype=float)
    w = 2.0 * (2.0 * m - 1.0 - 3.0 * i) / (m * (m + 1.0))
    w.flags.writeable = False
    return w


@lru_cache(maxsize=512)
def _beta(p: int, h: float) -> np.ndarray:
    j = np.arange(p, dtype=float)
    w = 6.0 * (p - 1.0 - 2.0 * j) / (p * (p * p - 1.0)) / h
    w.flags.writeable = False
    return w


def alpha_weights(m: int) -> AlphaScheme:
    """Minimum-norm weights with ``sum(a) = 1`` and ``sum(i*a) = 0``.

    >>> alpha_weights(3).weights * 6
    array([ 5.,  2., -1.])
    """
    if int(m) != m or m < 1:
        raise InvalidWindow(f"alpha window must be an integer >= 1, got {m}")
    return AlphaScheme(int(m), _alpha(int(m)))


def beta_weights(p: int, h: float) -> BetaScheme:
    """Minimum-norm weights with ``sum(b) = 0`` and ``sum(j*b) = -1/h``."""
    if int(p) != p or p < 2:
        raise InvalidWindow(f"beta window must be an integer >= 2, got {p}")
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    return BetaScheme(int(p), float(h), _beta(int(p), float(h)))


def min_norm_weights_oracle(window: int, constraint_moments) -> np.ndarray:
    """Minimum-norm ``w`` subject to ``sum_i i**power * w_i = target``.

    Solves the stationarity condition ``w = V^T lam`` of the Lagrangian
    together with ``V w = target``, i.e. the Gram system ``(V V^T) lam =
    target``; ``V[c, i] = i**power_c``. Kept independent of the closed forms
    above so it can serve as their test oracle.
    """
    constraints = list(constraint_moments)
    if window < len(constraints):
        raise InfeasibleConstraints(f"{len(constraints)} constraints on a window of {window}")
    i = np.arange(window, dtype=float)
    V = np.array([i ** int(pw) for pw, _ in constraints])
    target = np.array([float(t) for _, t in constraints])
    gram = V @ V.T
    try:
        lam = np.linalg.solve(gram, target)
    except np.linalg.LinAlgError:
        raise InfeasibleConstraints("moment matrix is singular") from None
    if np.linalg.cond(gram) > 1e14:
        raise InfeasibleConstraints("moment matrix is numerically singular")
    return V.T @ lam


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def window_m(h: float, c_m: float = 1.0) -> int:
    """Alpha window ``c_m * h^(-4/5)`` rounded half-up, at least 1."""
    if not (h > 0 and c_m > 0):
        raise ValueError("h and c_m must be positive")
    return max(1, _round_half_up(c_m * h ** -0.8))


def window_p(h: float, c_p: float = 1.0) -> int:
    """Beta window ``c_p * h^(-3/4)`` rounded half-up, at least 2."""
    if not (h > 0 and c_p > 0):
        raise ValueError("h and c_p must be positive")
    return max(2, _round_half_up(c_p * h ** -0.75))


def weighted_combination(buffer: ObservationBuffer, weights) -> np.ndarray:
    """``sum_i weights[i] * y_{t - i h}`` over the newest observations."""
    w = np.asarray(weights, dtype=float)
    obs = buffer.recent(w.shape[0])
    return np.tensordot(w, obs, axes=1)


class MovingAverage:
    """Level and slope estimates from a buffer, shrinking windows during warm-up.

    With fewer than ``m`` (or ``p``) observations available, the weights for
    the largest feasible window are used instead. A slope needs at least two
    observations; before that :meth:`slope` returns zeros.
    """

    def __init__(self, m: int, p: int, h: float):
        self.m = alpha_weights(m).m
        self.p = beta_weights(p, h).p
        self.h = float(h)

    @property
    def history(self) -> int:
        return max(self.m, self.p)

    @property
    def warmup_steps(self) -> int:
        return self.history - 1

    def level(self, buffer: ObservationBuffer) -> np.ndarray:
        m = min(self.m, len(buffer))
        return weighted_combination(buffer, _alpha(m))

    def slope(self, buffer: ObservationBuffer) -> np.ndarray:
        p = min(self.p, len(buffer))
        if p < 2:
            return np.zeros_like(buffer.recent(1)[0])
        return weighted_combination(buffer, _beta(p, self.h))

    def __repr__(self):
        return f"MovingAverage(m={self.m}, p={self.p}, h={self.h!r})"
