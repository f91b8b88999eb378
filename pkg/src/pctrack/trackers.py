"""Update rules: (stochastic) gradient descent and the predictor-corrector step.

Both are pure functions from a :class:`TrackerState` to the next state.
The predictor-corrector update is

    theta_{k+1} = theta_k - eta * grad - h * H^{-1} cross

with the corrector and predictor terms evaluated at the same ``theta_k``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import DerivativeBundle, as_param, solve_spd_ridge


class Method(str, enum.Enum):
    GD = "gd"
    PC = "pc"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown method {value!r}; expected 'gd' or 'pc'") from None


@dataclass(frozen=True)
class TrackerConfig:
    method: Method
    eta: float
    h: float

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h}")


@dataclass(frozen=True, eq=False)
class TrackerState:
    theta_hat: np.ndarray
    step_index: int = 0
    ridge_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "theta_hat", as_param(self.theta_hat))


def _advance(state: TrackerState, theta: np.ndarray, ridged: bool = False) -> TrackerState:
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError(f"estimate diverged at step {state.step_index + 1}")
    return TrackerState(theta, state.step_index + 1, state.ridge_count + int(ridged))


def gd_step(state: TrackerState, grad, cfg: TrackerConfig) -> TrackerState:
    g = np.asarray(grad, dtype=float).reshape(state.theta_hat.shape)
    return _advance(state, state.theta_hat - cfg.eta * g)


def exact_prediction_drift(hessian, cross) -> np.ndarray:
    """Velocity of the minimizer implied by ``H theta' + cross = 0``."""
    x, _ = solve_spd_ridge(hessian, cross)
    return -x


def pc_step(state: TrackerState, bundle: DerivativeBundle, cfg: TrackerConfig) -> TrackerState:
    if bundle.dim != state.theta_hat.shape[0]:
        raise ValueError(f"bundle dimension {bundle.dim} != parameter dimension "
                         f"{state.theta_hat.shape[0]}")
    corrected = state.theta_hat - cfg.eta * bundle.gradient
    if not np.any(bundle.cross):
        return _advance(state, corrected)
    x, ridge = solve_spd_ridge(bundle.hessian, bundle.cross)
    return _advance(state, corrected - cfg.h * x, ridged=ridge > 0)


def step(state: TrackerState, bundle: DerivativeBundle, cfg: TrackerConfig) -> TrackerState:
    if cfg.method is Method.GD:
        return gd_step(state, bundle.gradient, cfg)
    return pc_step(state, bundle, cfg)
