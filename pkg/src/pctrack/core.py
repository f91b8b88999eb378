"""Shared building blocks: time grid, derivative bundles, observation history,
seeded random streams and the small symmetric solve used by the trackers."""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "TrackingError",
    "SingularHessian",
    "InsufficientHistory",
    "NonFiniteValue",
    "TimeGrid",
    "time_of",
    "as_param",
    "DerivativeBundle",
    "ObservationBuffer",
    "RngStream",
    "derive_stream_id",
    "solve_spd",
    "solve_spd_ridge",
]

ParamVector = np.ndarray

RIDGE_START = 1e-10
RIDGE_MAX = 1e-4


class TrackingError(Exception):
    """Base class for errors raised by this package."""


class SingularHessian(TrackingError):
    """Curvature estimate could not be factorized even after ridge regularization."""


class NonFiniteValue(TrackingError, FloatingPointError, ValueError):
    """A derivative estimate or iterate overflowed or became NaN."""


class InsufficientHistory(TrackingError):
    """An estimator asked for more past observations than the buffer holds."""

    def __init__(self, needed: int, available: int):
        super().__init__(f"need {needed} observations, buffer holds {available}")
        self.needed = needed
        self.available = available


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = t_start + k*h`` for ``k = 0..num_steps``."""

    h: float
    num_steps: int
    t_start: float = 0.0

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive and finite, got {self.h}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ValueError(f"num_steps must be an integer >= 1, got {self.num_steps}")
        if not self.t_start >= 0:
            raise ValueError(f"t_start must be >= 0, got {self.t_start}")

    @classmethod
    def from_horizon(cls, h: float, t_max: float, t_start: float = 0.0, rtol: float = 1e-9):
        """Grid covering ``[t_start, t_max]`` with step ``h``.

        ``(t_max - t_start) / h`` has to be an integer up to ``rtol``.
        """
        ratio = (t_max - t_start) / h
        n = round(ratio)
        if n < 1 or abs(ratio - n) > rtol * max(1.0, ratio):
            raise ValueError(f"t_max={t_max} is not an integer multiple of h={h}")
        return cls(h=h, num_steps=int(n), t_start=t_start)

    def time(self, k: int) -> float:
        return time_of(self, k)

    def times(self) -> np.ndarray:
        # k*h computed directly per index, never accumulated
        return self.t_start + np.arange(self.num_steps + 1) * self.h


def time_of(grid: TimeGrid, k: int) -> float:
    if not 0 <= k <= grid.num_steps:
        raise IndexError(f"step {k} outside grid [0, {grid.num_steps}]")
    return grid.t_start + k * grid.h


def as_param(x) -> np.ndarray:
    """Validate and copy a parameter vector into a 1-D float array."""
    arr = np.array(x, dtype=float, ndmin=1)
    if arr.ndim != 1:
        raise ValueError(f"parameter must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class DerivativeBundle:
    """Gradient, Hessian and time derivative of the gradient at one (theta, t).

    The Hessian is symmetrized on construction. For scalar problems pass
    scalars; they are promoted to shapes ``(1,)`` and ``(1, 1)``.
    """

    gradient: np.ndarray
    hessian: np.ndarray
    cross: np.ndarray

    def __post_init__(self):
        g = np.array(self.gradient, dtype=float, ndmin=1)
        c = np.array(self.cross, dtype=float, ndmin=1)
        H = np.array(self.hessian, dtype=float, ndmin=2)
        d = g.shape[0]
        if g.shape != (d,) or c.shape != (d,) or H.shape != (d, d):
            raise ValueError(
                f"inconsistent bundle shapes: gradient {g.shape}, "
                f"hessian {H.shape}, cross {c.shape}"
            )
        H = 0.5 * (H + H.T)
        for name, arr in (("gradient", g), ("hessian", H), ("cross", c)):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteValue(f"bundle {name} has non-finite entries")
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "cross", c)

    @property
    def dim(self) -> int:
        return self.gradient.shape[0]


class ObservationBuffer:
    """Fixed-capacity history of observations, newest first.

    Pushed step indices must be consecutive. Storage is a doubled ring so
    that the ``n`` most recent observations are always a contiguous view.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._data = None
        self._pos = 0
        self._size = 0
        self._latest = None

    def __len__(self) -> int:
        return self._size

    @property
    def latest_index(self):
        return self._latest

    def indices(self) -> list[int]:
        """Stored step indices, most recent first."""
        if self._latest is None:
            return []
        return [self._latest - i for i in range(self._size)]

    def push(self, k: int, obs) -> None:
        obs = np.asarray(obs, dtype=float)
        if self._latest is not None and k != self._latest + 1:
            raise ValueError(f"non-contiguous push: expected step {self._latest + 1}, got {k}")
        if self._data is None:
            self._data = np.empty((2 * self.capacity,) + obs.shape)
        elif obs.shape != self._data.shape[1:]:
            raise ValueError(f"observation shape {obs.shape} != {self._data.shape[1:]}")
        self._pos = (self._pos - 1) % self.capacity
        self._data[self._pos] = obs
        self._data[self._pos + self.capacity] = obs
        self._size = min(self._size + 1, self.capacity)
        self._latest = k

    def recent(self, n: int) -> np.ndarray:
        """The ``n`` most recent observations stacked newest first (read-only view)."""
        if n > self._size:
            raise InsufficientHistory(n, self._size)
        view = self._data[self._pos:self._pos + n]
        view.flags.writeable = False
        return view


def derive_stream_id(*parts) -> int:
    """Stable 64-bit id from a tuple of labels (ints, floats, strings)."""
    text = "|".join(repr(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *labels) -> "RngStream":
        return RngStream(self.seed, derive_stream_id(self.stream_id, *labels))


def _try_sym_solve(A: np.ndarray, b: np.ndarray):
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            x = scipy.linalg.solve(A, b, assume_a="sym", check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
            return None
    if not np.all(np.isfinite(x)):
        return None
    return x


def solve_spd_ridge(hessian, rhs) -> tuple[np.ndarray, float]:
    """Solve ``hessian @ x = rhs``; return ``(x, ridge)``.

    Uses a symmetric (Bunch-Kaufman) factorization, so indefinite but
    nonsingular matrices are solved as-is. If factorization fails the
    ridge ``lam * I`` is added with ``lam`` doubling from 1e-10 while
    ``lam <= 1e-4``; ``ridge`` is 0.0 when no regularization was needed.
    """
    H = np.array(hessian, dtype=float, ndmin=2)
    b = np.array(rhs, dtype=float, ndmin=1)
    if H.shape != (b.shape[0], b.shape[0]):
        raise ValueError(f"hessian shape {H.shape} does not match rhs {b.shape}")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(b))):
        raise SingularHessian("non-finite hessian or right-hand side")
    x = _try_sym_solve(H, b)
    if x is not None:
        return x, 0.0
    eye = np.eye(H.shape[0])
    lam = RIDGE_START
    while lam <= RIDGE_MAX:
        x = _try_sym_solve(H + lam * eye, b)
        if x is not None:
            return x, lam
        lam *= 2.0
    raise SingularHessian(f"hessian not factorizable with ridge up to {RIDGE_MAX:g}")


def solve_spd(hessian, rhs) -> np.ndarray:
    return solve_spd_ridge(hessian, rhs)[0]
