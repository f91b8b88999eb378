"""Time-varying problems to track.

Each scenario knows its true minimizer trajectory, how to draw the
observation at a grid step, and how to turn the observation history into
estimated derivatives. Where the risk has a closed form, ``exact_bundle``
and ``risk`` are also available.

Scenarios that average over past observations need the step size; call
``scenario.at_step(h)`` to get a copy with the moving-average windows set.
"""

from __future__ import annotations

import abc
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DerivativeBundle, ObservationBuffer, TrackingError, as_param
from .estimators import MovingAverage, window_m, window_p

TWO_PI = 2.0 * math.pi


class EmptySample(TrackingError, ValueError):
    pass


# --- trajectories and scalar signals -------------------------------------

class Trajectory(abc.ABC):
    dim: int

    @abc.abstractmethod
    def value(self, t: float) -> np.ndarray: ...

    @abc.abstractmethod
    def velocity(self, t: float) -> np.ndarray: ...

    @abc.abstractmethod
    def acceleration(self, t: float) -> np.ndarray: ...


@dataclass(frozen=True)
class Linear(Trajectory):
    """``theta*(t) = intercept + t * slope``."""

    slope: tuple = (1.0,)
    intercept: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "slope", tuple(np.atleast_1d(self.slope).astype(float)))
        if self.intercept is None:
            object.__setattr__(self, "intercept", (0.0,) * len(self.slope))
        object.__setattr__(self, "intercept", tuple(np.atleast_1d(self.intercept).astype(float)))

    @property
    def dim(self):
        return len(self.slope)

    def value(self, t):
        return np.array(self.intercept) + t * np.array(self.slope)

    def velocity(self, t):
        return np.array(self.slope)

    def acceleration(self, t):
        return np.zeros(self.dim)


@dataclass(frozen=True)
class Sinusoid(Trajectory):
    """Each coordinate ``amplitude * sin(2 pi frequency t + phase)``."""

    amplitude: tuple = (1.0,)
    frequency: float = 1.0
    phase: tuple = (0.0,)

    def __post_init__(self):
        a = np.atleast_1d(self.amplitude).astype(float)
        ph = np.broadcast_to(np.atleast_1d(self.phase).astype(float), a.shape)
        object.__setattr__(self, "amplitude", tuple(a))
        object.__setattr__(self, "phase", tuple(ph))

    @property
    def dim(self):
        return len(self.amplitude)

    def _arg(self, t):
        return TWO_PI * self.frequency * t + np.array(self.phase)

    def value(self, t):
        return np.array(self.amplitude) * np.sin(self._arg(t))

    def velocity(self, t):
        w = TWO_PI * self.frequency
        return np.array(self.amplitude) * w * np.cos(self._arg(t))

    def acceleration(self, t):
        w = TWO_PI * self.frequency
        return -np.array(self.amplitude) * w * w * np.sin(self._arg(t))


@dataclass(frozen=True)
class Circle(Trajectory):
    """``(r sin(2 pi f t), r cos(2 pi f t))``, the path used in both simulations."""

    radius: float = 1.0
    frequency: float = 1.0
    dim = 2

    def value(self, t):
        a = TWO_PI * self.frequency * t
        return self.radius * np.array([math.sin(a), math.cos(a)])

    def velocity(self, t):
        w = TWO_PI * self.frequency
        a = w * t
        return self.radius * w * np.array([math.cos(a), -math.sin(a)])

    def acceleration(self, t):
        w = TWO_PI * self.frequency
        return -w * w * self.value(t)


@dataclass(frozen=True)
class SineSignal:
    """Scalar ``offset + amplitude * sin(2 pi frequency t)`` with its derivative."""

    offset: float = 0.0
    amplitude: float = 1.0
    frequency: float = 1.0

    def __call__(self, t):
        return self.offset + self.amplitude * math.sin(TWO_PI * self.frequency * t)

    def derivative(self, t):
        w = TWO_PI * self.frequency
        return self.amplitude * w * math.cos(w * t)


# --- link functions for object tracking -----------------------------------

@dataclass(frozen=True)
class IdentityLink:
    def f(self, x):
        return x

    def df(self, x):
        return np.ones_like(x)

    def d2f(self, x):
        return np.zeros_like(x)


@dataclass(frozen=True)
class ExpLink:
    """``f(x) = scale * exp(rate * x)``; monotone for ``scale * rate > 0``."""

    scale: float = 1.0
    rate: float = 1.0

    def f(self, x):
        return self.scale * np.exp(self.rate * x)

    def df(self, x):
        return self.rate * self.f(x)

    def d2f(self, x):
        return self.rate * self.rate * self.f(x)


# --- scenario interface ----------------------------------------------------

class Scenario(abc.ABC):
    """A time-varying risk ``R(theta, t)`` observed through noisy samples."""

    name = "scenario"
    noise_free = False

    @property
    @abc.abstractmethod
    def dim(self) -> int: ...

    @abc.abstractmethod
    def true_theta(self, t: float) -> np.ndarray: ...

    def at_step(self, h: float) -> "Scenario":
        return self

    def history_length(self) -> int:
        """Observations the estimators look back over."""
        return 1

    def warmup_steps(self) -> int:
        return self.history_length() - 1

    @abc.abstractmethod
    def observe(self, k: int, t: float, rng: np.random.Generator, theta_hat=None) -> np.ndarray:
        """Draw the observation at step ``k`` (time ``t``)."""

    @abc.abstractmethod
    def estimate_bundle(self, theta, t: float, buffer: ObservationBuffer) -> DerivativeBundle: ...

    def estimate_gradient(self, theta, t: float, buffer: ObservationBuffer) -> np.ndarray:
        return self.estimate_bundle(theta, t, buffer).gradient

    def exact_bundle(self, theta, t: float) -> DerivativeBundle:
        raise NotImplementedError(f"{type(self).__name__} has no closed-form derivatives")

    def risk(self, theta, t: float) -> float:
        raise NotImplementedError(f"{type(self).__name__} has no closed-form risk")


@dataclass(frozen=True)
class Windows:
    """Moving-average window rule: explicit ``m``/``p`` or ``c * h^power``."""

    c_m: float = 1.0
    c_p: float = 1.0
    m: int | None = None
    p: int | None = None

    def resolve(self, h: float) -> MovingAverage:
        m = self.m if self.m is not None else window_m(h, self.c_m)
        p = self.p if self.p is not None else window_p(h, self.c_p)
        return MovingAverage(m, p, h)


class _Windowed(Scenario):
    """Mixin for scenarios whose estimators are moving averages."""

    windows: Windows
    h: float | None

    def at_step(self, h):
        return dataclasses.replace(self, h=float(h))

    @property
    def averager(self) -> MovingAverage:
        if self.h is None:
            raise ValueError(f"{type(self).__name__}: call at_step(h) before estimating")
        return self.__dict__.setdefault("_averager", self.windows.resolve(self.h))

    def history_length(self):
        return self.averager.history


# --- least squares with a fixed design ------------------------------------

@dataclass(frozen=True, eq=False)
class LeastSquaresScenario(_Windowed):
    """``y_t = X theta*_t + eps_t`` with ``eps_t ~ N(0, noise_var I_n)``.

    Risk ``R(theta, t) = E ||y_t - X theta||^2 / (2n)``.
    """

    X: np.ndarray
    trajectory: Trajectory = field(default_factory=Circle)
    noise_var: float = 0.5
    windows: Windows = field(default_factory=Windows)
    h: float | None = None
    name = "least-squares"

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        n, d = X.shape
        if d != self.trajectory.dim:
            raise ValueError(f"design has {d} columns, trajectory has dimension {self.trajectory.dim}")
        gram = X.T @ X / n
        if np.linalg.matrix_rank(X) < d or not np.isfinite(np.linalg.cond(gram)):
            raise ValueError("X^T X is singular; design columns must be in general position")
        X.flags.writeable = False
        gram.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "_gram", gram)
        object.__setattr__(self, "_proj", X.T / n)

    @classmethod
    def random_design(cls, rng: np.random.Generator, n: int = 40, d: int = 2, **kw):
        """Rows of ``X`` drawn i.i.d. from ``N(0, I_d)``."""
        kw.setdefault("trajectory", Circle() if d == 2 else Sinusoid(amplitude=(1.0,) * d))
        return cls(X=rng.standard_normal((n, d)), **kw)

    @property
    def dim(self):
        return self.X.shape[1]

    @property
    def n(self):
        return self.X.shape[0]

    def true_theta(self, t):
        return self.trajectory.value(t)

    def observe(self, k, t, rng, theta_hat=None):
        noise = rng.standard_normal(self.n) * math.sqrt(self.noise_var)
        return self.X @ self.true_theta(t) + noise

    def hessian(self) -> np.ndarray:
        return self._gram

    def gradient_estimate(self, theta, buffer):
        level = self.averager.level(buffer)
        return self._proj @ (self.X @ as_param(theta) - level)

    def cross_estimate(self, buffer):
        return -(self._proj @ self.averager.slope(buffer))

    def estimate_gradient(self, theta, t, buffer):
        return self.gradient_estimate(theta, buffer)

    def estimate_bundle(self, theta, t, buffer):
        return DerivativeBundle(self.gradient_estimate(theta, buffer), self._gram,
                                self.cross_estimate(buffer))

    def exact_bundle(self, theta, t):
        theta = as_param(theta)
        grad = self._gram @ (theta - self.true_theta(t))
        cross = -self._gram @ self.trajectory.velocity(t)
        return DerivativeBundle(grad, self._gram, cross)

    def risk(self, theta, t):
        r = self.X @ (self.true_theta(t) - as_param(theta))
        return 0.5 * self.noise_var + 0.5 * (r @ r) / self.n


def ls_gradient_estimate(scn: LeastSquaresScenario, theta, buffer) -> np.ndarray:
    return scn.gradient_estimate(theta, buffer)


def ls_hessian(scn: LeastSquaresScenario) -> np.ndarray:
    return scn.hessian()


def ls_cross_estimate(scn: LeastSquaresScenario, buffer) -> np.ndarray:
    return scn.cross_estimate(buffer)


# --- object tracking --------------------------------------------------------

def sensor_grid(points_per_axis: int = 11, low: float = -1.0, high: float = 1.0, d: int = 2):
    """Cartesian product of equally spaced coordinates, one row per sensor."""
    axis = np.linspace(low, high, points_per_axis)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class ObjectTrackingScenario(_Windowed):
    """``Y_i = f(||X_i - theta*_t||^2) + eps_i`` at fixed sensors ``X_i``.

    Risk ``R(theta, t) = noise_var/2 + (1/2n) sum_i (f(||X_i - theta||^2) - f(||X_i - theta*_t||^2))^2``.
    The estimators substitute moving averages of ``Y_i`` for the unknown
    ``f(||X_i - theta*_t||^2)`` and its time derivative.
    """

    sensors: np.ndarray = field(default_factory=sensor_grid)
    trajectory: Trajectory = field(default_factory=Circle)
    link: object = field(default_factory=IdentityLink)
    noise_var: float = 0.05
    windows: Windows = field(default_factory=Windows)
    h: float | None = None
    name = "object-tracking"

    def __post_init__(self):
        S = np.array(self.sensors, dtype=float, ndmin=2)
        n, d = S.shape
        if d != self.trajectory.dim:
            raise ValueError(f"sensors live in R^{d}, trajectory in R^{self.trajectory.dim}")
        if n < d + 1 or np.linalg.matrix_rank(S[1:] - S[0]) < d:
            raise ValueError("need at least d+1 sensors in general position")
        S.flags.writeable = False
        object.__setattr__(self, "sensors", S)

    @property
    def dim(self):
        return self.sensors.shape[1]

    @property
    def n(self):
        return self.sensors.shape[0]

    def true_theta(self, t):
        return self.trajectory.value(t)

    def _signal(self, t):
        diff = self.sensors - self.true_theta(t)
        return self.link.f(np.einsum("ij,ij->i", diff, diff))

    def _signal_rate(self, t):
        diff = self.true_theta(t) - self.sensors
        s = np.einsum("ij,ij->i", diff, diff)
        return self.link.df(s) * 2.0 * (diff @ self.trajectory.velocity(t))

    def observe(self, k, t, rng, theta_hat=None):
        return self._signal(t) + rng.standard_normal(self.n) * math.sqrt(self.noise_var)

    def _assemble(self, theta, level, rate, *, curvature=True):
        theta = as_param(theta)
        r = theta - self.sensors
        s = np.einsum("ij,ij->i", r, r)
        f1 = self.link.df(s)
        resid = self.link.f(s) - level
        n = self.n
        grad = (2.0 / n) * ((resid * f1) @ r)
        if not curvature:
            return grad
        f2 = self.link.d2f(s)
        hess = ((2.0 / n) * np.sum(resid * f1) * np.eye(self.dim)
                + (4.0 / n) * (r.T * (resid * f2 + f1 * f1)) @ r)
        cross = -(2.0 / n) * ((f1 * rate) @ r)
        return DerivativeBundle(grad, hess, cross)

    def estimate_gradient(self, theta, t, buffer):
        return self._assemble(theta, self.averager.level(buffer), None, curvature=False)

    def estimate_bundle(self, theta, t, buffer):
        avg = self.averager
        return self._assemble(theta, avg.level(buffer), avg.slope(buffer))

    def exact_bundle(self, theta, t):
        return self._assemble(theta, self._signal(t), self._signal_rate(t))

    def risk(self, theta, t):
        r = self.sensors - as_param(theta)
        fit = self.link.f(np.einsum("ij,ij->i", r, r))
        return 0.5 * self.noise_var + 0.5 * np.mean((fit - self._signal(t)) ** 2)


def ot_bundle_estimate(scn: ObjectTrackingScenario, theta, buffer) -> DerivativeBundle:
    return scn.estimate_bundle(theta, None, buffer)


# --- performative prediction -------------------------------------------------

@dataclass(frozen=True, eq=False)
class PerformativeScenario(Scenario):
    """Deploying ``theta`` at time ``t`` induces ``Z ~ N(mu(t) + eps(t) theta, sigma^2)``.

    Loss ``(Z - theta)^2 / 2``; the performatively optimal point is
    ``mu(t) / (1 - eps(t))``. Derivatives of the risk are estimated from a
    batch of ``n_samples`` draws through Gaussian score ratios.

    ``sample_at`` selects where the batch is drawn: ``"optimum"`` draws from
    ``D(theta*_t, t)`` regardless of the current estimate, ``"estimate"``
    draws from ``D(theta_hat, t)`` (the deployed model).
    """

    mu: SineSignal = field(default_factory=lambda: SineSignal(0.0, 1.0, 1.0))
    eps: SineSignal = field(default_factory=lambda: SineSignal(0.5, 0.25, 1.0))
    sigma: float = 1.0
    n_samples: int = 200
    sample_at: str = "estimate"
    name = "performative"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.sample_at not in ("optimum", "estimate"):
            raise ValueError(f"sample_at must be 'optimum' or 'estimate', got {self.sample_at!r}")
        lo, hi = self.eps.offset - abs(self.eps.amplitude), self.eps.offset + abs(self.eps.amplitude)
        if not (0 < lo and hi < 1):
            raise ValueError(f"eps(t) must stay inside (0, 1); range is [{lo}, {hi}]")

    @property
    def dim(self):
        return 1

    def true_theta(self, t):
        e = self.eps(t)
        if not 0 < e < 1:
            raise ValueError(f"eps({t}) = {e} outside (0, 1)")
        return np.array([self.mu(t) / (1.0 - e)])

    def observe(self, k, t, rng, theta_hat=None):
        if self.sample_at == "estimate" and theta_hat is not None:
            theta = float(np.asarray(theta_hat).ravel()[0])
        else:
            theta = float(self.true_theta(t)[0])
        mean = self.mu(t) + self.eps(t) * theta
        return mean + self.sigma * rng.standard_normal(self.n_samples)

    def score_ratios(self, z, theta, t):
        """``(d_theta phi, d2_theta phi, d_t phi, d_theta d_t phi)``, each divided by ``phi``."""
        z = np.asarray(z, dtype=float)
        mu, e = self.mu(t), self.eps(t)
        mu_dot, e_dot = self.mu.derivative(t), self.eps.derivative(t)
        s2 = self.sigma ** 2
        u = (z - mu - e * theta) / s2
        curv = u * u - 1.0 / s2
        mean_rate = mu_dot + e_dot * theta
        return e * u, e * e * curv, mean_rate * u, e_dot * u + e * mean_rate * curv

    def bundle_from_samples(self, theta, samples, t) -> DerivativeBundle:
        z = np.asarray(samples, dtype=float).ravel()
        if z.size == 0:
            raise EmptySample("performative estimate needs at least one sample")
        theta = float(np.asarray(theta).ravel()[0])
        s_th, s_thth, s_t, s_tht = self.score_ratios(z, theta, t)
        sq = (z - theta) ** 2
        grad = np.mean(-z + theta + 0.5 * sq * s_th)
        hess = np.mean(1.0 - 2.0 * z * s_th + 0.5 * sq * s_thth)
        cross = np.mean(-z * s_t + 0.5 * sq * s_tht)
        return DerivativeBundle(grad, hess, cross)

    def estimate_bundle(self, theta, t, buffer):
        return self.bundle_from_samples(theta, buffer.recent(1)[0], t)

    def exact_bundle(self, theta, t):
        theta = float(np.asarray(theta).ravel()[0])
        mu, e = self.mu(t), self.eps(t)
        mu_dot, e_dot = self.mu.derivative(t), self.eps.derivative(t)
        gap = mu - (1.0 - e) * theta
        grad = -(1.0 - e) * gap
        cross = e_dot * gap - (1.0 - e) * (mu_dot + e_dot * theta)
        return DerivativeBundle(grad, (1.0 - e) ** 2, cross)

    def risk(self, theta, t):
        theta = float(np.asarray(theta).ravel()[0])
        return 0.5 * ((self.mu(t) + self.eps(t) * theta - theta) ** 2 + self.sigma ** 2)


def perf_bundle_estimate(scn: PerformativeScenario, theta, samples, t) -> DerivativeBundle:
    return scn.bundle_from_samples(theta, samples, t)


def perf_true_theta(scn: PerformativeScenario, t) -> float:
    return float(scn.true_theta(t)[0])


# --- noise-free quadratic ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadraticScenario(Scenario):
    """``R(theta, t) = (mu/2) ||theta - theta*(t)||^2``, noise-free.

    With a linear trajectory this is the drift example on which gradient
    descent cannot beat an error of ``h |theta*'| / (eta mu)``.
    """

    mu_strong: float = 1.0
    trajectory: Trajectory = field(default_factory=Linear)
    name = "quadratic"
    noise_free = True

    def __post_init__(self):
        if not self.mu_strong > 0:
            raise ValueError("mu_strong must be positive")

    @property
    def dim(self):
        return self.trajectory.dim

    def true_theta(self, t):
        return self.trajectory.value(t)

    def observe(self, k, t, rng, theta_hat=None):
        return np.zeros(0)

    def exact_bundle(self, theta, t):
        theta = as_param(theta)
        d = self.dim
        grad = self.mu_strong * (theta - self.true_theta(t))
        cross = -self.mu_strong * self.trajectory.velocity(t)
        return DerivativeBundle(grad, self.mu_strong * np.eye(d), cross)

    def estimate_bundle(self, theta, t, buffer):
        return self.exact_bundle(theta, t)

    def risk(self, theta, t):
        r = as_param(theta) - self.true_theta(t)
        return 0.5 * self.mu_strong * (r @ r)


def QuadraticDriftScenario(mu_strong: float = 1.0, theta_star_coeff: float = 1.0) -> QuadraticScenario:
    """Quadratic risk whose minimizer moves linearly, ``theta*(t) = t * coeff``."""
    return QuadraticScenario(mu_strong, Linear(slope=(theta_star_coeff,)))


def quad_exact_bundle(scn: QuadraticScenario, theta, t) -> DerivativeBundle:
    return scn.exact_bundle(theta, t)
