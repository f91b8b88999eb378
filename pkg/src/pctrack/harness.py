"""Running trackers against scenarios: single runs, Monte Carlo replication,
step-size sweeps, rate fitting and CSV output."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .core import ObservationBuffer, RngStream, SingularHessian, TimeGrid, derive_stream_id
from .scenarios import (
    Circle,
    ExpLink,
    IdentityLink,
    LeastSquaresScenario,
    Linear,
    ObjectTrackingScenario,
    PerformativeScenario,
    QuadraticScenario,
    Scenario,
    SineSignal,
    Sinusoid,
    Windows,
    sensor_grid,
)
from .trackers import Method, TrackerConfig, TrackerState, gd_step, pc_step

log = logging.getLogger(__name__)

TAIL_FRACTION = 0.05
TRACE_COLUMNS = ("method", "h", "rep", "step", "t", "error")
SUMMARY_COLUMNS = ("method", "h", "terminal_error_mean", "terminal_error_std", "reps",
                   "slope", "slope_stderr")


class DegenerateFit(ValueError):
    pass


@dataclass(frozen=True)
class EtaRule:
    """Learning rate ``coef * h**power`` (``power = 0`` gives a fixed rate)."""

    coef: float = 1.0
    power: float = 0.0

    def __call__(self, h: float) -> float:
        return self.coef * h ** self.power

    def __str__(self):
        return f"{self.coef:g}" if self.power == 0 else f"{self.coef:g}*h^{self.power:g}"


# Learning-rate rules under which the rate claims hold for the moving-average
# estimators: eta = h^(3/10) for gradient descent, eta = h^(4/5) for PC.
THEORY_ETA = {"gd": EtaRule(1.0, 0.3), "pc": EtaRule(1.0, 0.8)}

SCENARIO_NAMES = ("least-squares", "object-tracking", "performative", "quadratic")

DEFAULT_ETA = {
    "least-squares": THEORY_ETA,
    "object-tracking": THEORY_ETA,
    "performative": {"gd": EtaRule(1.0, 0.3), "pc": EtaRule(1.0, 0.3)},
    "quadratic": {"gd": EtaRule(0.1, 0.0), "pc": EtaRule(0.1, 0.0)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "least-squares"
    scenario_params: dict = field(default_factory=dict)
    methods: tuple = ("gd", "pc")
    hs: tuple = (1e-2, 3e-3, 1e-3)
    eta: dict = field(default_factory=dict)
    t_max: float = 3.0
    reps: int = 10
    seed: int = 0
    exact: bool = False
    init_offset: float = 1.0
    terminal: str = "tail"
    jobs: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIO_NAMES:
            raise ValueError(f"scenario: unknown {self.scenario!r}; choose from {SCENARIO_NAMES}")
        methods = tuple(Method.parse(m).value for m in self.methods)
        if not methods:
            raise ValueError("methods: at least one method required")
        object.__setattr__(self, "methods", methods)
        hs = tuple(float(h) for h in self.hs)
        if not hs or any(not h > 0 for h in hs):
            raise ValueError("h: need at least one positive step size")
        object.__setattr__(self, "hs", hs)
        for h in hs:
            try:
                TimeGrid.from_horizon(h, self.t_max)
            except ValueError as exc:
                raise ValueError(f"t_max: {exc}") from None
        if self.reps < 1:
            raise ValueError("reps: must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed: must be a 64-bit unsigned integer")
        if self.terminal not in ("tail", "final"):
            raise ValueError("terminal: must be 'tail' or 'final'")
        eta = dict(DEFAULT_ETA[self.scenario])
        for k, v in self.eta.items():
            rule = v if isinstance(v, EtaRule) else EtaRule(float(v), 0.0)
            if not rule.coef > 0:
                raise ValueError(f"eta.{k}: coefficient must be positive")
            eta[Method.parse(k).value] = rule
        object.__setattr__(self, "eta", eta)

    def eta_for(self, method, h: float) -> float:
        return self.eta[Method.parse(method).value](h)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["eta"] = {k: {"coef": r.coef, "power": r.power} for k, r in self.eta.items()}
        return d


def _windows(params: dict) -> Windows:
    for key, low in (("c_m", 0), ("c_p", 0), ("m", 1), ("p", 2)):
        v = params.get(key)
        if v is not None and not (isinstance(v, (int, float)) and v >= low and (low or v > 0)):
            raise ValueError(f"params.{key}: must be {'positive' if low == 0 else f'an integer >= {low}'}, got {v!r}")
    return Windows(c_m=float(params.get("c_m", 1.0)), c_p=float(params.get("c_p", 1.0)),
                   m=params.get("m"), p=params.get("p"))


_PARAM_KEYS = {
    "least-squares": {"n", "d", "noise_var", "frequency", "c_m", "c_p", "m", "p"},
    "object-tracking": {"points_per_axis", "low", "high", "noise_var", "frequency", "link",
                        "link_rate", "c_m", "c_p", "m", "p"},
    "performative": {"mu_offset", "mu_amplitude", "eps_offset", "eps_amplitude", "frequency",
                     "sigma", "n_samples", "sample_at"},
    "quadratic": {"mu", "trajectory", "drift", "amplitude", "frequency"},
}


def make_scenario(config: ExperimentConfig) -> Scenario:
    """Build the configured scenario.

    Random designs come from their own stream keyed on the master seed, so
    every method, step size and replicate sees the same design.
    """
    name, params = config.scenario, dict(config.scenario_params)
    unknown = set(params) - _PARAM_KEYS[name]
    if unknown:
        raise ValueError(f"params.{sorted(unknown)[0]}: unknown parameter for {name}")
    freq = float(params.get("frequency", 1.0))
    if name == "least-squares":
        d = int(params.get("d", 2))
        traj = Circle(1.0, freq) if d == 2 else Sinusoid((1.0,) * d, freq, np.arange(d) * 0.5 * math.pi)
        design_rng = RngStream(config.seed, derive_stream_id("design")).generator()
        return LeastSquaresScenario.random_design(
            design_rng, n=int(params.get("n", 40)), d=d, trajectory=traj,
            noise_var=float(params.get("noise_var", 0.5)), windows=_windows(params))
    if name == "object-tracking":
        link_name = params.get("link", "identity")
        if link_name == "identity":
            link = IdentityLink()
        elif link_name == "exp":
            link = ExpLink(1.0, float(params.get("link_rate", 1.0)))
        else:
            raise ValueError(f"params.link: unknown link {link_name!r}")
        sensors = sensor_grid(int(params.get("points_per_axis", 11)),
                              float(params.get("low", -1.0)), float(params.get("high", 1.0)))
        return ObjectTrackingScenario(sensors, Circle(1.0, freq), link,
                                      float(params.get("noise_var", 0.05)), _windows(params))
    if name == "performative":
        return PerformativeScenario(
            mu=SineSignal(float(params.get("mu_offset", 0.0)),
                          float(params.get("mu_amplitude", 1.0)), freq),
            eps=SineSignal(float(params.get("eps_offset", 0.5)),
                           float(params.get("eps_amplitude", 0.25)), freq),
            sigma=float(params.get("sigma", 1.0)),
            n_samples=int(params.get("n_samples", 200)),
            sample_at=params.get("sample_at", "estimate"))
    kind = params.get("trajectory", "linear")
    if kind == "linear":
        traj = Linear(slope=(float(params.get("drift", 1.0)),))
    elif kind == "sine":
        traj = Sinusoid((float(params.get("amplitude", 1.0)),), freq)
    else:
        raise ValueError(f"params.trajectory: unknown {kind!r}; use 'linear' or 'sine'")
    return QuadraticScenario(float(params.get("mu", 1.0)), traj)


@dataclass(eq=False)
class RunResult:
    method: str
    h: float
    rep: int
    times: np.ndarray
    errors: np.ndarray
    warmup_steps: int = 0
    ridge_count: int = 0
    wall_time: float = 0.0
    failed: bool = False
    failure: str | None = None
    observations: list | None = None

    @property
    def final_error(self) -> float:
        """Error at the last grid time."""
        return float(self.errors[-1])

    @property
    def terminal_error(self) -> float:
        """Mean error over the last 5% of grid times, warm-up excluded."""
        return tail_mean(self.errors, self.warmup_steps)


def tail_mean(errors, warmup_steps: int = 0, fraction: float = TAIL_FRACTION) -> float:
    errors = np.asarray(errors, dtype=float)
    n = errors.shape[0]
    start = max(n - max(1, math.ceil(fraction * n)), warmup_steps + 1)
    if start >= n:
        return float(errors[-1])
    return float(np.mean(errors[start:]))


def initial_offset(d: int, size: float) -> np.ndarray:
    """Displacement of ``size`` along the diagonal direction."""
    return np.full(d, size / math.sqrt(d))


def run_once(scenario: Scenario, tracker_cfg: TrackerConfig, grid: TimeGrid, rng, *,
             theta0=None, init_offset: float = 1.0, exact: bool = False,
             rep: int = 0, record_observations: bool = False) -> RunResult:
    """Track ``scenario`` over ``grid`` with one tracker.

    ``rng`` is an :class:`RngStream` or a numpy ``Generator``. With
    ``exact=True`` the closed-form derivatives replace the estimates
    (observations are still drawn so the stream is consumed identically).
    """
    if abs(tracker_cfg.h - grid.h) > 1e-12 * grid.h:
        raise ValueError(f"tracker h={tracker_cfg.h} differs from grid h={grid.h}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    scn = scenario.at_step(grid.h)
    started = time.perf_counter()
    times = grid.times()
    if theta0 is None:
        theta0 = scn.true_theta(times[0]) + initial_offset(scn.dim, init_offset)
    state = TrackerState(theta0)
    errors = np.full(grid.num_steps + 1, np.nan)
    errors[0] = np.linalg.norm(state.theta_hat - scn.true_theta(times[0]))
    buffer = ObservationBuffer(scn.history_length())
    observations = [] if record_observations else None
    is_pc = tracker_cfg.method is Method.PC
    failure = None
    for k in range(grid.num_steps):
        t = times[k]
        obs = scn.observe(k, t, gen, state.theta_hat)
        if observations is not None:
            observations.append(obs)
        buffer.push(k, obs)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                if exact:
                    bundle = scn.exact_bundle(state.theta_hat, t)
                    state = pc_step(state, bundle, tracker_cfg) if is_pc else \
                        gd_step(state, bundle.gradient, tracker_cfg)
                elif is_pc:
                    state = pc_step(state, scn.estimate_bundle(state.theta_hat, t, buffer), tracker_cfg)
                else:
                    state = gd_step(state, scn.estimate_gradient(state.theta_hat, t, buffer), tracker_cfg)
        except (SingularHessian, FloatingPointError) as exc:
            failure = f"step {k}: {exc}"
            log.warning("run %s h=%g rep=%d aborted at %s", tracker_cfg.method.value, grid.h, rep, failure)
            break
        errors[k + 1] = np.linalg.norm(state.theta_hat - scn.true_theta(times[k + 1]))
    return RunResult(
        method=tracker_cfg.method.value, h=grid.h, rep=rep, times=times, errors=errors,
        warmup_steps=0 if exact else scn.warmup_steps(), ridge_count=state.ridge_count,
        wall_time=time.perf_counter() - started, failed=failure is not None,
        failure=failure, observations=observations)


def observation_stream(seed: int, h: float, rep: int) -> RngStream:
    """Stream for the observations of one (h, replicate) cell, shared by all methods."""
    return RngStream(seed, derive_stream_id("obs", float(h), int(rep)))


_SCENARIO_CACHE: dict = {}


def _scenario_for(config: ExperimentConfig) -> Scenario:
    key = repr(config.as_dict())
    if key not in _SCENARIO_CACHE:
        _SCENARIO_CACHE.clear()
        _SCENARIO_CACHE[key] = make_scenario(config)
    return _SCENARIO_CACHE[key]


def run_cell(config: ExperimentConfig, method: str, h: float, rep: int) -> RunResult:
    scenario = _scenario_for(config).at_step(h)
    grid = TimeGrid.from_horizon(h, config.t_max)
    cfg = TrackerConfig(method, config.eta_for(method, h), h)
    return run_once(scenario, cfg, grid, observation_stream(config.seed, h, rep),
                    init_offset=config.init_offset, exact=config.exact, rep=rep)


def _run_cell_args(args):
    return run_cell(*args)


def monte_carlo(config: ExperimentConfig) -> dict:
    """All ``methods x hs x reps`` runs, keyed by ``(method, h)``.

    Each replicate list is ordered by replicate index. Output does not depend
    on ``config.jobs``.
    """
    cells = [(config, m, h, r) for m in config.methods for h in config.hs for r in range(config.reps)]
    if config.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_cell_args, cells, chunksize=max(1, len(cells) // (4 * config.jobs))))
    else:
        results = [run_cell(*c) for c in cells]
    out: dict = {}
    for res in sorted(results, key=lambda r: (r.method, r.h, r.rep)):
        out.setdefault((res.method, res.h), []).append(res)
    return out


def fit_rate_slope(points) -> tuple[float, float]:
    """Least-squares slope of ``log(error)`` against ``log(h)`` and its standard error."""
    pts = [(float(h), float(e)) for h, e in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points to fit a rate, got {len(pts)}")
    if any(not (h > 0 and e > 0) for h, e in pts):
        raise ValueError("step sizes and errors must be positive")
    x = np.log([h for h, _ in pts])
    y = np.log([e for _, e in pts])
    if np.ptp(x) == 0:
        raise DegenerateFit("all step sizes are equal")
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.stderr)


@dataclass
class SweepSummary:
    rows: list            # dicts: method, h, terminal_error_mean, terminal_error_std, reps, failed
    slopes: dict          # method -> (slope, stderr)

    def row(self, method, h):
        for r in self.rows:
            if r["method"] == method and r["h"] == h:
                return r
        raise KeyError((method, h))


def terminal_value(result: RunResult, kind: str = "tail") -> float:
    return result.terminal_error if kind == "tail" else result.final_error


def summarize(results: dict, terminal: str = "tail") -> SweepSummary:
    rows = []
    for (method, h), runs in sorted(results.items()):
        ok = [terminal_value(r, terminal) for r in runs if not r.failed]
        vals = np.array(ok)
        rows.append({
            "method": method, "h": h,
            "terminal_error_mean": float(vals.mean()) if ok else math.nan,
            "terminal_error_std": float(vals.std(ddof=1)) if len(ok) > 1 else 0.0,
            "reps": len(ok),
            "failed": len(runs) - len(ok),
        })
    slopes = {}
    for method in sorted({r["method"] for r in rows}):
        pts = [(r["h"], r["terminal_error_mean"]) for r in rows
               if r["method"] == method and r["reps"] > 0]
        if len({h for h, _ in pts}) < 3:
            continue
        if any(not e > 0 for _, e in pts):
            log.warning("no rate fitted for %s: some mean errors are zero or undefined", method)
            continue
        slopes[method] = fit_rate_slope(pts)
    return SweepSummary(rows, slopes)


def mean_error_curve(runs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(times, mean, standard error)`` across replicates at every grid time."""
    errs = np.vstack([r.errors for r in runs if not r.failed])
    se = errs.std(axis=0, ddof=1) / math.sqrt(len(errs)) if len(errs) > 1 else np.zeros(errs.shape[1])
    return runs[0].times, errs.mean(axis=0), se


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_trace_csv(results: dict, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for key in sorted(results):
                for r in results[key]:
                    for k, (t, e) in enumerate(zip(r.times, r.errors)):
                        w.writerow((r.method, _fmt(r.h), r.rep, k, _fmt(t), _fmt(e)))
    except OSError as exc:
        raise OSError(f"cannot write trace CSV {path}: {exc}") from exc
    return path


def write_summary_csv(summary: SweepSummary, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for r in summary.rows:
                slope = summary.slopes.get(r["method"])
                w.writerow((r["method"], _fmt(r["h"]), _fmt(r["terminal_error_mean"]),
                            _fmt(r["terminal_error_std"]), r["reps"],
                            _fmt(slope[0]) if slope else "", _fmt(slope[1]) if slope else ""))
    except OSError as exc:
        raise OSError(f"cannot write summary CSV {path}: {exc}") from exc
    return path


def emit_csv(results: dict, out_dir, prefix: str = "run", terminal: str = "tail") -> tuple[Path, Path]:
    """Write ``<prefix>_trace.csv`` and ``<prefix>_summary.csv``; overwrites existing files."""
    out_dir = Path(out_dir)
    trace = write_trace_csv(results, out_dir / f"{prefix}_trace.csv")
    summary = write_summary_csv(summarize(results, terminal), out_dir / f"{prefix}_summary.csv")
    return trace, summary


def read_trace_csv(path) -> dict:
    """Parse a trace CSV back into ``{(method, h): {rep: error array}}``."""
    out: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["method"], float(row["h"]))
            out.setdefault(key, {}).setdefault(int(row["rep"]), []).append(float(row["error"]))
    return {k: {rep: np.array(v) for rep, v in reps.items()} for k, reps in out.items()}


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
