"""Experiment scenarios, run records, summary metrics and file output.

Two named scenarios are built in:

  steering    opinions start uniform on [-1, 1], target +2
  polarized   two equal camps on [2, 3] and [-3, -2], target 0

A scenario can also be loaded from a JSON file mirroring the Scenario
fields, and individual fields can be overridden with dotted paths
(e.g. "model.alpha=0.5", "controller.n_samples=200"); overrides apply last.

Trajectory files are CSV with header

  step,agent_id,opinion,active,control,actuation_prob

one row per (step, agent). Rows for step < T_mpc carry the indicator,
control and (adaptive only) actuation probability used at that step; the
final state row leaves those columns empty, as does actuation_prob for
non-adaptive policies. Floats are written with repr so parsing the file
reproduces the record bit-for-bit.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import CostSpec, ModelParams
from .optimizer import ShapeSpec

SCENARIO_NAMES = ("steering", "polarized")

TRAJ_COLUMNS = ("step", "agent_id", "opinion", "active", "control", "actuation_prob")


# ---------------------------------------------------------------------------
# initial distributions


@dataclass
class UniformMixture:
    """Mixture of uniform intervals; weights are positive and sum to one."""

    weights: tuple[float, ...]
    lows: tuple[float, ...]
    highs: tuple[float, ...]

    def __post_init__(self):
        self.weights = tuple(float(w) for w in self.weights)
        self.lows = tuple(float(v) for v in self.lows)
        self.highs = tuple(float(v) for v in self.highs)
        if not (len(self.weights) == len(self.lows) == len(self.highs)) or not self.weights:
            raise ValueError("mixture components must be non-empty and aligned")
        if any(w <= 0.0 for w in self.weights):
            raise ValueError("mixture weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if any(lo >= hi for lo, hi in zip(self.lows, self.highs)):
            raise ValueError("each interval needs lo < hi")

    @property
    def support(self) -> tuple[float, float]:
        return min(self.lows), max(self.highs)

    def sample(self, n: int, rng: np.random.Generator, even_split: bool = False) -> np.ndarray:
        """Draw n opinions. even_split assigns component counts
        deterministically (largest remainder), removing mixture-size noise."""
        k = len(self.weights)
        if even_split:
            quota = np.array([w * n for w in self.weights])
            counts = np.floor(quota).astype(int)
            rest = np.argsort(-(quota - counts), kind="stable")
            for idx in rest[: n - counts.sum()]:
                counts[idx] += 1
            comp = np.repeat(np.arange(k), counts)
        else:
            comp = rng.choice(k, size=n, p=np.asarray(self.weights))
        lows = np.asarray(self.lows)[comp]
        highs = np.asarray(self.highs)[comp]
        return lows + rng.random(n) * (highs - lows)


# ---------------------------------------------------------------------------
# scenario configuration


@dataclass
class ControlSettings:
    """Sampling-controller constants, overridable per scenario."""

    planning_horizon: int = 10
    mpc_horizon: int = 150
    n_samples: int = 500
    step_size: float = 1.0
    shape: ShapeSpec = field(default_factory=ShapeSpec)
    sampling_std: float = 0.3
    p_min: float = 0.01
    opt_iterations: int = 1
    initial_actuation_prob: float | None = None

    def __post_init__(self):
        if self.planning_horizon < 1 or self.mpc_horizon < 1:
            raise ValueError("horizons must be at least 1")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.step_size < 0.0:
            raise ValueError("step_size must be non-negative")
        if self.sampling_std <= 0.0:
            raise ValueError("sampling_std must be positive")
        if not 0.0 < self.p_min < 0.5:
            raise ValueError("p_min must lie in (0, 0.5)")
        if self.opt_iterations < 1:
            raise ValueError("opt_iterations must be at least 1")
        if self.initial_actuation_prob is not None and not 0.0 < self.initial_actuation_prob < 1.0:
            raise ValueError("initial_actuation_prob must lie in (0, 1)")


@dataclass
class Scenario:
    """Everything a run needs besides the policy kind and the seed."""

    name: str
    init: UniformMixture
    model: ModelParams
    cost: CostSpec
    active_fraction: float = 0.25
    controller: ControlSettings = field(default_factory=ControlSettings)
    even_mode_split: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("scenario name must be non-empty")
        if not 0.0 < self.active_fraction <= 1.0:
            raise ValueError("active_fraction must lie in (0, 1]")
        lo, hi = self.model.state_bounds
        s_lo, s_hi = self.init.support
        if s_lo < lo or s_hi > hi:
            raise ValueError("initial distribution support exceeds the state bounds")
        if not lo <= self.cost.target <= hi:
            raise ValueError("target must lie within the state bounds")

    @property
    def target(self) -> float:
        return self.cost.target


def _shared_defaults(name: str, init: UniformMixture, target: float) -> Scenario:
    return Scenario(
        name=name,
        init=init,
        model=ModelParams(
            n_agents=200, alpha=0.8, sigma=0.1, epsilon=1.0,
            state_bounds=(-3.0, 3.0), state_dim=1,
        ),
        cost=CostSpec(q=5.0, r=0.1, target=target),
        active_fraction=0.25,
        controller=ControlSettings(
            planning_horizon=10, mpc_horizon=150, n_samples=500, step_size=1.0,
            shape=ShapeSpec(kind="soft_elite", elite_fraction=0.1),
            sampling_std=0.3,
        ),
    )


def build_scenario(name_or_path: str, overrides: dict[str, str] | None = None) -> Scenario:
    """Named scenario or JSON config file, with dotted-path overrides last."""
    if name_or_path == "steering":
        scenario = _shared_defaults(
            "steering",
            UniformMixture(weights=(1.0,), lows=(-1.0,), highs=(1.0,)),
            target=2.0,
        )
    elif name_or_path == "polarized":
        scenario = _shared_defaults(
            "polarized",
            UniformMixture(weights=(0.5, 0.5), lows=(2.0, -3.0), highs=(3.0, -2.0)),
            target=0.0,
        )
    elif Path(name_or_path).is_file():
        scenario = scenario_from_dict(json.loads(Path(name_or_path).read_text()))
    else:
        raise ValueError(
            f"unknown scenario {name_or_path!r}: expected one of {', '.join(SCENARIO_NAMES)} "
            "or a path to a JSON scenario file"
        )
    for path, raw in (overrides or {}).items():
        _apply_override(scenario, path, raw)
    # re-validate cross-field constraints the overrides may have broken
    Scenario.__post_init__(scenario)
    for part in (scenario.model, scenario.cost, scenario.controller, scenario.init,
                 scenario.controller.shape):
        type(part).__post_init__(part)
    return scenario


def _apply_override(scenario: Scenario, path: str, raw: str) -> None:
    obj = scenario
    parts = path.split(".")
    for part in parts[:-1]:
        if not dataclasses.is_dataclass(obj) or part not in {f.name for f in dataclasses.fields(obj)}:
            raise ValueError(f"unknown config field {path!r}")
        obj = getattr(obj, part)
    leaf = parts[-1]
    if not dataclasses.is_dataclass(obj) or leaf not in {f.name for f in dataclasses.fields(obj)}:
        raise ValueError(f"unknown config field {path!r}")
    current = getattr(obj, leaf)
    try:
        setattr(obj, leaf, _coerce_like(current, raw, path))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"invalid value {raw!r} for {path!r}: {exc}") from exc


def _coerce_like(current, raw: str, path: str):
    if isinstance(current, bool):
        token = raw.strip().lower()
        if token in ("true", "1", "yes"):
            return True
        if token in ("false", "0", "no"):
            return False
        raise ValueError("expected a boolean")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float) or current is None:
        if current is None and raw.strip().lower() == "none":
            return None
        return float(raw)
    if isinstance(current, str):
        return raw
    if isinstance(current, tuple):
        items = [t for t in raw.replace("(", "").replace(")", "").split(",") if t.strip()]
        if len(items) != len(current):
            raise ValueError(f"expected {len(current)} comma-separated values")
        return tuple(float(t) for t in items)
    raise ValueError(f"field {path!r} cannot be set from the command line")


def scenario_to_dict(scenario: Scenario) -> dict:
    d = dataclasses.asdict(scenario)
    d["model"]["state_bounds"] = list(scenario.model.state_bounds)
    d["init"] = {
        "weights": list(scenario.init.weights),
        "lows": list(scenario.init.lows),
        "highs": list(scenario.init.highs),
    }
    return d


def scenario_from_dict(d: dict) -> Scenario:
    def pick(src: dict, cls, label: str):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(src) - names
        if unknown:
            raise ValueError(f"unknown {label} field(s): {', '.join(sorted(unknown))}")
        return src

    d = dict(d)
    init = UniformMixture(**pick(dict(d.pop("init")), UniformMixture, "init"))
    model_d = pick(dict(d.pop("model", {})), ModelParams, "model")
    if "state_bounds" in model_d:
        model_d["state_bounds"] = tuple(model_d["state_bounds"])
    model = ModelParams(**model_d)
    cost = CostSpec(**pick(dict(d.pop("cost", {})), CostSpec, "cost"))
    ctrl_d = dict(d.pop("controller", {}))
    shape = ShapeSpec(**pick(dict(ctrl_d.pop("shape", {})), ShapeSpec, "shape"))
    controller = ControlSettings(shape=shape, **pick(ctrl_d, ControlSettings, "controller"))
    rest = pick(d, Scenario, "scenario")
    return Scenario(init=init, model=model, cost=cost, controller=controller, **rest)


# ---------------------------------------------------------------------------
# run records and metrics


@dataclass
class ExperimentRecord:
    """Everything one run produced. states has shape (T_mpc + 1, N); the
    control, indicator and (adaptive) probability arrays have one row per
    executed step."""

    scenario_name: str
    policy: str
    seed: int
    states: np.ndarray
    controls: np.ndarray
    indicators: np.ndarray
    actuation_probs: np.ndarray | None
    config: dict

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.controls = np.asarray(self.controls, dtype=np.float64)
        self.indicators = np.asarray(self.indicators, dtype=bool)
        if self.actuation_probs is not None:
            self.actuation_probs = np.asarray(self.actuation_probs, dtype=np.float64)
        steps = self.states.shape[0] - 1
        n = self.states.shape[1]
        if self.controls.shape != (steps, n) or self.indicators.shape != (steps, n):
            raise ValueError("controls/indicators must have one row per executed step")
        if self.actuation_probs is not None and self.actuation_probs.shape != (steps, n):
            raise ValueError("actuation probabilities must have one row per executed step")

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_agents(self) -> int:
        return self.states.shape[1]

    @property
    def target(self) -> float:
        return float(self.config["scenario"]["cost"]["target"])


@dataclass
class Metrics:
    """Summary statistics of one record.

    time_to_threshold is the first step index at which the population mean
    is within the threshold of the target (None if never);
    time_to_mode_threshold asks the same of every nonempty mode mean, where
    agents are partitioned by the sign of their initial opinion (zero counts
    as positive). control_effort is the r-weighted squared control total.
    """

    mean_opinion: np.ndarray
    opinion_std: np.ndarray
    mode_means: np.ndarray
    mode_sizes: tuple[int, int]
    time_to_threshold: int | None
    time_to_mode_threshold: int | None
    control_effort: float
    terminal_gap: float
    threshold: float

    def to_dict(self) -> dict:
        def listify(a):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(a)]

        return {
            "mean_opinion": listify(self.mean_opinion),
            "opinion_std": listify(self.opinion_std),
            "mode_means": {
                "negative": listify(self.mode_means[0]),
                "positive": listify(self.mode_means[1]),
            },
            "mode_sizes": list(self.mode_sizes),
            "time_to_threshold": self.time_to_threshold,
            "time_to_mode_threshold": self.time_to_mode_threshold,
            "control_effort": self.control_effort,
            "terminal_gap": self.terminal_gap,
            "threshold": self.threshold,
        }


def compute_metrics(record: ExperimentRecord, threshold: float = 0.2) -> Metrics:
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    target = record.target
    states = record.states
    mean = states.mean(axis=1)
    std = states.std(axis=1)

    neg = states[0] < 0.0
    pos = ~neg
    mode_means = np.full((2, states.shape[0]), np.nan)
    if neg.any():
        mode_means[0] = states[:, neg].mean(axis=1)
    if pos.any():
        mode_means[1] = states[:, pos].mean(axis=1)

    within = np.abs(mean - target) <= threshold
    t_thresh = int(np.argmax(within)) if within.any() else None

    gaps = [np.abs(mode_means[row] - target) for row in range(2)
            if np.isfinite(mode_means[row]).all()]
    if gaps:
        mode_within = np.all(np.stack(gaps) <= threshold, axis=0)
        t_mode = int(np.argmax(mode_within)) if mode_within.any() else None
    else:
        t_mode = None

    r = float(record.config["scenario"]["cost"]["r"])
    effort = r * float(np.sum(record.controls[record.indicators] ** 2))
    return Metrics(
        mean_opinion=mean,
        opinion_std=std,
        mode_means=mode_means,
        mode_sizes=(int(neg.sum()), int(pos.sum())),
        time_to_threshold=t_thresh,
        time_to_mode_threshold=t_mode,
        control_effort=effort,
        terminal_gap=float(np.abs(mean[-1] - target)),
        threshold=float(threshold),
    )


# ---------------------------------------------------------------------------
# file output


def run_basename(scenario_name: str, policy: str, seed: int) -> str:
    return f"{scenario_name}_{policy}_{seed}"


def write_outputs(
    record: ExperimentRecord,
    metrics: Metrics,
    out_dir: str | Path,
) -> tuple[Path, Path]:
    """Write the trajectory CSV and the summary JSON; returns both paths.

    Output bytes are a pure function of the record and metrics: floats are
    written with repr, JSON keys are sorted, newlines are always "\\n".
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = run_basename(record.scenario_name, record.policy, record.seed)
    traj_path = out_dir / f"{base}_traj.csv"
    summary_path = out_dir / f"{base}_summary.json"

    with open(traj_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJ_COLUMNS)
        n_steps, n = record.n_steps, record.n_agents
        adaptive = record.actuation_probs is not None
        for t in range(n_steps + 1):
            last = t == n_steps
            for i in range(n):
                writer.writerow((
                    t,
                    i,
                    repr(float(record.states[t, i])),
                    "" if last else int(record.indicators[t, i]),
                    "" if last else repr(float(record.controls[t, i])),
                    repr(float(record.actuation_probs[t, i])) if adaptive and not last else "",
                ))

    summary = {
        "scenario": record.scenario_name,
        "policy": record.policy,
        "seed": record.seed,
        "config": record.config,
        "metrics": metrics.to_dict(),
    }
    with open(summary_path, "w", newline="") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return traj_path, summary_path


def read_trajectory(path: str | Path) -> dict:
    """Parse a trajectory CSV back into arrays (exact float round-trip).

    Returns a dict with states (S+1, N), controls (S, N), indicators (S, N)
    and actuation_probs ((S, N) or None).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRAJ_COLUMNS:
            raise ValueError(f"{path.name}: unexpected header {header!r}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path.name}: no data rows")
    try:
        n_steps = max(int(r[0]) for r in rows)
        n = max(int(r[1]) for r in rows) + 1
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path.name}: malformed step/agent_id column: {exc}") from exc
    if len(rows) != (n_steps + 1) * n:
        raise ValueError(f"{path.name}: expected {(n_steps + 1) * n} rows, found {len(rows)}")

    states = np.empty((n_steps + 1, n))
    controls = np.zeros((n_steps, n))
    indicators = np.zeros((n_steps, n), dtype=bool)
    probs = np.zeros((n_steps, n))
    has_probs = False
    for row in rows:
        if len(row) != len(TRAJ_COLUMNS):
            raise ValueError(f"{path.name}: row with {len(row)} fields: {row!r}")
        t, i = int(row[0]), int(row[1])
        states[t, i] = float(row[2])
        if t < n_steps:
            indicators[t, i] = row[3] == "1"
            controls[t, i] = float(row[4])
            if row[5] != "":
                probs[t, i] = float(row[5])
                has_probs = True
    return {
        "states": states,
        "controls": controls,
        "indicators": indicators,
        "actuation_probs": probs if has_probs else None,
    }
