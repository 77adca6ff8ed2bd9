"""Seeded experiment orchestration: trials, regret windows, aggregation, CSV."""
from __future__ import annotations

import csv
import logging
import math
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .baselines import FixedGridSE, GridExp3, OraclePolicy, UniformPolicy
from .environments import CovariateSampler, NoiseModel, Phase, ShiftSchedule, generate_bump_field
from .policy import AdaptiveBandit, InvariantMonitor, PolicyConfig

log = logging.getLogger(__name__)

POLICIES = ("adaptive", "oracle", "uniform", "fixed_grid_se", "grid_exp3")

TRIAL_COLUMNS = ["policy", "gamma", "n_p", "n_q", "trial", "seed", "regret_q", "regret_total", "runtime_ms"]
AGG_COLUMNS = ["policy", "gamma", "n_p", "n_q", "AGG", "mean_regret_q", "std_regret_q", "trials"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # environment
    n_arms: int = 3
    n_bumps: int = 25
    center_law: str = "gaussian"
    field_seed: int = 0
    radius_cap: float = 0.2
    min_radius: float = 0.01
    noise_sigma: float = 0.05
    clip_rewards: bool = False
    # schedule: a sweep grid over n_p x gamma, plus optional multi-shift schedules
    n_q: int = 30_000
    n_p: list[int] = field(default_factory=lambda: [0])
    gamma: list[float] = field(default_factory=lambda: [2.0])
    shifts: list[list[list[float]]] = field(default_factory=list)
    # policies
    policies: list[str] = field(default_factory=lambda: ["adaptive"])
    delta: float = 0.05
    lam: float = 1.0
    level_coef: float = 8.0
    elim_coef: float = 8.0
    max_depth: int = 30
    grid_depth: int | None = None
    # run
    trials: int = 20
    seed: int = 0
    out: str = "results.csv"
    threads: int = 1
    check_invariants: bool = False
    timing: bool = True
    figures: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.n_p and not self.shifts:
            raise ConfigError("n_p sweep list must be nonempty")
        if self.n_p and not self.gamma:
            raise ConfigError("gamma sweep list must be nonempty")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}; choose from {', '.join(POLICIES)}")
        if self.n_q <= 0:
            raise ConfigError("n_q must be positive")
        for sched in self.shifts:
            if not sched or any(len(ph) != 2 or ph[1] <= 0 for ph in sched):
                raise ConfigError("each multi-shift schedule is a list of [gamma, length] pairs")

    def policy_config(self, seed: int = 0) -> PolicyConfig:
        return PolicyConfig(
            n_arms=self.n_arms,
            delta=self.delta,
            lam=self.lam,
            dimension=2,
            max_depth=self.max_depth,
            seed=seed,
            level_coef=self.level_coef,
            elim_coef=self.elim_coef,
        )

    def cells(self) -> list["Cell"]:
        out = [
            Cell(_fmt_number(g), ShiftSchedule.single_shift(g, n_p, self.n_q))
            for n_p in self.n_p
            for g in self.gamma
        ]
        for sched in self.shifts:
            phases = tuple(Phase(CovariateSampler.radial(g), int(n)) for g, n in sched)
            label = "+".join(f"{_fmt_number(g)}:{int(n)}" for g, n in sched)
            out.append(Cell(label, ShiftSchedule(phases, self.n_q)))
        return out

    def make_field(self):
        return generate_bump_field(
            self.field_seed,
            n_bumps=self.n_bumps,
            center_law=self.center_law,
            n_arms=self.n_arms,
            radius_cap=self.radius_cap,
            min_radius=self.min_radius,
        )


def _fmt_number(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a flat YAML mapping; unknown keys are errors."""
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key/value mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    for key in ("n_p", "gamma", "policies"):
        if key in data and not isinstance(data[key], list):
            data[key] = [data[key]]
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)


@dataclass(frozen=True)
class Cell:
    gamma: str
    schedule: ShiftSchedule

    @property
    def n_p(self) -> int:
        return self.schedule.n_p

    @property
    def n_q(self) -> int:
        return self.schedule.n_q


@dataclass
class RegretCurve:
    instantaneous: np.ndarray
    n_p: int

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.instantaneous)

    def total(self, upto: int | None = None) -> float:
        """``R_{1,upto}``; ``upto`` defaults to the horizon."""
        upto = len(self.instantaneous) if upto is None else upto
        return float(self.cumulative[upto - 1]) if upto > 0 else 0.0

    @property
    def regret_total(self) -> float:
        return self.total()

    @property
    def regret_q(self) -> float:
        return self.total() - self.total(self.n_p)


@dataclass
class TrialRecord:
    policy: str
    gamma: str
    n_p: int
    n_q: int
    trial: int
    seed: int
    regret_q: float
    regret_total: float
    runtime_ms: float


@dataclass
class Aggregate:
    policy: str
    gamma: str
    n_p: int
    n_q: int
    mean_regret_q: float
    std_regret_q: float
    trials: int
    expected: int | None = None

    @property
    def complete(self) -> bool:
        return self.expected is None or self.trials == self.expected

    @property
    def stderr(self) -> float:
        return self.std_regret_q / math.sqrt(self.trials) if self.trials else math.nan


@dataclass
class Report:
    records: list[TrialRecord] = field(default_factory=list)
    aggregates: list[Aggregate] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    def aggregate(self, policy: str, gamma: str, n_p: int, n_q: int | None = None) -> Aggregate:
        for a in self.aggregates:
            if a.policy == policy and a.gamma == str(gamma) and a.n_p == n_p and (n_q is None or a.n_q == n_q):
                return a
        raise KeyError((policy, gamma, n_p, n_q))

    def regrets(self, policy: str, gamma: str, n_p: int) -> np.ndarray:
        return np.array([r.regret_q for r in self.records if r.policy == policy and r.gamma == str(gamma) and r.n_p == n_p])


def pooled_stderr(a: Aggregate, b: Aggregate) -> float:
    """Standard error of the difference of two cell means."""
    return math.sqrt(a.std_regret_q**2 / a.trials + b.std_regret_q**2 / b.trials)


def trial_seed(base_seed: int, cell_index: int, trial: int) -> int:
    """Counter-based child seed; independent of every other (cell, trial)."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(cell_index, trial))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _policy_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1, dtype=np.uint32)[0])


def make_policy(name: str, config: ExperimentConfig, field_, horizon: int, seed: int, monitor=None):
    if name == "adaptive":
        return AdaptiveBandit(config.policy_config(seed), monitor=monitor)
    if name == "oracle":
        return OraclePolicy(field_)
    if name == "uniform":
        return UniformPolicy(config.n_arms, seed)
    if name == "fixed_grid_se":
        return FixedGridSE(config.n_arms, horizon, 2, config.grid_depth)
    if name == "grid_exp3":
        return GridExp3(config.n_arms, horizon, 2, config.grid_depth, seed)
    raise ConfigError(f"unknown policy {name!r}")


def simulate(policy, X: np.ndarray, means: np.ndarray, rewards: np.ndarray, n_p: int) -> RegretCurve:
    """Run ``policy`` over a fixed stream with bandit feedback.

    Only the played arm's reward is revealed; regret is measured against the
    true means.
    """
    n = len(X)
    arms = np.empty(n, dtype=np.int64)
    choose, update = policy.choose_action, policy.update
    reward_rows = rewards.tolist()
    for t, x in enumerate(X.tolist()):
        a = choose(x)
        update(x, a, reward_rows[t][a])
        arms[t] = a
    inst = means.max(axis=1) - means[np.arange(n), arms]
    return RegretCurve(inst, n_p)


def generate_stream(config: ExperimentConfig, field_, schedule: ShiftSchedule, seed: int):
    rng = np.random.default_rng(seed)
    X = schedule.sample(rng)
    means = field_.means(X)
    rewards = NoiseModel(config.noise_sigma, config.clip_rewards).apply(rng, means)
    return X, means, rewards


def run_trial(config: ExperimentConfig, cell: Cell, trial: int, seed: int, field_=None) -> list[TrialRecord]:
    """Run every configured policy on one seeded stream (paired comparison)."""
    field_ = config.make_field() if field_ is None else field_
    X, means, rewards = generate_stream(config, field_, cell.schedule, seed)
    out = []
    for name in config.policies:
        monitor = InvariantMonitor(strict=True) if (config.check_invariants and name == "adaptive") else None
        policy = make_policy(name, config, field_, cell.schedule.n, _policy_seed(seed, name), monitor)
        start = time.perf_counter()
        curve = simulate(policy, X, means, rewards, cell.n_p)
        runtime = (time.perf_counter() - start) * 1000 if config.timing else 0.0
        out.append(TrialRecord(name, cell.gamma, cell.n_p, cell.n_q, trial, seed, curve.regret_q, curve.regret_total, runtime))
    return out


def _task(args):
    config, cell, trial, seed = args
    try:
        return run_trial(config, cell, trial, seed), None
    except Exception as exc:  # reported per cell, never fatal to the experiment
        return None, f"cell gamma={cell.gamma} n_p={cell.n_p} trial {trial}: {exc!r}\n{traceback.format_exc()}"


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> Report:
    """All cells x trials, in parallel worker processes when ``threads > 1``.

    Records are reduced in (cell, trial, policy) order, so the report does
    not depend on scheduling.
    """
    threads = config.threads if threads is None else threads
    cells = config.cells()
    tasks = [(config, cell, k, trial_seed(config.seed, ci, k)) for ci, cell in enumerate(cells) for k in range(config.trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]

    report = Report()
    for (_, cell, k, _), (records, error) in zip(tasks, results):
        if error is not None:
            log.error("trial failed: %s", error)
            report.failures.append(error)
            continue
        report.records.extend(records)
    for cell in cells:
        for name in config.policies:
            vals = [r.regret_q for r in report.records if r.policy == name and r.gamma == cell.gamma and r.n_p == cell.n_p]
            arr = np.array(vals)
            report.aggregates.append(
                Aggregate(
                    name,
                    cell.gamma,
                    cell.n_p,
                    cell.n_q,
                    float(arr.mean()) if len(arr) else math.nan,
                    float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
                    len(arr),
                    config.trials,
                )
            )
    return report


def emit_csv(report: Report, path) -> Path:
    path = Path(path)
    try:
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRIAL_COLUMNS)
            for r in report.records:
                w.writerow([r.policy, r.gamma, r.n_p, r.n_q, r.trial, r.seed, repr(r.regret_q), repr(r.regret_total), repr(r.runtime_ms)])
            for a in report.aggregates:
                trials = str(a.trials) if a.complete else f"{a.trials}/{a.expected}"
                w.writerow([a.policy, a.gamma, a.n_p, a.n_q, "AGG", repr(a.mean_regret_q), repr(a.std_regret_q), trials])
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_csv(path) -> Report:
    report = Report()
    with Path(path).open(newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != TRIAL_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in rows:
            if row[4] == "AGG":
                done, _, expected = row[7].partition("/")
                report.aggregates.append(
                    Aggregate(row[0], row[1], int(row[2]), int(row[3]), float(row[5]), float(row[6]), int(done),
                              int(expected) if expected else int(done))
                )
            else:
                report.records.append(
                    TrialRecord(row[0], row[1], int(row[2]), int(row[3]), int(row[4]), int(row[5]),
                                float(row[6]), float(row[7]), float(row[8]))
                )
    return report


def describe(report: Report) -> str:
    lines = []
    for a in report.aggregates:
        flag = "" if a.complete else f"  INCOMPLETE {a.trials}/{a.expected}"
        lines.append(
            f"{a.policy:>14s}  gamma={a.gamma:<12s} n_p={a.n_p:<7d} n_q={a.n_q:<7d} "
            f"R^Q = {a.mean_regret_q:9.2f} +- {a.std_regret_q:8.2f} ({a.trials} trials){flag}"
        )
    return "\n".join(lines)


def with_overrides(config: ExperimentConfig, **kw: Any) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
