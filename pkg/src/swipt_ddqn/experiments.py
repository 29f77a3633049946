"""Experiment orchestration: strategy comparisons, parameter sweeps, reports.

A run is identified by (strategy, seed, environment config). Each run writes
one CSV with header ``episode,return,violations,asr_smoothed``; charts are
rendered from those CSVs alone, so ``render`` can redraw any past result.

The per-episode ``return`` column is the episode sum-rate score: the
transmitted throughput ``sum (1 - rho) * tau * R`` minus ``penalty`` for every
infeasible slot. With ``tau = 1`` this is exactly the sum of training rewards.
Set ``experiment.episode_return = reward`` to log the plain reward sum instead.
"""

from __future__ import annotations

import ast
import csv
import dataclasses
import logging
import os
import re
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .agents import STRATEGIES, AgentConfig, make_agent
from .env import EnvConfig, SwiptEnv
from .utils import ConfigurationError, config_hash

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "SWIPT_DDQN_OUTPUT_ROOT"
CSV_HEADER = ("episode", "return", "violations", "asr_smoothed")
SWEEP_HEADER = ("axis_value", "mean_final_asr", "std_final_asr", "seeds")

# sweep axis name -> EnvConfig field
SWEEP_AXES = {"L": "pu_slots", "T": "num_slots", "B0": "battery_init", "tau": "tau"}
EPISODE_RETURNS = ("sum_rate", "reward")

COMPARE_STRATEGIES = (
    "ddqn-ucb", "ddqn-egreedy", "dqn-ucb", "dqn-egreedy", "d3qn-ucb", "d3qn-egreedy",
    "fixed-rho-ucb", "fixed-rho-egreedy", "random",
)


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    episodes: int = 2500
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    strategies: tuple[str, ...] = COMPARE_STRATEGIES
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    smoothing_window: int = 50
    final_window: int = 500
    output_dir: str = "results"
    n_jobs: int = 1
    episode_return: str = "sum_rate"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        self.validate()

    def validate(self) -> None:
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if not self.strategies:
            raise ConfigurationError("at least one strategy is required")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown:
            raise ConfigurationError(f"unknown strategies {unknown}")
        if self.smoothing_window < 1 or self.final_window < 1:
            raise ConfigurationError("smoothing_window and final_window must be >= 1")
        if self.n_jobs < 1:
            raise ConfigurationError("n_jobs must be >= 1")
        if self.episode_return not in EPISODE_RETURNS:
            raise ConfigurationError(f"episode_return must be one of {EPISODE_RETURNS}")
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigurationError(f"sweep axis must be one of {sorted(SWEEP_AXES)}")
            for value in self.sweep_values:
                self.env_for(value)

    def env_for(self, value) -> EnvConfig:
        """Environment config at one sweep point (raises on invalid values)."""
        name = SWEEP_AXES[self.sweep_axis]
        if name in ("pu_slots", "num_slots"):
            if float(value) != int(value):
                raise ConfigurationError(f"{self.sweep_axis} must be an integer, got {value}")
            value = int(value)
        return replace(self.env, **{name: value})

    @property
    def hash(self) -> str:
        """Hash over every field that can change results."""
        payload = {k: v for k, v in asdict(self).items() if k not in ("output_dir", "n_jobs")}
        return config_hash(payload)


def fast_preset(config: ExperimentConfig) -> ExperimentConfig:
    """Desk-scale variant: 600 episodes, 128/64 hidden units, 100-episode final window."""
    return replace(config, episodes=600, final_window=100,
                   agent=replace(config.agent, hidden=(128, 64)))


# -- config files ----------------------------------------------------------

_SECTIONS = {"env": EnvConfig, "agent": AgentConfig, "experiment": ExperimentConfig}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse flat ``section.key = value`` lines; ``#`` starts a comment."""
    base = base if base is not None else ExperimentConfig()
    values = {"env": {}, "agent": {}, "experiment": {}}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"(\w+)\.(\w+)\s*=\s*(.*)", line)
        if m is None:
            raise ConfigurationError(f"line {lineno}: expected 'section.key = value', got {line!r}")
        section, key, raw = m.groups()
        if section not in _SECTIONS:
            raise ConfigurationError(f"line {lineno}: unknown section {section!r}")
        names = {f.name for f in dataclasses.fields(_SECTIONS[section])} - {"env", "agent"}
        if key not in names:
            raise ConfigurationError(f"line {lineno}: unknown key {section}.{key}")
        values[section][key] = _parse_value(raw)
    env = replace(base.env, **values["env"])
    agent = replace(base.agent, **values["agent"])
    return replace(base, env=env, agent=agent, **values["experiment"])


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), base)


def dump_config(config: ExperimentConfig) -> str:
    lines = [f"# config hash {config.hash}"]
    for section, obj in (("env", config.env), ("agent", config.agent)):
        for f in dataclasses.fields(obj):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(obj, f.name))}")
    for f in dataclasses.fields(config):
        if f.name not in ("env", "agent"):
            lines.append(f"experiment.{f.name} = {_format_value(getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def _format_value(v) -> str:
    if isinstance(v, tuple):
        v = list(v)
    return repr(v)


# -- runs ----------------------------------------------------------------


@dataclass
class MetricSeries:
    """Per-episode outcome of one (label, seed) training run."""

    label: str
    seed: int
    returns: np.ndarray
    violations: np.ndarray
    smoothing_window: int = 50

    @property
    def episodes(self) -> int:
        return len(self.returns)

    @property
    def asr_smoothed(self) -> np.ndarray:
        return moving_average(self.returns, self.smoothing_window)

    def final_asr(self, window: int = 500) -> float:
        return float(np.mean(self.returns[-window:]))

    def final_violation_rate(self, window: int = 500, num_slots: int | None = None) -> float:
        v = float(np.mean(self.violations[-window:]))
        return v / num_slots if num_slots else v

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for i, (r, v, a) in enumerate(zip(self.returns, self.violations, self.asr_smoothed), 1):
                writer.writerow((i, repr(float(r)), int(v), repr(float(a))))

    @classmethod
    def from_csv(cls, path, label: str | None = None, seed: int | None = None) -> "MetricSeries":
        path = Path(path)
        parsed = parse_series_name(path.name)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = list(reader)
        returns = np.array([float(r[1]) for r in rows])
        violations = np.array([int(r[2]) for r in rows])
        return cls(label if label is not None else parsed[0],
                   seed if seed is not None else parsed[1], returns, violations)


def moving_average(x, window: int) -> np.ndarray:
    """Trailing mean over at most ``window`` points; output has the input's length."""
    x = np.asarray(x, dtype=np.float64)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)


def series_name(label: str, seed: int, digest: str) -> str:
    return f"{label}__seed{seed}__{digest}.csv"


def parse_series_name(name: str) -> tuple[str, int, str]:
    m = re.fullmatch(r"(.+)__seed(\d+)__([0-9a-f]+)\.csv", name)
    if m is None:
        raise ValueError(f"not a series file name: {name}")
    return m.group(1), int(m.group(2)), m.group(3)


@dataclass(frozen=True)
class Job:
    label: str
    strategy: str
    seed: int
    env: EnvConfig
    agent: AgentConfig
    episodes: int
    smoothing_window: int = 50
    episode_return: str = "sum_rate"


def job_seeds(seed: int) -> tuple[int, int]:
    """Independent environment and agent seeds derived from one run seed."""
    env_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    return (int(env_ss.generate_state(1, np.uint64)[0]),
            int(agent_ss.generate_state(1, np.uint64)[0]))


def run_job(job: Job) -> MetricSeries:
    env_seed, agent_seed = job_seeds(job.seed)
    env = SwiptEnv(job.env, random_state=env_seed)
    agent = make_agent(job.strategy, job.agent, random_state=agent_seed, n_episodes=job.episodes)
    agent.fit(env)
    if job.episode_return == "reward":
        returns = np.array([m.total_reward for m in agent.history_])
    else:
        returns = np.array([m.sum_rate for m in agent.history_])
    violations = np.array([m.violations for m in agent.history_], dtype=np.int64)
    logger.info("%s seed %d: final-50 ASR %.3f", job.label, job.seed, returns[-50:].mean())
    return MetricSeries(job.label, job.seed, returns, violations, job.smoothing_window)


def run_jobs(jobs: list[Job], n_jobs: int = 1) -> list[MetricSeries]:
    if n_jobs == 1 or len(jobs) == 1:
        return [run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(run_job, jobs))


def resolve_output_dir(output_dir) -> Path:
    path = Path(output_dir)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def prepare_output_dir(output_dir) -> Path:
    """Create the output directory and prove it is writable, before any training."""
    path = resolve_output_dir(output_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory {path} is not writable: {exc}") from exc
    return path


def run_experiment(config: ExperimentConfig, write: bool = True) -> dict[tuple[str, int], MetricSeries]:
    """Train every configured strategy on every seed.

    Returns ``{(strategy, seed): MetricSeries}`` and, with ``write``, stores
    one CSV per series plus a comparison chart in ``config.output_dir``.
    """
    config.validate()
    out = prepare_output_dir(config.output_dir) if write else None
    jobs = [Job(s, s, seed, config.env, config.agent, config.episodes, config.smoothing_window,
                config.episode_return)
            for s in config.strategies for seed in config.seeds]
    series = run_jobs(jobs, config.n_jobs)
    results = {(j.strategy, j.seed): s for j, s in zip(jobs, series)}
    if write:
        (out / f"config__{config.hash}.cfg").write_text(dump_config(config))
        emit_report(list(results.values()), out, config.hash, "compare")
    return results


@dataclass
class SweepRow:
    value: float
    mean_final_asr: float
    std_final_asr: float
    seeds: int
    per_seed: tuple[float, ...] = ()


def _value_tag(value) -> str:
    return f"{value:g}" if isinstance(value, float) else str(value)


def aggregate(values: list[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def sweep(config: ExperimentConfig, axis: str | None = None, values=None,
          write: bool = True) -> list[SweepRow]:
    """Train the first configured strategy at every sweep value and seed.

    All sweep values are validated before the first run starts.
    """
    if axis is not None or values is not None:
        config = replace(config, sweep_axis=axis or config.sweep_axis,
                         sweep_values=tuple(values) if values is not None else config.sweep_values)
    if config.sweep_axis is None or not config.sweep_values:
        raise ConfigurationError("a sweep needs an axis and at least one value")
    envs = [config.env_for(v) for v in config.sweep_values]
    out = prepare_output_dir(config.output_dir) if write else None
    strategy = config.strategies[0]
    jobs = []
    for value, env in zip(config.sweep_values, envs):
        label = f"{strategy}_{config.sweep_axis}-{_value_tag(value)}"
        jobs += [Job(label, strategy, seed, env, config.agent, config.episodes,
                     config.smoothing_window, config.episode_return) for seed in config.seeds]
    series = run_jobs(jobs, config.n_jobs)
    rows = []
    n = len(config.seeds)
    for k, value in enumerate(config.sweep_values):
        finals = [s.final_asr(config.final_window) for s in series[k * n:(k + 1) * n]]
        mean, std = aggregate(finals)
        rows.append(SweepRow(value, mean, std, n, tuple(finals)))
    if write:
        (out / f"config__{config.hash}.cfg").write_text(dump_config(config))
        emit_report(series, out, config.hash, f"sweep-{config.sweep_axis}")
        write_sweep_table(rows, out / f"sweep_{config.sweep_axis}__{config.hash}.csv")
    return rows


def write_sweep_table(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for r in rows:
            writer.writerow((r.value, repr(r.mean_final_asr), repr(r.std_final_asr), r.seeds))


def read_sweep_table(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != SWEEP_HEADER:
            raise ValueError(f"{path}: unexpected sweep table header")
        return [SweepRow(float(v), float(m), float(s), int(n)) for v, m, s, n in reader]


# -- reporting -------------------------------------------------------------


def emit_report(series: list[MetricSeries], output_dir, digest: str, name: str) -> list[Path]:
    """Write one CSV per series, then draw the chart from those CSVs."""
    if not series:
        raise ValueError("nothing to report")
    out = Path(output_dir)
    paths = []
    for s in series:
        p = out / series_name(s.label, s.seed, digest)
        s.to_csv(p)
        paths.append(p)
    render(paths, out, name=name)
    return paths


def read_asr_column(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader)) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header")
        return np.array([float(row[3]) for row in reader])


def render(csv_paths, output_dir, name: str = "compare") -> list[Path]:
    """Draw mean +/- std ASR curves per label, one chart per config hash.

    Uses nothing but the CSV files, so past runs can be redrawn.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    for p in csv_paths:
        label, seed, digest = parse_series_name(Path(p).name)
        groups[digest][label].append((seed, read_asr_column(p)))

    out = Path(output_dir)
    images = []
    for digest, by_label in sorted(groups.items()):
        fig, ax = plt.subplots(figsize=(8, 5))
        for label, runs in sorted(by_label.items()):
            curves = np.vstack([asr for _, asr in sorted(runs, key=lambda r: r[0])])
            mean, std = curves.mean(axis=0), curves.std(axis=0)
            x = np.arange(1, curves.shape[1] + 1)
            ax.plot(x, mean, label=label, lw=1.2)
            ax.fill_between(x, mean - std, mean + std, alpha=0.2)
        ax.set_xlabel("Episode")
        ax.set_ylabel("Average sum rate")
        title = f"{name} [config {digest}]"
        ax.set_title(title)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7, loc="lower right")
        path = out / f"{name}__{digest}.png"
        fig.savefig(path, dpi=110, metadata={"Title": title, "Description": f"config_hash={digest}"})
        plt.close(fig)
        images.append(path)
    return images
