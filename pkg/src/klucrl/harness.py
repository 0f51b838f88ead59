"""Monte-Carlo regret experiments: paired replications, CSV output, summaries and bound curves."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .agents import ALGORITHMS, Agent, AgentConfig, episode_bound, theorem1_constants
from .envs import Environment, make_env
from .mdp import compute_diameter, gain_gap, value_iteration

__all__ = [
    "CSV_HEADER",
    "CsvFormatError",
    "ExperimentConfig",
    "ExperimentError",
    "ExperimentResult",
    "RegretTrace",
    "compute_regret",
    "default_output_dir",
    "paired_sign_test",
    "read_metadata",
    "read_regret_csv",
    "run_experiment",
    "run_replication",
    "summarize",
    "theorem_bound_curve",
    "thinned_steps",
    "write_regret_csv",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("algorithm", "env", "replication", "t", "cumulative_reward", "regret")
OUTPUT_ENV_VAR = "KLUCRL_OUTPUT_DIR"
THEOREM1_C = 24.0
THEOREM2_C = 400.0
DENSE_UNTIL = 1000
THIN_EVERY = 100


class ExperimentError(RuntimeError):
    pass


class CsvFormatError(ValueError):
    pass


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV_VAR, "results"))


@dataclass
class ExperimentConfig:
    env: str = "riverswim"
    algorithms: tuple[str, ...] = ("klucrl", "ucrl2")
    horizon: int = 100_000
    replications: int = 20
    seed: int = 0
    delta: float = 0.05
    reward_mode: str = "deterministic"
    env_seed: int | None = None
    env_overrides: dict = field(default_factory=dict)
    out_dir: Path | None = None
    workers: int = 1

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        if self.horizon <= 5:
            raise ValueError("horizon must exceed 5")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ValueError(f"algorithms must be a nonempty subset of {sorted(ALGORITHMS)}, got {self.algorithms}")
        if self.env_seed is None:
            self.env_seed = self.seed

    def build_env(self, seed=None) -> Environment:
        return make_env(self.env, self.reward_mode, seed=seed, env_seed=self.env_seed, **self.env_overrides)


@dataclass
class RegretTrace:
    algorithm: str
    env: str
    replication: int
    cumulative_reward: np.ndarray
    regret: np.ndarray
    n_episodes: int = 0

    @property
    def final_regret(self) -> float:
        return float(self.regret[-1])


def compute_regret(rewards, optimal_gain: float, algorithm: str = "", env: str = "", replication: int = 0) -> RegretTrace:
    """``regret(t) = t * optimal_gain - sum_{s <= t} R_s``."""
    cum = np.cumsum(np.asarray(rewards, dtype=np.float64))
    t = np.arange(1, cum.size + 1, dtype=np.float64)
    return RegretTrace(algorithm, env, replication, cum, t * optimal_gain - cum)


def theorem_bound_curve(n_states: int, n_actions: int, diameter: float, delta: float, T_grid, gap: float | None = None) -> dict:
    """High-probability and logarithmic regret bounds evaluated on ``T_grid`` (entries > 5).

    The logarithmic curve needs the gain gap and is ``None`` without it.
    """
    T = np.asarray(T_grid, dtype=np.float64)
    if np.any(T <= 5):
        raise ValueError("bound curves are defined for T > 5")
    sqrt_curve = THEOREM1_C * diameter * n_states * np.sqrt(n_actions * T * np.log(np.log(T) / delta))
    log_curve = None
    if gap is not None and np.isfinite(gap) and gap > 0:
        log_curve = THEOREM2_C * diameter**2 * n_states**2 * n_actions * np.log(T) / gap
    return {"T": T, "high_probability": sqrt_curve, "logarithmic": log_curve}


def paired_sign_test(a, b) -> tuple[int, int, float]:
    """One-sided sign test that ``a`` tends to be smaller than ``b``; ties dropped.

    Returns ``(wins, n_untied, p_value)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    wins = int(np.sum(a < b))
    n = int(np.sum(a != b))
    if n == 0:
        return 0, 0, 1.0
    return wins, n, float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue)


def _seeds(seed: int):
    env_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    return env_ss, agent_ss


def run_replication(config: ExperimentConfig, algorithm: str, replication: int, optimal_gain: float | None = None):
    """One agent run to the horizon; returns ``(trace, agent)``."""
    env_ss, agent_ss = _seeds(config.seed + replication)
    env = config.build_env(seed=env_ss)
    if optimal_gain is None:
        optimal_gain = value_iteration(env.model).gain
    agent = Agent(
        env.n_states,
        env.n_actions,
        AgentConfig.for_algorithm(algorithm, config.horizon, config.delta),
        seed=agent_ss,
        known_rewards=env.model.mean_rewards if env.rewards_known else None,
    )
    rewards = np.empty(config.horizon)
    x = env.current_state
    act, observe, step = agent.act, agent.observe, env.step
    for i in range(config.horizon):
        a = act(x)
        y, r = step(a)
        observe(x, a, r, y)
        rewards[i] = r
        x = y
    trace = compute_regret(rewards, optimal_gain, algorithm, env.name, replication)
    trace.n_episodes = agent.n_episodes
    return trace, agent


def _replication_task(args):
    config, algorithm, replication, gain = args
    trace, agent = run_replication(config, algorithm, replication, gain)
    return trace


def summarize(traces) -> dict[str, dict]:
    """Mean and standard error of final regret per algorithm."""
    by_algo: dict[str, list[float]] = {}
    for tr in traces:
        by_algo.setdefault(tr.algorithm, []).append(tr.final_regret)
    out = {}
    for algo, vals in by_algo.items():
        v = np.asarray(vals)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        out[algo] = {"mean": float(v.mean()), "stderr": se, "n": int(v.size)}
    return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list[RegretTrace]
    summary: dict
    optimal_gain: float
    diameter: float
    metadata: dict

    def final_regrets(self, algorithm: str) -> np.ndarray:
        return np.array([t.final_regret for t in self.traces if t.algorithm == algorithm])

    def trace(self, algorithm: str, replication: int) -> RegretTrace:
        for t in self.traces:
            if t.algorithm == algorithm and t.replication == replication:
                return t
        raise KeyError((algorithm, replication))


def thinned_steps(horizon: int) -> np.ndarray:
    """1-based time indices kept in the CSV: every step up to 1000, then every 100th, plus the last."""
    dense = np.arange(1, min(horizon, DENSE_UNTIL) + 1)
    sparse = np.arange(DENSE_UNTIL + THIN_EVERY, horizon + 1, THIN_EVERY)
    steps = np.concatenate([dense, sparse])
    if steps[-1] != horizon:
        steps = np.append(steps, horizon)
    return steps


def write_regret_csv(path, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for tr in traces:
            for t in thinned_steps(tr.regret.size):
                w.writerow([tr.algorithm, tr.env, tr.replication, int(t),
                            repr(float(tr.cumulative_reward[t - 1])), repr(float(tr.regret[t - 1]))])


def read_regret_csv(path) -> list[dict]:
    """Parse a regret CSV back into row dicts; raises CsvFormatError naming the bad line."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise CsvFormatError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
            try:
                rows.append({
                    "algorithm": rec[0],
                    "env": rec[1],
                    "replication": int(rec[2]),
                    "t": int(rec[3]),
                    "cumulative_reward": float(rec[4]),
                    "regret": float(rec[5]),
                })
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
    return rows


def _write_metadata(path, meta: dict) -> None:
    with open(path, "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v}\n")


def read_metadata(path) -> dict[str, str]:
    meta = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#") and "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def _experiment_metadata(config: ExperimentConfig, env: Environment, gain: float, diameter: float) -> dict:
    S, A = env.n_states, env.n_actions
    c_p, c_r = theorem1_constants(S, A, config.horizon, config.delta)
    meta = {
        "klucrl_version": __version__,
        "status": "running",
        "algorithms": ",".join(config.algorithms),
        "horizon": config.horizon,
        "replications": config.replications,
        "seed": config.seed,
        "seed_rule": "replication seed = seed + index; SeedSequence split into environment and agent streams",
        "delta": config.delta,
        "n_states": S,
        "n_actions": A,
        "optimal_gain": repr(gain),
        "diameter": repr(diameter),
        "C_P": repr(c_p),
        "C_R": repr(c_r),
        "evi_tolerance": "1/sqrt(t_j)",
        "ucrl2_radii": "sqrt(14 S log(2 A t/delta)/N), sqrt(3.5 log(2 S A t/delta)/N)",
        "csv_thinning": f"every step up to {DENSE_UNTIL}, then every {THIN_EVERY}th, plus final",
    }
    meta.update({f"env.{k}": v for k, v in env.metadata().items()})
    if config.env == "sparse":
        meta["env_seed"] = config.env_seed
    return meta


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every algorithm on every replication with paired seeds and optionally write outputs."""
    env = config.build_env(seed=config.seed)
    gain = value_iteration(env.model).gain
    diameter = compute_diameter(env.model)
    meta = _experiment_metadata(config, env, gain, diameter)
    out = Path(config.out_dir) if config.out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_metadata(out / "metadata.txt", meta)

    tasks = [(config, algo, rep, gain) for algo in config.algorithms for rep in range(config.replications)]
    try:
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                traces = list(pool.map(_replication_task, tasks))
        else:
            traces = [_replication_task(t) for t in tasks]
    except Exception as exc:
        meta["status"] = "invalid"
        meta["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        if out is not None:
            _write_metadata(out / "metadata.txt", meta)
            (out / "INVALID").write_text(meta["error"] + "\n")
        raise ExperimentError(f"experiment aborted: {meta['error']}") from exc

    order = {a: i for i, a in enumerate(config.algorithms)}
    traces.sort(key=lambda tr: (order[tr.algorithm], tr.replication))
    summary = summarize(traces)
    meta["status"] = "complete"
    if out is not None:
        write_regret_csv(out / "regret.csv", traces)
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["algorithm", "n", "mean_final_regret", "stderr_final_regret"])
            for algo in config.algorithms:
                s = summary[algo]
                w.writerow([algo, s["n"], repr(s["mean"]), repr(s["stderr"])])
        bound = episode_bound(env.n_states, env.n_actions, config.horizon)
        with open(out / "episodes.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["algorithm", "replication", "n_episodes", "episode_bound"])
            for tr in traces:
                w.writerow([tr.algorithm, tr.replication, tr.n_episodes, repr(bound)])
        if env.n_states * env.n_actions <= 20:
            meta["gain_gap"] = repr(gain_gap(env.model)[1])
        _write_metadata(out / "metadata.txt", meta)
    log.info("experiment %s complete: %s", config.env, summary)
    return ExperimentResult(config, traces, summary, gain, diameter, meta)
