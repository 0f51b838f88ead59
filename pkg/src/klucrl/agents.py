"""Episodic optimistic learners: KL-UCRL and the UCRL2 baseline.

Both agents share everything except the confidence-set geometry: KL balls of
radius ``C_P / N`` with reward radius ``C_R / sqrt(N)`` for KL-UCRL, L1 balls
with the UCRL2 radii for the baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .evi import ConfidenceSet, extended_value_iteration

__all__ = [
    "ALGORITHMS",
    "Agent",
    "AgentConfig",
    "CountTables",
    "EpisodeRecord",
    "episode_bound",
    "estimate",
    "theorem1_constants",
    "ucrl2_radii",
]

log = logging.getLogger(__name__)

ALGORITHMS = {"klucrl": "kl", "ucrl2": "l1"}


@dataclass
class CountTables:
    """Visit counts ``N(x, a)``, ``N(x, a, x')``, reward sums and in-episode counts ``n_j(x, a)``."""

    visits: np.ndarray
    transitions: np.ndarray
    reward_sum: np.ndarray
    episode_visits: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "CountTables":
        return cls(
            visits=np.zeros((n_states, n_actions), dtype=np.int64),
            transitions=np.zeros((n_states, n_actions, n_states), dtype=np.int64),
            reward_sum=np.zeros((n_states, n_actions)),
            episode_visits=np.zeros((n_states, n_actions), dtype=np.int64),
        )

    def record(self, x: int, a: int, reward: float, x_next: int) -> None:
        self.visits[x, a] += 1
        self.episode_visits[x, a] += 1
        self.transitions[x, a, x_next] += 1
        self.reward_sum[x, a] += reward


def estimate(counts: CountTables) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Empirical kernel and mean rewards, plus the mask of visited pairs.

    Unvisited pairs get an all-zero row and a zero reward.
    """
    denom = np.maximum(counts.visits, 1)
    p_hat = counts.transitions / denom[:, :, None]
    r_hat = counts.reward_sum / denom
    return p_hat, r_hat, counts.visits > 0


def theorem1_constants(n_states: int, n_actions: int, horizon: int, delta: float) -> tuple[float, float]:
    """Confidence constants ``(C_P, C_R)`` of the KL-UCRL regret guarantee."""
    if horizon <= 5:
        raise ValueError(f"horizon must exceed 5, got {horizon}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    log_t = math.log(horizon)
    B = math.log(2 * math.e * n_states**2 * n_actions * log_t / delta)
    b = B + 1 / log_t
    c_p = n_states * (B + math.log(b) * (1 + 1 / b))
    c_r = math.sqrt(math.log(4 * n_states * n_actions * log_t / delta) / 1.99)
    return c_p, c_r


def ucrl2_radii(n_states: int, n_actions: int, t: int, count, delta: float):
    """UCRL2 L1 transition radius and reward radius after ``count`` visits at time ``t``."""
    if t < 1:
        raise ValueError("t must be at least 1")
    n = np.maximum(count, 1)
    eps_p = np.sqrt(14 * n_states * math.log(2 * n_actions * t / delta) / n)
    eps_r = np.sqrt(3.5 * math.log(2 * n_states * n_actions * t / delta) / n)
    return eps_p, eps_r


def episode_bound(n_states: int, n_actions: int, horizon: int) -> float:
    """Upper bound on the number of episodes of the doubling scheme."""
    sa = n_states * n_actions
    return sa * math.log2(8 * horizon / sa)


@dataclass
class AgentConfig:
    horizon: int
    delta: float = 0.05
    metric: str = "kl"
    constant_overrides: tuple[float, float] | None = None
    evi_tolerance_rule: str = "1/sqrt(t_j)"
    anytime: bool = False
    l1_radius: str = "ucrl2"
    reward_cap: bool = True

    def __post_init__(self):
        if self.metric not in ("kl", "l1"):
            raise ValueError(f"metric must be 'kl' or 'l1', got {self.metric!r}")
        if self.horizon <= 5 and self.constant_overrides is None:
            raise ValueError("horizon must exceed 5 to use the regret-bound constants")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.l1_radius not in ("ucrl2", "pinsker"):
            raise ValueError(f"unknown l1_radius rule {self.l1_radius!r}")

    @classmethod
    def for_algorithm(cls, name: str, horizon: int, delta: float = 0.05, **kw) -> "AgentConfig":
        try:
            metric = ALGORITHMS[name]
        except KeyError:
            raise ValueError(f"unknown algorithm {name!r}; expected one of {sorted(ALGORITHMS)}") from None
        return cls(horizon=horizon, delta=delta, metric=metric, **kw)


@dataclass(frozen=True)
class EpisodeRecord:
    index: int
    start: int
    gain: float
    sweeps: int


@dataclass
class Agent:
    """Optimistic learner following the doubling episode scheme.

    Call :meth:`act` with the current state, then :meth:`observe` with the
    outcome. ``known_rewards`` replaces reward estimation entirely.
    """

    n_states: int
    n_actions: int
    config: AgentConfig
    seed: int | np.random.SeedSequence | None = None
    known_rewards: np.ndarray | None = None
    counts: CountTables = field(init=False)
    episodes: list[EpisodeRecord] = field(init=False, default_factory=list)

    def __post_init__(self):
        S, A = self.n_states, self.n_actions
        self.counts = CountTables.zeros(S, A)
        rng = np.random.default_rng(self.seed)
        self.policy = rng.integers(A, size=S)
        self.t = 0
        self.episode_index = 0
        self.episode_start = 0
        self._n_start = np.zeros((S, A), dtype=np.int64)
        self._bias = np.zeros(S)
        self._policy_list = self.policy.tolist()
        if self.config.constant_overrides is not None:
            self.c_p, self.c_r = self.config.constant_overrides
        else:
            self.c_p, self.c_r = theorem1_constants(S, A, self.config.horizon, self.config.delta)

    @property
    def n_episodes(self) -> int:
        return self.episode_index

    def act(self, x: int) -> int:
        """Return the action for state ``x`` at the next time step, starting a new episode if due."""
        self.t += 1
        a = self._policy_list[x]
        # the very first step always plans; afterwards the doubling rule decides
        if self.episode_index == 0 or self.counts.episode_visits[x, a] >= max(self._n_start[x, a], 1):
            self._new_episode()
            a = self._policy_list[x]
        return a

    def observe(self, x: int, a: int, reward: float, x_next: int) -> None:
        self.counts.record(x, a, reward, x_next)

    def radii(self, t: int, n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Transition and reward radii for visit counts ``n`` at episode start ``t``."""
        cfg = self.config
        nn = np.maximum(n, 1)
        if cfg.metric == "kl":
            if cfg.anytime and cfg.constant_overrides is None:
                c_p, c_r = theorem1_constants(self.n_states, self.n_actions, max(t, 6), cfg.delta)
            else:
                c_p, c_r = self.c_p, self.c_r
            return c_p / nn, c_r / np.sqrt(nn)
        eps_p, eps_r = ucrl2_radii(self.n_states, self.n_actions, t, n, cfg.delta)
        if cfg.l1_radius == "pinsker":
            eps_p = np.sqrt(2 * self.c_p / nn)
        return eps_p, eps_r

    def confidence_set(self) -> ConfidenceSet:
        p_hat, r_hat, visited = estimate(self.counts)
        eps_p, eps_r = self.radii(self.t, self.counts.visits)
        known = self.known_rewards is not None
        if known:
            r_hat = np.asarray(self.known_rewards, dtype=np.float64)
            eps_r = np.zeros_like(eps_r)
        return ConfidenceSet(
            p_hat=p_hat,
            r_hat=r_hat,
            transition_radius=eps_p,
            reward_radius=eps_r,
            metric=self.config.metric,
            visited=visited,
            rewards_known=known,
            reward_cap=self.config.reward_cap,
        )

    def _new_episode(self) -> None:
        self.episode_index += 1
        self.episode_start = self.t
        self.counts.episode_visits[:] = 0
        self._n_start = self.counts.visits.copy()
        tolerance = 1.0 / math.sqrt(self.t)
        sol = extended_value_iteration(self.confidence_set(), tolerance, initial_values=self._bias)
        self._bias = sol.bias
        self.policy = sol.policy
        self._policy_list = sol.policy.tolist()
        self.episodes.append(EpisodeRecord(self.episode_index, self.t, sol.gain, sol.sweeps))
        log.debug(
            "episode %d start t=%d metric=%s gain=%.6f sweeps=%d",
            self.episode_index, self.t, self.config.metric, sol.gain, sol.sweeps,
        )
