"""Benchmark environments: RiverSwim, SixArms and random sparse MDPs."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .mdp import Mdp, is_communicating

__all__ = [
    "Environment",
    "EnvConstructionError",
    "SparseGenConfig",
    "make_env",
    "random_sparse",
    "riverswim",
    "sample_step",
    "sixarms",
]

REWARD_MODES = ("deterministic", "bernoulli")
LEFT, RIGHT = 0, 1
SIXARMS_P = (1.0, 0.15, 0.1, 0.05, 0.03, 0.01)
SIXARMS_R = tuple(v / 6000 for v in (50, 133, 300, 800, 1666, 6000))
SPARSE_RETRIES = 100
_BLOCK = 4096


class EnvConstructionError(ValueError):
    pass


class _UniformStream:
    """Buffered uniforms: the k-th draw depends only on the seed, never on how draws are used."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._buf: list[float] = []
        self._i = 0

    def next(self) -> float:
        if self._i == len(self._buf):
            self._buf = self._rng.random(_BLOCK).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return u


@dataclass
class Environment:
    """A sampling wrapper around an :class:`Mdp`.

    Transitions and reward noise come from two independent seeded streams; one
    uniform is consumed from each per step, so two agents run with the same
    seed face the same randomness.
    """

    model: Mdp
    name: str = "custom"
    reward_mode: str = "deterministic"
    initial_state: int = 0
    rewards_known: bool = False
    params: dict = field(default_factory=dict)
    seed: int | np.random.SeedSequence | None = None

    def __post_init__(self):
        if self.reward_mode not in REWARD_MODES:
            raise EnvConstructionError(f"reward_mode must be one of {REWARD_MODES}, got {self.reward_mode!r}")
        if not is_communicating(self.model.transitions):
            raise EnvConstructionError(f"environment {self.name!r} is not communicating")
        cum = np.cumsum(self.model.transitions, axis=2)
        cum[:, :, -1] = 1.0
        self._cum = cum.tolist()
        self._mean = self.model.mean_rewards.tolist()
        self.reset(self.seed)

    @property
    def n_states(self) -> int:
        return self.model.n_states

    @property
    def n_actions(self) -> int:
        return self.model.n_actions

    def reset(self, seed=None) -> int:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        trans_ss, reward_ss = ss.spawn(2)
        self._trans = _UniformStream(np.random.default_rng(trans_ss))
        self._noise = _UniformStream(np.random.default_rng(reward_ss))
        self.current_state = self.initial_state
        return self.current_state

    def step(self, action: int) -> tuple[int, float]:
        x = self.current_state
        row = self._cum[x][action]
        nxt = bisect.bisect_right(row, self._trans.next())
        if nxt >= len(row):
            nxt = len(row) - 1
        mean = self._mean[x][action]
        u = self._noise.next()
        reward = mean if self.reward_mode == "deterministic" else float(u < mean)
        self.current_state = nxt
        return nxt, reward

    def metadata(self) -> dict:
        meta = {"env": self.name, "reward_mode": self.reward_mode, "rewards_known": self.rewards_known}
        meta.update(self.params)
        return meta


def sample_step(env: Environment, action: int) -> tuple[int, float]:
    return env.step(action)


def _check_prob(name, value):
    if not 0.0 <= value <= 1.0:
        raise EnvConstructionError(f"{name}={value!r} is not a probability")


def riverswim(
    n_states: int = 6,
    p_right: float = 0.35,
    p_stay: float = 0.6,
    p_back: float = 0.05,
    reward_left: float = 0.005,
    reward_right: float = 1.0,
    reward_mode: str = "deterministic",
    seed=None,
) -> Environment:
    """Chain of ``n_states`` states; action 0 swims left (always succeeds), action 1 swims right.

    Impossible moves at either end of the chain are folded into staying put.
    ``reward_left`` is paid for swimming left in the leftmost state and
    ``reward_right`` for swimming right in the rightmost one.
    """
    for name, v in (("p_right", p_right), ("p_stay", p_stay), ("p_back", p_back)):
        _check_prob(name, v)
    if abs(p_right + p_stay + p_back - 1.0) > 1e-9:
        raise EnvConstructionError("p_right + p_stay + p_back must equal 1")
    if n_states < 2:
        raise EnvConstructionError("riverswim needs at least 2 states")
    P = np.zeros((n_states, 2, n_states))
    R = np.zeros((n_states, 2))
    last = n_states - 1
    for x in range(n_states):
        P[x, LEFT, max(x - 1, 0)] = 1.0
        P[x, RIGHT, min(x + 1, last)] += p_right
        P[x, RIGHT, x] += p_stay
        P[x, RIGHT, max(x - 1, 0)] += p_back
    R[0, LEFT] = reward_left
    R[last, RIGHT] = reward_right
    params = dict(
        n_states=n_states, p_right=p_right, p_stay=p_stay, p_back=p_back,
        reward_left=reward_left, reward_right=reward_right,
    )
    return Environment(Mdp(P, R), "riverswim", reward_mode, 0, False, params, seed)


def sixarms(
    probabilities=SIXARMS_P,
    rewards=SIXARMS_R,
    rewards_known: bool = True,
    reward_mode: str = "deterministic",
    seed=None,
) -> Environment:
    """Seven states; from state 0 action ``a`` reaches state ``a + 1`` with probability ``probabilities[a]``.

    In state ``x >= 1`` action 0 stays and pays ``rewards[x - 1]``; every other
    action returns to state 0 with no reward.
    """
    probabilities = tuple(float(v) for v in probabilities)
    rewards = tuple(float(v) for v in rewards)
    if len(probabilities) != 6 or len(rewards) != 6:
        raise EnvConstructionError("sixarms needs exactly 6 probabilities and 6 rewards")
    for i, v in enumerate(probabilities):
        if not 0.0 < v <= 1.0:
            raise EnvConstructionError(f"probabilities[{i}]={v!r} not in (0, 1]")
    for i, v in enumerate(rewards):
        _check_prob(f"rewards[{i}]", v)
    P = np.zeros((7, 6, 7))
    R = np.zeros((7, 6))
    for a, pa in enumerate(probabilities):
        P[0, a, a + 1] = pa
        P[0, a, 0] += 1.0 - pa
    for x in range(1, 7):
        P[x, 0, x] = 1.0
        R[x, 0] = rewards[x - 1]
        P[x, 1:, 0] = 1.0
    params = dict(
        probabilities=" ".join(map(repr, probabilities)),
        rewards=" ".join(map(repr, rewards)),
        stay_action=0,
    )
    return Environment(Mdp(P, R), "sixarms", reward_mode, 0, rewards_known, params, seed)


@dataclass(frozen=True)
class SparseGenConfig:
    n_states: int = 10
    n_actions: int = 5
    avg_out_degree: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1 or self.avg_out_degree <= 0:
            raise EnvConstructionError("sparse generator sizes must be positive")
        if self.avg_out_degree > self.n_states:
            raise EnvConstructionError("avg_out_degree cannot exceed n_states")


def _sparse_model(cfg: SparseGenConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    S, A = cfg.n_states, cfg.n_actions
    P = np.zeros((S, A, S))
    for x in range(S):
        for a in range(A):
            k = max(1, rng.binomial(S, cfg.avg_out_degree / S))
            succ = rng.choice(S, size=k, replace=False)
            P[x, a, succ] = rng.dirichlet(np.ones(k))
    return P, rng.random((S, A))


def random_sparse(
    config: SparseGenConfig = SparseGenConfig(), reward_mode: str = "deterministic", seed=None
) -> Environment:
    """Random communicating MDP with Dirichlet rows over a binomial number of successors.

    ``config.seed`` fixes the model; ``seed`` drives the sampling streams.
    """
    rng = np.random.default_rng(config.seed)
    for attempt in range(SPARSE_RETRIES):
        P, R = _sparse_model(config, rng)
        if is_communicating(P):
            params = dict(
                n_states=config.n_states, n_actions=config.n_actions,
                avg_out_degree=config.avg_out_degree, env_seed=config.seed, attempts=attempt + 1,
            )
            return Environment(Mdp(P, R), "sparse", reward_mode, 0, False, params, seed)
    raise EnvConstructionError(f"no communicating instance after {SPARSE_RETRIES} draws (seed {config.seed})")


def make_env(name: str, reward_mode: str = "deterministic", seed=None, env_seed: int = 0, **overrides) -> Environment:
    if name == "riverswim":
        return riverswim(reward_mode=reward_mode, seed=seed, **overrides)
    if name == "sixarms":
        return sixarms(reward_mode=reward_mode, seed=seed, **overrides)
    if name == "sparse":
        return random_sparse(SparseGenConfig(seed=env_seed, **overrides), reward_mode=reward_mode, seed=seed)
    raise EnvConstructionError(f"unknown environment {name!r}")
