"""Tabular average-reward MDPs: representation, value iteration, span, diameter."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConvergenceError",
    "InfiniteDiameterError",
    "Mdp",
    "PlanningSolution",
    "compute_diameter",
    "gain_gap",
    "is_communicating",
    "policy_gains",
    "span",
    "value_iteration",
]

SIMPLEX_ATOL = 1e-9
MAX_SWEEPS = 1_000_000
APERIODIC_AFTER = 10_000


class ConvergenceError(RuntimeError):
    pass


class InfiniteDiameterError(ConvergenceError):
    pass


@dataclass(frozen=True)
class Mdp:
    """Finite MDP with kernel ``transitions[x, a, x']`` and mean rewards ``mean_rewards[x, a]``."""

    transitions: np.ndarray
    mean_rewards: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        R = np.asarray(self.mean_rewards, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or R.shape != P.shape[:2]:
            raise ValueError(f"inconsistent shapes: transitions {P.shape}, rewards {R.shape}")
        if np.any(P < 0) or not np.allclose(P.sum(axis=2), 1.0, rtol=0, atol=SIMPLEX_ATOL):
            raise ValueError("every transition row must be a probability vector")
        if np.any(R < 0) or np.any(R > 1):
            raise ValueError("mean rewards must lie in [0, 1]")
        P.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "mean_rewards", R)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


@dataclass(frozen=True)
class PlanningSolution:
    gain: float
    bias: np.ndarray
    policy: np.ndarray
    sweeps: int = 0


def span(v) -> float:
    """Span seminorm ``max(v) - min(v)``."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("span of an empty vector")
    return float(v.max() - v.min())


def value_iteration(
    mdp: Mdp,
    tolerance: float = 1e-8,
    max_sweeps: int = MAX_SWEEPS,
    aperiodic_after: int = APERIODIC_AFTER,
) -> PlanningSolution:
    """Relative value iteration for the optimal average reward.

    Stops when ``span(u_{n+1} - u_n) < tolerance``. If that has not happened
    after ``aperiodic_after`` sweeps the kernel is mixed half-and-half with the
    identity, which leaves the gain unchanged and breaks periodic oscillation.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    P, R = mdp.transitions, mdp.mean_rewards
    u = np.zeros(mdp.n_states)
    tau = 1.0
    sp = np.inf
    for sweep in range(1, max_sweeps + 1):
        if sweep == aperiodic_after + 1:
            tau = 0.5
        Q = R + tau * (P @ u)
        if tau != 1.0:
            Q += (1.0 - tau) * u[:, None]
        u_new = Q.max(axis=1)
        diff = u_new - u
        sp = span(diff)
        u = u_new - u_new.min()
        if sp < tolerance:
            gain = 0.5 * (diff.max() + diff.min())
            return PlanningSolution(
                gain=float(gain), bias=u, policy=np.argmax(Q, axis=1), sweeps=sweep
            )
    raise ConvergenceError(f"value iteration did not converge in {max_sweeps} sweeps (span {sp:.3e})")


def is_communicating(transitions) -> bool:
    """Every state reaches every other under some policy (strong connectivity of the support graph)."""
    adj = np.asarray(transitions).max(axis=1) > 0
    n = adj.shape[0]
    reach = adj | np.eye(n, dtype=bool)
    # transitive closure by repeated squaring
    for _ in range(max(1, int(np.ceil(np.log2(max(n, 2)))) + 1)):
        reach = reach | ((reach.astype(np.int64) @ reach.astype(np.int64)) > 0)
    return bool(reach.all())


def compute_diameter(
    mdp: Mdp, tolerance: float = 1e-10, max_sweeps: int = MAX_SWEEPS
) -> float:
    """``max_{x != y} min_pi E[hitting time of y from x]`` via stochastic-shortest-path value iteration."""
    n = mdp.n_states
    if n == 1:
        return 0.0
    P = mdp.transitions
    worst = 0.0
    for target in range(n):
        h = np.zeros(n)
        for sweep in range(max_sweeps):
            h_new = 1.0 + (P @ h).min(axis=1)
            h_new[target] = 0.0
            change = np.abs(h_new - h).max()
            h = h_new
            if change <= tolerance * max(1.0, h.max()):
                break
        else:
            raise InfiniteDiameterError(
                f"hitting times to state {target} diverge (still {h.max():.3e} after {max_sweeps} sweeps)"
            )
        worst = max(worst, float(h.max()))
    return worst


def _stationary_limit(P_pi: np.ndarray) -> np.ndarray:
    # Cesaro limit of a finite chain via repeated squaring of its lazy version.
    A = 0.5 * (P_pi + np.eye(P_pi.shape[0]))
    for _ in range(64):
        A2 = A @ A
        # squaring also squares any row-sum rounding error, so renormalize
        A2 /= A2.sum(axis=1, keepdims=True)
        if np.abs(A2 - A).max() < 1e-14:
            return A2
        A = A2
    return A


def policy_gains(mdp: Mdp, policy) -> np.ndarray:
    """Gain of a stationary deterministic policy from each start state."""
    policy = np.asarray(policy)
    states = np.arange(mdp.n_states)
    P_pi = mdp.transitions[states, policy]
    r_pi = mdp.mean_rewards[states, policy]
    return _stationary_limit(P_pi) @ r_pi


def _all_policies(mdp: Mdp):
    return itertools.product(range(mdp.n_actions), repeat=mdp.n_states)


def gain_gap(mdp: Mdp, atol: float = 1e-9) -> tuple[float, float]:
    """Optimal gain and the margin to the best strictly suboptimal deterministic policy.

    A policy's gain is taken from its worst start state. Exhaustive: only for
    small instances. The margin is ``inf`` if every policy is optimal.
    """
    gains = [float(policy_gains(mdp, pi).min()) for pi in _all_policies(mdp)]
    best = max(gains)
    worse = [g for g in gains if g < best - atol]
    return best, (best - max(worse)) if worse else np.inf
