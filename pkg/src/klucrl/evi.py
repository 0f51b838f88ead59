"""Extended value iteration over a KL or L1 confidence set of MDPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .klopt import ROOT_TOL, _max_kl_kernel, _max_l1_kernel, kl_divergence
from .mdp import APERIODIC_AFTER, MAX_SWEEPS, ConvergenceError

__all__ = [
    "ConfidenceSet",
    "OptimisticSolution",
    "extended_value_iteration",
    "in_ball",
    "optimistic_reward",
]

METRICS = ("kl", "l1")
_KL, _L1 = 0, 1


@dataclass(frozen=True)
class ConfidenceSet:
    """Plausible MDPs around empirical estimates.

    ``transition_radius`` is a KL radius when ``metric == "kl"`` and an L1
    radius otherwise. Pairs with ``visited`` false are unconstrained. With
    ``rewards_known`` the rewards are taken as exact (no bonus, no bypass).
    """

    p_hat: np.ndarray
    r_hat: np.ndarray
    transition_radius: np.ndarray
    reward_radius: np.ndarray
    metric: str = "kl"
    visited: np.ndarray | None = None
    rewards_known: bool = False
    reward_cap: bool = True

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        S, A = self.r_hat.shape
        if self.p_hat.shape != (S, A, S):
            raise ValueError("p_hat must have shape (S, A, S)")
        if np.any(self.transition_radius < 0) or np.any(self.reward_radius < 0):
            raise ValueError("radii must be nonnegative")
        if self.visited is None:
            object.__setattr__(self, "visited", np.ones((S, A), dtype=bool))

    @property
    def n_states(self) -> int:
        return self.r_hat.shape[0]

    @property
    def n_actions(self) -> int:
        return self.r_hat.shape[1]

    @classmethod
    def around(cls, mdp, transition_radius=0.0, reward_radius=0.0, metric="kl") -> "ConfidenceSet":
        """Balls of constant radius centred on a known model."""
        shape = mdp.mean_rewards.shape
        return cls(
            p_hat=np.array(mdp.transitions),
            r_hat=np.array(mdp.mean_rewards),
            transition_radius=np.full(shape, float(transition_radius)),
            reward_radius=np.full(shape, float(reward_radius)),
            metric=metric,
        )


@dataclass(frozen=True)
class OptimisticSolution:
    policy: np.ndarray
    gain: float
    bias: np.ndarray
    optimistic_transitions: np.ndarray
    optimistic_rewards: np.ndarray
    sweeps: int


def optimistic_reward(r_hat, radius, cap: bool = True):
    r = np.asarray(r_hat, dtype=np.float64) + radius
    if cap:
        r = np.minimum(r, 1.0)
    return float(r) if r.ndim == 0 else r


def in_ball(p, q, radius: float, metric: str, atol: float = 1e-8) -> bool:
    if metric == "kl":
        return kl_divergence(p, q) <= radius + atol
    return float(np.abs(np.asarray(p) - np.asarray(q)).sum()) <= radius + atol


@njit(cache=True)
def _evi_kernel(p_hat, visited, radius, r_opt, metric, u0, tol, max_sweeps, aperiodic_after, q_best):
    S, A = r_opt.shape
    u = u0.copy()
    u_new = np.empty(S)
    policy = np.zeros(S, dtype=np.int64)
    q = np.empty(S)
    order = np.arange(S)
    tau = 1.0
    sp = np.inf
    for sweep in range(1, max_sweeps + 1):
        if sweep == aperiodic_after + 1:
            tau = 0.5
        top = 0
        for i in range(1, S):
            if u[i] > u[top]:
                top = i
        if metric == _L1:
            order = np.argsort(u, kind="mergesort")
        for x in range(S):
            best = -np.inf
            for a in range(A):
                if not visited[x, a]:
                    for i in range(S):
                        q[i] = 0.0
                    q[top] = 1.0
                elif metric == _KL:
                    _max_kl_kernel(p_hat[x, a], u, radius[x, a], q, ROOT_TOL)
                else:
                    _max_l1_kernel(p_hat[x, a], u, radius[x, a], order, q)
                val = 0.0
                for i in range(S):
                    val += q[i] * u[i]
                val = r_opt[x, a] + tau * val + (1.0 - tau) * u[x]
                if val > best:
                    best = val
                    policy[x] = a
                    for i in range(S):
                        q_best[x, i] = q[i]
            u_new[x] = best
        dmax = -np.inf
        dmin = np.inf
        umin = np.inf
        for x in range(S):
            d = u_new[x] - u[x]
            dmax = max(dmax, d)
            dmin = min(dmin, d)
            umin = min(umin, u_new[x])
        sp = dmax - dmin
        for x in range(S):
            u[x] = u_new[x] - umin
        if sp < tol:
            return u, 0.5 * (dmax + dmin), policy, sweep, sp
    return u, 0.5 * (dmax + dmin), policy, max_sweeps, sp


def extended_value_iteration(
    conf: ConfidenceSet,
    tolerance: float,
    initial_values=None,
    max_sweeps: int = MAX_SWEEPS,
    aperiodic_after: int = APERIODIC_AFTER,
) -> OptimisticSolution:
    """Solve the optimality equations jointly over actions and over models in ``conf``.

    ``initial_values`` warm-starts the iteration (e.g. with the previous bias).
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    S = conf.n_states
    visited = np.ascontiguousarray(conf.visited, dtype=np.bool_)
    if conf.rewards_known:
        r_opt = np.array(conf.r_hat, dtype=np.float64)
    else:
        r_opt = optimistic_reward(conf.r_hat, conf.reward_radius, conf.reward_cap)
        r_opt = np.where(visited, r_opt, 1.0)
    u0 = np.zeros(S) if initial_values is None else np.array(initial_values, dtype=np.float64)
    u0 -= u0.min()
    q_best = np.zeros((S, S))
    u, gain, policy, sweeps, sp = _evi_kernel(
        np.ascontiguousarray(conf.p_hat, dtype=np.float64),
        visited,
        np.ascontiguousarray(conf.transition_radius, dtype=np.float64),
        np.ascontiguousarray(r_opt),
        _KL if conf.metric == "kl" else _L1,
        u0,
        float(tolerance),
        int(max_sweeps),
        int(aperiodic_after),
        q_best,
    )
    if not sp < tolerance:
        raise ConvergenceError(f"extended value iteration did not converge in {max_sweeps} sweeps (span {sp:.3e})")
    return OptimisticSolution(
        policy=policy,
        gain=float(gain),
        bias=u,
        optimistic_transitions=q_best,
        optimistic_rewards=r_opt,
        sweeps=int(sweeps),
    )
