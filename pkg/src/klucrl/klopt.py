"""Linear maximization of ``V @ q`` over KL and L1 neighbourhoods of a probability vector.

The KL problem is solved through the Lagrangian closed form: on the support of
``p`` the maximizer is ``q_i = (1 - r) * qt_i / sum(qt)`` with ``qt_i = p_i / (nu - V_i)``,
where ``nu`` is either the value of the best unobserved coordinate or the root of

    f(nu) = sum_i p_i log(nu - V_i) + log(sum_i p_i / (nu - V_i)) = eps.

Internally ``nu`` is carried as ``delta = nu - max_{p_i > 0} V_i`` so that roots
lying extremely close to the domain boundary stay representable.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "Branch",
    "DomainError",
    "KlMaxSolution",
    "NoRootError",
    "f_eval",
    "f_prime",
    "kl_divergence",
    "max_kl",
    "max_l1",
    "newton_initial_guess",
    "newton_solve",
]

ROOT_TOL = 1e-10
_MAX_NEWTON = 500
_TINY = 1e-300


class DomainError(ValueError):
    """``nu`` lies at or below the largest value on the support of ``p``."""


class NoRootError(ValueError):
    """``f`` is identically zero, so ``f(nu) = eps`` has no solution."""


class Branch(str, enum.Enum):
    INTERIOR_BEST_STATE = "interior-best-state"
    NEWTON_ROOT = "newton-root"
    DEGENERATE_RETURN_P = "degenerate-return-p"


_BRANCHES = (Branch.INTERIOR_BEST_STATE, Branch.NEWTON_ROOT, Branch.DEGENERATE_RETURN_P)
_B_INTERIOR, _B_NEWTON, _B_DEGENERATE = 0, 1, 2


@dataclass(frozen=True)
class KlMaxSolution:
    """Maximizer of ``V @ q`` subject to ``KL(p, q) <= eps``.

    ``nu`` is ``None`` on the degenerate branch; ``r`` is the mass moved to
    coordinates outside the support of ``p``.
    """

    q: np.ndarray
    nu: float | None
    r: float
    branch: Branch


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _log1p_minus_id(u):
    # log(1 + u) - u without cancellation for small u
    if abs(u) < 1e-3:
        u2 = u * u
        return u2 * (-0.5 + u * (1.0 / 3 + u * (-0.25 + u * (0.2 + u * (-1.0 / 6 + u / 7)))))
    return math.log1p(u) - u


@njit(cache=True)
def _f_far(p, g, delta):
    # Far from the boundary f is O(spread^2 / delta^2) while its two terms are O(log delta);
    # expanding around the p-mean c of d = g + delta, d_i = c (1 + u_i), gives
    # f = sum w (log1p(u) - u) + s + log1p(B - s), s = sum w u (zero up to rounding),
    # B = sum w u^2 / (1 + u). Returns nan when some |u| > 1/2 (use the direct form).
    n = p.shape[0]
    tot = 0.0
    gbar = 0.0
    for i in range(n):
        if p[i] > 0.0:
            tot += p[i]
            gbar += p[i] * g[i]
    gbar /= tot
    c = gbar + delta
    a = 0.0
    s = 0.0
    b = 0.0
    for i in range(n):
        if p[i] > 0.0:
            u = (g[i] - gbar) / c
            if abs(u) > 0.5:
                return np.nan
            w = p[i] / tot
            a += w * _log1p_minus_id(u)
            s += w * u
            b += w * u * u / (1.0 + u)
    return a + s + math.log1p(b - s)


@njit(cache=True)
def _f_delta(p, g, delta):
    # f at nu = vmax_support + delta, with g_i = vmax_support - V_i >= 0 on the support.
    far = _f_far(p, g, delta)
    if not np.isnan(far):
        return far
    # near the boundary: log-sum-exp with max subtraction keeps sum p_i/d_i finite
    n = p.shape[0]
    lin = 0.0
    amax = -np.inf
    for i in range(n):
        if p[i] > 0.0:
            ld = math.log(g[i] + delta)
            lin += p[i] * ld
            a = math.log(p[i]) - ld
            if a > amax:
                amax = a
    acc = 0.0
    for i in range(n):
        if p[i] > 0.0:
            acc += math.exp(math.log(p[i]) - math.log(g[i] + delta) - amax)
    return lin + amax + math.log(acc)


@njit(cache=True)
def _fprime_scaled(p, g, delta):
    # delta * f'(nu). With e_i = delta / d_i in (0, 1] nothing overflows:
    # f' = A - B/A = -sum p (1/d - A)^2 / A.
    n = p.shape[0]
    a = 0.0
    for i in range(n):
        if p[i] > 0.0:
            a += p[i] * (delta / (g[i] + delta))
    v = 0.0
    for i in range(n):
        if p[i] > 0.0:
            e = delta / (g[i] + delta) - a
            v += p[i] * e * e
    return -v / a


@njit(cache=True)
def _support_stats(p, V):
    vmax_s = -np.inf
    vmin_s = np.inf
    vmax = -np.inf
    for i in range(p.shape[0]):
        if V[i] > vmax:
            vmax = V[i]
        if p[i] > 0.0:
            if V[i] > vmax_s:
                vmax_s = V[i]
            if V[i] < vmin_s:
                vmin_s = V[i]
    return vmax_s, vmin_s, vmax


@njit(cache=True)
def _initial_delta(p, V, vmax_s, eps):
    # Second-order expansion of f around the p-mean of V, plus the third-moment
    # correction: f(nu) ~ sigma / (2 (nu - m - 2 mu3 / (3 sigma))^2).
    m = 0.0
    for i in range(p.shape[0]):
        if p[i] > 0.0:
            m += p[i] * V[i]
    s2 = 0.0
    s3 = 0.0
    for i in range(p.shape[0]):
        if p[i] > 0.0:
            w = V[i] - m
            s2 += p[i] * w * w
            s3 += p[i] * w * w * w
    if s2 <= 0.0:
        return np.nan
    # split the square root so subnormal eps does not overflow
    return m + 2.0 * s3 / (3.0 * s2) + math.sqrt(0.5 * s2) / math.sqrt(eps) - vmax_s


@njit(cache=True)
def _solve_delta(p, g, V, vmax_s, eps, tol):
    """Safeguarded Newton for f(vmax_s + delta) = eps; returns (delta, |f - eps|)."""
    # relative tolerance for tiny eps: an absolute one would accept almost any point
    tol = min(tol, 1e-9 * eps)
    d0 = _initial_delta(p, V, vmax_s, eps)
    scale = 0.0
    for i in range(p.shape[0]):
        if p[i] > 0.0 and g[i] > scale:
            scale = g[i]
    # bracket: f(lo) > eps >= f(hi); lo = 0 stands for the open boundary
    hi = d0 if d0 > 0.0 and d0 < np.inf else scale
    while _f_delta(p, g, hi) >= eps and hi < 1e300:
        hi *= 2.0
    lo = 0.0
    x = d0 if d0 > 0.0 and d0 < hi else 0.5 * hi
    for _ in range(_MAX_NEWTON):
        fx = _f_delta(p, g, x)
        err = abs(fx - eps)
        if err <= tol:
            return x, err
        if fx > eps:
            lo = x
        else:
            hi = x
        if hi - lo <= 4e-16 * hi or hi < _TINY:
            break
        fp = _fprime_scaled(p, g, x)
        # fp underflows to zero when f itself is subnormal; fall back to bisection
        xn = x - (fx - eps) / fp * x if fp != 0.0 else -1.0
        if not (xn > lo and xn < hi):
            if lo == 0.0:
                xn = hi * 1e-3
            elif hi > 4.0 * lo:
                xn = math.sqrt(lo) * math.sqrt(hi)
            else:
                xn = 0.5 * (lo + hi)
        x = xn
    # hi keeps f(hi) <= eps, so the returned point is always feasible
    return hi, abs(_f_delta(p, g, hi) - eps)


@njit(cache=True)
def _closed_form(p, g, delta, r, q):
    n = p.shape[0]
    tot = 0.0
    for i in range(n):
        if p[i] > 0.0:
            q[i] = p[i] * (delta / (g[i] + delta))
            tot += q[i]
    for i in range(n):
        if p[i] > 0.0:
            q[i] = (1.0 - r) * q[i] / tot


@njit(cache=True)
def _max_kl_kernel(p, V, eps, q, tol):
    """Fill ``q``; return (delta, r, branch code, vmax_support)."""
    n = p.shape[0]
    vmax_s, vmin_s, vmax = _support_stats(p, V)
    for i in range(n):
        q[i] = 0.0
    const_support = vmin_s == vmax_s
    if eps <= 0.0 or (const_support and vmax_s == vmax):
        for i in range(n):
            q[i] = p[i]
        return np.nan, 0.0, _B_DEGENERATE, vmax_s
    g = np.empty(n)
    n_star = 0
    for i in range(n):
        g[i] = vmax_s - V[i]
        if p[i] == 0.0 and V[i] == vmax:
            n_star += 1
    if n_star > 0 and vmax > vmax_s:
        dstar = vmax - vmax_s
        fstar = 0.0 if const_support else _f_delta(p, g, dstar)
        if fstar < eps:
            r = -math.expm1(fstar - eps)
            _closed_form(p, g, dstar, r, q)
            share = r / n_star
            for i in range(n):
                if p[i] == 0.0 and V[i] == vmax:
                    q[i] = share
            return dstar, r, _B_INTERIOR, vmax_s
    if const_support:
        for i in range(n):
            q[i] = p[i]
        return np.nan, 0.0, _B_DEGENERATE, vmax_s
    delta, _ = _solve_delta(p, g, V, vmax_s, eps, tol)
    _closed_form(p, g, delta, 0.0, q)
    return delta, 0.0, _B_NEWTON, vmax_s


@njit(cache=True)
def _max_l1_kernel(p, V, eps1, order, q):
    # order: indices sorted by increasing V, ties by lowest index
    n = p.shape[0]
    for i in range(n):
        q[i] = p[i]
    best = order[n - 1]
    # lowest index among the maximal values
    for k in range(n - 1, -1, -1):
        if V[order[k]] == V[best]:
            if order[k] < best:
                best = order[k]
        else:
            break
    q[best] = min(1.0, p[best] + 0.5 * eps1)
    excess = q[best] - p[best]
    for k in range(n):
        if excess <= 0.0:
            break
        i = order[k]
        if i == best:
            continue
        take = min(q[i], excess)
        q[i] -= take
        excess -= take
    return best


# ---------------------------------------------------------------------------
# public API


def _as_pair(p, V) -> tuple[np.ndarray, np.ndarray]:
    p = np.ascontiguousarray(p, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    if p.ndim != 1 or p.shape != V.shape:
        raise ValueError(f"p and V must be 1-d of equal length, got {p.shape} and {V.shape}")
    return p, V


def kl_divergence(p, q) -> float:
    """``sum_i p_i log(p_i / q_i)`` with ``0 log 0 = 0``; ``inf`` when ``q`` misses mass of ``p``."""
    p, q = _as_pair(p, q)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def f_eval(p, V, nu: float) -> float:
    """Evaluate the root function whose level set ``f(nu) = eps`` fixes the KL maximizer."""
    p, V = _as_pair(p, V)
    vmax_s = float(V[p > 0].max())
    if not nu > vmax_s:
        raise DomainError(f"nu={nu!r} must exceed max support value {vmax_s!r}")
    return float(_f_delta(p, vmax_s - V, nu - vmax_s))


def f_prime(p, V, nu: float) -> float:
    p, V = _as_pair(p, V)
    vmax_s = float(V[p > 0].max())
    if not nu > vmax_s:
        raise DomainError(f"nu={nu!r} must exceed max support value {vmax_s!r}")
    delta = nu - vmax_s
    return float(_fprime_scaled(p, vmax_s - V, delta) / delta)


def newton_initial_guess(p, V, epsilon: float) -> float:
    """Large-``nu`` asymptotic starting point for the Newton iteration.

    Uses ``f(nu) ~ sigma / (2 (nu - c)^2)`` with ``sigma`` the p-variance of ``V``
    and ``c`` its p-mean shifted by ``2 mu3 / (3 sigma)`` (third central moment).
    """
    p, V = _as_pair(p, V)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    vmax_s = float(V[p > 0].max())
    return float(_initial_delta(p, V, vmax_s, float(epsilon)) + vmax_s)


def newton_solve(p, V, epsilon: float, tol: float = ROOT_TOL) -> float:
    """Return ``nu > max_{p_i>0} V_i`` with ``|f(nu) - epsilon| <= tol``.

    The tolerance holds for the offset ``nu - max V`` the solver iterates on;
    when that offset is below the float resolution of ``max V`` the returned
    ``nu`` is the nearest representable point inside the domain.
    Raises NoRootError when ``V`` is constant on the support of ``p``.
    """
    p, V = _as_pair(p, V)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    vmax_s, vmin_s, _ = _support_stats(p, V)
    if vmin_s == vmax_s:
        raise NoRootError("V is constant on the support of p; f is identically zero")
    delta, _ = _solve_delta(p, vmax_s - V, V, vmax_s, float(epsilon), tol)
    # roots closer to the boundary than one ulp of vmax_s are not representable as nu
    return float(max(vmax_s + delta, np.nextafter(vmax_s, np.inf)))


def max_kl(p, V, epsilon: float) -> KlMaxSolution:
    """Maximize ``V @ q`` over the probability simplex subject to ``KL(p, q) <= epsilon``.

    >>> sol = max_kl([1.0, 0.0], [0.0, 1.0], 0.05)
    >>> sol.branch.value, round(float(sol.q[1]), 5)
    ('interior-best-state', 0.04877)
    """
    p, V = _as_pair(p, V)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    q = np.empty_like(p)
    delta, r, code, vmax_s = _max_kl_kernel(p, V, float(epsilon), q, ROOT_TOL)
    branch = _BRANCHES[code]
    if branch is Branch.DEGENERATE_RETURN_P:
        return KlMaxSolution(q=q, nu=None, r=0.0, branch=branch)
    nu = float(V.max()) if branch is Branch.INTERIOR_BEST_STATE else float(vmax_s + delta)
    return KlMaxSolution(q=q, nu=nu, r=float(r), branch=branch)


def max_l1(p, V, epsilon1: float) -> np.ndarray:
    """Maximize ``V @ q`` over the simplex subject to ``||p - q||_1 <= epsilon1``."""
    p, V = _as_pair(p, V)
    if epsilon1 < 0:
        raise ValueError("epsilon1 must be nonnegative")
    q = np.empty_like(p)
    _max_l1_kernel(p, V, float(epsilon1), np.argsort(V, kind="stable"), q)
    return q
