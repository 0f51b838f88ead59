import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from klucrl.klopt import (
    Branch,
    DomainError,
    NoRootError,
    f_eval,
    f_prime,
    kl_divergence,
    max_kl,
    max_l1,
    newton_initial_guess,
    newton_solve,
)
from klucrl.klopt import _TINY, _f_delta, _solve_delta

from .oracles import f_direct, grid_max, random_instance


def root_representable(p, V, eps):
    # f blows up at the boundary only like -(1 - p_max) log(delta); for a near point
    # mass the root can sit below the smallest delta a double can carry
    vmax = V[p > 0].max()
    return _f_delta(p, vmax - V, _TINY) >= eps


class TestKlDivergence:
    def test_identical(self):
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_point_mass(self):
        assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)

    def test_worked_example(self):
        assert kl_divergence([0.3, 0.7, 0], [0.16710, 0.77978, 0.05312]) == pytest.approx(0.1, abs=1e-4)

    def test_missing_support_is_infinite(self):
        assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf

    def test_zero_terms_ignored(self):
        assert kl_divergence([1.0, 0.0], [1.0, 0.0]) == 0.0


class TestF:
    def test_hand_value(self):
        expected = 0.5 * math.log(2) + math.log(0.75)
        assert f_eval([0.5, 0.5], [0, 1], 2.0) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.0589, abs=1e-4)

    @pytest.mark.parametrize("nu", [1.5, 3.0, 100.0])
    def test_point_mass_is_zero(self, nu):
        assert f_eval([0.0, 1.0, 0.0], [3.0, 1.0, 7.0], nu) == pytest.approx(0.0, abs=1e-15)

    def test_asymptotic_variance(self):
        # f(nu) * 2 nu^2 -> Var_p(V) = 0.25
        vals = [f_eval([0.5, 0.5], [0, 1], nu) * 2 * nu**2 for nu in (1e2, 1e3, 1e4)]
        assert abs(vals[-1] - 0.25) < abs(vals[0] - 0.25)
        assert vals[-1] == pytest.approx(0.25, rel=1e-3)

    @pytest.mark.parametrize("nu", [1.0, 0.5])
    def test_domain_error(self, nu):
        with pytest.raises(DomainError):
            f_eval([0.5, 0.5], [0, 1], nu)

    def test_matches_textbook_formula(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p, V = random_instance(rng, rng.integers(2, 8))
            nu = V[p > 0].max() + 10 ** rng.uniform(-3, 2)
            assert f_eval(p, V, nu) == pytest.approx(f_direct(p, V, nu), abs=1e-12)

    def test_derivative_matches_finite_difference(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            p, V = random_instance(rng, 4, zero_prob=0)
            nu = V.max() + rng.uniform(0.1, 5)
            h = 1e-6
            fd = (f_eval(p, V, nu + h) - f_eval(p, V, nu - h)) / (2 * h)
            assert f_prime(p, V, nu) == pytest.approx(fd, rel=1e-5, abs=1e-9)


class TestNewton:
    def test_round_trip(self):
        eps = f_eval([0.5, 0.5], [0, 1], 2.0)
        assert newton_solve([0.5, 0.5], [0, 1], eps) == pytest.approx(2.0, abs=1e-8)

    def test_small_epsilon_near_initial_guess(self):
        nu0 = newton_initial_guess([0.5, 0.5], [0, 1], 1e-3)
        assert abs(f_eval([0.5, 0.5], [0, 1], nu0) - 1e-3) / 1e-3 <= 0.05
        nu = newton_solve([0.5, 0.5], [0, 1], 1e-3)
        assert nu == pytest.approx(nu0, rel=0.01)

    def test_root_beyond_three(self):
        assert f_eval([0.3, 0.7], [1, 2], 3.0) == pytest.approx(0.04542, abs=1e-5)
        nu = newton_solve([0.3, 0.7], [1, 2], 0.04)
        assert nu > 3
        assert f_eval([0.3, 0.7], [1, 2], nu) == pytest.approx(0.04, abs=1e-10)

    @pytest.mark.parametrize("p,V", [([0.5, 0.5], [2.0, 2.0]), ([1.0, 0.0], [0.0, 1.0])])
    def test_no_root(self, p, V):
        with pytest.raises(NoRootError):
            newton_solve(p, V, 0.1)

    def test_root_close_to_boundary(self):
        # large radius pushes the root against max V on the support
        p, V = [0.5, 0.5], [0.0, 1.0]
        nu = newton_solve(p, V, 20.0)
        assert 1.0 < nu < 1.0 + 1e-15 or nu == pytest.approx(1.0)
        sol = max_kl(p, V, 20.0)
        assert kl_divergence(p, sol.q) == pytest.approx(20.0, abs=1e-8)

    @settings(max_examples=200, deadline=None)
    @given(
        st.integers(min_value=0, max_value=2**32 - 1),
        st.integers(min_value=2, max_value=8),
        st.floats(min_value=1e-6, max_value=5.0),
    )
    def test_round_trip_property(self, seed, dim, eps):
        rng = np.random.default_rng(seed)
        p, V = random_instance(rng, dim)
        if np.ptp(V[p > 0]) == 0:
            return
        nu = newton_solve(p, V, eps)
        vmax = V[p > 0].max()
        assert nu > vmax
        delta, err = _solve_delta(p, vmax - V, V, vmax, eps, 1e-10)
        if not root_representable(p, V, eps):
            # best feasible point: f stays below eps
            assert _f_delta(p, vmax - V, delta) <= eps
            return
        assert abs(_f_delta(p, vmax - V, delta) - eps) <= 1e-10
        if delta > 1e-6 * max(1.0, abs(vmax)):
            assert abs(f_eval(p, V, nu) - eps) <= 1e-10


class TestMaxKl:
    @pytest.mark.parametrize("eps", [5e-324, 1e-310, 1e-200])
    def test_subnormal_radius(self, eps):
        p = np.array([0.2, 0.3, 0.5])
        sol = max_kl(p, [0.1, 1.0, 0.7], eps)
        assert np.all(np.isfinite(sol.q))
        np.testing.assert_allclose(sol.q, p, atol=1e-12)

    def test_unrepresentable_root_stays_feasible(self):
        # root lies near delta = exp(-834): the solver returns the closest feasible point
        p = np.array([0.99640969, 0.00359031])
        V = np.array([19.496105237626523, 4.19126485])
        assert not root_representable(p, V, 3.0)
        sol = max_kl(p, V, 3.0)
        assert kl_divergence(p, sol.q) <= 3.0
        assert sol.q[1] > 0 and V @ sol.q > V @ p

    def test_constant_value(self):
        sol = max_kl([0.2, 0.3, 0.5], [1.0, 1.0, 1.0], 0.3)
        assert sol.branch is Branch.DEGENERATE_RETURN_P
        np.testing.assert_array_equal(sol.q, [0.2, 0.3, 0.5])

    def test_worked_example(self):
        sol = max_kl([0.3, 0.7, 0], [1, 2, 3], 0.1)
        np.testing.assert_allclose(sol.q, [0.16710, 0.77978, 0.05312], atol=1e-4)
        assert sol.nu == 3.0
        assert sol.r == pytest.approx(0.05312, abs=1e-4)
        assert sol.branch is Branch.INTERIOR_BEST_STATE
        assert kl_divergence([0.3, 0.7, 0], sol.q) == pytest.approx(0.1, abs=1e-12)

    def test_worked_example_against_grid(self):
        sol = max_kl([0.3, 0.7, 0], [1, 2, 3], 0.1)
        best = grid_max([0.3, 0.7, 0], [1, 2, 3], 0.1)
        assert sol.q @ [1, 2, 3] >= best - 1e-3 * 3
        assert sol.q @ [1, 2, 3] <= best + 1e-2

    def test_below_threshold(self):
        sol = max_kl([0.3, 0.7, 0], [1, 2, 3], 0.04)
        assert sol.q[2] == 0.0
        assert sol.branch is Branch.NEWTON_ROOT
        assert sol.nu == pytest.approx(newton_solve([0.3, 0.7], [1, 2], 0.04))
        assert kl_divergence([0.3, 0.7, 0], sol.q) == pytest.approx(0.04, abs=1e-9)

    def test_point_mass(self):
        sol = max_kl([1, 0], [0, 1], 0.05)
        np.testing.assert_allclose(sol.q, [math.exp(-0.05), 1 - math.exp(-0.05)], atol=1e-12)

    def test_zero_radius(self):
        sol = max_kl([0.3, 0.7, 0.0], [1, 2, 3], 0.0)
        np.testing.assert_array_equal(sol.q, [0.3, 0.7, 0.0])

    def test_tied_unobserved_best_states_share_mass(self):
        sol = max_kl([0.5, 0.5, 0, 0], [0, 1, 2, 2], 0.2)
        assert sol.q[2] == sol.q[3] > 0
        assert sol.q[2] + sol.q[3] == pytest.approx(sol.r)

    def test_point_mass_on_best_state(self):
        sol = max_kl([0, 1, 0], [0, 5, 1], 0.3)
        assert sol.branch is Branch.DEGENERATE_RETURN_P
        np.testing.assert_array_equal(sol.q, [0, 1, 0])

    def test_rejects_negative_radius(self):
        with pytest.raises(ValueError):
            max_kl([0.5, 0.5], [0, 1], -0.1)

    def test_continuity_in_value(self):
        p = np.array([0.15, 0.2, 0.65])
        base = np.array([0.0, 0.05, 1.0])
        q0 = max_kl(p, base, 0.02).q
        ratios = []
        for eta in np.geomspace(1e-8, 1e-4, 9):
            q = max_kl(p, base + eta * np.array([0.0, -1.0, 0.0]), 0.02).q
            ratios.append(np.abs(q - q0).sum() / eta)
        assert max(ratios) < 10 * min(ratios) + 1e-6
        assert max(ratios) < 100


class TestMaxL1:
    def test_worked_example(self):
        np.testing.assert_allclose(max_l1([0.15, 0.2, 0.65], [0, 0.05, 1], 0.2), [0.05, 0.2, 0.75], atol=1e-15)

    def test_zero_radius(self):
        np.testing.assert_array_equal(max_l1([0.15, 0.2, 0.65], [0, 0.05, 1], 0.0), [0.15, 0.2, 0.65])

    def test_unobserved_best_state_gets_mass(self):
        eps1 = math.sqrt(2 * 0.05)
        q = max_l1([0, 0.4, 0.6], [-1, -2, -5], eps1)
        assert q[0] == pytest.approx(eps1 / 2)
        # mass is removed from the worst state first
        np.testing.assert_allclose(q, [eps1 / 2, 0.4, 0.6 - eps1 / 2], atol=1e-15)

    def test_cap_at_one(self):
        np.testing.assert_allclose(max_l1([0.3, 0.7], [1, 0], 5.0), [1.0, 0.0])

    def test_zeroes_observed_transition(self):
        q = max_l1([0.05, 0.35, 0.6], [-1, 0.05, 0], math.sqrt(2 * 0.02))
        assert q[0] == 0.0

    def test_ties_favour_lowest_index(self):
        q = max_l1([0.25, 0.25, 0.5], [1.0, 1.0, 0.0], 0.2)
        np.testing.assert_allclose(q, [0.35, 0.25, 0.4])

    def test_brute_force_dim3(self):
        # vertices of the L1 ball intersected with the simplex: optimum is among grid points
        from .oracles import simplex_grid

        rng = np.random.default_rng(11)
        Q = simplex_grid(3, 1e-3)
        for _ in range(30):
            p = rng.dirichlet(np.ones(3))
            V = rng.random(3)
            eps1 = rng.uniform(0, 1)
            q = max_l1(p, V, eps1)
            assert abs(q - p).sum() <= eps1 + 1e-12
            feas = np.abs(Q - p).sum(axis=1) <= eps1
            assert q @ V >= (Q[feas] @ V).max() - 2e-3


@settings(max_examples=300, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**32 - 1),
    st.integers(min_value=2, max_value=8),
    st.floats(min_value=0.0, max_value=3.0),
)
def test_max_kl_invariants(seed, dim, eps):
    rng = np.random.default_rng(seed)
    p, V = random_instance(rng, dim)
    sol = max_kl(p, V, eps)
    q = sol.q
    assert np.all(q >= 0)
    assert q.sum() == pytest.approx(1.0, abs=1e-9)
    kl = kl_divergence(p, q)
    assert kl <= eps + 1e-9
    assert V @ q >= V @ p - 1e-12
    # observed transitions stay possible
    assert np.all(q[p > 0] > 0)
    # Pinsker against the radius (the computed KL is rounding noise for eps near 1e-16)
    assert np.abs(p - q).sum() <= math.sqrt(2 * eps) + 1e-12
    support_or_best = (p > 0) | (V == V.max())
    if sol.branch is Branch.NEWTON_ROOT and not root_representable(p, V, eps):
        return
    if eps > 0 and np.ptp(V[support_or_best]) > 0:
        assert kl == pytest.approx(eps, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.floats(min_value=1e-4, max_value=2.0))
def test_unlikely_transition_cutoff(seed, eps):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(3, 7))
    p, V = random_instance(rng, dim)
    i_max = int(np.argmax(V))
    p[i_max] = 0.0
    if p.sum() == 0:
        return
    p /= p.sum()
    sol = max_kl(p, V, eps)
    others_max = V[p > 0].max()
    if V[i_max] == others_max:
        return
    threshold = f_eval(p, V, V[i_max])
    assert (sol.q[i_max] > 0) == (threshold < eps)
    assert max_l1(p, V, math.sqrt(2 * eps))[i_max] > 0


def test_f_convex_decreasing_positive():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p, V = random_instance(rng, int(rng.integers(2, 8)))
        if np.ptp(V[p > 0]) == 0:
            continue
        lo = V[p > 0].max()
        nus = lo + np.geomspace(1e-3, 1e3, 200)
        f = np.array([f_eval(p, V, nu) for nu in nus])
        assert np.all(f > 0)
        assert np.all(np.diff(f) <= 1e-12)
        # convexity on a uniform sub-grid
        grid = np.linspace(lo + 0.01, lo + 10, 200)
        fg = np.array([f_eval(p, V, nu) for nu in grid])
        assert np.all(fg[:-2] - 2 * fg[1:-1] + fg[2:] >= -1e-8)
