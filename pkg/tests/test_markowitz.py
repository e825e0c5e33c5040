import numpy as np
import pytest

from delaylq import (GAMMA_ZERO, DegenerateFrontierError, GridSpec,
                     InitialSegment, MarketParams, ModelParams, SimConfig,
                     TwoAssetParams, eta_star, frontier, inner_value,
                     pre_investment_gain, simulate, solve_single,
                     solve_two_asset, stats_of, two_asset_frontier, value_of)


@pytest.fixture(scope="module")
def market_grid():
    market = MarketParams(lam=0.5, sigma=1.0, d=0.5, T=1.5, x0=1.0, c=1.6)
    spec = GridSpec.build(d=0.5, T=1.5, m=32)
    grid, _ = solve_single(market.to_model(), spec)
    return market, grid


def _value_curve(grid, x0, gamma, c, etas):
    """Brute-force outer objective eta -> V0(c - eta) - eta^2, evaluated
    through the inner quadratic form assembled from the time-zero kernel
    rows (independent of the closed-form multiplier)."""
    spec = grid.spec
    g = gamma.on_grid(spec.m)
    w = np.full(spec.m + 1, spec.h)
    w[0] = w[-1] = spec.h / 2
    lin = float(w @ (grid.p12[0] * g))
    quad = float(w @ (grid.p2hat2_nodes()[0] * g * g)
                 + (w * g) @ grid.p22[0] @ (w * g))
    x = x0 - (c - etas)
    return grid.p11[0] * x * x + 2.0 * x * lin + quad - etas ** 2


class TestMarketParams:
    def test_derived_drift(self):
        market = MarketParams(lam=0.5, sigma=2.0, d=0.1, T=1.0, x0=1.0, c=1.2)
        assert market.b == 1.0
        model = market.to_model()
        assert isinstance(model, ModelParams)
        assert model.b == 1.0 and model.sigma == 2.0


class TestInnerValue:
    def test_target_at_initial_wealth(self, market_grid):
        _, grid = market_grid
        assert inner_value(grid, 1.0, GAMMA_ZERO, 1.0) == 0.0

    def test_zero_gamma_leading_term(self, market_grid):
        _, grid = market_grid
        v = inner_value(grid, 1.0, GAMMA_ZERO, 1.6)
        assert v == pytest.approx(grid.p11[0] * 0.36, rel=1e-14)

    def test_structural_identity_random_inputs(self, market_grid):
        _, grid = market_grid
        rng = np.random.default_rng(5)
        m = grid.spec.m
        for _ in range(25):
            x0 = rng.normal(scale=2.0)
            xi = rng.normal(scale=2.0)
            g = InitialSegment.tabulated(rng.normal(size=m + 1))
            assert inner_value(grid, x0, g, xi) == value_of(grid, x0 - xi, g)


class TestEtaStar:
    def test_trivial_at_target_equal_wealth(self, market_grid):
        _, grid = market_grid
        eta, xi = eta_star(grid, 1.0, 1.0, GAMMA_ZERO)
        assert eta == 0.0 and xi == 1.0

    def test_zero_gamma_closed_form(self, market_grid):
        _, grid = market_grid
        p110 = grid.p11[0]
        eta, xi = eta_star(grid, 1.0, 1.6, GAMMA_ZERO)
        assert eta == pytest.approx(p110 * (1.0 - 1.6) / (1.0 - p110), rel=1e-13)
        assert xi == 1.6 - eta

    def test_stationary_point(self, market_grid):
        _, grid = market_grid
        g = InitialSegment.const(0.3)
        eta, _ = eta_star(grid, 1.0, 1.6, g)
        step = 1e-5
        etas = np.array([eta - step, eta, eta + step])
        vals = _value_curve(grid, 1.0, g, 1.6, etas)
        deriv = (vals[2] - vals[0]) / (2.0 * step)
        assert abs(deriv) <= 1e-8

    def test_matches_grid_search(self, market_grid):
        _, grid = market_grid
        rng = np.random.default_rng(44)
        for _ in range(5):
            x0 = rng.uniform(0.5, 1.5)
            c = rng.uniform(0.8, 2.2)
            g = InitialSegment.tabulated(
                rng.uniform(-0.5, 0.5, size=grid.spec.m + 1))
            eta, _ = eta_star(grid, x0, c, g)
            etas = np.arange(-8.0, 8.0, 1e-3)
            best = etas[np.argmax(_value_curve(grid, x0, g, c, etas))]
            assert abs(eta - best) <= 2e-3

    def test_degenerate_frontier_rejected(self, market_grid):
        import copy
        _, grid = market_grid
        broken = copy.deepcopy(grid)
        broken.p11[0] = 1.0
        with pytest.raises(DegenerateFrontierError):
            eta_star(broken, 1.0, 1.6, GAMMA_ZERO)


class TestFrontier:
    def test_zero_risk_point(self, market_grid):
        _, grid = market_grid
        [pt] = frontier(grid, 1.0, GAMMA_ZERO, [1.0])
        assert pt.variance == 0.0
        assert pt.eta_star == 0.0

    def test_parabola_symmetry(self, market_grid):
        _, grid = market_grid
        g = InitialSegment.const(0.3)
        K = pre_investment_gain(grid, g)
        center = 1.0 + K
        offs = np.array([0.2, 0.5, 0.9])
        lo = frontier(grid, 1.0, g, center - offs)
        hi = frontier(grid, 1.0, g, center + offs)
        for a, b in zip(lo, hi):
            assert a.variance == pytest.approx(b.variance, rel=1e-12)

    def test_zero_gamma_frontier_formula(self, market_grid):
        _, grid = market_grid
        p110 = grid.p11[0]
        pts = frontier(grid, 1.0, GAMMA_ZERO, [1.2, 1.6])
        for pt in pts:
            expect = p110 / (1.0 - p110) * (1.0 - pt.c) ** 2
            assert pt.variance == pytest.approx(expect, rel=1e-13)

    def test_variance_nondecreasing_in_delay(self):
        # fixed c != x0, gamma = 0, growing execution delay
        variances = []
        for d in (0.1, 0.3, 0.5):
            market = MarketParams(lam=0.5, sigma=1.0, d=d, T=1.5, x0=1.0,
                                  c=1.6)
            spec = GridSpec.build(d=d, T=1.5, m=32)
            grid, _ = solve_single(market.to_model(), spec)
            [pt] = frontier(grid, 1.0, GAMMA_ZERO, [1.6])
            variances.append(pt.variance)
        assert variances[0] <= variances[1] <= variances[2]

    def test_frontier_variance_matches_monte_carlo(self, market_grid):
        market, grid = market_grid
        eta, xi = eta_star(grid, market.x0, market.c, GAMMA_ZERO)
        [pt] = frontier(grid, market.x0, GAMMA_ZERO, [market.c])
        cfg = SimConfig(n_paths=20000, master_seed=303, x0=market.x0)
        bundle = simulate(grid, GAMMA_ZERO, cfg, xi=xi)
        xt = bundle.terminal()
        st = stats_of((xt - np.mean(xt)) ** 2)
        # sample variance against the closed form, 3 standard errors
        assert abs(st.mean - pt.variance) <= 3.0 * st.std_error


class TestTwoAssetFrontier:
    def test_reduces_to_single(self):
        spec = GridSpec.build(d=0.5, T=1.5, m=16)
        two = TwoAssetParams(sigma1=1.0, sigma2=1.0, lambda1=0.0, lambda2=0.5,
                             rho=0.0, d=0.5, T=1.5)
        g2, _ = solve_two_asset(two, spec)
        g1, _ = solve_single(ModelParams(b=0.5, sigma=1.0, d=0.5, T=1.5), spec)
        c_list = [1.2, 1.6, 2.0]
        p2 = two_asset_frontier(g2, 1.0, GAMMA_ZERO, c_list)
        p1 = frontier(g1, 1.0, GAMMA_ZERO, c_list)
        for a, b in zip(p1, p2):
            assert a.variance == pytest.approx(b.variance, abs=1e-10)
            assert a.eta_star == pytest.approx(b.eta_star, abs=1e-10)

    def test_zero_risk_point(self):
        spec = GridSpec.build(d=0.5, T=1.5, m=16)
        two = TwoAssetParams(sigma1=1.0, sigma2=1.0, lambda1=0.5, lambda2=0.5,
                             rho=0.3, d=0.5, T=1.5)
        g2, _ = solve_two_asset(two, spec)
        [pt] = two_asset_frontier(g2, 1.0, GAMMA_ZERO, [1.0])
        assert pt.variance == 0.0

    def test_extra_instrument_cannot_hurt(self):
        # making the undelayed asset available lowers the frontier
        spec = GridSpec.build(d=0.5, T=1.5, m=16)
        variances = []
        for lam1 in (0.0, 0.5):
            two = TwoAssetParams(sigma1=1.0, sigma2=1.0, lambda1=lam1,
                                 lambda2=0.5, rho=0.0, d=0.5, T=1.5)
            g2, _ = solve_two_asset(two, spec)
            [pt] = two_asset_frontier(g2, 1.0, GAMMA_ZERO, [1.6])
            variances.append(pt.variance)
        assert variances[1] <= variances[0]
