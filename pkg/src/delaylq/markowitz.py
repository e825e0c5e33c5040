"""Mean-variance portfolio selection with execution delay.

The market has a riskless asset at zero rate and a risky asset with risk
premium lam and volatility sigma, so wealth follows the delayed LQ dynamics
with drift coefficient b = sigma * lam.  The constrained problem
min Var(X_T) s.t. E[X_T] = c splits into an inner quadratic tracking
problem at target xi = c - eta and a strictly concave outer maximization
over the multiplier eta, solved in closed form:

    eta* = (K(gamma) + p11(0) (x0 - c)) / (1 - p11(0)),
    K(gamma) = int_{-d}^0 gamma_s p12(0, s) ds,

    Var(X_T) = p11(0)/(1 - p11(0)) (x0 - c + K(gamma))^2
               + int p2hat2(0,s) gamma_s^2 ds + int int p22(0,s,r) g g.

Concavity requires p11(0) < 1 strictly; grids violating that report a
degenerate frontier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateFrontierError, ParameterError, StateError
from .grid import KernelGrid
from .model import ModelParams
from .sim import InitialSegment, _trapz_weights, value_of


@dataclass(frozen=True)
class MarketParams:
    """Risky-asset market and mean-variance targets.

    lam    risk premium (the drift is sigma*lam)
    sigma  volatility, > 0
    d, T   delay and horizon
    x0     initial wealth
    c      target mean terminal wealth
    """

    lam: float
    sigma: float
    d: float
    T: float
    x0: float
    c: float

    def __post_init__(self):
        for name in ("lam", "sigma", "d", "T", "x0", "c"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.sigma <= 0.0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")

    @property
    def b(self) -> float:
        return self.sigma * self.lam

    def to_model(self) -> ModelParams:
        return ModelParams(b=self.b, sigma=self.sigma, d=self.d, T=self.T)


@dataclass(frozen=True)
class FrontierPoint:
    """One point of the mean-variance frontier."""

    c: float
    eta_star: float
    xi_star: float
    variance: float


def _require_solved(grid: KernelGrid):
    if not grid.fully_solved:
        raise StateError("markowitz operations require a fully solved grid")


def inner_value(grid: KernelGrid, x0: float, gamma: InitialSegment,
                xi: float) -> float:
    """Value of the inner tracking problem min E[(X_T - xi)^2].

    Identical quadrature to value_of at the shifted state x0 - xi, which
    makes the structural identity inner_value(x0, g, xi) == value_of(x0-xi,
    g) exact.
    """
    return value_of(grid, x0 - xi, gamma)


def pre_investment_gain(grid: KernelGrid, gamma: InitialSegment) -> float:
    """K(gamma) = int_{-d}^0 gamma_s p12(0, s) ds by trapezoid."""
    _require_solved(grid)
    spec = grid.spec
    g = gamma.on_grid(spec.m)
    w = _trapz_weights(spec.m, spec.h)
    return float(w @ (grid.p12[0] * g))


def eta_star(grid: KernelGrid, x0: float, c: float,
             gamma: InitialSegment) -> tuple[float, float]:
    """Closed-form optimal multiplier (eta*, xi* = c - eta*)."""
    _require_solved(grid)
    p110 = float(grid.p11[0])
    if p110 >= 1.0 - 1e-12:
        raise DegenerateFrontierError(
            f"p11(0) = {p110}; outer problem is not strictly concave")
    K = pre_investment_gain(grid, gamma)
    eta = (K + p110 * (x0 - c)) / (1.0 - p110)
    return eta, c - eta


def frontier(grid: KernelGrid, x0: float, gamma: InitialSegment,
             c_list: Sequence[float]) -> list[FrontierPoint]:
    """Mean-variance frontier at the given target means (closed form)."""
    _require_solved(grid)
    spec = grid.spec
    p110 = float(grid.p11[0])
    if p110 >= 1.0 - 1e-12:
        raise DegenerateFrontierError(
            f"p11(0) = {p110}; outer problem is not strictly concave")
    K = pre_investment_gain(grid, gamma)
    g = gamma.on_grid(spec.m)
    w = _trapz_weights(spec.m, spec.h)
    wg = w * g
    base = float(w @ (grid.p2hat2_nodes()[0] * g * g) + wg @ grid.p22[0] @ wg)
    ratio = p110 / (1.0 - p110)
    points = []
    for c in c_list:
        eta = (K + p110 * (x0 - c)) / (1.0 - p110)
        var = ratio * (x0 - c + K) ** 2 + base
        points.append(FrontierPoint(c=float(c), eta_star=eta,
                                    xi_star=float(c) - eta, variance=var))
    return points


def two_asset_frontier(grid2: KernelGrid, x0: float, gamma: InitialSegment,
                       c_list: Sequence[float]) -> list[FrontierPoint]:
    """Frontier against a two-asset grid; gamma is the pre-investment of
    the delayed asset.  Same closed forms, two-asset kernels."""
    return frontier(grid2, x0, gamma, c_list)
