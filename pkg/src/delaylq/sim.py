"""Euler-Maruyama simulation of the delayed controlled SDE, the optimal
feedback laws, value evaluation and the martingale diagnostic.

The state follows dX_t = a_{t-d} (b dt + sigma dW_t) with a = gamma on
[-d, 0].  The control timeline per path is one array over the nodes
-d, -d+h, ..., T; index j holds the control applied at time (j-m)h, so the
delayed control entering step k is simply index k.  Because the control is
piecewise constant on steps, Euler-Maruyama integrates the SDE exactly.

The optimal feedback is the fixed point (in the current control value) of
the trapezoid discretization of

    a_t = -1_{t <= T-d} / p2hat2(t,0) *
          [ (X_t - xi) p12(t,0) + int_{t-d}^t p22(t,0,s-t) a_s ds ],

a scalar linear equation per step that is solved exactly; the simulated
control therefore satisfies a_t = T(a)_t node-wise, which makes the
martingale compensator vanish identically under the optimal strategy.

Determinism: path i draws its increments from a substream keyed by
(master_seed, i), so path values are bitwise reproducible independent of
n_paths or execution order; reductions run in path-index order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegeneracyError, ParameterError, SimulationError, StateError
from .grid import KernelGrid
from .model import ModelParams
from .solver import TwoAssetParams


@dataclass(frozen=True)
class InitialSegment:
    """The pre-time-zero control gamma on [-d, 0].

    Either a constant or a table of m+1 node values on the s-grid.
    """

    constant: float | None = None
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.constant is None) == (self.table is None):
            raise ParameterError("InitialSegment needs exactly one of "
                                 "constant or table")
        if self.constant is not None and not math.isfinite(self.constant):
            raise ParameterError("gamma constant must be finite")
        if self.table is not None:
            tab = tuple(float(v) for v in self.table)
            if not all(math.isfinite(v) for v in tab):
                raise ParameterError("gamma table must be finite")
            object.__setattr__(self, "table", tab)

    @classmethod
    def const(cls, value: float) -> "InitialSegment":
        return cls(constant=float(value))

    @classmethod
    def tabulated(cls, values: Sequence[float]) -> "InitialSegment":
        return cls(table=tuple(float(v) for v in values))

    def on_grid(self, m: int) -> np.ndarray:
        if self.constant is not None:
            return np.full(m + 1, self.constant)
        if len(self.table) != m + 1:
            raise ParameterError(
                f"gamma table has {len(self.table)} values, grid needs {m + 1}")
        return np.array(self.table)


GAMMA_ZERO = InitialSegment.const(0.0)


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo controls.

    h_sim, when given, must equal the grid step (the delay must stay an
    exact integer number of steps and kernel lookups must hit nodes).
    test_mode forces all Gaussian increments to zero, turning stochastic
    identities into exact deterministic assertions.
    """

    n_paths: int
    master_seed: int
    x0: float
    h_sim: float | None = None
    test_mode: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ParameterError(f"n_paths must be >= 1, got {self.n_paths}")
        if not math.isfinite(self.x0):
            raise ParameterError("x0 must be finite")


@dataclass(frozen=True)
class MCStats:
    """Summary of a terminal functional across paths."""

    mean: float
    variance: float
    std_error: float
    n_paths: int


def stats_of(values: np.ndarray) -> MCStats:
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(np.mean(values))
    var = float(np.var(values, ddof=1)) if n > 1 else 0.0
    return MCStats(mean=mean, variance=var,
                   std_error=math.sqrt(var / n), n_paths=n)


@dataclass
class SimulatedPath:
    """One path: times on [0,T], state, full control timeline on [-d,T]
    (gamma segment included) and the Gaussian increments used."""

    path_index: int
    times: np.ndarray
    X: np.ndarray
    alpha_times: np.ndarray
    alpha: np.ndarray
    dW: np.ndarray
    xi: float


class SimBundle:
    """All simulated paths as struct-of-arrays; indexable like a list.

    Single-asset runs: ``alpha`` is the delayed-control timeline on the
    nodes of [-d, T] (gamma segment included), ``beta`` is None.
    Two-asset runs: ``alpha`` holds the undelayed asset's control on
    [0, T] and ``beta`` the delayed asset's timeline on [-d, T].
    """

    def __init__(self, spec, times, alpha_times, X, alpha, dW, xi, master_seed,
                 test_mode, beta=None):
        self.spec = spec
        self.times = times
        self.alpha_times = alpha_times
        self.X = X
        self.alpha = alpha
        self.dW = dW
        self.xi = xi
        self.master_seed = master_seed
        self.test_mode = test_mode
        self.beta = beta

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> SimulatedPath:
        if self.beta is not None:
            raise ParameterError("per-path views exist for single-asset "
                                 "bundles; read the two-asset arrays directly")
        return SimulatedPath(path_index=i, times=self.times, X=self.X[i],
                             alpha_times=self.alpha_times, alpha=self.alpha[i],
                             dW=self.dW[i], xi=self.xi)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def terminal(self) -> np.ndarray:
        return self.X[:, -1]


def _trapz_weights(m: int, h: float) -> np.ndarray:
    w = np.full(m + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _path_increments(n_paths, n_t, h, master_seed, test_mode):
    if test_mode:
        return np.zeros((n_paths, n_t))
    dW = np.empty((n_paths, n_t))
    root = np.sqrt(h)
    for i in range(n_paths):
        rng = np.random.default_rng(np.random.SeedSequence(master_seed,
                                                           spawn_key=(i,)))
        dW[i] = root * rng.standard_normal(n_t)
    return dW


# -- feedback laws ---------------------------------------------------------


def feedback_single(grid: KernelGrid, t: float, x: float,
                    hist: Sequence[float], xi: float = 0.0) -> float:
    """Evaluate the feedback operator T(a)_t at a given control history.

    hist supplies the m+1 control values on the nodes of [t-d, t]; the
    trapezoid rule is applied to the history exactly as given.  Returns 0
    for t > T-d, where the control no longer affects the cost.
    """
    spec = grid.spec
    hist = np.asarray(hist, dtype=float)
    if hist.shape != (spec.m + 1,):
        raise ParameterError(f"hist must hold {spec.m + 1} values on [t-d, t]")
    eps = 1e-9 * spec.h
    if t > spec.T - spec.d + eps:
        return 0.0
    den = grid.eval("2hat2", t, 0.0)
    if den <= 0.0:
        raise DegeneracyError(f"p2hat2({t}, 0) = {den} <= 0 at t <= T-d")
    w = _trapz_weights(spec.m, spec.h)
    inertial = float(w @ (grid.p22_row_t0(t) * hist))
    return -((x - xi) * grid.eval("12", t, 0.0) + inertial) / den


def feedback_two_asset(grid: KernelGrid, t: float, x: float,
                       beta_hist: Sequence[float], xi: float = 0.0):
    """Feedback pair (alpha, beta) for the two-asset problem.

    beta (delayed asset) has the same structure as the single-asset law;
    alpha (undelayed asset) stays defined on (T-d, T] and reads the delayed
    history through p12/p11.
    """
    params = grid.params
    if not isinstance(params, TwoAssetParams):
        raise ParameterError("feedback_two_asset expects a two-asset grid")
    spec = grid.spec
    beta_hist = np.asarray(beta_hist, dtype=float)
    if beta_hist.shape != (spec.m + 1,):
        raise ParameterError(f"beta_hist must hold {spec.m + 1} values")
    beta = feedback_single(grid, t, x, beta_hist, xi)
    p11_t = grid.eval("11", t)
    if p11_t <= 0.0:
        raise DegeneracyError(f"p11({t}) = {p11_t} <= 0")
    w = _trapz_weights(spec.m, spec.h)
    mem = float(w @ (grid.p12_row(t) * beta_hist))
    lam1, sig1 = params.lambda1, params.sigma1
    alpha = -(lam1 / sig1 * (x - xi)
              + params.rho * params.sigma2 / sig1 * beta_hist[0]
              + lam1 / (sig1 * p11_t) * mem)
    return alpha, beta


# -- simulation ------------------------------------------------------------


def _check_sim_setup(grid: KernelGrid, cfg: SimConfig):
    spec = grid.spec
    if not grid.fully_solved:
        raise StateError("simulate requires a fully solved grid")
    if cfg.h_sim is not None and abs(cfg.h_sim - spec.h) > 1e-12 * spec.h:
        raise ParameterError(
            f"h_sim={cfg.h_sim} must equal the grid step h={spec.h}")


def simulate(grid: KernelGrid, gamma: InitialSegment, cfg: SimConfig,
             xi: float = 0.0,
             control: Callable | None = None,
             perturbation: Callable[[float], float] | None = None) -> SimBundle:
    """Simulate n_paths paths of the single-asset delayed SDE.

    control: optional explicit strategy called as control(t, x_vec,
    hist_matrix) with hist_matrix the past m controls on [t-d, t-h); when
    omitted the optimal feedback is applied (exact scalar solve of the
    trapezoid fixed point).  perturbation(t) is added on top of the
    computed control (used for optimality sanity checks).
    """
    params = grid.params
    if not isinstance(params, ModelParams):
        raise ParameterError("simulate expects a single-asset grid")
    _check_sim_setup(grid, cfg)
    spec = grid.spec
    m, n_t, h = spec.m, spec.n_t, spec.h
    n_p = cfg.n_paths

    g = gamma.on_grid(m)
    alpha = np.empty((n_p, m + n_t + 1))
    alpha[:, :m + 1] = g
    X = np.empty((n_p, n_t + 1))
    X[:, 0] = cfg.x0
    dW = _path_increments(n_p, n_t, h, cfg.master_seed, cfg.test_mode)

    w = _trapz_weights(m, h)
    p12_t0 = grid.p12[:, m]
    p22_t0 = grid.p22[:, m, :]       # p22(t_k, 0, .) rows
    den_t0 = grid.p2hat2_t0()
    gate_max = n_t - m               # feedback active for k <= n_t - m

    drift = params.b * h
    for k in range(n_t + 1):
        t_k = k * h
        if control is not None:
            a_k = np.asarray(control(t_k, X[:, k], alpha[:, k:k + m]), dtype=float)
        elif k <= gate_max:
            den = den_t0[k]
            if den <= 0.0:
                raise DegeneracyError(f"p2hat2({t_k}, 0) = {den} <= 0")
            partial = ((X[:, k] - xi) * p12_t0[k]
                       + alpha[:, k:k + m] @ (w[:m] * p22_t0[k, :m]))
            a_k = -partial / (den + w[m] * p22_t0[k, m])
        else:
            a_k = np.zeros(n_p)
        if perturbation is not None and control is None:
            a_k = a_k + perturbation(t_k)
        alpha[:, k + m] = a_k
        if k < n_t:
            X[:, k + 1] = X[:, k] + alpha[:, k] * (drift + params.sigma * dW[:, k])
            bad = ~np.isfinite(X[:, k + 1])
            if bad.any():
                i_bad = int(np.argmax(bad))
                raise SimulationError(
                    f"non-finite state on path {i_bad} at step {k + 1}",
                    path_index=i_bad, step=k + 1)

    times = np.arange(n_t + 1) * h
    alpha_times = np.arange(-m, n_t + 1) * h
    return SimBundle(spec, times, alpha_times, X, alpha, dW, xi,
                     cfg.master_seed, cfg.test_mode)


def simulate_two_asset(grid: KernelGrid, gamma: InitialSegment, cfg: SimConfig,
                       xi: float = 0.0) -> SimBundle:
    """Simulate the two-asset portfolio under the optimal feedback pair.

    Draws two independent increment streams per path and correlates the
    delayed asset's driver with coefficient rho.
    """
    params = grid.params
    if not isinstance(params, TwoAssetParams):
        raise ParameterError("simulate_two_asset expects a two-asset grid")
    _check_sim_setup(grid, cfg)
    spec = grid.spec
    m, n_t, h = spec.m, spec.n_t, spec.h
    n_p = cfg.n_paths

    g = gamma.on_grid(m)
    beta = np.empty((n_p, m + n_t + 1))
    beta[:, :m + 1] = g
    alpha = np.empty((n_p, n_t + 1))
    X = np.empty((n_p, n_t + 1))
    X[:, 0] = cfg.x0
    dW1 = _path_increments(n_p, n_t, h, cfg.master_seed, cfg.test_mode)
    dB = _path_increments(n_p, n_t, h, cfg.master_seed + (1 << 32), cfg.test_mode)
    rho = params.rho
    dW2 = rho * dW1 + math.sqrt(1.0 - rho ** 2) * dB

    w = _trapz_weights(m, h)
    p12_t0 = grid.p12[:, m]
    p22_t0 = grid.p22[:, m, :]
    p12_rows = grid.p12
    den_t0 = grid.p2hat2_t0()
    gate_max = n_t - m
    lam1, sig1 = params.lambda1, params.sigma1
    drift1 = sig1 * lam1 * h
    drift2 = params.sigma2 * params.lambda2 * h

    for k in range(n_t + 1):
        t_k = k * h
        if k <= gate_max:
            den = den_t0[k]
            if den <= 0.0:
                raise DegeneracyError(f"p2hat2({t_k}, 0) = {den} <= 0")
            partial = ((X[:, k] - xi) * p12_t0[k]
                       + beta[:, k:k + m] @ (w[:m] * p22_t0[k, :m]))
            b_k = -partial / (den + w[m] * p22_t0[k, m])
        else:
            b_k = np.zeros(n_p)
        beta[:, k + m] = b_k
        p11_k = grid.p11[k]
        if p11_k <= 0.0:
            raise DegeneracyError(f"p11({t_k}) = {p11_k} <= 0")
        mem = beta[:, k:k + m + 1] @ (w * p12_rows[k])
        alpha[:, k] = -(lam1 / sig1 * (X[:, k] - xi)
                        + rho * params.sigma2 / sig1 * beta[:, k]
                        + lam1 / (sig1 * p11_k) * mem)
        if k < n_t:
            X[:, k + 1] = (X[:, k]
                           + alpha[:, k] * (drift1 + sig1 * dW1[:, k])
                           + beta[:, k] * (drift2 + params.sigma2 * dW2[:, k]))
            bad = ~np.isfinite(X[:, k + 1])
            if bad.any():
                i_bad = int(np.argmax(bad))
                raise SimulationError(
                    f"non-finite state on path {i_bad} at step {k + 1}",
                    path_index=i_bad, step=k + 1)

    times = np.arange(n_t + 1) * h
    alpha_times = np.arange(-m, n_t + 1) * h
    return SimBundle(spec, times, alpha_times, X, alpha, dW1, xi,
                     cfg.master_seed, cfg.test_mode, beta=beta)


# -- value functional ------------------------------------------------------


def value_of(grid: KernelGrid, x: float, gamma: InitialSegment) -> float:
    """Quadratic value functional at time 0,

    V = p11(0) x^2 + 2x int p12(0,s) g_s ds + int p2hat2(0,s) g_s^2 ds
        + int int p22(0,s,r) g_s g_r ds dr,

    with trapezoid / product-trapezoid quadrature on the s-grid.
    """
    spec = grid.spec
    if not grid.fully_solved:
        raise StateError("value_of requires a fully solved grid")
    g = gamma.on_grid(spec.m)
    w = _trapz_weights(spec.m, spec.h)
    p2h0 = grid.p2hat2_nodes()[0]
    wg = w * g
    return float(grid.p11[0] * x * x
                 + 2.0 * x * (w @ (grid.p12[0] * g))
                 + w @ (p2h0 * g * g)
                 + wg @ grid.p22[0] @ wg)


# -- martingale diagnostic -------------------------------------------------


def _running_values(grid: KernelGrid, X: np.ndarray, alpha: np.ndarray,
                    xi: float) -> np.ndarray:
    """V_t along paths: the quadratic form in (X_t - xi, control segment)
    with kernels evaluated at (t, s-t, r-t), product trapezoid in the lags."""
    spec = grid.spec
    m, n_t = spec.m, spec.n_t
    w = _trapz_weights(m, spec.h)
    p2h = grid.p2hat2_nodes()
    V = np.empty((X.shape[0], n_t + 1))
    for k in range(n_t + 1):
        seg = alpha[:, k:k + m + 1]
        xk = X[:, k] - xi
        quad = np.einsum("ps,sr,pr->p", seg * w, grid.p22[k], seg * w)
        V[:, k] = (grid.p11[k] * xk * xk
                   + 2.0 * xk * (seg @ (w * grid.p12[k]))
                   + (seg * seg) @ (w * p2h[k])
                   + quad)
    return V


def martingale_residuals(grid: KernelGrid, bundle: SimBundle) -> np.ndarray:
    """Per-step residuals dV - p2hat2(t,0) (a_t - T(a)_t)^2 h for all paths.

    Under the optimal strategy the compensator vanishes node-wise and the
    residuals are pure martingale increments; their cumulative mean over
    paths estimates 0.  Shape (n_paths, n_t).
    """
    if bundle.beta is not None:
        raise ParameterError("martingale diagnostics apply to single-asset "
                             "bundles")
    spec = grid.spec
    m, n_t, h = spec.m, spec.n_t, spec.h
    X, alpha, xi = bundle.X, bundle.alpha, bundle.xi
    w = _trapz_weights(m, h)
    V = _running_values(grid, X, alpha, xi)
    den_t0 = grid.p2hat2_t0()
    p12_t0 = grid.p12[:, m]
    p22_t0 = grid.p22[:, m, :]
    res = np.empty((X.shape[0], n_t))
    for k in range(n_t):
        if k <= n_t - m and den_t0[k] > 0.0:
            tk_full = -((X[:, k] - xi) * p12_t0[k]
                        + alpha[:, k:k + m + 1] @ (w * p22_t0[k])) / den_t0[k]
            comp = den_t0[k] * (alpha[:, k + m] - tk_full) ** 2 * h
        else:
            comp = 0.0
        res[:, k] = V[:, k + 1] - V[:, k] - comp
    return res


def martingale_residual(grid: KernelGrid, path: SimulatedPath) -> np.ndarray:
    """Residual time series for a single simulated path."""
    bundle = SimBundle(grid.spec, path.times, path.alpha_times,
                       path.X[None, :], path.alpha[None, :],
                       path.dW[None, :], path.xi, 0, False)
    return martingale_residuals(grid, bundle)[0]
