"""Backward slice-by-slice Picard solver for the Riccati kernel system.

Each backward slice [max(0, T-(n+1)d), T-nd] is solved as a fixed point of
the integral equations obtained by integrating the transport PDEs along
their characteristics up to the first exit through the lag boundary or the
slice top:

    p11(t)     = p11(t_up) - int_t^{t_up} [lam1^2 p11 + p12(x,0)^2 / w(x)] dx
    p12(t,s)   = b p11(U)  - int_t^{U}    [lam1^2 p12(x, t+s-x)
                                           + p12(x,0) p22(x, t+s-x, 0) / w(x)] dx
    p22(t,s,r) = b p12(U2, |s-r|-d)
                 - int_t^{U2} [lam1^2 p12(x, t+s-x) p12(x, t+r-x) / p11(x)
                               + p22(x, t+s-x, 0) p22(x, 0, t+r-x) / w(x)] dx

with U = t_up ^ (t+s+d), U2 = t_up ^ (t + s^r + d) and w(x) =
sig2_eff * p11(x+d), the feedback denominator transported from the slice
above.  The lam1^2 terms are absent in the single-asset system.  Grid
alignment puts every characteristic argument and every upper limit on a
node, so the composite trapezoid rule needs no off-grid interpolation.

Iteration is plain Picard from the constant extension of the slice-top
values; if a slice fails to contract within max_iter the slice is bisected
into characteristic-aligned sub-slices and re-solved recursively, which
mirrors the local-existence-then-extension structure of the underlying
contraction argument.  Sweeps are Jacobi-style: iterate k+1 reads only
iterate k's arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ParameterError, PositivityError
from .grid import GridSpec, KernelGrid, init_top_slice
from .model import FeasibilityReport, ModelParams, feasibility

_BOUND_SLACK = 1e-8  # discretization slack for the proven lower bounds


def _require_finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SolveConfig:
    """Numerical controls for the Picard solver.

    tol               sup-norm fixed-point tolerance, relative to the
                      kernel magnitude scale max(1, |b|, b^2)
    max_iter          Picard sweeps per (sub-)slice before bisecting
    positivity_floor  minimum admissible p2hat2(t,0); None selects
                      1e-10 * sig2_eff, small enough to pass round-off but
                      not a genuinely degenerate kernel
    """

    tol: float = 1e-11
    max_iter: int = 400
    positivity_floor: float | None = None

    def __post_init__(self):
        if not (self.tol > 0.0):
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")

    def floor_for(self, sig2_eff: float) -> float:
        if self.positivity_floor is None:
            return 1e-10 * sig2_eff
        return self.positivity_floor


@dataclass(frozen=True)
class TwoAssetParams:
    """Two risky assets: asset 1 undelayed, asset 2 executed with delay d.

    sigma1, sigma2 > 0 are volatilities, lambda1, lambda2 risk premia,
    rho in (-1, 1) the Brownian correlation.  rho = +-1 would make the
    effective boundary volatility sigma2^2 (1 - rho^2) vanish.
    """

    sigma1: float
    sigma2: float
    lambda1: float
    lambda2: float
    rho: float
    d: float
    T: float

    def __post_init__(self):
        for name in ("sigma1", "sigma2", "lambda1", "lambda2", "rho", "d", "T"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        if self.sigma1 <= 0.0 or self.sigma2 <= 0.0:
            raise ParameterError("sigma1 and sigma2 must be > 0")
        if abs(self.rho) >= 1.0:
            raise ParameterError(f"|rho| must be < 1, got {self.rho}")
        if self.d < 0.0:
            raise ParameterError(f"d must be >= 0, got {self.d}")
        if self.T <= 0.0:
            raise ParameterError(f"T must be > 0, got {self.T}")


@dataclass
class SliceStats:
    """Per-slice Picard record (bisected sub-solves are accumulated)."""

    index: int
    j_lo: int
    j_up: int
    iterations: int
    residual: float
    min_p11: float
    bound: float | None  # a_{n+1} when the sufficient condition holds


@dataclass
class SolveDiagnostics:
    """Convergence and positivity record of one solve."""

    slices: list[SliceStats] = field(default_factory=list)
    min_p2hat2_t0: float = math.inf  # over t < T-d
    min_p11: float = math.inf
    positivity_ok: bool = True
    sufficient_holds: bool | None = None
    a_seq: tuple[float, ...] | None = None

    def iterations_total(self) -> int:
        return sum(s.iterations for s in self.slices)


class _SliceWorkspace:
    """One backward slice solve on rows [j_lo, j_up] of the grid arrays."""

    def __init__(self, grid: KernelGrid, j_lo: int, j_up: int,
                 cfg: SolveConfig, slice_index: int):
        self.grid = grid
        self.spec = grid.spec
        self.c = grid.coeffs
        self.cfg = cfg
        self.slice_index = slice_index
        self.j_lo = j_lo
        self.j_up = j_up
        self.h = self.spec.h
        self.m = self.spec.m
        self.tol_eff = cfg.tol * self.c.scale
        self.floor = cfg.floor_for(self.c.sig2_eff)
        self.iterations = 0
        self.residual = 0.0

    # ---- one Jacobi sweep over a sub-range [a, b] (rows a..b-1 unknown) --

    def _sweep(self, a: int, b: int) -> float:
        grid, spec, c = self.grid, self.spec, self.c
        h, m = self.h, self.m
        p11, p12, p22 = grid.p11, grid.p12, grid.p22
        lam2 = c.lam1 ** 2

        rows = np.arange(a, b + 1)               # sample rows incl. data row b
        w = c.sig2_eff * p11[rows + m]           # p2hat2(t_k, 0), known rows
        if np.any(w <= self.floor):
            k_bad = rows[int(np.argmin(w))]
            raise PositivityError(
                f"p2hat2(t,0) <= positivity floor at t={(k_bad - m) * h}",
                t=(k_bad - m) * h)
        if lam2 != 0.0 and np.any(p11[rows] <= self.floor):
            k_bad = rows[int(np.argmin(p11[rows]))]
            raise PositivityError(
                f"p11 <= positivity floor in source denominator at t={k_bad * h}",
                t=k_bad * h)

        n_rows = b - a + 1
        c_vals = np.arange(a, b + m + 1)         # characteristic labels j+i
        n_c = c_vals.size

        # ---- p11 ----
        g1 = p12[rows, m] ** 2 / w
        if lam2 != 0.0:
            g1 = g1 + lam2 * p11[rows]
        S1 = np.cumsum(g1[::-1])[::-1]
        I1 = h * (S1 - 0.5 * (g1 + g1[-1]))
        new_p11 = p11[b] - I1[:-1]

        # ---- p12 ----
        kk = rows[:, None]
        cc = c_vals[None, :]
        sidx = np.clip(cc - kk, 0, m)
        valid = (cc >= kk) & (cc - kk <= m)
        g2 = (p12[rows, m] / w)[:, None] * p22[kk, sidx, m]
        if lam2 != 0.0:
            g2 = g2 + lam2 * p12[kk, sidx]
        g2[~valid] = 0.0
        K_c = np.minimum(b, c_vals)
        gK = g2[K_c - a, np.arange(n_c)]
        S2 = np.cumsum(g2[::-1, :], axis=0)[::-1, :]
        I2 = h * (S2 - 0.5 * (g2 + gK[None, :]))
        data12 = c.b_eff * p11[K_c]
        span = np.arange(m + 1)
        new_p12 = np.empty((n_rows - 1, m + 1))
        for jj in range(n_rows - 1):
            cols = jj + span
            new_p12[jj] = data12[cols] - I2[jj, cols]

        # ---- p22 ----
        cc1 = c_vals[:, None]
        cc2 = c_vals[None, :]
        K2 = np.minimum(b, np.minimum(cc1, cc2))
        data22 = c.b_eff * p12[K2, np.minimum(np.abs(cc1 - cc2), m)]
        R = np.zeros((n_c, n_c))
        GK = np.zeros((n_c, n_c))
        new_p22 = np.empty((n_rows - 1, m + 1, m + 1))
        for k in range(b, a - 1, -1):
            s1 = np.clip(c_vals - k, 0, m)
            ok = (c_vals >= k) & (c_vals - k <= m)
            u = np.where(ok, p22[k, s1, m], 0.0)
            Gk = np.outer(u, u) / w[k - a]
            if lam2 != 0.0:
                pv = np.where(ok, p12[k, s1], 0.0)
                Gk = Gk + (lam2 / p11[k]) * np.outer(pv, pv)
            sel = K2 == k
            GK[sel] = Gk[sel]
            R += Gk
            if k < b:
                pos = k - a
                cols = slice(pos, pos + m + 1)
                Ik = h * (R[cols, cols] - 0.5 * (Gk[cols, cols] + GK[cols, cols]))
                new_p22[pos] = data22[cols, cols] - Ik

        # ---- commit (Jacobi: all news computed from the old arrays) ----
        upd = slice(a, b)
        delta = max(
            float(np.max(np.abs(new_p11 - p11[upd]))) if b > a else 0.0,
            float(np.max(np.abs(new_p12 - p12[upd]))) if b > a else 0.0,
            float(np.max(np.abs(new_p22 - p22[upd]))) if b > a else 0.0,
        )
        p11[upd] = new_p11
        p12[upd] = new_p12
        p22[upd] = new_p22
        return delta

    # ---- Picard with bisection fallback ---------------------------------

    def solve_range(self, a: int, b: int, depth: int = 0):
        grid = self.grid
        grid.p11[a:b] = grid.p11[b]
        grid.p12[a:b] = grid.p12[b]
        grid.p22[a:b] = grid.p22[b]
        delta = math.inf
        # non-contracting iterates may legitimately overflow before the
        # bisection fallback kicks in; NaN/inf deltas never pass the test
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(self.cfg.max_iter):
                delta = self._sweep(a, b)
                self.iterations += 1
                if delta <= self.tol_eff:
                    self.residual = max(self.residual, delta)
                    return
        if b - a >= 2 and depth < 60:
            mid = (a + b) // 2
            self.solve_range(mid, b, depth + 1)
            self.solve_range(a, mid, depth + 1)
            return
        raise ConvergenceError(
            f"slice {self.slice_index} (rows {a}..{b}) did not converge: "
            f"residual {delta:.3e} > tol {self.tol_eff:.3e}",
            slice_index=self.slice_index, residual=delta)


def _solve(params, spec: GridSpec, cfg: SolveConfig,
           report: FeasibilityReport | None) -> tuple[KernelGrid, SolveDiagnostics]:
    grid = init_top_slice(params, spec)
    c = grid.coeffs
    diag = SolveDiagnostics()
    if report is not None:
        diag.sufficient_holds = report.sufficient_holds
        diag.a_seq = report.a_seq

    top_lo = grid.solved_from
    diag.min_p11 = float(np.min(grid.p11[top_lo:]))

    for n, (j_lo, j_up) in enumerate(spec.slice_index_bounds):
        if n == 0:
            continue  # top slice holds the closed forms
        ws = _SliceWorkspace(grid, j_lo, j_up, cfg, n)
        ws.solve_range(j_lo, j_up)
        grid.solved_from = j_lo

        new_rows = grid.p11[j_lo:j_up]
        min_p11 = float(np.min(new_rows))
        diag.min_p11 = min(diag.min_p11, min_p11)

        bound = None
        if report is not None and report.sufficient_holds:
            a_seq = report.a_seq
            bound = a_seq[n + 1] if n + 1 < len(a_seq) else a_seq[-1]
            if min_p11 < bound - _BOUND_SLACK:
                diag.positivity_ok = False
                raise PositivityError(
                    f"slice {n}: min p11 = {min_p11:.6g} below the proven "
                    f"bound a_{n + 1} = {bound:.6g}", t=j_lo * spec.h)
        # p2hat2(t, s) = sig2_eff * p11(t+s+d) must stay positive for every
        # t < T-d, which constrains p11 on all of [0, T); check every new row
        floor = cfg.floor_for(c.sig2_eff)
        if c.sig2_eff * min_p11 <= floor:
            k_bad = j_lo + int(np.argmin(new_rows))
            diag.positivity_ok = False
            t_bad = k_bad * spec.h
            raise PositivityError(
                f"p11({t_bad}) = {grid.p11[k_bad]:.6g}: p2hat2 degenerates "
                f"below the positivity floor", t=t_bad)
        diag.slices.append(SliceStats(
            index=n, j_lo=j_lo, j_up=j_up, iterations=ws.iterations,
            residual=ws.residual, min_p11=min_p11, bound=bound))

    p2h = grid.p2hat2_t0()
    below = p2h[: max(0, spec.n_t - spec.m)]
    diag.min_p2hat2_t0 = float(np.min(below)) if below.size else math.inf
    return grid, diag


def solve_single(params: ModelParams, spec: GridSpec,
                 cfg: SolveConfig = SolveConfig()) -> tuple[KernelGrid, SolveDiagnostics]:
    """Solve the single-asset kernel system on the whole grid.

    The feasibility recursion is evaluated first; when its sufficient
    condition holds, each solved slice is additionally checked against the
    proven slice bound p11 >= a_{n+1} (up to discretization slack).  The
    condition is advisory: when it fails the solver still runs and only
    enforces runtime positivity of p2hat2(t, 0).
    """
    if not isinstance(params, ModelParams):
        raise ParameterError("solve_single expects ModelParams")
    report = feasibility(params, cap=len(spec.slice_index_bounds) + 2)
    return _solve(params, spec, cfg, report)


def solve_two_asset(params: TwoAssetParams, spec: GridSpec,
                    cfg: SolveConfig = SolveConfig()) -> tuple[KernelGrid, SolveDiagnostics]:
    """Solve the two-asset kernel system (one delayed, one undelayed asset).

    Positivity of p2hat2 and of the p11 source denominator is reported and
    enforced at runtime; no slice bound is available for this system.
    """
    if not isinstance(params, TwoAssetParams):
        raise ParameterError("solve_two_asset expects TwoAssetParams")
    return _solve(params, spec, cfg, None)


# -- PDE residual report ---------------------------------------------------


@dataclass
class ResidualReport:
    """Sup-norm finite-difference residuals of the transport system.

    r11/r12/r22 are the PDE residuals along characteristics with one-sided
    differences within slices; b12/b22 are the boundary-row identities
    p12(t,-d) - b p11(t) and p22(t,s,-d) - b p12(t,s) over t < T.  The
    p2hat2 transport row is an identity of the storage scheme and is
    reported for completeness.
    """

    r11: float
    r12: float
    r22: float
    b12: float
    b22: float
    b2hat2: float


def residual_report(grid: KernelGrid) -> ResidualReport:
    """Finite-difference residuals of a solved grid.

    The time derivative is the forward difference over one step; transport
    derivatives are exact directional differences along the grid diagonal,
    which never crosses an indicator surface (t+s and t+max(s,r) are
    conserved along characteristics).  Sources follow the 0^2/0 = 0
    convention wherever p2hat2(t,0) vanishes.  Residuals at nodes whose
    characteristic lands on the terminal row use the inside-limit closed
    form there (the stored terminal row holds the a.e. terminal data 0).
    """
    spec, c = grid.spec, grid.coeffs
    if not grid.fully_solved:
        raise ParameterError("residual_report requires a fully solved grid")
    h, m, n_t = spec.h, spec.m, spec.n_t
    p11, p12, p22 = grid.p11, grid.p12, grid.p22
    lam2 = c.lam1 ** 2
    w = grid.p2hat2_t0()
    # quotient sources act below T-d only; on the top region the one-sided
    # interval [t_j, t_j + h] sees the upper-side limit, where p12(t,0) and
    # p2hat2(t,0) both vanish and the 0^2/0 = 0 convention applies
    quot_ok = w > 0.0
    quot_ok[max(0, n_t - m):] = False
    safe_w = np.where(quot_ok, w, 1.0)

    j = np.arange(n_t)  # forward intervals [j, j+1], each within one slice

    # p11: dp11/dt = lam2 p11 + p12(t,0)^2 / p2hat2(t,0)
    src = np.where(quot_ok[j], p12[j, m] ** 2 / safe_w[j], 0.0) + lam2 * p11[j]
    r11 = float(np.max(np.abs((p11[j + 1] - p11[j]) / h - src)))

    # inside-limit values on the terminal row for surface characteristics
    p12_top = p12.copy()
    on12 = np.arange(m + 1) == 0  # j+i == n_t at j = n_t only for i = 0
    p12_top[n_t, on12] = c.b_eff * p11[n_t]
    p22_top = p22.copy()
    ii = np.arange(m + 1)
    on22 = np.maximum(ii[:, None], ii[None, :]) == 0
    p22_top[n_t][on22] = c.b_eff ** 2 * p11[n_t]

    # p12: (d_t - d_s) p12 = lam2 p12 + p12(t,0) p22(t,s,0) / p2hat2(t,0)
    i = np.arange(1, m + 1)
    diag = (p12_top[j[:, None] + 1, i[None, :] - 1] - p12[j[:, None], i[None, :]]) / h
    src12 = (np.where(quot_ok[j], p12[j, m] / safe_w[j], 0.0)[:, None]
             * p22[j[:, None], i[None, :], m]) + lam2 * p12[j[:, None], i[None, :]]
    r12 = float(np.max(np.abs(diag - src12)))

    # p22: (d_t - d_s - d_r) p22 = lam2 p12(t,s)p12(t,r)/p11
    #                              + p22(t,s,0) p22(t,0,r) / p2hat2(t,0)
    r22 = 0.0
    for jj in range(n_t):
        blk = p22[jj, 1:, 1:]
        diag2 = (p22_top[jj + 1, :-1, :-1] - blk) / h
        quo = np.where(quot_ok[jj],
                       np.outer(p22[jj, 1:, m], p22[jj, m, 1:]) / safe_w[jj], 0.0)
        if lam2 != 0.0:
            quo = quo + lam2 * np.outer(p12[jj, 1:], p12[jj, 1:]) / p11[jj]
        r22 = max(r22, float(np.max(np.abs(diag2 - quo))))

    # boundary rows, t < T
    jb = np.arange(n_t)
    b12 = float(np.max(np.abs(p12[jb, 0] - c.b_eff * p11[jb])))
    b22 = float(np.max(np.abs(p22[jb, :, 0] - c.b_eff * p12[jb, :])))
    return ResidualReport(r11=r11, r12=r12, r22=r22, b12=b12, b22=b22, b2hat2=0.0)
