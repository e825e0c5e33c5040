"""Discretized storage and evaluation of the four Riccati kernels.

Layout
------
The domain [0,T] x [-d,0]^2 is discretized with a single step h = d/m so
that the delay is exactly m steps and every backward slice boundary
T - n*d lands on a time node.  Node coordinates:

    t_j = j*h,        j = 0..n_t          (n_t = T/h, T snapped if needed)
    s_i = -d + i*h,   i = 0..m            (s_m = 0, s_0 = -d)

With this alignment the characteristic shifts t+s and the discontinuity
surfaces t+s+d = T and t+max(s,r)+d = T all land on nodes; in index space
t_j + s_i + d is simply node j+i.

The second-diagonal kernel is never stored: it is defined through the
exact transport relation

    p2hat2(t, s) = sig2_eff * p11(t+s+d) * 1_{t+s+d <= T}.

Stored terminal row convention: the closed forms on the top slice are
discontinuous exactly on the indicator surfaces; nodes on a surface store
the inside-limit value, except the terminal row t = T where p12 and p22
store the terminal data 0 for every (s, r).  The terminal row is never
sampled by the slice integrals, so the choice only affects direct reads.

A ``KernelGrid`` is immutable once solved; concurrent reads are safe.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import CSVFormatError, DomainError, ParameterError, StateError
from .model import ModelParams

KERNEL_IDS = ("11", "12", "2hat2", "22")

# relative slop used when classifying a point against a node-aligned surface
_EPS_REL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the kernel grid.

    h                   time/lag step, h = d/m exactly
    m                   steps per delay
    n_t                 total time steps; the working horizon is n_t*h
    T                   working horizon (requested T snapped to a node)
    d                   delay
    t_snap              |requested T - working T|, recorded when nonzero
    slice_index_bounds  (j_lo, j_up) node-index pairs of the backward
                        slices [T-(n+1)d, T-nd], top slice first, last
                        slice truncated at t = 0
    """

    h: float
    m: int
    n_t: int
    T: float
    d: float
    t_snap: float
    slice_index_bounds: tuple[tuple[int, int], ...]

    @classmethod
    def build(cls, d: float, T: float, m: int) -> "GridSpec":
        if m < 1:
            raise ParameterError(f"m must be >= 1, got {m}")
        if d <= 0.0:
            raise ParameterError(f"grid construction requires d > 0, got {d}")
        if T <= 0.0:
            raise ParameterError(f"T must be > 0, got {T}")
        h = d / m
        n_t = int(round(T / h))
        if n_t < 1:
            raise ParameterError(f"horizon {T} shorter than one step h={h}")
        t_snap = abs(n_t * h - T)
        bounds = []
        j_up = n_t
        while j_up > 0:
            j_lo = max(0, j_up - m)
            bounds.append((j_lo, j_up))
            j_up = j_lo
        return cls(h=h, m=m, n_t=n_t, T=n_t * h, d=d, t_snap=t_snap,
                   slice_index_bounds=tuple(bounds))

    def t_nodes(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.h

    def s_nodes(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.h - self.d

    def compatible_with(self, other: "GridSpec") -> bool:
        return (self.m == other.m and self.n_t == other.n_t
                and abs(self.h - other.h) <= _EPS_REL * self.h)


@dataclass(frozen=True)
class KernelCoeffs:
    """Effective coefficients entering the kernel system.

    Single asset: b_eff = b, sig2_eff = sigma^2, lam1 = 0.
    Two assets:   b_eff = sigma2*(lambda2 - rho*lambda1),
                  sig2_eff = sigma2^2*(1 - rho^2), lam1 = lambda1.
    """

    b_eff: float
    sig2_eff: float
    lam1: float

    @property
    def scale(self) -> float:
        """Magnitude scale of the kernels, used for tolerances."""
        return max(1.0, abs(self.b_eff), self.b_eff ** 2)


def coeffs_of(params) -> KernelCoeffs:
    """Effective coefficients for ModelParams or TwoAssetParams."""
    if isinstance(params, ModelParams):
        return KernelCoeffs(b_eff=params.b, sig2_eff=params.sigma ** 2, lam1=0.0)
    # duck-typed TwoAssetParams (defined in solver.py, avoids import cycle)
    return KernelCoeffs(
        b_eff=params.sigma2 * (params.lambda2 - params.rho * params.lambda1),
        sig2_eff=params.sigma2 ** 2 * (1.0 - params.rho ** 2),
        lam1=params.lambda1,
    )


@dataclass
class KernelGrid:
    """Node values of the kernels plus grid geometry and problem params.

    Arrays are indexed [t, s] / [t, s, r]; unsolved rows hold NaN.  Rows
    with index >= solved_from are solved; a fully solved grid has
    solved_from == 0.
    """

    spec: GridSpec
    params: object
    p11: np.ndarray
    p12: np.ndarray
    p22: np.ndarray
    solved_from: int

    @property
    def coeffs(self) -> KernelCoeffs:
        return coeffs_of(self.params)

    @property
    def fully_solved(self) -> bool:
        return self.solved_from == 0

    # -- node-level accessors -------------------------------------------

    def p2hat2_nodes(self) -> np.ndarray:
        """p2hat2 on all (t, s) nodes via the transport identity."""
        spec, c = self.spec, self.coeffs
        j = np.arange(spec.n_t + 1)[:, None]
        i = np.arange(spec.m + 1)[None, :]
        shifted = np.minimum(j + i, spec.n_t)
        vals = c.sig2_eff * self.p11[shifted]
        return np.where(j + i <= spec.n_t, vals, 0.0)

    def p2hat2_t0(self) -> np.ndarray:
        """p2hat2(t, 0) on the time nodes (the feedback denominator)."""
        spec, c = self.spec, self.coeffs
        j = np.arange(spec.n_t + 1)
        shifted = np.minimum(j + spec.m, spec.n_t)
        return np.where(j + spec.m <= spec.n_t, c.sig2_eff * self.p11[shifted], 0.0)

    def node_values(self, which: str) -> np.ndarray:
        if which == "11":
            return self.p11
        if which == "12":
            return self.p12
        if which == "22":
            return self.p22
        if which == "2hat2":
            return self.p2hat2_nodes()
        raise ParameterError(f"unknown kernel id {which!r}")

    # -- point evaluation -------------------------------------------------

    def _locate_t(self, t: float) -> tuple[int, float]:
        spec = self.spec
        eps = _EPS_REL * spec.h
        if t < -eps or t > spec.T + eps:
            raise DomainError(f"t={t} outside [0, {spec.T}]")
        x = min(max(t / spec.h, 0.0), float(spec.n_t))
        j = min(int(math.floor(x + _EPS_REL)), spec.n_t - 1)
        return j, x - j

    def _locate_s(self, s: float, name: str = "s") -> tuple[int, float]:
        spec = self.spec
        eps = _EPS_REL * spec.h
        if s < -spec.d - eps or s > eps:
            raise DomainError(f"{name}={s} outside [-{spec.d}, 0]")
        x = min(max((s + spec.d) / spec.h, 0.0), float(spec.m))
        i = min(int(math.floor(x + _EPS_REL)), spec.m - 1)
        return i, x - i

    def _require_solved(self, t: float):
        if t < (self.solved_from * self.spec.h) - _EPS_REL * self.spec.h:
            raise StateError(
                f"grid solved only for t >= {self.solved_from * self.spec.h}, "
                f"got t={t}")

    def _p11_at(self, t: float) -> float:
        j, frac = self._locate_t(t)
        if frac <= _EPS_REL:
            return float(self.p11[j])
        return float((1.0 - frac) * self.p11[j] + frac * self.p11[j + 1])

    def eval(self, which: str, t: float, s: float | None = None,
             r: float | None = None) -> float:
        """Interpolated kernel value at an arbitrary in-domain point.

        Multilinear within one grid cell.  In the top region t >= T-d,
        where the kernels are indicator-cut transports of p11, evaluation
        goes through the closed form so that no interpolation cell ever
        straddles a discontinuity surface.
        """
        spec, c = self.spec, self.coeffs
        eps = _EPS_REL * spec.h
        if t < -eps or t > spec.T + eps:
            raise DomainError(f"t={t} outside [0, {spec.T}]")
        self._require_solved(t)
        if which == "11":
            return self._p11_at(t)

        if which == "2hat2":
            if s is None:
                raise ParameterError("p2hat2 requires (t, s)")
            self._locate_s(s)
            shifted = t + s + spec.d
            if shifted > spec.T + eps:
                return 0.0
            return c.sig2_eff * self._p11_at(min(shifted, spec.T))

        if which == "12":
            if s is None:
                raise ParameterError("p12 requires (t, s)")
            i, fs = self._locate_s(s)
            if t >= spec.T - eps:
                return 0.0  # terminal data, as stored
            if t >= spec.T - spec.d - eps:
                if t + s + spec.d > spec.T + eps:
                    return 0.0
                return c.b_eff * self._p11_at(t)
            j, ft = self._locate_t(t)
            block = self.p12[j:j + 2, i:i + 2]
            wt = np.array([1.0 - ft, ft])
            ws = np.array([1.0 - fs, fs])
            return float(wt @ block @ ws)

        if which == "22":
            if s is None or r is None:
                raise ParameterError("p22 requires (t, s, r)")
            i, fs = self._locate_s(s)
            l, fr = self._locate_s(r, "r")
            if t >= spec.T - eps:
                return 0.0  # terminal data, as stored
            if t >= spec.T - spec.d - eps:
                if t + max(s, r) + spec.d > spec.T + eps:
                    return 0.0
                return c.b_eff ** 2 * self._p11_at(t)
            j, ft = self._locate_t(t)
            cube = self.p22[j:j + 2, i:i + 2, l:l + 2]
            wt = np.array([1.0 - ft, ft])
            ws = np.array([1.0 - fs, fs])
            wr = np.array([1.0 - fr, fr])
            return float(np.einsum("a,b,c,abc->", wt, ws, wr, cube))

        raise ParameterError(f"unknown kernel id {which!r}")

    def p22_row_t0(self, t: float) -> np.ndarray:
        """p22(t, 0, u) on the u-grid of [-d, 0] (used by feedback laws)."""
        spec, c = self.spec, self.coeffs
        eps = _EPS_REL * spec.h
        self._require_solved(t)
        if t >= spec.T - spec.d - eps:
            # indicator 1_{t + max(0,u) + d <= T} = 1_{t <= T-d}
            if t > spec.T - spec.d + eps:
                return np.zeros(spec.m + 1)
            return np.full(spec.m + 1, c.b_eff ** 2 * self._p11_at(t))
        j, ft = self._locate_t(t)
        row = (1.0 - ft) * self.p22[j, spec.m, :] + ft * self.p22[j + 1, spec.m, :]
        return row

    def p12_row(self, t: float) -> np.ndarray:
        """p12(t, u) on the u-grid of [-d, 0]."""
        spec, c = self.spec, self.coeffs
        eps = _EPS_REL * spec.h
        self._require_solved(t)
        if t >= spec.T - eps:
            return np.zeros(spec.m + 1)  # terminal data, as stored
        if t >= spec.T - spec.d - eps:
            u = spec.s_nodes()
            ind = (t + u + spec.d) <= spec.T + eps
            return np.where(ind, c.b_eff * self._p11_at(t), 0.0)
        j, ft = self._locate_t(t)
        return (1.0 - ft) * self.p12[j, :] + ft * self.p12[j + 1, :]


def init_top_slice(params, spec: GridSpec) -> KernelGrid:
    """Allocate a grid and fill the closed forms on [T-d, T].

    On the top slice p11(t) = exp(-lam1^2 (T-t)) (identically 1 for the
    single-asset system) and the other kernels are indicator-cut multiples
    of it; the terminal row stores the terminal data 0 for p12 and p22.
    """
    if spec.d != getattr(params, "d"):
        raise ParameterError("spec delay does not match params.d")
    if abs(spec.T - params.T) > 0.5 * spec.h + _EPS_REL:
        raise ParameterError("spec horizon too far from params.T to be a snap")
    c = coeffs_of(params)
    n_t, m = spec.n_t, spec.m

    p11 = np.full(n_t + 1, np.nan)
    p12 = np.full((n_t + 1, m + 1), np.nan)
    p22 = np.full((n_t + 1, m + 1, m + 1), np.nan)

    j_lo = max(0, n_t - m)
    j = np.arange(j_lo, n_t + 1)
    p11[j] = np.exp(-c.lam1 ** 2 * (spec.T - j * spec.h))

    i = np.arange(m + 1)
    ind12 = (j[:, None] + i[None, :]) <= n_t
    p12[j_lo:] = np.where(ind12, c.b_eff * p11[j][:, None], 0.0)

    maxil = np.maximum(i[:, None], i[None, :])
    ind22 = (j[:, None, None] + maxil[None, :, :]) <= n_t
    p22[j_lo:] = np.where(ind22, (c.b_eff ** 2) * p11[j][:, None, None], 0.0)

    # terminal row: p12(T,.) = p22(T,.,.) = 0 for every s, r
    p12[n_t, :] = 0.0
    p22[n_t, :, :] = 0.0

    return KernelGrid(spec=spec, params=params, p11=p11, p12=p12, p22=p22,
                      solved_from=j_lo)


# -- comparison ----------------------------------------------------------


def max_abs_diff(grid_a: KernelGrid, grid_b: KernelGrid, which: str):
    """Exact max |a-b| over nodes solved in both grids, with argmax point.

    Returns (max_diff, point) where point is (t,), (t, s) or (t, s, r).
    """
    if not grid_a.spec.compatible_with(grid_b.spec):
        raise ParameterError("grids have different GridSpec")
    va, vb = grid_a.node_values(which), grid_b.node_values(which)
    row0 = max(grid_a.solved_from, grid_b.solved_from)
    return _max_abs_diff_arrays(va, vb, row0, grid_a.spec, which)


def _max_abs_diff_arrays(va, vb, row0, spec, which):
    diff = np.abs(va[row0:] - vb[row0:])
    if diff.size == 0:
        return 0.0, None
    flat = np.nanargmax(diff)
    idx = np.unravel_index(flat, diff.shape)
    t = (row0 + idx[0]) * spec.h
    s = spec.s_nodes()
    if which == "11":
        point = (t,)
    elif which in ("12", "2hat2"):
        point = (t, float(s[idx[1]]))
    else:
        point = (t, float(s[idx[1]]), float(s[idx[2]]))
    return float(diff[idx]), point


# -- CSV serialization ----------------------------------------------------

_CSV_HEADER = "kernel,t,s,r,value"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_csv(grid: KernelGrid, which: str, path: str | os.PathLike) -> None:
    """Write one kernel to CSV.

    Schema: header ``kernel,t,s,r,value``; s/r empty for p11, r empty for
    p12/p2hat2; 17 significant digits; rows lexicographic in (t, s, r).
    Unsolved rows are omitted.
    """
    vals = grid.node_values(which)
    spec = grid.spec
    t = spec.t_nodes()
    s = spec.s_nodes()
    row0 = grid.solved_from
    buf = io.StringIO()
    buf.write(_CSV_HEADER + "\n")
    if which == "11":
        for j in range(row0, spec.n_t + 1):
            buf.write(f"{which},{_fmt(t[j])},,,{_fmt(vals[j])}\n")
    elif which in ("12", "2hat2"):
        for j in range(row0, spec.n_t + 1):
            tj = _fmt(t[j])
            for i in range(spec.m + 1):
                buf.write(f"{which},{tj},{_fmt(s[i])},,{_fmt(vals[j, i])}\n")
    elif which == "22":
        for j in range(row0, spec.n_t + 1):
            tj = _fmt(t[j])
            for i in range(spec.m + 1):
                si = _fmt(s[i])
                for l in range(spec.m + 1):
                    buf.write(f"{which},{tj},{si},{_fmt(s[l])},{_fmt(vals[j, i, l])}\n")
    else:
        raise ParameterError(f"unknown kernel id {which!r}")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


@dataclass
class KernelSlice:
    """A kernel restricted to whatever nodes a CSV file carried.

    values holds NaN where a node was missing from the file; ``solved_mask``
    marks present nodes.  Coordinates are sorted ascending.
    """

    kernel: str
    t: np.ndarray
    s: np.ndarray | None
    r: np.ndarray | None
    values: np.ndarray

    @property
    def solved_mask(self) -> np.ndarray:
        return ~np.isnan(self.values)


def import_csv(path: str | os.PathLike) -> KernelSlice:
    """Read a kernel CSV back into a KernelSlice (lossless at 17 digits)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != _CSV_HEADER:
        raise CSVFormatError(
            f"expected header {_CSV_HEADER!r}, got {lines[0]!r}" if lines
            else "empty file", line_no=1)

    kernel = None
    recs: list[tuple[float, float | None, float | None, float]] = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise CSVFormatError(f"expected 5 columns, got {len(parts)}", ln)
        k, ts, ss, rs, vs = parts
        if kernel is None:
            if k not in KERNEL_IDS:
                raise CSVFormatError(f"unknown kernel id {k!r}", ln)
            kernel = k
        elif k != kernel:
            raise CSVFormatError(f"mixed kernel ids {kernel!r} and {k!r}", ln)
        try:
            tv = float(ts)
            sv = float(ss) if ss != "" else None
            rv = float(rs) if rs != "" else None
            vv = float(vs)
        except ValueError as exc:
            raise CSVFormatError(f"bad number: {exc}", ln) from None
        n_coord = 1 + (sv is not None) + (rv is not None)
        expected = {"11": 1, "12": 2, "2hat2": 2, "22": 3}[kernel]
        if n_coord != expected or (rv is not None and sv is None):
            raise CSVFormatError(
                f"kernel {kernel} expects {expected} coordinate(s)", ln)
        recs.append((tv, sv, rv, vv))

    if kernel is None:
        raise CSVFormatError("no data rows", line_no=2)

    ts = np.array(sorted({rec[0] for rec in recs}))
    t_idx = {v: i for i, v in enumerate(ts)}
    if kernel == "11":
        values = np.full(len(ts), np.nan)
        for tv, _, _, vv in recs:
            values[t_idx[tv]] = vv
        return KernelSlice(kernel, ts, None, None, values)

    ss = np.array(sorted({rec[1] for rec in recs}))
    s_idx = {v: i for i, v in enumerate(ss)}
    if kernel in ("12", "2hat2"):
        values = np.full((len(ts), len(ss)), np.nan)
        for tv, sv, _, vv in recs:
            values[t_idx[tv], s_idx[sv]] = vv
        return KernelSlice(kernel, ts, ss, None, values)

    rs = np.array(sorted({rec[2] for rec in recs}))
    r_idx = {v: i for i, v in enumerate(rs)}
    values = np.full((len(ts), len(ss), len(rs)), np.nan)
    for tv, sv, rv, vv in recs:
        values[t_idx[tv], s_idx[sv], r_idx[rv]] = vv
    return KernelSlice(kernel, ts, ss, rs, values)


def max_abs_diff_slices(a: KernelSlice, b: KernelSlice):
    """Max |a-b| over nodes present in both slices, with argmax point."""
    if a.kernel != b.kernel:
        raise ParameterError(f"kernel mismatch: {a.kernel} vs {b.kernel}")
    for name, ca, cb in (("t", a.t, b.t), ("s", a.s, b.s), ("r", a.r, b.r)):
        if (ca is None) != (cb is None):
            raise ParameterError(f"{name}-coordinate presence mismatch")
        if ca is not None and (len(ca) != len(cb) or not np.array_equal(ca, cb)):
            raise ParameterError(f"{name}-coordinate sets differ")
    common = a.solved_mask & b.solved_mask
    if not common.any():
        return 0.0, None, 0
    diff = np.where(common, np.abs(a.values - b.values), -np.inf)
    idx = np.unravel_index(np.argmax(diff), diff.shape)
    coords = [float(a.t[idx[0]])]
    if a.s is not None:
        coords.append(float(a.s[idx[1]]))
    if a.r is not None:
        coords.append(float(a.r[idx[2]]))
    return float(diff[idx]), tuple(coords), int(common.sum())
