"""Evaluation of trained networks on the exact solver grid nodes and CSV
export in the shared kernel schema.

Schema contract (byte-compatible with the grid solver's files): header
``kernel,t,s,r,value``; s/r empty for p11, r empty for p12/p2hat2; values
with 17 significant digits; rows lexicographic in (t, s, r).  Node layout:
t_j = j*h for j = 0..n_t with h = d/m and n_t = round(T/h); s_i = -d + i*h.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch

from .nets import NetBank


@dataclass(frozen=True)
class GridLayout:
    """Node layout matching the grid solver's discretization."""

    h: float
    m: int
    n_t: int
    d: float
    T: float

    @classmethod
    def build(cls, d: float, T: float, m: int) -> "GridLayout":
        h = d / m
        n_t = round(T / h)
        return cls(h=h, m=m, n_t=n_t, d=d, T=n_t * h)

    def t_nodes(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.h

    def s_nodes(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.h - self.d


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@torch.no_grad()
def evaluate_on_grid(bank: NetBank, layout: GridLayout) -> dict[str, np.ndarray]:
    """Network values at every node, keyed by kernel id."""
    t = torch.from_numpy(layout.t_nodes()).float()
    s = torch.from_numpy(layout.s_nodes()).float()
    n_t1, m1 = layout.n_t + 1, layout.m + 1

    out: dict[str, np.ndarray] = {}
    out["11"] = bank.nets["11"](t).double().numpy()

    tt = t[:, None].expand(n_t1, m1).reshape(-1)
    ss = s[None, :].expand(n_t1, m1).reshape(-1)
    for key in ("12", "2hat2"):
        vals = bank.nets[key](tt, ss)
        out[key] = vals.double().numpy().reshape(n_t1, m1)

    ttt = t[:, None, None].expand(n_t1, m1, m1).reshape(-1)
    sss = s[None, :, None].expand(n_t1, m1, m1).reshape(-1)
    rrr = s[None, None, :].expand(n_t1, m1, m1).reshape(-1)
    out["22"] = bank.nets["22"](ttt, sss, rrr).double().numpy().reshape(
        n_t1, m1, m1)
    return out


def export_kernels(bank: NetBank, layout: GridLayout,
                   out_dir: str | os.PathLike) -> list[str]:
    """Write p11.csv, p12.csv, p2hat2.csv, p22.csv under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    values = evaluate_on_grid(bank, layout)
    t = layout.t_nodes()
    s = layout.s_nodes()
    written = []
    for key in ("11", "12", "2hat2", "22"):
        path = os.path.join(out_dir, f"p{key}.csv")
        with open(path, "w") as fh:
            fh.write("kernel,t,s,r,value\n")
            if key == "11":
                for j in range(layout.n_t + 1):
                    fh.write(f"{key},{_fmt(t[j])},,,{_fmt(values[key][j])}\n")
            elif key in ("12", "2hat2"):
                for j in range(layout.n_t + 1):
                    tj = _fmt(t[j])
                    for i in range(layout.m + 1):
                        fh.write(f"{key},{tj},{_fmt(s[i])},,"
                                 f"{_fmt(values[key][j, i])}\n")
            else:
                for j in range(layout.n_t + 1):
                    tj = _fmt(t[j])
                    for i in range(layout.m + 1):
                        si = _fmt(s[i])
                        for l in range(layout.m + 1):
                            fh.write(f"{key},{tj},{si},{_fmt(s[l])},"
                                     f"{_fmt(values[key][j, i, l])}\n")
        written.append(path)
    return written


def export_loss_history(history: list[dict[str, float]],
                        out_dir: str | os.PathLike) -> str:
    path = os.path.join(out_dir, "loss_history.csv")
    with open(path, "w") as fh:
        fh.write("step,l11,l12,l2hat2,l22\n")
        for k, row in enumerate(history):
            fh.write(f"{k},{_fmt(row['11'])},{_fmt(row['12'])},"
                     f"{_fmt(row['2hat2'])},{_fmt(row['22'])}\n")
    return path
