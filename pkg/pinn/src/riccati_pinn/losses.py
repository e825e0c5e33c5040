"""Loss families for the kernel system and the stratified batch sampler.

Each kernel net carries a residual loss (its transport PDE along
characteristics), a boundary loss (the lag-boundary identities at s = -d,
r = -d) and a final loss (terminal data at t = T).  All right-hand-side
source terms are evaluated through the follower networks and therefore
receive no gradient.  Quotient sources are masked to zero wherever the
follower p2hat2(t, 0) falls below a floor, mirroring the 0^2/0 = 0
convention of the underlying system on the region where the kernels
vanish.

Boundary and terminal sets are measure-zero under uniform sampling of the
box [0,T] x [-d,0]^2, so they are sampled as explicit strata with fixed
proportions.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .nets import NetBank


@dataclass
class Problem:
    """Coefficients of the single-asset kernel system."""

    b: float
    sigma: float
    d: float
    T: float

    @property
    def sig2(self) -> float:
        return self.sigma ** 2


@dataclass
class Batch:
    """Stratified sample: interior of the box, boundary (s or r at -d) and
    terminal (t = T) points."""

    t_int: torch.Tensor
    s_int: torch.Tensor
    r_int: torch.Tensor
    t_bnd: torch.Tensor
    s_bnd: torch.Tensor
    t_ter: torch.Tensor
    s_ter: torch.Tensor
    r_ter: torch.Tensor


def sample_batch(prob: Problem, n_interior: int, n_boundary: int,
                 n_terminal: int, gen: torch.Generator) -> Batch:
    """Uniform draws per stratum (proportions fixed by the caller)."""
    def u(n, lo, hi):
        return lo + (hi - lo) * torch.rand(n, generator=gen)

    return Batch(
        t_int=u(n_interior, 0.0, prob.T),
        s_int=u(n_interior, -prob.d, 0.0),
        r_int=u(n_interior, -prob.d, 0.0),
        t_bnd=u(n_boundary, 0.0, prob.T),
        s_bnd=u(n_boundary, -prob.d, 0.0),
        t_ter=torch.full((n_terminal,), prob.T),
        s_ter=u(n_terminal, -prob.d, 0.0),
        r_ter=u(n_terminal, -prob.d, 0.0),
    )


def _grad(out: torch.Tensor, var: torch.Tensor) -> torch.Tensor:
    return torch.autograd.grad(out.sum(), var, create_graph=True)[0]


def _masked_quotient(num: torch.Tensor, den: torch.Tensor,
                     floor: float) -> torch.Tensor:
    ok = den > floor
    return torch.where(ok, num / torch.clamp(den, min=floor),
                       torch.zeros_like(num))


def losses(bank: NetBank, prob: Problem, batch: Batch,
           quotient_floor: float | None = None) -> dict[str, torch.Tensor]:
    """Per-network scalar losses {residual, boundary, final} summed per
    kernel: keys '11', '12', '2hat2', '22'."""
    if quotient_floor is None:
        quotient_floor = 0.05 * prob.sig2
    b, sig2, d, T = prob.b, prob.sig2, prob.d, prob.T
    nets, fol = bank.nets, bank.followers

    t = batch.t_int.clone().requires_grad_(True)
    s = batch.s_int.clone().requires_grad_(True)
    r = batch.r_int.clone().requires_grad_(True)
    zero = torch.zeros_like(t)

    # follower sources on the interior stratum
    f12_t0 = fol["12"](t, zero)
    f2h_t0 = fol["2hat2"](t, zero)
    f22_s0 = fol["22"](t, s, zero)
    f22_0r = fol["22"](t, zero, r)

    # p11: d/dt p11 = p12(t,0)^2 / p2hat2(t,0)
    p11 = nets["11"](t)
    res11 = _grad(p11, t) - _masked_quotient(f12_t0 ** 2, f2h_t0,
                                             quotient_floor)
    l11_r = (res11 ** 2).mean()
    p11_T = nets["11"](torch.full((1,), T))
    l11_f = ((p11_T - 1.0) ** 2).mean()

    # p12: (d_t - d_s) p12 = p12(t,0) p22(t,s,0) / p2hat2(t,0)
    p12 = nets["12"](t, s)
    res12 = (_grad(p12, t) - _grad(p12, s)
             - _masked_quotient(f12_t0 * f22_s0, f2h_t0, quotient_floor))
    l12_r = (res12 ** 2).mean()
    f11_b = fol["11"](batch.t_bnd)
    l12_b = ((nets["12"](batch.t_bnd, torch.full_like(batch.t_bnd, -d))
              - b * f11_b) ** 2).mean()
    l12_f = (nets["12"](batch.t_ter, batch.s_ter) ** 2).mean()

    # p2hat2: (d_t - d_s) p2hat2 = 0
    p2h = nets["2hat2"](t, s)
    res2h = _grad(p2h, t) - _grad(p2h, s)
    l2h_r = (res2h ** 2).mean()
    l2h_b = ((nets["2hat2"](batch.t_bnd, torch.full_like(batch.t_bnd, -d))
              - sig2 * f11_b) ** 2).mean()
    l2h_f = (nets["2hat2"](batch.t_ter, batch.s_ter) ** 2).mean()

    # p22: (d_t - d_s - d_r) p22 = p22(t,s,0) p22(t,0,r) / p2hat2(t,0)
    p22 = nets["22"](t, s, r)
    res22 = (_grad(p22, t) - _grad(p22, s) - _grad(p22, r)
             - _masked_quotient(f22_s0 * f22_0r, f2h_t0, quotient_floor))
    l22_r = (res22 ** 2).mean()
    minus_d = torch.full_like(batch.t_bnd, -d)
    f12_b = fol["12"](batch.t_bnd, batch.s_bnd)
    l22_b = (((nets["22"](batch.t_bnd, batch.s_bnd, minus_d)
               - b * f12_b) ** 2).mean()
             + ((nets["22"](batch.t_bnd, minus_d, batch.s_bnd)
                 - b * f12_b) ** 2).mean())
    l22_f = (nets["22"](batch.t_ter, batch.s_ter, batch.r_ter) ** 2).mean()

    return {
        "11": l11_r + l11_f,
        "12": l12_r + l12_b + l12_f,
        "2hat2": l2h_r + l2h_b + l2h_f,
        "22": l22_r + l22_b + l22_f,
    }
