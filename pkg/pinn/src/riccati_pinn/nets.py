"""Networks: one trainable MLP per kernel plus a frozen follower copy.

The four kernels take 1, 2, 2 and 3 inputs (t; t,s; t,s; t,s,r).  Follower
networks mirror the trainable ones but never receive gradients; they are
synchronized to the trainable weights after every batch and serve as the
fixed source terms of the residual and boundary losses, which keeps the
unstable quotient terms out of the gradient flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

KERNEL_KEYS = ("11", "12", "2hat2", "22")
_INPUT_DIMS = {"11": 1, "12": 2, "2hat2": 2, "22": 3}


class KernelNet(nn.Module):
    """Small tanh MLP; smooth activations keep the autodiff transport
    derivatives well-defined."""

    def __init__(self, in_dim: int, width: int = 32, depth: int = 3):
        super().__init__()
        layers: list[nn.Module] = []
        last = in_dim
        for _ in range(depth):
            layers += [nn.Linear(last, width), nn.Tanh()]
            last = width
        layers.append(nn.Linear(last, 1))
        self.body = nn.Sequential(*layers)

    def forward(self, *coords: torch.Tensor) -> torch.Tensor:
        x = torch.stack(coords, dim=-1)
        return self.body(x).squeeze(-1)


@dataclass
class NetBank:
    """Trainable nets, follower copies and the optimizer over the
    trainable parameters only."""

    nets: dict[str, KernelNet]
    followers: dict[str, KernelNet]
    optimizer: torch.optim.Optimizer
    lr: float

    @classmethod
    def create(cls, width: int = 32, depth: int = 3, lr: float = 1e-3,
               seed: int = 0) -> "NetBank":
        torch.manual_seed(seed)
        nets = {k: KernelNet(_INPUT_DIMS[k], width, depth) for k in KERNEL_KEYS}
        followers = {k: KernelNet(_INPUT_DIMS[k], width, depth)
                     for k in KERNEL_KEYS}
        for k in KERNEL_KEYS:
            followers[k].load_state_dict(nets[k].state_dict())
            for p in followers[k].parameters():
                p.requires_grad_(False)
        params = [p for k in KERNEL_KEYS for p in nets[k].parameters()]
        opt = torch.optim.Adam(params, lr=lr)
        return cls(nets=nets, followers=followers, optimizer=opt, lr=lr)

    def sync_followers(self) -> None:
        for k in KERNEL_KEYS:
            self.followers[k].load_state_dict(self.nets[k].state_dict())

    def follower_grads_are_none(self) -> bool:
        return all(p.grad is None
                   for k in KERNEL_KEYS
                   for p in self.followers[k].parameters())

    def state_dicts(self):
        return {k: self.nets[k].state_dict() for k in KERNEL_KEYS}
