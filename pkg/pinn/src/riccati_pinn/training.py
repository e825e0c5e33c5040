"""Two-step training loop: gradient step on the trainable parameters with
followers fixed, then follower synchronization.

The main-parameter losses are disjoint across the four networks (every
cross-kernel source goes through a follower), so one optimizer step on the
summed loss applies exactly the per-network updates of the scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .losses import Problem, losses, sample_batch
from .nets import NetBank


class TrainingError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass
class Hyper:
    """Declared defaults; the underlying scheme does not prescribe them."""

    steps: int = 4000
    batch_interior: int = 600
    batch_boundary: int = 300
    batch_terminal: int = 100
    lr: float = 2e-3
    seed: int = 0
    quotient_floor: float | None = None
    width: int = 32
    depth: int = 3


@dataclass
class TrainResult:
    bank: NetBank
    history: list[dict[str, float]] = field(default_factory=list)


def train(prob: Problem, hyper: Hyper) -> TrainResult:
    """Run the two-step scheme for hyper.steps batches.

    Deterministic at fixed seed and thread count.  Diverging losses (NaN)
    raise TrainingError with the step index.
    """
    bank = NetBank.create(width=hyper.width, depth=hyper.depth, lr=hyper.lr,
                          seed=hyper.seed)
    gen = torch.Generator().manual_seed(hyper.seed + 1)
    history: list[dict[str, float]] = []
    for step in range(hyper.steps):
        batch = sample_batch(prob, hyper.batch_interior, hyper.batch_boundary,
                             hyper.batch_terminal, gen)
        per_net = losses(bank, prob, batch, hyper.quotient_floor)
        total = sum(per_net.values())
        if not math.isfinite(total.detach().item()):
            raise TrainingError(f"loss diverged at step {step}", step=step)
        bank.optimizer.zero_grad()
        total.backward()
        bank.optimizer.step()
        bank.sync_followers()
        history.append({k: v.detach().item() for k, v in per_net.items()})
    return TrainResult(bank=bank, history=history)
