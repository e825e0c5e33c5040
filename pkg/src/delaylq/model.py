"""Problem parameters and the feasibility recursion.

The controlled dynamics are ``dX_t = a_{t-d} (b dt + sigma dW_t)`` with cost
``E[(X_T)^2]``.  A sufficient condition for the kernel system to stay
well-posed over the whole horizon is expressed through the recursion

    a_0 = 1,    a_{n+1} = a_n - (d / a_n) (b / sigma)^2,

which lower-bounds the leading kernel slice by slice.  The condition holds
when the recursion stays positive for at least ceil(T/d) steps; it is
sufficient, not necessary, so callers treat the report as advisory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of the delayed LQ problem.

    b      drift coefficient (per unit time)
    sigma  volatility coefficient (per sqrt time), strictly positive
    d      control delay (time), >= 0
    T      horizon (time), > 0
    """

    b: float
    sigma: float
    d: float
    T: float

    def __post_init__(self):
        for name in ("b", "sigma", "d", "T"):
            object.__setattr__(self, name, _require_finite(name, getattr(self, name)))
        if self.sigma <= 0.0:
            raise ParameterError(f"sigma must be > 0, got {self.sigma}")
        if self.d < 0.0:
            raise ParameterError(f"d must be >= 0, got {self.d}")
        if self.T <= 0.0:
            raise ParameterError(f"T must be > 0, got {self.T}")


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of the feasibility recursion.

    a_seq            computed prefix of the sequence, a_seq[0] == 1; includes
                     the first nonpositive term when one is reached
    n_cal            last index with a_n > 0 before the first nonpositive
                     term; ``None`` is the sentinel "recursion stayed positive
                     up to the cap"
    sufficient_holds True when n_cal >= 2 and T < n_cal * d (the sentinel
                     satisfies the inequality by convention)
    margin           n_cal * d - T; +inf for the sentinel
    """

    a_seq: tuple[float, ...]
    n_cal: int | None
    sufficient_holds: bool
    margin: float


def default_cap(params: ModelParams) -> int:
    """Cap that makes the sentinel rigorous: with ceil(T/d)+1 positive
    terms the condition T < n*d already holds; one more term resolves the
    exact index when it sits right at that edge."""
    if params.d == 0.0:
        return 1
    return int(math.ceil(params.T / params.d)) + 2


def feasibility(params: ModelParams, cap: int | None = None) -> FeasibilityReport:
    """Run the recursion up to ``cap`` steps and evaluate the sufficient
    condition.

    The recursion is never continued past a nonpositive term (the ratio
    d/a_n would flip sign there).  ``a_1 <= 0`` reports n_cal = 0.  For
    d = 0 the condition degenerates to sigma != 0, which ModelParams
    already enforces, so the report is immediately positive.
    """
    if cap is None:
        cap = default_cap(params)
    cap = int(cap)
    if cap < 1:
        raise ParameterError(f"cap must be >= 1, got {cap}")

    if params.d == 0.0:
        return FeasibilityReport(a_seq=(1.0,), n_cal=None,
                                 sufficient_holds=True, margin=math.inf)

    step = params.d * (params.b / params.sigma) ** 2
    a_seq = [1.0]
    n_cal: int | None = None
    for n in range(cap):
        nxt = a_seq[-1] - step / a_seq[-1]
        a_seq.append(nxt)
        if nxt <= 0.0:
            n_cal = n  # a_n > 0 and a_{n+1} <= 0
            break

    if n_cal is None:
        sufficient = True  # sentinel: stayed positive within cap
        margin = math.inf
    else:
        sufficient = n_cal >= 2 and params.T < n_cal * params.d
        margin = n_cal * params.d - params.T
    return FeasibilityReport(a_seq=tuple(a_seq), n_cal=n_cal,
                             sufficient_holds=sufficient, margin=margin)
