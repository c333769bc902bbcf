"""Recovery-error bound and the cone-constraint check.

The worst-case bound on the squared coefficient error of the solver
depends on the noise fraction eta, the coefficient dissimilarity gamma,
the support size, restricted-isometry constants of the block dictionary,
and the common signal norm f0. The cone constraint is the inequality the
error vector of any optimal solution must satisfy relative to the true
support; both are checkable properties on empirical solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator
from .model import as_vector


@dataclass
class BoundInputs:
    """Parameters of the recovery bound.

    ``t0`` is the planted support size, ``m`` the block size used when
    splitting the off-support error, ``delta_m`` and ``delta_m_t0`` the
    isometry constants for sets of size m and m + t0, and ``f0`` the
    common signal norm.
    """

    eta: float
    gamma: float
    t0: int
    m: int
    delta_m: float
    delta_m_t0: float
    f0: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must be in [0, 1)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.t0 < 1 or self.m < 1:
            raise ValueError("t0 and m must be positive")
        if self.delta_m < 0.0 or self.delta_m_t0 < 0.0:
            raise ValueError("isometry constants must be non-negative")
        if self.f0 <= 0.0:
            raise ValueError("f0 must be positive")


def bound_constant(inputs: BoundInputs) -> float:
    """The constant scaling the on-support error.

    Evaluates ``(4 eta sqrt(m) + gamma t0 sqrt(1 + delta_m)) /
    (sqrt(m (1 - delta_m_t0)) - sqrt(t0 (1 + delta_m)))`` and raises
    :class:`DegenerateDenominator` when the denominator is not positive
    (the bound is then vacuous).
    """
    shrink = 1.0 - inputs.delta_m_t0
    if shrink <= 0.0:
        raise DegenerateDenominator(f"1 - delta_(m+t0) = {shrink:.4g} is not positive")
    denom = math.sqrt(inputs.m * shrink) - math.sqrt(inputs.t0 * (1.0 + inputs.delta_m))
    if denom <= 0.0:
        raise DegenerateDenominator(f"denominator {denom:.4g} is not positive")
    numer = 4.0 * inputs.eta * math.sqrt(inputs.m) + inputs.gamma * inputs.t0 * math.sqrt(
        1.0 + inputs.delta_m
    )
    return numer / denom


def recovery_bound(inputs: BoundInputs) -> float:
    """Upper bound on the squared error of the stacked coefficients.

    ``[(t0 / m) (C + gamma sqrt(t0))^2 + C^2] f0^2`` with C from
    :func:`bound_constant`.
    """
    c = bound_constant(inputs)
    t0, m = inputs.t0, inputs.m
    return ((t0 / m) * (c + inputs.gamma * math.sqrt(t0)) ** 2 + c**2) * inputs.f0**2


@dataclass
class TheoryCheckInstance:
    """Error vector of one solve together with the planted support.

    ``h`` is the stacked coefficient error of length 2N; ``support``
    indexes atoms (applied to both modality halves of ``h``). ``u`` is
    the common activity bound of the instance.
    """

    h: np.ndarray
    support: np.ndarray
    gamma: float
    u: float

    def __post_init__(self):
        self.h = as_vector(self.h, "h")
        if self.h.size % 2 != 0:
            raise ValueError("h must stack two equal-length halves")
        self.support = np.sort(np.asarray(self.support, dtype=int))
        n = self.h.size // 2
        if self.support.size > n:
            raise ValueError("support larger than one modality half")
        if self.support.size and (self.support[0] < 0 or self.support[-1] >= n):
            raise ValueError("support index out of range")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.u <= 0.0:
            raise ValueError("u must be positive")


def cone_constraint_check(inst: TheoryCheckInstance) -> float:
    """Signed residual of the cone constraint; non-positive means it holds.

    Returns ``||h_offsupport||_1 - ||h_support||_1 - gamma u |support|``
    where the support is applied to both modality halves of ``h``.
    """
    n = inst.h.size // 2
    stacked = np.concatenate([inst.support, inst.support + n])
    on = np.zeros(inst.h.size, dtype=bool)
    on[stacked] = True
    l1_on = float(np.sum(np.abs(inst.h[on])))
    l1_off = float(np.sum(np.abs(inst.h[~on])))
    return l1_off - l1_on - inst.gamma * inst.u * inst.support.size
