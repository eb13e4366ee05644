"""Explicit convergence certificates from drift and minorization constants.

Given a Lyapunov pair (alpha, b), a minorization mass over one period T, and
the weight level m(R) outside the small set, :func:`harris_rate` runs the
constant chain that turns those ingredients into a concrete contraction
factor per period and hence an exponential rate lambda with prefactor C.
Every intermediate of the chain is kept on the output record so reports can
show exactly where a weak rate comes from.

The second half of the module is a small calculus of envelopes
C * t^power * exp(-a t): closed-form convolution via the Euler Beta function,
and the composition rule that upgrades an L1-weighted decay envelope to a
stronger-norm envelope through an n-fold Duhamel expansion
(:func:`lp_rate_compose`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Optional

from kfpcert.model import ContractError


@dataclass(frozen=True)
class HarrisInputs:
    """Certified ingredients: Lyapunov pair, period, minorization mass, weight level.

    ``mu_mass`` is the total mass of the minorizing measure over one period
    and must lie in (0, 2); ``m_of_R`` is the minimum of the weight outside
    the small ball and must dominate 8 b / alpha for the chain to close.
    """

    alpha: float
    b: float
    T: float
    mu_mass: float
    m_of_R: float

    def __post_init__(self):
        if self.alpha <= 0.0 or self.b <= 0.0 or self.T <= 0.0:
            raise ContractError(
                f"alpha, b, T must be positive, got "
                f"({self.alpha}, {self.b}, {self.T})"
            )
        if not (0.0 < self.mu_mass < 2.0):
            raise ContractError(f"mu_mass must lie in (0, 2), got {self.mu_mass}")
        if self.m_of_R < 8.0 * self.b / self.alpha:
            raise ContractError(
                f"m_of_R = {self.m_of_R} is below the closure threshold "
                f"8b/alpha = {8.0 * self.b / self.alpha}"
            )


@dataclass(frozen=True)
class HarrisRate:
    """Full constant chain ending in the rate lambda and prefactor C."""

    gamma: float
    K: float
    A: float
    gamma1: float
    gamma2: float
    gamma3: float
    gamma4: float
    gamma5: float
    beta: float
    lam: float
    C: float

    def to_dict(self) -> dict:
        return asdict(self)


def doeblin_contraction(mu_mass: float) -> float:
    """L1 contraction factor 1 - mu_mass/2 over one period for mass-zero data."""
    if not (0.0 < mu_mass < 2.0):
        raise ContractError(f"mu_mass must lie in (0, 2), got {mu_mass}")
    return 1.0 - mu_mass / 2.0


def harris_rate(inputs: HarrisInputs) -> HarrisRate:
    """Run the constant chain from (alpha, b, T, mu_mass, m_of_R) to (lambda, C).

    gamma  = exp(-alpha T)            decay of the weight over one period
    K      = (1 - gamma) b / alpha    accumulated offset
    A      = m_of_R / 4               small-set weight threshold
    gamma1 = 1 - mu_mass/2            Doeblin factor on concentrated data
    gamma2 = max((gamma1+1)/2, gamma) factor after mixing in the weight
    beta   = (gamma2 - gamma1)/K      largest admissible norm-mix parameter
    gamma3 = (gamma+1)/2              factor for weight-dominated data
    gamma4 = (gamma3 + 1/beta)/(1 + 1/beta)
    gamma5 = max(gamma2, gamma4)      contraction of the mixed norm
    lam    = -ln(gamma5)/T, and C = ((1+beta)/beta) max(1, b/alpha)/gamma5.

    beta takes its extreme admissible value and C is assembled from the
    norm-equivalence constants; both choices are deterministic certificates,
    not optimizations.
    """
    a, b, T = inputs.alpha, inputs.b, inputs.T
    gamma = math.exp(-a * T)
    K = (1.0 - gamma) * b / a
    A = inputs.m_of_R / 4.0
    # Closure condition of the chain; equivalent to m_of_R >= 8b/alpha.
    if K / A > (1.0 - gamma) / 2.0 * (1.0 + 1e-12):
        raise ContractError(
            f"chain does not close: K/A = {K / A:.6g} exceeds (1-gamma)/2"
        )
    gamma1 = 1.0 - inputs.mu_mass / 2.0
    gamma2 = max((gamma1 + 1.0) / 2.0, gamma)
    beta = (gamma2 - gamma1) / K
    gamma3 = (gamma + 1.0) / 2.0
    gamma4 = (gamma3 + 1.0 / beta) / (1.0 + 1.0 / beta)
    gamma5 = max(gamma2, gamma4)
    assert 0.0 < gamma5 < 1.0, f"contraction factor left (0,1): {gamma5}"
    lam = -math.log(gamma5) / T
    C = (1.0 + beta) / beta * max(1.0, b / a) / gamma5
    return HarrisRate(
        gamma=gamma,
        K=K,
        A=A,
        gamma1=gamma1,
        gamma2=gamma2,
        gamma3=gamma3,
        gamma4=gamma4,
        gamma5=gamma5,
        beta=beta,
        lam=lam,
        C=C,
    )


# ---------------------------------------------------------------------------
# Envelope calculus


@dataclass(frozen=True)
class Envelope:
    """The function t -> C * t^power * exp(-a t) on (0, inf).

    Negative powers encode integrable short-time singularities (as produced
    by smoothing estimates); positive powers appear after convolution.
    """

    C: float
    power: float
    a: float

    def __post_init__(self):
        if self.C <= 0.0:
            raise ContractError(f"envelope prefactor must be positive, got {self.C}")

    def __call__(self, t: float) -> float:
        if t <= 0.0:
            raise ContractError(f"envelopes are defined on (0, inf), got t={t}")
        return self.C * t**self.power * math.exp(-self.a * t)

    def to_dict(self) -> dict:
        return asdict(self)


def _beta_fn(x: float, y: float) -> float:
    """Euler Beta via log-Gamma, stable for fractional arguments."""
    return math.exp(math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y))


def envelope_convolve(e1: Envelope, e2: Envelope) -> Envelope:
    """Exact time-convolution of two envelopes with equal exponential rates.

    (C1 t^p e^{-at}) * (C2 t^q e^{-at}) = C1 C2 B(p+1, q+1) t^{p+q+1} e^{-at},
    convergent when p, q > -1.
    """
    if abs(e1.a - e2.a) > 1e-12 * max(1.0, abs(e1.a)):
        raise ContractError(
            f"convolution needs equal exponential rates, got {e1.a} and {e2.a}"
        )
    if e1.power <= -1.0 or e2.power <= -1.0:
        raise ContractError(
            f"convolution integral diverges at 0 for powers "
            f"({e1.power}, {e2.power})"
        )
    C = e1.C * e2.C * _beta_fn(e1.power + 1.0, e2.power + 1.0)
    return Envelope(C=C, power=e1.power + e2.power + 1.0, a=e1.a)


def _sup_factor(k: float, delta: float) -> float:
    """sup over t > 0 of t^k e^{-delta t} for k >= 0, delta > 0; 0^0 = 1."""
    if k == 0.0:
        return 1.0
    return (k / delta) ** k * math.exp(-k)


def lp_rate_compose(
    l1: Envelope,
    reg_alpha: float,
    a_target: float,
    n_override: Optional[int] = None,
) -> Envelope:
    """Upgrade a flat L1-decay envelope to a stronger norm at a slower rate.

    ``l1`` must be flat (power 0): ||S(t)|| <= C e^{-at} in the weighted L1
    norm.  ``reg_alpha`` is the short-time smoothing exponent of the
    L1 -> target-norm estimate, (5d+2)/4 in dimension d.  The n-fold Duhamel
    expansion splits the target-norm semigroup into

    * the bare term, bounded by C;
    * n-1 iterated-convolution terms, the l-th a flat (l+1)-fold convolution
      C^{l+1} t^l / l! e^{-at};
    * one closing term carrying the smoothing singularity: the (n-1)-fold
      convolution is taken in its integrated form
      C^{n-1}/Gamma(n-1-reg_alpha) t^{n-reg_alpha-2} e^{-at} (the Beta-chain
      prefactor with the power shifted down by reg_alpha; n > reg_alpha + 2
      keeps the power positive), then convolved with two more flat envelopes.

    Each term is then flattened at the slower rate ``a_target`` < a via
    sup_t t^k e^{-(a - a_target) t} = (k/(a-a_target))^k e^{-k}, and the
    prefactors are summed into a single flat envelope C' e^{-a_target t}.
    """
    if l1.power != 0.0:
        raise ContractError(f"l1 must be a flat envelope, got power {l1.power}")
    if reg_alpha <= 0.0:
        raise ContractError(f"reg_alpha must be positive, got {reg_alpha}")
    if a_target >= l1.a:
        raise ContractError(
            f"a_target = {a_target} must be strictly below the L1 rate {l1.a}"
        )
    n = math.ceil(reg_alpha + 2.0) + 1 if n_override is None else int(n_override)
    if not n > reg_alpha + 2.0:
        raise ContractError(
            f"need n > reg_alpha + 2 = {reg_alpha + 2.0}, got n = {n}"
        )
    delta = l1.a - a_target

    total = l1.C
    conv = l1
    for _ in range(1, n):
        conv = envelope_convolve(conv, l1)
        total += conv.C * _sup_factor(conv.power, delta)

    sing = Envelope(
        C=l1.C ** (n - 1) / math.gamma(n - 1.0 - reg_alpha),
        power=n - reg_alpha - 2.0,
        a=l1.a,
    )
    closing = envelope_convolve(envelope_convolve(sing, l1), l1)
    total += closing.C * _sup_factor(closing.power, delta)

    return Envelope(C=total, power=0.0, a=a_target)
