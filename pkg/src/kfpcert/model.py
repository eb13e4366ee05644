"""Model definitions: coefficient fields for kinetic equations on (x, v) phase space.

Two named models are provided, plus a custom escape hatch:

* the kinetic Fokker-Planck equation with confining potential V(x) = <x>^g / g
  and friction potential W(v) = <v>^b / b, where <s>^2 = 1 + |s|^2;
* the kinetic FitzHugh-Nagumo equation with drift A = a*x - b*v in x and
  cubic drift B = v(v-1)(v-c) + x in v.

Every model adapts to a single canonical divergence form

    d/dt f = div_x((-v + Phi(x)) f) + div_v(B(x, v) f) + K * Lap_v f

via :func:`to_general_form`.  All derivatives are closed-form; finite
differences appear only in validation cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray


class ContractError(ValueError):
    """A precondition on operation inputs was violated."""


class ValidationError(ValueError):
    """A constructed object failed its own consistency checks."""


def _as_array(p, name: str) -> Array:
    a = np.atleast_1d(np.asarray(p, dtype=float))
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} must be finite, got {p!r}")
    return a


def bracket(s: Array) -> Array:
    """Japanese bracket <s> = sqrt(1 + |s|^2), elementwise norm over the last axis."""
    s = np.asarray(s, dtype=float)
    return np.sqrt(1.0 + np.sum(s * s, axis=-1))


def _u_pow(s: Array, p: float) -> Array:
    """First derivative family: d/ds of <s>^(p+2)/(p+2) is s<s>^p (componentwise radial)."""
    return s * (1.0 + s * s) ** (p / 2.0)


def _u_pow_d1(s: Array, p: float) -> Array:
    """d/ds [s <s>^p] = <s>^(p-2) (1 + (p+1) s^2)."""
    return (1.0 + s * s) ** ((p - 2.0) / 2.0) * (1.0 + (p + 1.0) * s * s)


def _u_pow_d2(s: Array, p: float) -> Array:
    """d^2/ds^2 [s <s>^p] = s <s>^(p-4) (3p + p(p+1) s^2)."""
    return s * (1.0 + s * s) ** ((p - 4.0) / 2.0) * (3.0 * p + p * (p + 1.0) * s * s)


def _u_pow_d3(s: Array, p: float) -> Array:
    """Third derivative of s<s>^p, used by coefficient-smoothness sweeps."""
    s2 = s * s
    poly = 3.0 * p + 6.0 * p * (p - 1.0) * s2 + p * (p - 1.0) * (p + 1.0) * s2 * s2
    return (1.0 + s2) ** ((p - 6.0) / 2.0) * poly


@dataclass(frozen=True)
class PotentialRecord:
    """Closed-form values of the confining and friction potentials at one point."""

    V: float
    grad_V: Array
    hess_V: Array
    W_v: float
    grad_W_v: Array
    lap_W_v: float


@dataclass(frozen=True)
class KineticFokkerPlanck:
    """Kinetic Fokker-Planck model with V(x) = <x>^gamma/gamma, W(v) = <v>^beta/beta.

    Requires gamma >= 1 and beta >= 2 so the friction drift dominates at
    large |v| and the confinement is at least linear at infinity.
    """

    gamma: float = 2.0
    beta: float = 2.0
    d: int = 1

    def __post_init__(self):
        if not (self.gamma >= 1.0):
            raise ValidationError(f"gamma must be >= 1, got {self.gamma}")
        if not (self.beta >= 2.0):
            raise ValidationError(f"beta must be >= 2, got {self.beta}")
        if self.d < 1:
            raise ValidationError(f"dimension must be positive, got {self.d}")


@dataclass(frozen=True)
class FitzHughNagumo:
    """Kinetic FitzHugh-Nagumo model: x-drift a*x - b*v, v-drift v(v-1)(v-c) + x."""

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    d: int = 1

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0.0:
            raise ValidationError(
                f"FitzHugh-Nagumo parameters must be positive, got "
                f"a={self.a}, b={self.b}, c={self.c}"
            )
        if self.d != 1:
            raise ValidationError("the FitzHugh-Nagumo model is one dimensional")


@dataclass(frozen=True)
class CustomModel:
    """User-supplied coefficient closures for the canonical divergence form.

    ``phi`` and ``b_field`` take (x, v) arrays of shape (d,) and return arrays
    of shape (d,); ``w_pot`` returns a scalar with grad_v w_pot == b_field.
    Optional derivative closures feed the smoothness sweeps; when absent those
    sweeps fall back to finite differences.
    """

    phi: Callable[[Array], Array]
    b_field: Callable[[Array, Array], Array]
    K: float
    w_pot: Callable[[Array, Array], float]
    d: int = 1
    div_x_phi: Optional[Callable[[Array], float]] = None
    div_v_b: Optional[Callable[[Array, Array], float]] = None

    def __post_init__(self):
        if self.K <= 0.0:
            raise ValidationError(f"diffusion constant must be positive, got {self.K}")


ModelSpec = KineticFokkerPlanck | FitzHughNagumo | CustomModel


def eval_potential(spec: KineticFokkerPlanck, x, v) -> PotentialRecord:
    """Evaluate V, W and their derivatives for the kinetic Fokker-Planck model.

    V(x) = <x>^gamma / gamma and W(v) = <v>^beta / beta with closed-form
    gradient, Hessian (of V) and Laplacian (of W).
    """
    if not isinstance(spec, KineticFokkerPlanck):
        raise ContractError("eval_potential requires a KineticFokkerPlanck spec")
    x = _as_array(x, "x")
    v = _as_array(v, "v")
    if x.shape != (spec.d,) or v.shape != (spec.d,):
        raise ContractError(
            f"point dimension mismatch: expected d={spec.d}, "
            f"got x{x.shape}, v{v.shape}"
        )
    g, b = spec.gamma, spec.beta
    bx = float(bracket(x))
    bv = float(bracket(v))
    V = bx**g / g
    # grad V = x <x>^(g-2); Hessian = <x>^(g-2) I + (g-2) <x>^(g-4) x x^T.
    grad_V = x * bx ** (g - 2.0)
    hess_V = bx ** (g - 2.0) * np.eye(spec.d) + (g - 2.0) * bx ** (g - 4.0) * np.outer(
        x, x
    )
    W_v = bv**b / b
    grad_W = v * bv ** (b - 2.0)
    lap_W = spec.d * bv ** (b - 2.0) + (b - 2.0) * float(np.dot(v, v)) * bv ** (b - 4.0)
    return PotentialRecord(V, grad_V, hess_V, W_v, grad_W, lap_W)


def drift_fields(spec: ModelSpec, x, v) -> tuple[Array, Array]:
    """Drift coefficients of the named equation, before any change of variables.

    For FitzHugh-Nagumo returns (A, B) = (a*x - b*v, v(v-1)(v-c) + x).  For
    the kinetic Fokker-Planck model returns the x-transport coefficient -v
    and the v-drift grad V(x) + grad W(v).
    """
    x = _as_array(x, "x")
    v = _as_array(v, "v")
    d = spec.d
    if x.shape != (d,) or v.shape != (d,):
        raise ContractError(
            f"point dimension mismatch: expected d={d}, got x{x.shape}, v{v.shape}"
        )
    if isinstance(spec, FitzHughNagumo):
        A = spec.a * x - spec.b * v
        B = v * (v - 1.0) * (v - spec.c) + x
        return A, B
    if isinstance(spec, KineticFokkerPlanck):
        rec = eval_potential(spec, x, v)
        return -v, rec.grad_V + rec.grad_W_v
    if isinstance(spec, CustomModel):
        return -v + spec.phi(x), spec.b_field(x, v)
    raise ContractError(f"unknown model spec {type(spec).__name__}")


@dataclass(frozen=True)
class GeneralKFP:
    """Canonical divergence form d/dt f = div_x((-v+Phi)f) + div_v(Bf) + K Lap_v f.

    ``phi`` and ``b_field`` are vectorized over trailing point axes: they
    accept x, v of shape (..., d) and return shape (..., d).  Scalar fields
    (divergences, potential) return shape (...).  ``M`` is the Lipschitz
    constant of Phi, clamped to >= 1 by convention so the flow estimates of
    the spreading machinery apply verbatim.

    ``transport_phi`` is the drift of the characteristic flow dx/dt = v + phi
    obtained by rewriting the divergence form as a transport equation; it is
    -Phi, and the spreading machinery consumes it rather than Phi itself.
    """

    phi: Callable[[Array], Array]
    b_field: Callable[[Array, Array], Array]
    K: float
    w_pot: Callable[[Array, Array], Array]
    M: float = 1.0
    d: int = 1
    div_x_phi: Callable[[Array], Array] = None
    div_v_b: Callable[[Array, Array], Array] = None
    derivs_x_phi: Callable[[Array, int], Array] = None
    derivs_v_b: Callable[[Array, Array, int], Array] = None
    derivs_x_b: Callable[[Array, Array, int], Array] = None
    label: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.K <= 0.0:
            raise ValidationError(f"diffusion constant must be positive, got {self.K}")
        if self.M < 1.0:
            object.__setattr__(self, "M", 1.0)

    def transport_phi(self, x: Array) -> Array:
        """Drift of dx/dt = v + transport_phi(x); equals -Phi of the divergence form."""
        return -self.phi(x)

    def validate(self, box: float = 4.0, samples: int = 64, rtol: float = 1e-6) -> None:
        """Sampled consistency checks: grad_v W == B and |Phi(x)-Phi(y)| <= M|x-y|.

        Raises ValidationError on failure.  Uses a fixed-seed sample so the
        check is deterministic.
        """
        rng = np.random.default_rng(20260814)
        pts = rng.uniform(-box, box, size=(samples, 2, self.d))
        h = 1e-5
        for x, v in pts:
            b_val = self.b_field(x, v)
            for k in range(self.d):
                e = np.zeros(self.d)
                e[k] = h
                fd = (self.w_pot(x, v + e) - self.w_pot(x, v - e)) / (2.0 * h)
                scale = max(1.0, abs(b_val[k]))
                if abs(fd - b_val[k]) > 100.0 * rtol * scale:
                    raise ValidationError(
                        f"grad_v W != B at x={x}, v={v}, component {k}: "
                        f"fd={fd:.8g}, B={b_val[k]:.8g}"
                    )
        xs = rng.uniform(-box, box, size=(samples, self.d))
        ys = rng.uniform(-box, box, size=(samples, self.d))
        for x, y in zip(xs, ys):
            gap = float(np.linalg.norm(self.phi(x) - self.phi(y)))
            dist = float(np.linalg.norm(x - y))
            if dist > 1e-12 and gap > self.M * dist * (1.0 + rtol):
                raise ValidationError(
                    f"Phi violates Lipschitz bound M={self.M} at x={x}, y={y}"
                )


def _fhn_general(spec: FitzHughNagumo) -> GeneralKFP:
    a, b, c = spec.a, spec.b, spec.c
    inv_b3 = 1.0 / b**3

    def phi(x):
        return a * np.asarray(x, dtype=float)

    def b_field(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return inv_b3 * v * (v - b) * (v - b * c) + x

    def w_pot(x, v):
        x = np.asarray(x, dtype=float)[..., 0]
        v = np.asarray(v, dtype=float)[..., 0]
        quartic = v**4 / 4.0 - b * (1.0 + c) * v**3 / 3.0 + b * b * c * v * v / 2.0
        return inv_b3 * quartic + x * v

    def div_x_phi(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], a)

    def div_v_b(x, v):
        v = np.asarray(v, dtype=float)[..., 0]
        return inv_b3 * (3.0 * v * v - 2.0 * b * (1.0 + c) * v + b * b * c)

    def derivs_x_phi(x, order):
        x = np.asarray(x, dtype=float)[..., 0]
        if order == 1:
            return np.full(x.shape, a)
        return np.zeros(x.shape)

    def derivs_v_b(x, v, order):
        v = np.asarray(v, dtype=float)[..., 0]
        if order == 1:
            return inv_b3 * (3.0 * v * v - 2.0 * b * (1.0 + c) * v + b * b * c)
        if order == 2:
            return inv_b3 * (6.0 * v - 2.0 * b * (1.0 + c))
        if order == 3:
            return np.full(v.shape, 6.0 * inv_b3)
        return np.zeros(v.shape)

    def derivs_x_b(x, v, order):
        x = np.asarray(x, dtype=float)[..., 0]
        if order == 1:
            return np.ones(x.shape)
        return np.zeros(x.shape)

    return GeneralKFP(
        phi=phi,
        b_field=b_field,
        K=1.0 / b**2,
        w_pot=w_pot,
        M=max(a, 1.0),
        d=1,
        div_x_phi=div_x_phi,
        div_v_b=div_v_b,
        derivs_x_phi=derivs_x_phi,
        derivs_v_b=derivs_v_b,
        derivs_x_b=derivs_x_b,
        label="fhn",
        params={"a": a, "b": b, "c": c},
    )


def _kfp_general(spec: KineticFokkerPlanck) -> GeneralKFP:
    g, beta, d = spec.gamma, spec.beta, spec.d

    def phi(x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)

    def b_field(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        bx = bracket(x)[..., None]
        bv = bracket(v)[..., None]
        return v * bv ** (beta - 2.0) + x * bx ** (g - 2.0)

    def w_pot(x, v):
        # Total v-potential W(x, v) = F(v) + v . grad V(x) with F the
        # v-antiderivative of the friction drift (flagged interpretation:
        # F(v) = <v>^beta / beta).
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        bx = bracket(x)
        bv = bracket(v)
        grad_V = x * bx[..., None] ** (g - 2.0)
        return bv**beta / beta + np.sum(v * grad_V, axis=-1)

    def div_x_phi(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    def div_v_b(x, v):
        v = np.asarray(v, dtype=float)
        bv = bracket(v)
        v2 = np.sum(v * v, axis=-1)
        return d * bv ** (beta - 2.0) + (beta - 2.0) * v2 * bv ** (beta - 4.0)

    def derivs_x_phi(x, order):
        x = np.asarray(x, dtype=float)[..., 0]
        return np.zeros(x.shape)

    def derivs_v_b(x, v, order):
        # d=1 scalar derivatives of the friction part v<v>^(beta-2).
        v = np.asarray(v, dtype=float)[..., 0]
        p = beta - 2.0
        if order == 1:
            return _u_pow_d1(v, p)
        if order == 2:
            return _u_pow_d2(v, p)
        if order == 3:
            return _u_pow_d3(v, p)
        raise ContractError(f"derivative order {order} not available")

    def derivs_x_b(x, v, order):
        # d=1 scalar derivatives of the confinement part x<x>^(gamma-2).
        x = np.asarray(x, dtype=float)[..., 0]
        p = g - 2.0
        if order == 1:
            return _u_pow_d1(x, p)
        if order == 2:
            return _u_pow_d2(x, p)
        if order == 3:
            return _u_pow_d3(x, p)
        raise ContractError(f"derivative order {order} not available")

    return GeneralKFP(
        phi=phi,
        b_field=b_field,
        K=1.0,
        w_pot=w_pot,
        M=1.0,
        d=d,
        div_x_phi=div_x_phi,
        div_v_b=div_v_b,
        derivs_x_phi=derivs_x_phi,
        derivs_v_b=derivs_v_b,
        derivs_x_b=derivs_x_b,
        label="kfp",
        params={"gamma": g, "beta": beta},
    )


def to_general_form(spec: ModelSpec) -> GeneralKFP:
    """Adapt a named model to the canonical divergence form.

    The Fokker-Planck model maps to Phi == 0, B = grad W(v) + grad V(x),
    K = 1.  FitzHugh-Nagumo is stored after the velocity rescaling w = b*v,
    giving Phi(x) = a*x, B(x,v) = v(v-b)(v-bc)/b^3 + x, K = 1/b^2 and
    M = max(a, 1).
    """
    if isinstance(spec, FitzHughNagumo):
        return _fhn_general(spec)
    if isinstance(spec, KineticFokkerPlanck):
        return _kfp_general(spec)
    if isinstance(spec, CustomModel):
        def phi(x):
            return np.asarray(spec.phi(np.asarray(x, dtype=float)), dtype=float)

        def b_field(x, v):
            return np.asarray(
                spec.b_field(np.asarray(x, dtype=float), np.asarray(v, dtype=float)),
                dtype=float,
            )

        g = GeneralKFP(
            phi=phi,
            b_field=b_field,
            K=spec.K,
            w_pot=spec.w_pot,
            M=lipschitz_constant(spec.phi, (-4.0, 4.0), 256, d=spec.d),
            d=spec.d,
            div_x_phi=spec.div_x_phi,
            div_v_b=spec.div_v_b,
            label="custom",
        )
        g.validate()
        return g
    raise ContractError(f"unknown model spec {type(spec).__name__}")


def lipschitz_constant(phi, domain: tuple[float, float], samples: int, d: int = 1) -> float:
    """Sampled lower estimate of the Lipschitz constant of phi, clamped to >= 1.

    Exact for affine maps (the difference quotient is constant); otherwise a
    lower bound from a deterministic pair sample, flagged by convention as an
    estimate.
    """
    if samples < 2:
        raise ContractError(f"need at least 2 samples, got {samples}")
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ContractError(f"degenerate domain [{lo}, {hi}]")
    rng = np.random.default_rng(1234)
    xs = rng.uniform(lo, hi, size=(samples, d))
    ys = rng.uniform(lo, hi, size=(samples, d))
    best = 0.0
    for x, y in zip(xs, ys):
        dist = float(np.linalg.norm(x - y))
        if dist < 1e-12:
            continue
        gap = float(np.linalg.norm(np.asarray(phi(x)) - np.asarray(phi(y))))
        best = max(best, gap / dist)
    # Refine with close pairs so the local slope is represented too.
    for x in xs:
        y = x + 1e-4
        gap = float(np.linalg.norm(np.asarray(phi(x)) - np.asarray(phi(y))))
        best = max(best, gap / float(np.linalg.norm(x - y)))
    return max(1.0, best)
