"""Weight functions, comparison functions, and drift-condition certification.

A weight m >= 1 turns L^p into the weighted space L^p(m); convergence
certificates reduce to sign conditions on a handful of scalar fields built
from the ratios grad m / m and Lap m / m:

* the Lyapunov ratio (L* m)/m, which must be <= -alpha outside a ball;
* phi_2(m) and phi_p(m), the multipliers appearing in the weighted L^2 / L^p
  energy identities, which must fit below -C2*H + C3;
* coefficient-smoothness sums, which must sit below C + eps*H;
* the full-phase-space Laplacian ratio, bounded below by -C4.

Everything here is closed-form and log-domain: m itself is materialized only
on demand, with an overflow flag, because realistic weights exceed double
range near the edge of a comfortably sized box.

:func:`verify_conditions` sweeps a sampling grid and assembles a
:class:`ConditionReport` with grid extrema, witness points and a success
flag; failures are reported structurally rather than raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from kfpcert.model import ContractError, GeneralKFP, ValidationError, bracket

Array = np.ndarray

_LOG_DOUBLE_MAX = math.log(np.finfo(float).max)


def _pts(x, d: int) -> Array:
    """Normalize point input to shape (..., d)."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        if d != 1:
            raise ContractError(f"scalar point given for dimension d={d}")
        return a.reshape(1)
    if a.shape[-1] != d:
        raise ContractError(f"point has trailing dimension {a.shape[-1]}, expected {d}")
    return a


def _scalar_or_array(a: Array):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


# ---------------------------------------------------------------------------
# Weights


@dataclass(frozen=True)
class GaussianQuadratic:
    """Quadratic-exponent weight m = exp((r/2)(|x|^2 + |v|^2)), r > 0."""

    r: float
    d: int = 1

    def __post_init__(self):
        if self.r <= 0.0:
            raise ValidationError(f"r must be positive, got {self.r}")

    def log_m(self, x, v):
        x, v = _pts(x, self.d), _pts(v, self.d)
        return 0.5 * self.r * (np.sum(x * x, axis=-1) + np.sum(v * v, axis=-1))

    def grad_x_ratio(self, x, v):
        return self.r * _pts(x, self.d)

    def grad_v_ratio(self, x, v):
        return self.r * _pts(v, self.d)

    def lap_v_ratio(self, x, v):
        v = _pts(v, self.d)
        return self.r * self.d + self.r**2 * np.sum(v * v, axis=-1)

    def lap_xv_ratio(self, x, v):
        x, v = _pts(x, self.d), _pts(v, self.d)
        q = np.sum(x * x, axis=-1) + np.sum(v * v, axis=-1)
        return 2.0 * self.r * self.d + self.r**2 * q


@dataclass(frozen=True)
class KfpWeight:
    """Exponential-energy weight m = exp(lam * H1) with a twisted kinetic energy.

    H1(x, v) = |v|^2/2 + V(x) + eps * v . grad<x>, where V(x) = <x>^gamma/gamma
    matches the model's confinement and grad<x> = x/<x>.  The twist term is
    what makes the x-transport see the confinement; eps must satisfy
    eps^2 < 2/gamma so that H1 > 0 and hence m > 1 everywhere.
    """

    lam: float
    eps: float
    gamma: float = 2.0
    d: int = 1

    def __post_init__(self):
        if self.lam <= 0.0 or self.eps <= 0.0:
            raise ValidationError(
                f"lam and eps must be positive, got lam={self.lam}, eps={self.eps}"
            )
        if self.eps**2 >= 2.0 / self.gamma:
            raise ValidationError(
                f"eps^2 must be < 2/gamma = {2.0 / self.gamma:.6g} so the weight "
                f"stays >= 1; got eps={self.eps}"
            )

    def _h1_parts(self, x, v):
        x, v = _pts(x, self.d), _pts(v, self.d)
        bx = bracket(x)
        grad_bx = x / bx[..., None]
        h1 = (
            0.5 * np.sum(v * v, axis=-1)
            + bx**self.gamma / self.gamma
            + self.eps * np.sum(v * grad_bx, axis=-1)
        )
        return x, v, bx, grad_bx, h1

    def log_m(self, x, v):
        return self.lam * self._h1_parts(x, v)[4]

    def grad_x_ratio(self, x, v):
        x, v, bx, grad_bx, _ = self._h1_parts(x, v)
        grad_V = x * bx[..., None] ** (self.gamma - 2.0)
        # Hessian of <x> applied to v: v/<x> - (x.v) x/<x>^3.
        xv = np.sum(x * v, axis=-1)[..., None]
        hess_bx_v = v / bx[..., None] - xv * x / bx[..., None] ** 3
        return self.lam * (grad_V + self.eps * hess_bx_v)

    def grad_v_ratio(self, x, v):
        x, v, bx, grad_bx, _ = self._h1_parts(x, v)
        return self.lam * (v + self.eps * grad_bx)

    def lap_v_ratio(self, x, v):
        grad = self.grad_v_ratio(x, v)
        return self.lam * self.d + np.sum(grad * grad, axis=-1)

    def lap_xv_ratio(self, x, v):
        x, v, bx, grad_bx, _ = self._h1_parts(x, v)
        d = self.d
        x2 = np.sum(x * x, axis=-1)
        # Lap V = d<x>^(g-2) + (g-2)|x|^2 <x>^(g-4).
        lap_V = d * bx ** (self.gamma - 2.0) + (self.gamma - 2.0) * x2 * bx ** (
            self.gamma - 4.0
        )
        # grad(Lap<x>) . v with Lap<x> = d/<x> - |x|^2/<x>^3.
        coef = -(d + 2.0) / bx**3 + 3.0 * x2 / bx**5
        v_dot_grad_lap = coef * np.sum(x * v, axis=-1)
        lap_x_h1 = lap_V + self.eps * v_dot_grad_lap
        gx = self.grad_x_ratio(x, v)
        gv = self.grad_v_ratio(x, v)
        return (
            self.lam * (lap_x_h1 + d)
            + np.sum(gx * gx, axis=-1)
            + np.sum(gv * gv, axis=-1)
        )


@dataclass(frozen=True)
class CustomWeight:
    """Closed-form ratio evaluators supplied directly by the caller."""

    log_m_fn: Callable
    grad_x_ratio_fn: Callable
    grad_v_ratio_fn: Callable
    lap_v_ratio_fn: Callable
    lap_xv_ratio_fn: Callable
    d: int = 1

    def log_m(self, x, v):
        return np.asarray(self.log_m_fn(_pts(x, self.d), _pts(v, self.d)), dtype=float)

    def grad_x_ratio(self, x, v):
        return np.asarray(self.grad_x_ratio_fn(_pts(x, self.d), _pts(v, self.d)), dtype=float)

    def grad_v_ratio(self, x, v):
        return np.asarray(self.grad_v_ratio_fn(_pts(x, self.d), _pts(v, self.d)), dtype=float)

    def lap_v_ratio(self, x, v):
        return np.asarray(self.lap_v_ratio_fn(_pts(x, self.d), _pts(v, self.d)), dtype=float)

    def lap_xv_ratio(self, x, v):
        return np.asarray(self.lap_xv_ratio_fn(_pts(x, self.d), _pts(v, self.d)), dtype=float)


WeightSpec = GaussianQuadratic | KfpWeight | CustomWeight


@dataclass(frozen=True)
class WeightRecord:
    """Pointwise weight evaluation; ``overflow`` flags m beyond double range."""

    m: float
    log_m: float
    grad_x_ratio: Array
    grad_v_ratio: Array
    lap_v_ratio: float
    lap_xv_ratio: float
    overflow: bool


def eval_weight(w: WeightSpec, x, v) -> WeightRecord:
    """Evaluate m and its derivative ratios at one point.

    Ratios are always finite closed forms; m itself is exponentiated from
    log m and flagged when it exceeds double range (the flagged value is inf).
    """
    log_m = float(np.asarray(w.log_m(x, v)))
    overflow = log_m > _LOG_DOUBLE_MAX
    with np.errstate(over="ignore"):
        m = float(np.exp(log_m))
    return WeightRecord(
        m=m,
        log_m=log_m,
        grad_x_ratio=np.asarray(w.grad_x_ratio(x, v), dtype=float),
        grad_v_ratio=np.asarray(w.grad_v_ratio(x, v), dtype=float),
        lap_v_ratio=float(np.asarray(w.lap_v_ratio(x, v))),
        lap_xv_ratio=float(np.asarray(w.lap_xv_ratio(x, v))),
        overflow=overflow,
    )


# ---------------------------------------------------------------------------
# Comparison functions


@dataclass(frozen=True)
class ComparisonH:
    """Comparison function H >= 1 used to normalize condition constants.

    ``fhn()`` gives |v|^4 + |x|^2 + 1, matched to the quartic confinement of
    the cubic drift; ``kfp(beta, gamma)`` gives <v>^beta + <x>^(gamma-1) + 1.
    """

    fn: Callable
    kind: str = "custom"

    @staticmethod
    def fhn(d: int = 1) -> "ComparisonH":
        def h(x, v):
            x, v = _pts(x, d), _pts(v, d)
            v2 = np.sum(v * v, axis=-1)
            x2 = np.sum(x * x, axis=-1)
            return v2 * v2 + x2 + 1.0

        return ComparisonH(fn=h, kind="fhn")

    @staticmethod
    def kfp(beta: float, gamma: float, d: int = 1) -> "ComparisonH":
        def h(x, v):
            x, v = _pts(x, d), _pts(v, d)
            return bracket(v) ** beta + bracket(x) ** (gamma - 1.0) + 1.0

        return ComparisonH(fn=h, kind="kfp")

    def __call__(self, x, v):
        out = np.asarray(self.fn(x, v), dtype=float)
        if np.any(out < 1.0):
            raise ValidationError("comparison function dipped below 1")
        return out


# ---------------------------------------------------------------------------
# Scalar condition fields


def lyapunov_ratio(g: GeneralKFP, w: WeightSpec, x, v):
    """(L* m)/m = (v - Phi) . grad_x m/m - B . grad_v m/m + K Lap_v m/m."""
    x, v = _pts(x, g.d), _pts(v, g.d)
    gx = w.grad_x_ratio(x, v)
    gv = w.grad_v_ratio(x, v)
    out = (
        np.sum((v - g.phi(x)) * gx, axis=-1)
        - np.sum(g.b_field(x, v) * gv, axis=-1)
        + g.K * w.lap_v_ratio(x, v)
    )
    return _scalar_or_array(out)


def phi2(g: GeneralKFP, w: WeightSpec, x, v):
    """Multiplier of the weighted L^2 energy identity.

    phi_2(m) = v.grad_x m/m - Phi.grad_x m/m + (1/2) div_x Phi
               + K |grad_v m|^2/m^2 + K Lap_v m/m - B.grad_v m/m
               + (1/2) div_v B.
    """
    x, v = _pts(x, g.d), _pts(v, g.d)
    gx = w.grad_x_ratio(x, v)
    gv = w.grad_v_ratio(x, v)
    out = (
        np.sum((v - g.phi(x)) * gx, axis=-1)
        + 0.5 * g.div_x_phi(x)
        + g.K * np.sum(gv * gv, axis=-1)
        + g.K * w.lap_v_ratio(x, v)
        - np.sum(g.b_field(x, v) * gv, axis=-1)
        + 0.5 * g.div_v_b(x, v)
    )
    return _scalar_or_array(out)


def phi_p(g: GeneralKFP, w: WeightSpec, p: float, x, v):
    """Multiplier of the weighted L^p energy identity, p in [1, inf].

    phi_p(m) = v.grad_x m/m - Phi.grad_x m/m + (1-1/p) div_x Phi
               + 2K(1-1/p) |grad_v m|^2/m^2 + K(2/p-1) Lap_v m/m
               - B.grad_v m/m + (1-1/p) div_v B.

    p = 1 collapses to the Lyapunov ratio; p = inf is the limit 1/p = 0.
    """
    if p < 1.0:
        raise ContractError(f"p must be >= 1, got {p}")
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    x, v = _pts(x, g.d), _pts(v, g.d)
    gx = w.grad_x_ratio(x, v)
    gv = w.grad_v_ratio(x, v)
    out = (
        np.sum((v - g.phi(x)) * gx, axis=-1)
        + (1.0 - inv_p) * g.div_x_phi(x)
        + 2.0 * g.K * (1.0 - inv_p) * np.sum(gv * gv, axis=-1)
        + g.K * (2.0 * inv_p - 1.0) * w.lap_v_ratio(x, v)
        - np.sum(g.b_field(x, v) * gv, axis=-1)
        + (1.0 - inv_p) * g.div_v_b(x, v)
    )
    return _scalar_or_array(out)


# ---------------------------------------------------------------------------
# Condition verification


@dataclass(frozen=True)
class SamplingGrid:
    """Inclusive tensor grid on [-box, box]^2 used for condition sweeps."""

    box: float
    n: int = 241

    def __post_init__(self):
        if self.box <= 0.0 or self.n < 3:
            raise ContractError(f"bad sampling grid box={self.box}, n={self.n}")

    def mesh(self):
        s = np.linspace(-self.box, self.box, self.n)
        X, V = np.meshgrid(s, s, indexing="ij")
        return X[..., None], V[..., None]


def _witness(X, V, flat_index) -> tuple[float, float]:
    i, j = np.unravel_index(int(flat_index), X.shape[:2])
    return float(X[i, j, 0]), float(V[i, j, 0])


def _coefficient_sum(g: GeneralKFP, X: Array, V: Array, n: int, hx: float) -> Array:
    """Sum over orders k <= n of |D^k Phi| + |D^k B| on the grid.

    Uses the model's closed-form derivative closures when present; otherwise
    falls back to repeated centered differences of the sampled coefficients.
    """
    total = np.zeros(X.shape[:2])
    have_closures = (
        g.derivs_x_phi is not None
        and g.derivs_v_b is not None
        and g.derivs_x_b is not None
    )
    if have_closures:
        for k in range(1, n + 1):
            total += np.abs(g.derivs_x_phi(X, k))
            total += np.abs(g.derivs_v_b(X, V, k))
            total += np.abs(g.derivs_x_b(X, V, k))
        return total
    phi_field = g.phi(X)[..., 0]
    b_axis_x = g.b_field(X, V)[..., 0]
    b_axis_v = b_axis_x.copy()
    s = X[:, 0, 0]
    for k in range(1, n + 1):
        phi_field = np.gradient(phi_field, s, axis=0)
        b_axis_x = np.gradient(b_axis_x, s, axis=0)
        b_axis_v = np.gradient(b_axis_v, s, axis=1)
        total += np.abs(phi_field) + np.abs(b_axis_x) + np.abs(b_axis_v)
    return total


@dataclass
class ConditionReport:
    """Grid-certified condition constants with witness points.

    ``success`` is True only when every requested section certified: in
    particular alpha and C2 are strictly positive.  Failed sections land in
    ``failures`` with the violating condition name and witness point.
    """

    c1: dict = field(default_factory=dict)
    c2: dict = field(default_factory=dict)
    c3: list = field(default_factory=list)
    c4: dict = field(default_factory=dict)
    phi_p: list = field(default_factory=list)
    success: bool = False
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


EPS_LADDER = (1.0, 0.1, 0.01)


def verify_conditions(
    g: GeneralKFP,
    w: WeightSpec,
    H: ComparisonH,
    grid: SamplingGrid,
    n_max: int = 3,
    p_list: tuple = (),
    search_radius: float = 3.0,
    phi_p_grid: Optional[SamplingGrid] = None,
) -> ConditionReport:
    """Certify the drift conditions for (g, w, H) by grid sweep.

    The sampling grid must cover a box at least as large as the domain any
    later solve will use; the constants are certificates on that grid only.

    Sections, all reported with witness points:

    * Lyapunov: alpha = -sup of (L*m)/m outside the search ball (fixed
      radius, so enlarging the box can only shrink the sup), and
      b = positive part of sup over the ball of L*m + alpha*m.
    * Energy fit: C3 = positive part of sup phi_2; C2 = sup of
      -(phi_2 + C3)/H; C1 = sup of -phi_2/H.  Success needs C1, C2 > 0.
    * Coefficient smoothness: for each order n <= n_max and eps in
      {1, 0.1, 0.01}, the smallest C with sum_k |D^k Phi| + |D^k B|
      <= C + eps*H on the grid.
    * Laplacian bound: C4 = positive part of -inf of Lap_{x,v} m/m.
    * For each p requested, the smallest grid-aligned radius R with
      phi_p <= -a outside B_R (a = -sup of the exterior values) and
      M = positive part of sup over B_R of phi_p + a.  Sampled on
      ``phi_p_grid`` when given (the radius needed can exceed a box that
      comfortably certifies the other sections).
    """
    report = ConditionReport()
    report.grid = {"box": grid.box, "n": grid.n}
    report.notes.append(
        "div_v B uses the symbolic derivative (the expansion of the cubic "
        "drift has -2b(1+c)v; a published expansion shows a + sign there)"
    )
    X, V = grid.mesh()
    radius2 = np.sum(X * X, axis=-1) + np.sum(V * V, axis=-1)
    hx = 2.0 * grid.box / (grid.n - 1)
    Hvals = H(X, V)

    # (Lyapunov) exterior decay and interior bound.
    ratio = np.asarray(lyapunov_ratio(g, w, X, V))
    outside = radius2 > search_radius**2
    if not np.any(outside):
        raise ContractError("search ball swallows the whole sampling grid")
    ext = np.where(outside, ratio, -np.inf)
    i_ext = int(np.argmax(ext))
    alpha = -float(ext.flat[i_ext])
    log_m = np.asarray(w.log_m(X, V))
    with np.errstate(over="ignore"):
        m_ball = np.exp(np.where(outside, -np.inf, log_m))
    lyap_plus = np.where(outside, -np.inf, m_ball * (ratio + alpha))
    i_ball = int(np.argmax(lyap_plus))
    b_const = max(0.0, float(lyap_plus.flat[i_ball]))
    report.c1 = {
        "alpha": alpha,
        "b": b_const,
        "search_radius": search_radius,
        "witness_exterior": _witness(X, V, i_ext),
        "witness_ball": _witness(X, V, i_ball),
    }
    if not alpha > 0.0:
        report.failures.append(
            f"lyapunov: no positive alpha; (L*m)/m = {-alpha:.6g} at "
            f"{report.c1['witness_exterior']}"
        )

    # (Energy fit) fitted constants against the comparison function.
    p2 = np.asarray(phi2(g, w, X, V))
    i3 = int(np.argmax(p2))
    C3 = max(0.0, float(p2.flat[i3]))
    fit2 = -(p2 + C3) / Hvals
    i2 = int(np.argmax(fit2))
    C2 = float(fit2.flat[i2])
    fit1 = -p2 / Hvals
    i1 = int(np.argmax(fit1))
    C1 = float(fit1.flat[i1])
    report.c2 = {
        "C1": C1,
        "C2": C2,
        "C3": C3,
        "witness_C3": _witness(X, V, i3),
        "witness_C2": _witness(X, V, i2),
    }
    if not (C1 > 0.0 and C2 > 0.0):
        report.failures.append(
            f"energy fit: C1={C1:.6g}, C2={C2:.6g} not both positive; "
            f"witness {report.c2['witness_C2']}"
        )

    # (Coefficient smoothness) ladder over derivative order and eps.
    for n in range(1, n_max + 1):
        total = _coefficient_sum(g, X, V, n, hx)
        for eps in EPS_LADDER:
            gap = total - eps * Hvals
            i_g = int(np.argmax(gap))
            report.c3.append(
                {
                    "n": n,
                    "eps": eps,
                    "C": max(0.0, float(gap.flat[i_g])),
                    "witness": _witness(X, V, i_g),
                }
            )

    # (Laplacian bound) lower bound on the full-phase-space ratio.
    lap = np.asarray(w.lap_xv_ratio(X, V))
    i4 = int(np.argmin(lap))
    report.c4 = {"C4": max(0.0, -float(lap.flat[i4])), "witness": _witness(X, V, i4)}

    # (phi_p sections) radius ladder per requested exponent.
    for p in p_list:
        pg = phi_p_grid if phi_p_grid is not None else grid
        Xp, Vp = pg.mesh()
        r2p = np.sum(Xp * Xp, axis=-1) + np.sum(Vp * Vp, axis=-1)
        hp = 2.0 * pg.box / (pg.n - 1)
        vals = np.asarray(phi_p(g, w, p, Xp, Vp))
        found = None
        ladder = np.arange(1, int(pg.box / hp)) * hp
        for R in ladder:
            mask_out = r2p > R * R
            if not np.any(mask_out):
                break
            ext_vals = np.where(mask_out, vals, -np.inf)
            ie = int(np.argmax(ext_vals))
            a = -float(ext_vals.flat[ie])
            if a > 0.0:
                inside = np.where(mask_out, -np.inf, vals + a)
                im = int(np.argmax(inside))
                found = {
                    "p": "inf" if math.isinf(p) else p,
                    "a": a,
                    "M": max(0.0, float(inside.flat[im])),
                    "R": float(R),
                    "witness_exterior": _witness(Xp, Vp, ie),
                    "grid": {"box": pg.box, "n": pg.n},
                }
                break
        if found is None:
            worst = int(np.argmax(vals))
            report.failures.append(
                f"phi_p(p={p}): no radius on the ladder gives a positive decay "
                f"margin; max phi_p = {float(vals.flat[worst]):.6g} at "
                f"{_witness(Xp, Vp, worst)}"
            )
        else:
            report.phi_p.append(found)

    report.success = not report.failures
    return report
