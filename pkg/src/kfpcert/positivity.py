"""Spreading-of-positivity machinery: flow maps, barrier subsolutions, checks.

The lower-bound argument runs in three steps.  A characteristic flow X_t
carries the center of a small anisotropic ball; an explicit barrier
phi = delta e^{-mu Q} - eps built on a quadratic form Q around (X_t, v_0)
is a subsolution of the hypoelliptic comparison operator on an annulus; and
the comparison principle then propagates f >= delta on the small ball to
f >= K delta on a dilated ball half a period later.  Everything here is
checkable: the flow bound is asserted on every call, the subsolution sign
is sampled with analytic derivatives, and the spreading conclusion is
measured directly on solver fields.

The barrier constants inherited from the construction are astronomically
conservative, so eps/delta and K_spread are carried in log form; the sign
and ordering checks all run in the exponent domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import qmc

from kfpcert.model import ContractError, GeneralKFP, ValidationError
from kfpcert.solver import GridField

_LOG2 = math.log(2.0)


def _gronwall_v(phi: Callable, x0: float, v0: float, M: float) -> float:
    """V = (M+1)^2 (|v0| + |x0| + |Phi(0)|), the flow displacement rate."""
    phi0 = float(np.asarray(phi(np.zeros(1))).reshape(-1)[0])
    return (M + 1.0) ** 2 * (abs(v0) + abs(x0) + abs(phi0))


def flow_X(
    phi: Callable,
    x0: float,
    v0: float,
    t: float,
    M: float,
    dense: bool = False,
):
    """Solve dx/dt = v0 + Phi(x), x(0) = x0, up to time t.

    Valid for 0 <= t < min(ln2/M, 1); the displacement bound
    |X_t - x0| <= t (M+1)^2 (|v0| + |x0| + |Phi(0)|) is asserted on the
    result (its failure would mean the integrator or the Lipschitz constant
    M is wrong, so it raises RuntimeError rather than a contract error).
    With dense=True returns a callable X(s) for s in [0, t].
    """
    if M < 0.0:
        raise ValidationError(f"Lipschitz constant must be >= 0, got {M}")
    ceiling = min(1.0, _LOG2 / M) if M > 0.0 else 1.0
    if not 0.0 <= t < ceiling:
        raise ContractError(f"t = {t} outside the flow window [0, {ceiling})")
    v_rate = _gronwall_v(phi, x0, v0, M)
    if t == 0.0 and not dense:
        return x0

    def rhs(_s, x):
        return v0 + np.asarray(phi(np.asarray(x))).reshape(-1)

    sol = solve_ivp(
        rhs,
        (0.0, max(t, 1e-300)),
        [x0],
        method="DOP853",
        rtol=1e-10,
        atol=1e-12,
        dense_output=True,
    )
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")

    def X(s):
        return float(sol.sol(s)[0])

    for s in np.linspace(0.0, t, 9):
        drift = abs(X(float(s)) - x0)
        if drift > float(s) * v_rate * (1.0 + 1e-9) + 1e-12:
            raise RuntimeError(
                f"flow bound violated: |X_t - x0| = {drift} > t V = {s * v_rate}"
            )
    return X if dense else X(t)


@dataclass(frozen=True)
class AnisotropicBall:
    """|v - v0| <= r and |x - x0| <= r^3, the transport-diffusion scaling."""

    x0: float
    v0: float
    r: float

    def __post_init__(self):
        if self.r <= 0.0:
            raise ValidationError(f"radius must be positive, got {self.r}")

    def contains(self, x, v):
        return (np.abs(np.asarray(v) - self.v0) <= self.r) & (
            np.abs(np.asarray(x) - self.x0) <= self.r**3
        )

    def mask(self, grid) -> np.ndarray:
        X, V = grid.centers()
        return self.contains(X, V)


@dataclass(frozen=True)
class SubsolutionParams:
    """Barrier coefficients produced by subsolution_params.

    The quadratic form is Q = a|v-v0|^2/2t - b(v-v0)(x-X_t)/t^2
    + c|x-X_t|^2/2t^3; eps/delta and the spreading constant K are kept as
    logs because the construction's constants underflow double range.
    """

    a: float
    b: float
    c: float
    mu: float
    lam_spread: float
    log_eps_over_delta: float
    log_K_spread: float
    x0: float
    v0: float
    r: float
    tau: float
    alpha_spread: float
    M: float
    V: float
    d: int = 1

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.mu, self.r, self.tau) <= 0.0:
            raise ValidationError("a, b, c, mu, r, tau must be positive")
        if self.b != 2.0 * self.a:
            raise ValidationError(f"need b = 2a, got a={self.a}, b={self.b}")
        if not self.c > 12.0 * self.b:
            raise ValidationError(f"need c > 12b, got b={self.b}, c={self.c}")
        if not self.a * self.c > self.b**2:
            raise ValidationError("need ac > b^2 for a positive definite Q")
        if self.c < 80.0 * (self.M + 1.0) ** 2 * self.b:
            raise ValidationError("need c >= 80 (M+1)^2 b")
        if not self.lam_spread > self.alpha_spread:
            raise ValidationError("outer multiplier lambda must exceed alpha")
        if not self.alpha_spread > 1.0:
            raise ValidationError("alpha must exceed 1")
        if not self.log_eps_over_delta < 0.0:
            raise ValidationError("eps/delta must lie in (0, 1)")

    @property
    def eps_over_delta(self) -> float:
        return math.exp(self.log_eps_over_delta)

    @property
    def K_spread(self) -> float:
        return math.exp(self.log_K_spread)

    @property
    def scale_max(self) -> float:
        return max(self.r**2 / self.tau, self.r**6 / self.tau**3)

    @property
    def scale_min(self) -> float:
        return min(self.r**2 / self.tau, self.r**6 / self.tau**3)

    @property
    def L1(self) -> float:
        """Exponent of the interior barrier floor: sup mu Q on the alpha ball."""
        return 22.0 * self.alpha_spread**6 * self.a * self.mu * self.c * self.scale_max

    @property
    def L2(self) -> float:
        """Exponent of the outer barrier cap: inf mu Q on the lambda sphere."""
        return self.mu * self.a * self.lam_spread**2 * self.scale_min / 8.0

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "mu": self.mu,
            "lam_spread": self.lam_spread,
            "log_eps_over_delta": self.log_eps_over_delta,
            "log_K_spread": self.log_K_spread,
            "x0": self.x0,
            "v0": self.v0,
            "r": self.r,
            "tau": self.tau,
            "alpha_spread": self.alpha_spread,
            "M": self.M,
            "V": self.V,
            "d": self.d,
        }


def tau_ceiling(M: float, V: float, r: float) -> float:
    """Largest admissible barrier horizon: min(1, r^3/2V, ln2/M, 1/20M)."""
    vals = [1.0]
    if V > 0.0:
        vals.append(r**3 / (2.0 * V))
    if M > 0.0:
        vals.extend([_LOG2 / M, 1.0 / (20.0 * M)])
    return min(vals)


def subsolution_params(
    M: float,
    V: float,
    r: float,
    tau: float,
    alpha_spread: float,
    d: int = 1,
    x0: float = 0.0,
    v0: float = 0.0,
) -> SubsolutionParams:
    """Select the barrier coefficients for given flow data.

    a = 1 fixes the free normalization; b = 2a; c is the explicit maximum
    covering the four absorption regimes; mu is the smallest power of two
    whose quadratic-form matrix P dominates (c/20)I (certified through the
    rigorous eigenvalue surrogate det P / tr P); lambda balances the inner
    and outer exponents so the barrier floor clears the outer cap by a
    factor e^{-L1}(1 - e^{-L1}).
    """
    if M < 0.0 or V < 0.0 or r <= 0.0 or d < 1:
        raise ValidationError("need M, V >= 0, r > 0, d >= 1")
    if not alpha_spread > 1.0:
        raise ValidationError(f"alpha must exceed 1, got {alpha_spread}")
    ceil = tau_ceiling(M, V, r)
    if not 0.0 < tau < ceil:
        raise ContractError(f"tau = {tau} outside (0, {ceil})")

    a = 1.0
    b = 2.0 * a
    c = b * max(
        12.0,
        80.0 * (M + 1.0) ** 2,
        80.0 * d * (tau / r**2) ** 3,
        40.0 * d * tau / r**2,
    )

    mu = None
    for k in range(31):
        cand = float(2**k)
        p11 = cand * a**2 - a / 2.0 - b
        p22 = cand * b**2 - 1.5 * c
        p12 = -cand * a * b + b + c / 2.0
        tr = p11 + p22
        det = p11 * p22 - p12**2
        if tr > 0.0 and det > 0.0 and det / tr >= c / 20.0:
            mu = cand
            break
    if mu is None:
        raise ContractError("no admissible mu up to 2^30; coefficient set is broken")

    scale_max = max(r**2 / tau, r**6 / tau**3)
    scale_min = min(r**2 / tau, r**6 / tau**3)
    lam = math.sqrt(352.0 * (c / a) * alpha_spread**6 * scale_max / scale_min)
    L1 = 22.0 * alpha_spread**6 * a * mu * c * scale_max
    L2 = mu * a * lam**2 * scale_min / 8.0
    log_K = -L1 + math.log1p(-math.exp(-(L2 - L1)))
    return SubsolutionParams(
        a=a,
        b=b,
        c=c,
        mu=mu,
        lam_spread=lam,
        log_eps_over_delta=-L2,
        log_K_spread=log_K,
        x0=x0,
        v0=v0,
        r=r,
        tau=tau,
        alpha_spread=alpha_spread,
        M=M,
        V=V,
        d=d,
    )


def _quadratic_Q(p: SubsolutionParams, t, x, v, X_t):
    w = np.asarray(v) - p.v0
    y = np.asarray(x) - X_t
    t = np.asarray(t)
    return (
        p.a * w**2 / (2.0 * t)
        - p.b * w * y / t**2
        + p.c * y**2 / (2.0 * t**3)
    )


def eval_subsolution(
    p: SubsolutionParams,
    delta: float,
    t: float,
    x: float,
    v: float,
    phi_transport: Optional[Callable] = None,
) -> float:
    """Barrier value phi = delta e^{-mu Q(t,x,v)} - eps.

    t must lie in [0, tau); t = 0 returns the continuity-extension value
    -eps (the exponential vanishes identically there).
    """
    if delta <= 0.0:
        raise ValidationError(f"delta must be positive, got {delta}")
    if not 0.0 <= t < p.tau:
        raise ContractError(f"t = {t} outside [0, tau = {p.tau})")
    eps = delta * math.exp(p.log_eps_over_delta)
    if t == 0.0:
        return -eps
    if phi_transport is None:
        X_t = p.x0 + p.v0 * t
    else:
        X_t = flow_X(phi_transport, p.x0, p.v0, t, p.M)
    Q = float(_quadratic_Q(p, t, x, v, X_t))
    return delta * math.exp(-p.mu * Q) - eps


def eval_D(g: GeneralKFP, C_coeff: Callable, t: float, x: float, v: float) -> float:
    """Zero-order coefficient of the h = f e^{W/2} comparison equation.

    D = -|A|^2/4 - div_v A / 2 + (v + Phi) . A / 2 + C with A the velocity
    drift and Phi in the transport orientation dx/dt = v + Phi(x).
    """
    xa = np.full(g.d, float(x))
    va = np.full(g.d, float(v))
    A = np.asarray(g.b_field(xa, va)).reshape(-1)
    if g.div_v_b is not None:
        div_A = float(np.asarray(g.div_v_b(xa, va)))
    else:
        h = 1e-6
        div_A = 0.0
        for i in range(g.d):
            e = np.zeros(g.d)
            e[i] = h
            hi = np.asarray(g.b_field(xa, va + e)).reshape(-1)[i]
            lo = np.asarray(g.b_field(xa, va - e)).reshape(-1)[i]
            div_A += float(hi - lo) / (2.0 * h)
    phi_t = np.asarray(g.transport_phi(xa)).reshape(-1)
    C = float(C_coeff(t, x, v))
    return float(
        -0.25 * np.dot(A, A)
        - 0.5 * div_A
        + 0.5 * np.dot(va + phi_t, A)
        + C
    )


@dataclass
class SubsolutionReport:
    """Sampled verification of the barrier sign and boundary ordering."""

    max_L_phi: float
    max_violation: float
    boundary_ok: dict
    K_spread_ok: bool
    n_samples: int
    ok: bool
    witness: Optional[tuple] = None
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "max_L_phi": self.max_L_phi,
            "max_violation": self.max_violation,
            "boundary_ok": dict(self.boundary_ok),
            "K_spread_ok": self.K_spread_ok,
            "n_samples": self.n_samples,
            "ok": self.ok,
            "witness": list(self.witness) if self.witness else None,
            "failures": [list(f) for f in self.failures],
        }


def _annulus_sample(p: SubsolutionParams, outer_mult: float, n: int, seed: int):
    """Sobol points of (0,tau) x (outer anisotropic ball minus inner ball)."""
    eng = qmc.Sobol(d=3, scramble=True, seed=seed)
    u = eng.random(2 * n)
    t = p.tau * (1e-6 + (1.0 - 2e-6) * u[:, 0])
    R = outer_mult * p.r
    x = p.x0 + (2.0 * u[:, 1] - 1.0) * R**3
    v = p.v0 + (2.0 * u[:, 2] - 1.0) * R
    inner = AnisotropicBall(p.x0, p.v0, p.r)
    keep = ~inner.contains(x, v)
    return t[keep][:n], x[keep][:n], v[keep][:n]


def _sign_form(p: SubsolutionParams, t, x, v, X_t, Xdot_t, phi_x):
    """A(Q) = dQ/dt + (v + Phi(x)) grad_x Q - Lap_v Q + mu |grad_v Q|^2.

    L phi = -mu delta e^{-mu Q} A(Q), so the barrier inequality L phi <= 0
    is exactly A(Q) >= 0.  Returns (A(Q), term scale) for a relative
    tolerance.
    """
    w = np.asarray(v) - p.v0
    y = np.asarray(x) - X_t
    a, b, c = p.a, p.b, p.c
    dt_Q = (
        -a * w**2 / (2.0 * t**2)
        + 2.0 * b * w * y / t**3
        - 1.5 * c * y**2 / t**4
        + b * w * Xdot_t / t**2
        - c * y * Xdot_t / t**3
    )
    gx_Q = -b * w / t**2 + c * y / t**3
    gv_Q = a * w / t - b * y / t**2
    lap_v_Q = a * p.d / t
    transport = (np.asarray(v) + phi_x) * gx_Q
    A_Q = dt_Q + transport - lap_v_Q + p.mu * gv_Q**2
    scale = (
        np.abs(dt_Q) + np.abs(transport) + np.abs(lap_v_Q) + p.mu * gv_Q**2
    )
    return A_Q, scale


def verify_subsolution(
    p: SubsolutionParams,
    g: GeneralKFP,
    samples: int = 2**16,
    seed: int = 0,
    tol: float = 1e-8,
) -> SubsolutionReport:
    """Sample the barrier inequality and its boundary/interior ordering.

    The sign of L phi is checked through the analytic form A(Q) >= 0 on a
    low-discrepancy sample of (0, tau) x (lambda-annulus), stratified so
    half the points land near the inner ball where the inequality is
    tight.  The three boundary conditions and the interior floor are
    checked in the exponent domain:

    outer sphere   mu Q >= L2  (phi <= 0),
    t -> 0 slice   mu Q >= L2  at t = 1e-8 tau (continuity extension),
    inner sphere   Q >= 0      (phi <= delta),
    interior floor mu Q <= L1 on [tau/2, tau) x alpha-ball  (phi >= K delta).
    """
    if samples < 64:
        raise ContractError(f"need at least 64 samples, got {samples}")
    half = samples // 2
    near_mult = min(p.lam_spread, 2.0 * p.alpha_spread)
    t1, x1, v1 = _annulus_sample(p, p.lam_spread, half, seed)
    t2, x2, v2 = _annulus_sample(p, near_mult, samples - half, seed + 1)
    t = np.concatenate([t1, t2])
    x = np.concatenate([x1, x2])
    v = np.concatenate([v1, v2])

    X = flow_X(g.transport_phi, p.x0, p.v0, p.tau * (1.0 - 1e-12), p.M, dense=True)
    X_t = np.array([X(float(s)) for s in t])
    phi_at = lambda pts: np.asarray(g.transport_phi(np.asarray(pts)[:, None])).reshape(-1)
    Xdot_t = p.v0 + phi_at(X_t)
    phi_x = phi_at(x)

    A_Q, scale = _sign_form(p, t, x, v, X_t, Xdot_t, phi_x)
    rel = A_Q / np.maximum(scale, 1e-300)
    worst = int(np.argmin(rel))
    max_violation = float(-rel[worst])
    failures = []
    witness = None
    sign_ok = rel[worst] >= -tol
    if not sign_ok:
        witness = (float(t[worst]), float(x[worst]), float(v[worst]))
        failures.append(("sign", *witness, float(A_Q[worst])))
    # the raw L phi value at the worst point, for the report
    Q_worst = float(_quadratic_Q(p, t[worst], x[worst], v[worst], X_t[worst]))
    with np.errstate(under="ignore"):
        max_L_phi = -p.mu * math.exp(min(-p.mu * Q_worst, 700.0)) * float(A_Q[worst])

    rng = np.random.default_rng(seed + 2)
    n_b = max(256, samples // 64)
    tb = p.tau * rng.uniform(1e-6, 1.0 - 1e-9, n_b)
    Xb = np.array([X(float(s)) for s in tb])

    def q_at(tt, xx, vv, XX):
        return np.asarray(_quadratic_Q(p, tt, xx, vv, XX))

    # outer lateral boundary: both faces of the lambda ball
    R = p.lam_spread * p.r
    v_face = p.v0 + R * rng.choice([-1.0, 1.0], n_b)
    x_unif = p.x0 + R**3 * rng.uniform(-1.0, 1.0, n_b)
    x_face = p.x0 + R**3 * rng.choice([-1.0, 1.0], n_b)
    v_unif = p.v0 + R * rng.uniform(-1.0, 1.0, n_b)
    q_outer = np.concatenate(
        [q_at(tb, x_unif, v_face, Xb), q_at(tb, x_face, v_unif, Xb)]
    )
    outer_ok = bool(np.all(p.mu * q_outer >= p.L2 * (1.0 - tol)))
    if not outer_ok:
        failures.append(("outer_boundary", float(np.min(p.mu * q_outer)), p.L2))

    # continuity extension at t -> 0: same exponent cap at a tiny time
    t0 = np.full(n_b, p.tau * 1e-8)
    X0 = np.array([X(float(s)) for s in t0])
    q_zero = np.concatenate(
        [q_at(t0, x_unif, v_face, X0), q_at(t0, x_face, v_unif, X0)]
    )
    zero_ok = bool(np.all(p.mu * q_zero >= p.L2 * (1.0 - tol)))
    if not zero_ok:
        failures.append(("initial_slice", float(np.min(p.mu * q_zero)), p.L2))

    # inner boundary: phi <= delta reduces to Q >= 0
    r_in = p.r
    vi_face = p.v0 + r_in * rng.choice([-1.0, 1.0], n_b)
    xi_unif = p.x0 + r_in**3 * rng.uniform(-1.0, 1.0, n_b)
    xi_face = p.x0 + r_in**3 * rng.choice([-1.0, 1.0], n_b)
    vi_unif = p.v0 + r_in * rng.uniform(-1.0, 1.0, n_b)
    q_inner = np.concatenate(
        [q_at(tb, xi_unif, vi_face, Xb), q_at(tb, xi_face, vi_unif, Xb)]
    )
    inner_ok = bool(np.all(q_inner >= -tol))
    if not inner_ok:
        failures.append(("inner_boundary", float(np.min(q_inner))))

    # interior floor on [tau/2, tau) x (alpha ball minus inner ball)
    t_late = p.tau * rng.uniform(0.5, 1.0 - 1e-9, n_b)
    X_late = np.array([X(float(s)) for s in t_late])
    Ra = p.alpha_spread * p.r
    xa = p.x0 + Ra**3 * rng.uniform(-1.0, 1.0, n_b)
    va = p.v0 + Ra * rng.uniform(-1.0, 1.0, n_b)
    inner_ball = AnisotropicBall(p.x0, p.v0, p.r)
    keep = ~inner_ball.contains(xa, va)
    q_floor = q_at(t_late[keep], xa[keep], va[keep], X_late[keep])
    K_ok = bool(np.all(p.mu * q_floor <= p.L1 * (1.0 + tol)))
    if not K_ok:
        failures.append(("interior_floor", float(np.max(p.mu * q_floor)), p.L1))

    boundary = {"outer": outer_ok, "initial": zero_ok, "inner": inner_ok}
    ok = sign_ok and outer_ok and zero_ok and inner_ok and K_ok
    return SubsolutionReport(
        max_L_phi=max_L_phi,
        max_violation=max_violation,
        boundary_ok=boundary,
        K_spread_ok=K_ok,
        n_samples=int(t.size),
        ok=ok,
        witness=witness,
        failures=failures,
    )


def spreading_check(
    traj: Sequence[GridField],
    x0: float,
    v0: float,
    r: float,
    tau: float,
    alpha_spread: float,
    delta: float,
) -> dict:
    """Measure the spreading conclusion on solver fields.

    Requires f >= delta on the inner anisotropic ball over [0, tau) (the
    spreading hypothesis; reported as hypothesis_not_met rather than an
    error when it fails) and returns K_emp = min f/delta over
    [tau/2, tau) x enlarged ball.
    """
    if delta <= 0.0:
        raise ValidationError(f"delta must be positive, got {delta}")
    if not alpha_spread >= 1.0:
        raise ValidationError("alpha must be >= 1")
    if not traj:
        raise ContractError("empty trajectory")
    grid = traj[0].grid
    inner = AnisotropicBall(x0, v0, r).mask(grid)
    outer = AnisotropicBall(x0, v0, alpha_spread * r).mask(grid)
    if not inner.any() or not outer.any():
        raise ContractError("anisotropic ball contains no grid cells")

    window = [f for f in traj if 0.0 <= f.t < tau]
    late = [f for f in traj if tau / 2.0 <= f.t < tau]
    if not window or not late:
        raise ContractError("trajectory does not cover [0, tau)")
    for f in window:
        if float(np.min(f.data[inner])) < delta:
            return {
                "ok": False,
                "hypothesis_met": False,
                "K_emp": None,
                "t_fail": f.t,
                "min_inner": float(np.min(f.data[inner])),
            }
    K_emp = min(float(np.min(f.data[outer])) / delta for f in late)
    return {
        "ok": K_emp > 0.0,
        "hypothesis_met": True,
        "K_emp": K_emp,
        "n_late": len(late),
    }


def pointwise_lower_bound(
    traj: Sequence[GridField],
    R: float,
    rho: float,
    w=None,
) -> dict:
    """gamma_emp = (max of f_t over B_rho) / (integral of f_0 over B_R).

    Euclidean phase-space balls.  The first trajectory entry is the initial
    datum; the bound is scale invariant, so no mass normalization is
    required.  Returns the minimum over the sampled window with its witness.
    """
    if len(traj) < 2:
        raise ContractError("need the initial field plus at least one sample")
    f0 = traj[0]
    if np.any(f0.data < 0.0):
        raise ContractError("initial datum must be nonnegative")
    grid = f0.grid
    X, V = grid.centers()
    ball_R = X**2 + V**2 <= R**2
    ball_rho = X**2 + V**2 <= rho**2
    if not ball_R.any() or not ball_rho.any():
        raise ContractError("ball contains no grid cells")
    mass_R = float(np.sum(f0.data[ball_R])) * grid.cell_volume
    if mass_R <= 0.0:
        raise ContractError("initial datum carries no mass in B_R")

    gamma_emp = math.inf
    witness = None
    for f in traj[1:]:
        peak = float(np.max(f.data[ball_rho]))
        gamma_t = peak / mass_R
        if gamma_t < gamma_emp:
            gamma_emp = gamma_t
            idx = np.unravel_index(
                np.argmax(np.where(ball_rho, f.data, -np.inf)), f.data.shape
            )
            witness = (f.t, float(X[idx]), float(V[idx]))
    return {"gamma_emp": gamma_emp, "witness": witness}


def harris_mu_empirical(K_emp: float, gamma_emp: float) -> float:
    """Empirical minorization mass mu(R) = K_emp gamma_emp / 2.

    Composes the pointwise lower bound with one spreading step; the factor
    one half keeps the estimate conservative against quadrature error in
    either ingredient.
    """
    if K_emp <= 0.0 or gamma_emp <= 0.0:
        raise ContractError("need positive spreading and pointwise constants")
    return 0.5 * K_emp * gamma_emp
