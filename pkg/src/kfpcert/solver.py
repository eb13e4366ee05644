"""Conservative finite-volume solver on a truncated (x, v) phase-space box.

The divergence-form equation

    d/dt f = div_x((-v + Phi) f) + div_v(B f) + K Lap_v f - M chi_R f

is discretized on a uniform cell-centered grid with first-order upwind
transport fluxes (optionally minmod-limited second order), centered
v-diffusion, and zero numerical flux through all four domain boundaries, so
total mass is conserved to roundoff whenever the absorption term is off.
Time stepping is forward Euler; :func:`evolve` picks dt from the per-cell
outflow bound that makes every Euler update a convex combination, which
guarantees exact positivity preservation and is always at least as strict as
the advertised CFL triple.

The module also houses weighted L^p norms, exponential-decay fitting of
observation logs, steady states by long-time integration, and the text
checkpoint / CSV observation formats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from kfpcert.model import ContractError, GeneralKFP, ValidationError

Array = np.ndarray

_LOG_DOUBLE_MAX = math.log(np.finfo(float).max)


class RangeError(ValueError):
    """A quantity left representable floating-point range."""


class BudgetExceeded(RuntimeError):
    """An iteration budget ran out; carries the last residual seen."""

    def __init__(self, msg: str, residual: float):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on [-Lx, Lx] x [-Lv, Lv]."""

    Lx: float
    Lv: float
    nx: int
    nv: int

    def __post_init__(self):
        if self.Lx <= 0.0 or self.Lv <= 0.0:
            raise ContractError(f"extents must be positive, got ({self.Lx}, {self.Lv})")
        if self.nx < 8 or self.nv < 8:
            raise ContractError(f"need at least 8 cells per axis, got ({self.nx}, {self.nv})")

    @property
    def hx(self) -> float:
        return 2.0 * self.Lx / self.nx

    @property
    def hv(self) -> float:
        return 2.0 * self.Lv / self.nv

    @property
    def x_centers(self) -> Array:
        return -self.Lx + (np.arange(self.nx) + 0.5) * self.hx

    @property
    def v_centers(self) -> Array:
        return -self.Lv + (np.arange(self.nv) + 0.5) * self.hv

    @property
    def x_faces(self) -> Array:
        return -self.Lx + np.arange(self.nx + 1) * self.hx

    @property
    def v_faces(self) -> Array:
        return -self.Lv + np.arange(self.nv + 1) * self.hv

    def centers(self) -> tuple[Array, Array]:
        """Meshgrid of cell centers, shape (nx, nv) each."""
        return np.meshgrid(self.x_centers, self.v_centers, indexing="ij")

    @property
    def cell_volume(self) -> float:
        return self.hx * self.hv


def build_grid(Lx: float, Lv: float, nx: int, nv: int) -> Grid:
    """Uniform cell-centered grid; extents positive, at least 8 cells per axis."""
    return Grid(Lx=Lx, Lv=Lv, nx=int(nx), nv=int(nv))


@dataclass(frozen=True)
class GridField:
    """Cell-averaged scalar density with a time stamp."""

    grid: Grid
    data: Array
    t: float = 0.0
    nonneg: bool = False

    def __post_init__(self):
        if self.data.shape != (self.grid.nx, self.grid.nv):
            raise ContractError(
                f"field shape {self.data.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.nv})"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("field contains non-finite values")
        if self.nonneg and np.any(self.data < 0.0):
            raise ValidationError("field flagged nonnegative has negative cells")

    def mass(self) -> float:
        return float(np.sum(self.data)) * self.grid.cell_volume


def gaussian_field(grid: Grid, normalize: bool = True) -> GridField:
    """Strictly positive Gaussian exp(-(x^2+v^2)/2), optionally unit mass."""
    X, V = grid.centers()
    data = np.exp(-0.5 * (X * X + V * V))
    if normalize:
        data = data / (np.sum(data) * grid.cell_volume)
    return GridField(grid=grid, data=data, t=0.0, nonneg=True)


def smooth_cutoff(u: Array) -> Array:
    """C^2 plateau profile: 1 for u <= 1, 0 for u >= 2, quintic in between.

    u is the squared radius over R^2; the quintic smoothstep matches value,
    slope and curvature at both plateau edges.
    """
    s = np.clip(np.asarray(u, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - (6.0 * s**5 - 15.0 * s**4 + 10.0 * s**3)


@dataclass(frozen=True)
class DiscreteOperator:
    """Precomputed face velocities and sink field for one model on one grid.

    ``ux`` has shape (nx+1, nv): the x-transport velocity v - Phi(x) at
    x-faces.  ``uv`` has shape (nx, nv+1): the v-transport velocity -B(x, v)
    at v-faces.  Boundary fluxes are forced to zero regardless of these
    values.  ``sink`` is M * chi_R at cell centers or None.
    """

    grid: Grid
    ux: Array
    uv: Array
    K: float
    sink: Optional[Array] = None
    limiter: bool = False
    label: str = ""

    def apply(self, data: Array) -> Array:
        """Right-hand side d(data)/dt in conservative flux form."""
        g = self.grid
        fx = self._x_flux(data)
        fv = self._v_flux(data)
        out = -(fx[1:, :] - fx[:-1, :]) / g.hx - (fv[:, 1:] - fv[:, :-1]) / g.hv
        if self.sink is not None:
            out = out - self.sink * data
        return out

    def apply_centered(self, data: Array) -> Array:
        """Second-order centered variant used by identity diagnostics.

        Transport fluxes take the face value as the average of the two
        adjacent cells instead of upwinding; diffusion is unchanged.  Not
        positivity preserving; never used for time stepping.
        """
        g = self.grid
        fx = np.zeros((g.nx + 1, g.nv))
        fx[1:-1, :] = self.ux[1:-1, :] * 0.5 * (data[:-1, :] + data[1:, :])
        fv = np.zeros((g.nx, g.nv + 1))
        fv[:, 1:-1] = self.uv[:, 1:-1] * 0.5 * (data[:, :-1] + data[:, 1:])
        fv[:, 1:-1] -= self.K * (data[:, 1:] - data[:, :-1]) / g.hv
        out = -(fx[1:, :] - fx[:-1, :]) / g.hx - (fv[:, 1:] - fv[:, :-1]) / g.hv
        if self.sink is not None:
            out = out - self.sink * data
        return out

    def _x_flux(self, data: Array) -> Array:
        g = self.grid
        fx = np.zeros((g.nx + 1, g.nv))
        u = self.ux[1:-1, :]
        if self.limiter:
            left, right = _muscl_states(data, axis=0)
        else:
            left, right = data[:-1, :], data[1:, :]
        fx[1:-1, :] = np.maximum(u, 0.0) * left + np.minimum(u, 0.0) * right
        return fx

    def _v_flux(self, data: Array) -> Array:
        g = self.grid
        fv = np.zeros((g.nx, g.nv + 1))
        u = self.uv[:, 1:-1]
        if self.limiter:
            left, right = _muscl_states(data, axis=1)
        else:
            left, right = data[:, :-1], data[:, 1:]
        fv[:, 1:-1] = np.maximum(u, 0.0) * left + np.minimum(u, 0.0) * right
        fv[:, 1:-1] -= self.K * (data[:, 1:] - data[:, :-1]) / g.hv
        return fv

    def adjoint_apply(self, m: Array) -> Array:
        """Action of the transpose operator on a cell field m.

        Defined by (L_h f, m) = (f, L_h^T m) for every f; assembled face by
        face from the same upwind coefficients as :meth:`apply`, so the
        growth-rate bound max(L_h^T m / m) is exact for the discrete scheme.
        """
        g = self.grid
        out = np.zeros_like(np.asarray(m, dtype=float))
        u = self.ux[1:-1, :]
        gap = m[1:, :] - m[:-1, :]
        out[:-1, :] += np.maximum(u, 0.0) * gap / g.hx
        out[1:, :] += np.minimum(u, 0.0) * gap / g.hx
        w = self.uv[:, 1:-1]
        gap = m[:, 1:] - m[:, :-1]
        out[:, :-1] += np.maximum(w, 0.0) * gap / g.hv
        out[:, 1:] += np.minimum(w, 0.0) * gap / g.hv
        out[:, :-1] += self.K * gap / g.hv**2
        out[:, 1:] -= self.K * gap / g.hv**2
        if self.sink is not None:
            out -= self.sink * m
        return out

    def cfl_bounds(self) -> dict:
        """The advertised stable-step constraints, by mechanism.

        Velocity maxima run over interior faces only; boundary fluxes are
        identically zero so their face velocities never act.
        """
        g = self.grid
        out = {}
        mx = float(np.max(np.abs(self.ux[1:-1, :])))
        mv = float(np.max(np.abs(self.uv[:, 1:-1])))
        out["x-transport"] = math.inf if mx == 0.0 else 0.9 * g.hx / mx
        out["v-transport"] = math.inf if mv == 0.0 else 0.9 * g.hv / mv
        out["v-diffusion"] = math.inf if self.K == 0.0 else 0.9 * g.hv**2 / (2.0 * self.K)
        return out

    def positive_dt(self, safety: Optional[float] = None) -> float:
        """Largest dt that keeps every Euler update a convex combination.

        Bounds the per-cell outflow rate (both transport directions, the
        diffusion stencil, and the sink); dt * rate <= safety < 1 then gives
        f_new >= (1 - safety) f > 0 cellwise.  Always at least as strict as
        the advertised triple bound of :meth:`cfl_bounds`.
        """
        g = self.grid
        if safety is None:
            safety = 0.45 if self.limiter else 0.9
        uxz = self.ux.copy()
        uxz[0, :] = uxz[-1, :] = 0.0  # boundary fluxes never act
        uvz = self.uv.copy()
        uvz[:, 0] = uvz[:, -1] = 0.0
        out_e = np.maximum(uxz[1:, :], 0.0) / g.hx
        out_w = np.maximum(-uxz[:-1, :], 0.0) / g.hx
        out_n = np.maximum(uvz[:, 1:], 0.0) / g.hv
        out_s = np.maximum(-uvz[:, :-1], 0.0) / g.hv
        rate = out_e + out_w + out_n + out_s + 2.0 * self.K / g.hv**2
        if self.sink is not None:
            rate = rate + self.sink
        peak = float(np.max(rate))
        if peak == 0.0:
            return math.inf
        return safety / peak


def _muscl_states(data: Array, axis: int) -> tuple[Array, Array]:
    """Minmod-limited face states for interior faces along `axis`."""
    d = np.moveaxis(data, axis, 0)
    diff = np.diff(d, axis=0)
    slope = np.zeros_like(d)
    a, b = diff[:-1], diff[1:]
    slope[1:-1] = np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)
    left = d[:-1] + 0.5 * slope[:-1]
    right = d[1:] - 0.5 * slope[1:]
    return np.moveaxis(left, 0, axis), np.moveaxis(right, 0, axis)


def discretize(
    g: GeneralKFP,
    grid: Grid,
    sink: Optional[dict] = None,
    limiter: bool = False,
) -> DiscreteOperator:
    """Assemble face velocities (and optional absorption) for one model.

    ``sink`` is a mapping {"M": rate, "R": radius}: absorption -M chi_R f
    with the smooth plateau cutoff (1 inside radius R, 0 beyond sqrt(2) R).
    """
    xf = grid.x_faces
    xc = grid.x_centers
    vf = grid.v_faces
    vc = grid.v_centers
    phi_at_faces = g.phi(xf[:, None])[:, 0]
    ux = vc[None, :] - phi_at_faces[:, None]
    X = np.repeat(xc[:, None], grid.nv + 1, axis=1)[..., None]
    V = np.repeat(vf[None, :], grid.nx, axis=0)[..., None]
    uv = -g.b_field(X, V)[..., 0]
    if not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uv))):
        raise ContractError("model coefficients are not finite on the grid")
    sink_field = None
    label = g.label
    if sink is not None:
        M, R = float(sink["M"]), float(sink["R"])
        if M < 0.0 or R <= 0.0:
            raise ContractError(f"sink needs M >= 0 and R > 0, got M={M}, R={R}")
        Xc, Vc = grid.centers()
        sink_field = M * smooth_cutoff((Xc * Xc + Vc * Vc) / R**2)
        label = f"{label}+sink"
    return DiscreteOperator(
        grid=grid, ux=ux, uv=uv, K=g.K, sink=sink_field, limiter=limiter, label=label
    )


def step(f: GridField, op: DiscreteOperator, dt: float) -> GridField:
    """One forward-Euler update in flux form.

    Validates the advertised CFL triple and names the binding mechanism on
    violation.  Mass is conserved to roundoff when the sink is absent;
    nonnegativity is preserved for dt within :meth:`DiscreteOperator.positive_dt`.
    """
    if f.grid != op.grid:
        raise ContractError("field and operator live on different grids")
    if dt <= 0.0:
        raise ContractError(f"dt must be positive, got {dt}")
    bounds = op.cfl_bounds()
    binding = min(bounds, key=bounds.get)
    if dt > bounds[binding] * (1.0 + 1e-12):
        raise ContractError(
            f"dt = {dt:.6g} violates the {binding} CFL bound {bounds[binding]:.6g}"
        )
    new = f.data + dt * op.apply(f.data)
    # convexity threshold: limited face states inflate outflow by at most 3/2
    convex = op.positive_dt(safety=0.5 if op.limiter else 1.0)
    nonneg = f.nonneg and dt <= convex * (1.0 + 1e-12)
    if nonneg:
        # the convex-combination bound makes this exact, not a clamp
        assert np.all(new >= 0.0), "positivity broke under the convex-step bound"
    return GridField(grid=f.grid, data=new, t=f.t + dt, nonneg=nonneg)


def evolve(
    f0: GridField,
    op: DiscreteOperator,
    t_end: float,
    observers: Optional[dict] = None,
    obs_times: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
    safety: Optional[float] = None,
) -> tuple[GridField, list]:
    """March f0 to t_end, sampling observers on a time ladder.

    Automatic dt (default) uses the positivity-safe bound; a fixed ``dt``
    must divide every observation interval exactly (bitwise-reproducible
    ladders for semigroup checks).  Observers map name -> callable on
    GridField; the log is a time-ordered list of (t, name, value).
    """
    if t_end < f0.t - 1e-15:
        raise ContractError(f"t_end = {t_end} precedes the field time {f0.t}")
    observers = observers or {}
    if obs_times is None:
        obs_times = np.linspace(f0.t, t_end, 17) if observers else [t_end]
    ladder = [t for t in sorted(set(float(t) for t in obs_times)) if t > f0.t + 1e-15]
    if not math.isclose(ladder[-1] if ladder else f0.t, t_end, rel_tol=0, abs_tol=1e-12):
        ladder.append(t_end)
    log = []
    f = f0
    for name, fn in observers.items():
        log.append((f.t, name, float(fn(f))))
    dt_auto = op.positive_dt(safety=safety) if dt is None else None
    for t_next in ladder:
        span = t_next - f.t
        if span <= 0.0:
            continue
        if dt is None:
            n_sub = max(1, math.ceil(span / dt_auto - 1e-12))
        else:
            n_sub = round(span / dt)
            if n_sub < 1 or abs(n_sub * dt - span) > 1e-9 * max(1.0, abs(span)):
                raise ContractError(
                    f"fixed dt = {dt} does not divide the interval "
                    f"({f.t}, {t_next}) exactly"
                )
        h = span / n_sub
        for _ in range(n_sub):
            f = step(f, op, h)
        f = replace(f, t=t_next)
        for name, fn in observers.items():
            log.append((f.t, name, float(fn(f))))
    return f, log


def steady_state(
    op: DiscreteOperator,
    grid: Grid,
    tol: float = 1e-6,
    f0: Optional[GridField] = None,
    check_interval: float = 1.0,
    max_time: float = 400.0,
) -> GridField:
    """Long-time limit of the mass-conserving dynamics, unit mass, all cells > 0.

    Marches a normalized Gaussian (or ``f0``) until the relative L1 change
    per unit time drops below ``tol``; raises :class:`BudgetExceeded` with
    the last residual when ``max_time`` runs out first.
    """
    if op.sink is not None:
        raise ContractError("steady states require mass-conserving dynamics (no sink)")
    f = f0 if f0 is not None else gaussian_field(grid)
    residual = math.inf
    dt_max = op.positive_dt()
    if not math.isfinite(dt_max):
        return f  # zero operator: anything is steady
    t_used = 0.0
    while t_used < max_time:
        span = check_interval
        n_sub = max(1, math.ceil(span / dt_max - 1e-12))
        h = span / n_sub
        prev = f.data.copy()
        for _ in range(n_sub):
            f = step(f, op, h)
        t_used += span
        delta = float(np.sum(np.abs(f.data - prev))) * grid.cell_volume
        norm = float(np.sum(np.abs(f.data))) * grid.cell_volume
        residual = delta / (span * norm)
        if residual < tol:
            data = f.data / (np.sum(f.data) * grid.cell_volume)
            out = GridField(grid=grid, data=data, t=f.t, nonneg=True)
            assert np.all(out.data > 0.0), "steady state lost strict positivity"
            return out
    raise BudgetExceeded(
        f"no steady state within t = {max_time}: residual {residual:.3e} > tol {tol:.3e}",
        residual,
    )


def weighted_norm(f: GridField, w, p: float) -> float:
    """Weighted L^p(m) norm: the plain L^p norm of f * m, cell-sum quadrature.

    ``w`` is a weight with a vectorized ``log_m``; pass None for m == 1.
    Cells where m overflows double range only matter when f is nonzero
    there, in which case a RangeError is raised.
    """
    if p < 1.0:
        raise ContractError(f"p must be >= 1, got {p}")
    data = f.data
    if w is None:
        fm = data
    else:
        X, V = f.grid.centers()
        log_m = np.asarray(w.log_m(X[..., None], V[..., None]))
        active = data != 0.0
        if np.any(log_m[active] > _LOG_DOUBLE_MAX):
            raise RangeError("weight overflows double range on cells carrying mass")
        fm = np.zeros_like(data)
        fm[active] = data[active] * np.exp(log_m[active])
    if math.isinf(p):
        return float(np.max(np.abs(fm)))
    vol = f.grid.cell_volume
    return float(np.sum(np.abs(fm) ** p) * vol) ** (1.0 / p)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential fit over the tail of an observation ladder."""

    lam_emp: float
    C_emp: float
    r_squared: float
    window: tuple[float, float]


def decay_fit(samples: Sequence[tuple[float, float]]) -> DecayFit:
    """Fit norm(t) ~ C exp(-lam t) on the last half of the ladder.

    Needs at least 8 samples; norms inside the fit window must be positive.
    Constant data fits lam = 0 with R^2 reported as 1 (the line is exact).
    """
    pts = sorted((float(t), float(v)) for t, v in samples)
    if len(pts) < 8:
        raise ContractError(f"need at least 8 samples, got {len(pts)}")
    tail = pts[len(pts) // 2 :]
    ts = np.array([t for t, _ in tail])
    vals = np.array([v for _, v in tail])
    if np.any(vals <= 0.0):
        raise ContractError("nonpositive norm inside the fit window")
    y = np.log(vals)
    A = np.vstack([ts, np.ones_like(ts)]).T
    (slope, intercept), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((A @ np.array([slope, intercept]) - y) ** 2))
    r2 = 1.0 if ss_tot < 1e-300 else 1.0 - ss_res / ss_tot
    return DecayFit(
        lam_emp=-float(slope),
        C_emp=float(np.exp(intercept)),
        r_squared=r2,
        window=(float(ts[0]), float(ts[-1])),
    )


# ---------------------------------------------------------------------------
# Checkpoint and observation-log formats


def save_field(f: GridField, path) -> None:
    """Text checkpoint: header `kfp-field v1 nx nv Lx Lv t`, then row-major cells."""
    g = f.grid
    with open(path, "w") as fh:
        fh.write(f"kfp-field v1 {g.nx} {g.nv} {g.Lx!r} {g.Lv!r} {f.t!r}\n")
        for row in f.data:
            fh.write(" ".join(f"{val:.17g}" for val in row) + "\n")


def load_field(path) -> GridField:
    """Read a checkpoint written by :func:`save_field` (bit-exact roundtrip)."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 2 or header[0] != "kfp-field":
            raise ContractError(f"not a kfp-field checkpoint: {header[:2]}")
        if header[1] != "v1":
            raise ContractError(f"unsupported checkpoint version {header[1]!r}")
        if len(header) != 7:
            raise ContractError(f"malformed v1 checkpoint header: {header}")
        nx, nv = int(header[2]), int(header[3])
        Lx, Lv, t = float(header[4]), float(header[5]), float(header[6])
        data = np.loadtxt(fh, dtype=float, ndmin=2)
    if data.shape != (nx, nv):
        raise ContractError(
            f"checkpoint body shape {data.shape} does not match header ({nx}, {nv})"
        )
    return GridField(grid=build_grid(Lx, Lv, nx, nv), data=data, t=t)


def write_observations(log: Sequence[tuple[float, str, float]], path) -> None:
    """CSV observation log with columns t,observable,value."""
    with open(path, "w") as fh:
        fh.write("t,observable,value\n")
        for t, name, value in log:
            fh.write(f"{t!r},{name},{value!r}\n")


def read_observations(path) -> list[tuple[float, str, float]]:
    out = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,observable,value":
            raise ContractError(f"unexpected observation header: {header}")
        for line in fh:
            t, name, value = line.strip().split(",")
            out.append((float(t), name, float(value)))
    return out
