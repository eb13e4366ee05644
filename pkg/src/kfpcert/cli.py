"""Batch experiment runner.

Each subcommand reads one TOML config (see :mod:`kfpcert.config`), runs one
experiment, and writes an artifact directory: ``observations.csv`` with the
time series, ``report.json`` with per-module sections plus provenance, and
optionally ``decay.svg`` and field checkpoints.  The runner binds library
calls to files; every number in ``report.json`` comes out of a module
operation.

Exit codes: 0 on success, 2 when the config (or command line) fails
validation, 3 when the run itself fails or a module report comes back
negative.  Validation errors list every offending key on stderr; runtime
failures still produce ``report.json`` carrying the structured report.

``report.json`` is byte-deterministic for a fixed config and seed provided
``SOURCE_DATE_EPOCH`` is set (otherwise the provenance timestamp tracks the
wall clock).  SVG output may differ between runs only in its generator
comment.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from kfpcert import __version__
from kfpcert.config import (
    ConfigError,
    ExperimentConfig,
    EXPERIMENTS,
    build_general_model,
    build_grid_spec,
    build_model_spec,
    build_weight_spec,
    load_config,
)
from kfpcert.harris import HarrisInputs, harris_rate
from kfpcert.model import ContractError, ValidationError
from kfpcert.positivity import (
    subsolution_params,
    tau_ceiling,
    verify_subsolution,
)
from kfpcert.diagnostics import regularization_probe
from kfpcert.solver import (
    BudgetExceeded,
    Grid,
    GridField,
    RangeError,
    decay_fit,
    discretize,
    evolve,
    gaussian_field,
    save_field,
    steady_state,
    weighted_norm,
    write_observations,
)
from kfpcert.weights import ComparisonH, SamplingGrid, verify_conditions


# ---------------------------------------------------------------------------
# report plumbing


def _timestamp() -> str:
    epoch = int(os.environ.get("SOURCE_DATE_EPOCH", time.time()))
    return datetime.fromtimestamp(epoch, timezone.utc).isoformat()


def _grid_sha256(grid) -> str | None:
    if grid is None:
        return None
    text = f"{grid.Lx!r} {grid.Lv!r} {grid.nx} {grid.nv}"
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(obj):
    """Recursively coerce numpy scalars/arrays so json.dumps round-trips."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def report_bundle(reports, config_echo, seed=None, grid=None, warnings=None) -> dict:
    """Merge module reports into the single run document.

    ``reports`` is an ordered list of (section name, payload).  A repeated
    section name is resolved last-writer-wins and recorded in ``warnings``.
    """
    sections = {}
    notes = list(warnings or [])
    for name, payload in reports:
        if name in sections:
            notes.append(f"duplicate section '{name}' overwritten (last writer wins)")
        sections[name] = payload
    return {
        "config": config_echo,
        "provenance": {
            "generator": f"kfpcert {__version__}",
            "timestamp": _timestamp(),
            "seed": seed,
            "grid_sha256": _grid_sha256(grid),
        },
        "sections": sections,
        "warnings": notes,
    }


def write_report(bundle: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_jsonable(bundle), sort_keys=True, indent=2))
        fh.write("\n")


def write_decay_svg(samples, path, title="decay", ylabel="norm") -> bool:
    """Hand-rolled log-linear line chart; returns False when undrawable.

    The value axis is log10; only positive finite samples are drawn, and at
    least two are needed for a line.
    """
    pts = sorted(
        (float(t), float(v))
        for t, v in samples
        if v > 0.0 and math.isfinite(v) and math.isfinite(t)
    )
    if len(pts) < 2:
        return False
    W, H = 640, 400
    ml, mr, mt, mb = 75, 15, 35, 45
    xs = [p[0] for p in pts]
    ys = [math.log10(p[1]) for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi - x_lo <= 0.0:
        return False
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * (W - ml - mr)

    def py(y):
        return H - mb - (y - y_lo) / (y_hi - y_lo) * (H - mt - mb)

    line = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f"<!-- generator: kfpcert {__version__} {_timestamp()} -->",
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W // 2}" y="20" text-anchor="middle" '
        f'font-family="monospace" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" stroke="black"/>',
    ]
    for k in range(5):
        xv = x_lo + k * (x_hi - x_lo) / 4
        yv = y_lo + k * (y_hi - y_lo) / 4
        parts.append(
            f'<line x1="{px(xv):.2f}" y1="{H - mb}" x2="{px(xv):.2f}" '
            f'y2="{H - mb + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px(xv):.2f}" y="{H - mb + 18}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{xv:.3g}</text>'
        )
        parts.append(
            f'<line x1="{ml - 4}" y1="{py(yv):.2f}" x2="{ml}" '
            f'y2="{py(yv):.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{py(yv) + 4:.2f}" text-anchor="end" '
            f'font-family="monospace" font-size="11">{10.0 ** yv:.2e}</text>'
        )
    parts.append(
        f'<text x="{W // 2}" y="{H - 8}" text-anchor="middle" '
        f'font-family="monospace" font-size="12">t</text>'
    )
    parts.append(
        f'<text x="14" y="{H // 2}" text-anchor="middle" font-family="monospace" '
        f'font-size="12" transform="rotate(-90 14 {H // 2})">{ylabel}</text>'
    )
    parts.append(
        f'<polyline points="{line}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>'
    )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
    return True


# ---------------------------------------------------------------------------
# experiment runners: cfg, outdir, seed -> (reports, observation log, ok, grid)


def _initial_field(grid: Grid, kind: str, seed: int) -> GridField:
    if kind == "gaussian":
        return gaussian_field(grid)
    rng = np.random.default_rng(seed)
    data = gaussian_filter(rng.random((grid.nx, grid.nv)), sigma=2.0) + 1e-3
    data /= np.sum(data) * grid.cell_volume
    return GridField(grid=grid, data=data, t=0.0, nonneg=True)


def _run_simulate(cfg: ExperimentConfig, outdir: Path, seed: int):
    run = cfg.run
    g = build_general_model(cfg)
    grid = build_grid_spec(cfg)
    w = build_weight_spec(cfg)
    sink = None
    if "sink_M" in run:
        sink = {"M": float(run["sink_M"]), "R": float(run["sink_R"])}
    op = discretize(g, grid, sink=sink, limiter=run.get("limiter", False))
    f0 = _initial_field(grid, run.get("initial", "gaussian"), seed)

    observers = {
        "mass": lambda f: f.mass(),
        "l1": lambda f: weighted_norm(f, None, 1.0),
        "linf": lambda f: weighted_norm(f, None, math.inf),
    }
    if w is not None:
        observers["l1m"] = lambda f: weighted_norm(f, w, 1.0)
        observers["l2m"] = lambda f: weighted_norm(f, w, 2.0)

    t_end = float(run["t_end"])
    if t_end > 0.0:
        if "obs_times" in run:
            obs_times = [float(t) for t in run["obs_times"]]
        else:
            obs_times = np.linspace(0.0, t_end, run.get("observations", 17))
        f, log = evolve(f0, op, t_end, observers, obs_times, dt=run.get("dt"))
    else:
        f, log = f0, []

    mass_tol = float(run.get("mass_tol", 1e-10))
    drift = abs(f.mass() - f0.mass()) / f0.mass()
    negative = int(np.sum(f.data < 0.0))
    mass_ok = sink is not None or drift <= mass_tol
    section = {
        "t_end": t_end,
        "limiter": bool(run.get("limiter", False)),
        "sink": sink,
        "mass_initial": f0.mass(),
        "mass_final": f.mass(),
        "mass_drift_rel": drift,
        "mass_ok": mass_ok,
        "negative_cells": negative,
        "min_cell": float(np.min(f.data)),
        "final": {name: float(fn(f)) for name, fn in observers.items()},
    }

    obs_name = run.get("svg_observable", "l1m" if w is not None else "l1")
    series = [(t, v) for t, name, v in log if name == obs_name]
    try:
        fit = decay_fit(series)
        section["decay"] = {
            "observable": obs_name,
            "lam_emp": fit.lam_emp,
            "C_emp": fit.C_emp,
            "r_squared": fit.r_squared,
            "window": list(fit.window),
        }
    except (ContractError, ValueError):
        pass
    if run.get("svg", False):
        section["svg_written"] = write_decay_svg(
            series, outdir / "decay.svg", title=f"{obs_name} vs t", ylabel=obs_name
        )
    if run.get("checkpoint", False):
        save_field(f, outdir / "field_final.txt")

    ok = mass_ok and negative == 0
    return [("simulate", section)], log, ok, grid


def _run_verify(cfg: ExperimentConfig, outdir: Path, seed: int):
    run = cfg.run
    g = build_general_model(cfg)
    w = build_weight_spec(cfg)
    spec = build_model_spec(cfg)
    if cfg.model["kind"] == "fhn":
        H = ComparisonH.fhn(d=spec.d)
    else:
        H = ComparisonH.kfp(spec.beta, spec.gamma, d=spec.d)
    sgrid = SamplingGrid(box=float(run["box"]), n=run.get("n", 241))
    phi_p_grid = None
    if "phi_p_box" in run:
        phi_p_grid = SamplingGrid(
            box=float(run["phi_p_box"]), n=run.get("phi_p_n", sgrid.n)
        )
    rep = verify_conditions(
        g,
        w,
        H,
        sgrid,
        n_max=run.get("n_max", 3),
        p_list=tuple(float(p) for p in run.get("p_list", ())),
        search_radius=float(run.get("search_radius", 3.0)),
        phi_p_grid=phi_p_grid,
    )
    return [("verify", rep.to_dict())], [], rep.success, None


def _run_harris(cfg: ExperimentConfig, outdir: Path, seed: int):
    run = cfg.run
    try:
        inputs = HarrisInputs(
            alpha=float(run["alpha"]),
            b=float(run["b"]),
            T=float(run["T"]),
            mu_mass=float(run["mu_mass"]),
            m_of_R=float(run["m_of_R"]),
        )
    except ContractError as exc:
        raise ConfigError([f"harris-rate inputs rejected: {exc}"]) from exc
    rate = harris_rate(inputs)
    section = {
        "inputs": {
            "alpha": inputs.alpha,
            "b": inputs.b,
            "T": inputs.T,
            "mu_mass": inputs.mu_mass,
            "m_of_R": inputs.m_of_R,
        },
        **rate.to_dict(),
    }
    return [("harris_rate", section)], [], rate.lam > 0.0, None


def _run_subsolution(cfg: ExperimentConfig, outdir: Path, seed: int):
    run = cfg.run
    g = build_general_model(cfg)
    x0 = float(run.get("x0", 0.0))
    v0 = float(run.get("v0", 0.0))
    r = float(run["r"])
    M = float(g.M)
    phi0 = abs(float(np.asarray(g.transport_phi(np.zeros(1))).reshape(-1)[0]))
    V = float(run.get("V", (M + 1.0) ** 2 * (abs(x0) + abs(v0) + phi0)))
    try:
        tau = float(run["tau"]) if "tau" in run else float(
            run.get("tau_frac", 0.5)
        ) * tau_ceiling(M, V, r)
        params = subsolution_params(
            M=M, V=V, r=r, tau=tau, alpha_spread=float(run["alpha"]), x0=x0, v0=v0
        )
    except ContractError as exc:
        raise ConfigError([f"subsolution parameters rejected: {exc}"]) from exc
    rep = verify_subsolution(
        params,
        g,
        samples=run.get("samples", 2**14),
        seed=seed,
        tol=float(run.get("tol", 1e-8)),
    )
    section = {"params": params.to_dict(), **rep.to_dict()}
    return [("subsolution", section)], [], rep.ok, None


def _run_regularize(cfg: ExperimentConfig, outdir: Path, seed: int):
    run = cfg.run
    g = build_general_model(cfg)
    w = build_weight_spec(cfg)
    grid = build_grid_spec(cfg)
    ladder = [float(t) for t in run["t_ladder"]]
    seq = regularization_probe(g, w, grid, ladder)
    values = [v for _, v in seq]
    section = {
        "exponent": (5.0 * g.d + 2.0) / 4.0,
        "ladder": [[t, v] for t, v in seq],
        "max_compensated": max(values),
        "bounded": all(math.isfinite(v) for v in values),
    }
    log = [(t, "compensated", v) for t, v in seq]
    if run.get("svg", False):
        section["svg_written"] = write_decay_svg(
            seq, outdir / "decay.svg", title="compensated norm vs t",
            ylabel="compensated",
        )
    return [("regularize", section)], log, section["bounded"], grid


def _run_steady(cfg: ExperimentConfig, outdir: Path, seed: int):
    run = cfg.run
    g = build_general_model(cfg)
    grid = build_grid_spec(cfg)
    op = discretize(g, grid, limiter=run.get("limiter", True))
    f = steady_state(
        op,
        grid,
        tol=float(run.get("tol", 1e-6)),
        check_interval=float(run.get("check_interval", 1.0)),
        max_time=float(run.get("max_time", 400.0)),
    )
    section = {
        "t": f.t,
        "mass": f.mass(),
        "min_cell": float(np.min(f.data)),
        "limiter": bool(run.get("limiter", True)),
        "tol": float(run.get("tol", 1e-6)),
    }
    if run.get("checkpoint", True):
        save_field(f, outdir / "field_steady.txt")
        section["checkpoint"] = "field_steady.txt"
    log = [(f.t, "mass", f.mass()), (f.t, "min_cell", float(np.min(f.data)))]
    return [("steady_state", section)], log, True, grid


def _run_report(cfg: ExperimentConfig, outdir: Path, seed: int):
    reports = []
    for entry in cfg.run["sections"]:
        path = Path(str(entry))
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot read report section file {path}: {exc}"])
        if isinstance(doc, dict) and isinstance(doc.get("sections"), dict):
            reports.extend(doc["sections"].items())
        elif isinstance(doc, dict) and "section" in doc and "payload" in doc:
            reports.append((str(doc["section"]), doc["payload"]))
        else:
            raise ConfigError(
                [
                    f"file {path} is neither a report bundle "
                    "(object with 'sections') nor a section "
                    "(object with 'section' and 'payload')"
                ]
            )
    return reports, [], True, None


_RUNNERS = {
    "simulate": _run_simulate,
    "verify": _run_verify,
    "harris-rate": _run_harris,
    "subsolution": _run_subsolution,
    "regularize": _run_regularize,
    "steady-state": _run_steady,
    "report": _run_report,
}


# ---------------------------------------------------------------------------
# entry point


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit an unsigned 64-bit integer")
    return value


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kfpcert",
        description="phase-space solver and certification experiments",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run a '{name}' experiment")
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument(
            "--seed", type=_u64, default=None, help="override the config seed"
        )
    return parser


def run_cli(argv) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(
                [
                    f"config declares experiment '{cfg.experiment}' but the "
                    f"'{args.experiment}' subcommand was invoked"
                ]
            )
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
    except (ConfigError, ValidationError, OSError) as exc:
        print(f"validation error:\n{exc}", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else int(cfg.run.get("seed", 0))
    try:
        reports, log, ok, grid = _RUNNERS[cfg.experiment](cfg, outdir, seed)
    except ConfigError as exc:
        print(f"validation error:\n{exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"validation error:\n{exc}", file=sys.stderr)
        return 2
    except BudgetExceeded as exc:
        bundle = report_bundle(
            [("error", {"type": "BudgetExceeded", "message": str(exc),
                        "residual": exc.residual})],
            cfg.raw, seed=seed,
        )
        write_report(bundle, outdir / "report.json")
        write_observations([], outdir / "observations.csv")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except (ContractError, RangeError, RuntimeError) as exc:
        bundle = report_bundle(
            [("error", {"type": type(exc).__name__, "message": str(exc)})],
            cfg.raw, seed=seed,
        )
        write_report(bundle, outdir / "report.json")
        write_observations([], outdir / "observations.csv")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3

    write_observations(log, outdir / "observations.csv")
    bundle = report_bundle(reports, cfg.raw, seed=seed, grid=grid)
    write_report(bundle, outdir / "report.json")
    if ok:
        return 0
    print(
        f"experiment '{cfg.experiment}' reported failure; see "
        f"{outdir / 'report.json'}",
        file=sys.stderr,
    )
    return 3


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
