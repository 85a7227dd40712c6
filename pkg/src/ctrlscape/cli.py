"""Command-line experiment driver.

Each subcommand reads an :class:`ExperimentConfig` (the shipped one for that
command unless ``--config`` is given), writes its data files and renderings
atomically into the output directory, and finishes with a manifest.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import render
from .analysis import PENDULUM_FD_STEP, condition_number, hessian_report, jacobi_eigen
from .config import ExperimentConfig
from .errors import InvalidArgument, NumericFailure, UndefinedResult
from .io import atomic_write_bytes, atomic_write_text, write_manifest
from .objectives import QuadraticKSpec, make_objective
from .optimize import CmaesConfig, OptimizerRun, compare_runs, cmaes_minimize
from .pendulum import (ActionSpace, PendulumTask, TerminationConfig, policy_objective_many,
                       trajectory_objective)
from .slices import (LandscapeGrid, SlicePlane, evaluate_grid, gaussian_blur, sample_basis,
                     write_grid)

OUT_ENV = "CTRLSCAPE_OUT"
DEFAULT_OUT = "ctrlscape-out"
CONFIG_DIR = Path(__file__).parent / "configs"
CONFIG_FILES = {
    "slice": "slice.ini",
    "sweep-T": "sweep_T.ini",
    "policy-landscape": "policy_landscape.ini",
    "termination": "termination.ini",
    "opt-compare": "opt_compare.ini",
    "theory": "theory.ini",
    "hessian-report": "hessian_report.ini",
}
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_KIND_ALIASES = {"torque": "torque", "angle": "target_angle", "target_angle": "target_angle",
                 "spline": "spline_target_angle", "spline_target_angle": "spline_target_angle"}


# ---------------------------------------------------------------- helpers

def derived_seed(seed: int, *keys: int) -> int:
    """Child seed of ``seed`` for a fixed tuple of integer keys."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def action_kind(name: str) -> str:
    try:
        return _KIND_ALIASES[name]
    except KeyError:
        raise InvalidArgument(f"unknown action space {name!r}") from None


def build_task(cfg: ExperimentConfig, T: int, kind: str, objective: str,
               termination: str = "none", w: Optional[float] = None) -> PendulumTask:
    return PendulumTask(
        T=T,
        w=cfg.w if w is None else w,
        action_space=ActionSpace(action_kind(kind), spline_spacing=cfg.spline_spacing),
        objective_kind=objective,
        termination=TerminationConfig(termination, threshold=cfg.threshold,
                                      alive_bonus=cfg.alive_bonus,
                                      penalty_per_step=cfg.penalty_per_step),
    )


def parse_variant(text: str) -> tuple[str, str]:
    kind, sep, objective = text.rpartition("-")
    if not sep:
        raise InvalidArgument(f"variant {text!r} must look like 'torque-cost'")
    return action_kind(kind), objective


def interior_local_minima(values: Sequence[float]) -> list[int]:
    """Indices of interior points strictly below both neighbours."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return []
    mid = v[1:-1]
    return [int(i) + 1 for i in np.nonzero((mid < v[:-2]) & (mid < v[2:]))[0]]


def theta_grid(cfg: ExperimentConfig) -> np.ndarray:
    n = int(round((cfg.theta_max - cfg.theta_min) / cfg.theta_step)) + 1
    return np.round(cfg.theta_min + cfg.theta_step * np.arange(n), 12)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _g(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.17g}"


class _Run:
    """Output directory plus the list of files written so far."""

    def __init__(self, out: Path, workers: int):
        self.out = out
        self.workers = workers
        self.outputs: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, text: str) -> None:
        self.outputs.append(atomic_write_text(self.out / name, text))

    def data(self, name: str, data: bytes) -> None:
        self.outputs.append(atomic_write_bytes(self.out / name, data))

    def grid(self, stem: str, grid: LandscapeGrid, sigma: float, overlays=None) -> LandscapeGrid:
        """Raw grid CSV plus contour SVG and heightmap of the (optionally blurred) grid."""
        self.outputs.extend(write_grid(grid, self.out / f"{stem}.csv"))
        shown = gaussian_blur(grid, sigma) if sigma > 0 else grid
        self.data(f"{stem}.svg", render.contour_svg(render.marching_squares(shown), overlays))
        self.data(f"{stem}.ppm", render.heightmap_image(shown, "viridis"))
        return shown


def _say(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------- commands

def _slices_over(cfg: ExperimentConfig, run: _Run, modes: Sequence[str], prefix: str) -> None:
    rows = []
    for T in cfg.T:
        for kind in cfg.action_space:
            for objective in cfg.objective:
                for mode in modes:
                    task = build_task(cfg, T, kind, objective, mode)
                    f = trajectory_objective(task)
                    center = f.known_optimum if f.known_optimum is not None else np.zeros(f.dimension)
                    if f.dimension < 2:
                        raise InvalidArgument(f"{f.name} at T={T} has fewer than 2 parameters")
                    for b in range(cfg.bases):
                        u, v = sample_basis(f.dimension, derived_seed(cfg.seed, T, b), cfg.basis)
                        plane = SlicePlane(center, u, v, cfg.extent, cfg.resolution)
                        grid = evaluate_grid(f, plane, cfg.episodes, cfg.seed, run.workers)
                        stem = f"{prefix}-{task.action_space.kind}-{objective}-{mode}-T{T}-b{b}"
                        run.grid(stem, grid, cfg.sigma)
                        ci = grid.center_index()
                        finite = np.where(grid.failed, np.inf, grid.values)
                        at_min = np.unravel_index(int(np.argmin(finite)), finite.shape) == ci
                        rows.append([stem, T, task.action_space.kind, objective, mode, b,
                                     _g(grid.values[ci]), _g(float(finite.min())), int(at_min)])
                        _say(f"{stem}: center={grid.values[ci]:.6g} min_at_center={bool(at_min)}")
    run.text(f"{prefix}-summary.csv", _csv_text(
        ["grid", "T", "action_space", "objective", "termination", "basis_index",
         "center_value", "min_value", "min_at_center"], rows))


def cmd_slice(cfg: ExperimentConfig, run: _Run) -> None:
    _slices_over(cfg, run, cfg.termination[:1], "slice")


def cmd_termination(cfg: ExperimentConfig, run: _Run) -> None:
    _slices_over(cfg, run, cfg.termination, "termination")


def cmd_sweep_T(cfg: ExperimentConfig, run: _Run) -> None:
    rows = []
    for kind in cfg.action_space:
        for T in cfg.T:
            task = build_task(cfg, T, kind, cfg.objective[0], "none")
            f = trajectory_objective(task)
            x = f.known_optimum if f.known_optimum is not None else np.zeros(f.dimension)
            report = hessian_report(f, x, PENDULUM_FD_STEP, workers=run.workers)
            stem = f"sweepT-{task.action_space.kind}-T{T}"
            run.text(f"{stem}-hessian.json", report.to_json(include_matrix=True) + "\n")
            if f.dimension >= 2:
                u, v = sample_basis(f.dimension, derived_seed(cfg.seed, T), cfg.basis)
                plane = SlicePlane(x, u, v, cfg.extent, cfg.resolution)
                run.grid(stem, evaluate_grid(f, plane, cfg.episodes, cfg.seed, run.workers), cfg.sigma)
            rows.append([T, task.action_space.kind, _g(report.kappa), _g(report.separability_index)])
            _say(f"{stem}: kappa={report.kappa:.6g} separability={report.separability_index:.4f}")
    run.text("sweepT-summary.csv", _csv_text(["T", "action_space", "kappa", "separability"], rows))


def policy_landscape(cfg: ExperimentConfig, objective: str, mode: str, w: float,
                     T: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Theta grid and the averaged policy objective for one (objective, termination, w)."""
    thetas = theta_grid(cfg)
    task = build_task(cfg, T or cfg.T[0], "torque", objective, mode, w=w)
    return thetas, policy_objective_many(thetas, task)


def landscape_optima(thetas: np.ndarray, values: np.ndarray, objective: str) -> dict:
    """Interior local optima (maxima for rewards) and the global optimum of a scan."""
    signed = -values if objective == "reward" else values
    finite = np.where(np.isfinite(signed), signed, np.inf)
    idx = interior_local_minima(finite)
    best = int(np.argmin(finite))
    return {
        "local_optima": [float(thetas[i]) for i in idx],
        "global_optimum": float(thetas[best]),
        "global_value": float(values[best]),
    }


def cmd_policy_landscape(cfg: ExperimentConfig, run: _Run) -> None:
    report = []
    for objective in cfg.objective:
        for mode in cfg.termination:
            rows, series = [], {}
            for w in cfg.w_values:
                thetas, values = policy_landscape(cfg, objective, mode, w)
                rows.extend([_g(t), _g(w), _g(v)] for t, v in zip(thetas, values))
                series[f"w={w:g}"] = (thetas, values)
                found = landscape_optima(thetas, values, objective)
                report.append({"objective": objective, "termination": mode, "w": w,
                               "T": cfg.T[0], **found})
                _say(f"policy {objective}/{mode} w={w:g}: global={found['global_optimum']:.2f} "
                     f"local={['%.2f' % t for t in found['local_optima']]}")
            stem = f"policy-{objective}-{mode}"
            run.text(f"{stem}.csv", _csv_text(["theta", "w", "value"], rows))
            run.data(f"{stem}.svg", render.line_chart_svg(series, log_y=False))
    run.text("policy-optima.json", json.dumps(report, indent=2) + "\n")


def optimizer_runs(cfg: ExperimentConfig, variant: str, workers: int = 1,
                   T: Optional[int] = None) -> list[OptimizerRun]:
    """CMA-ES runs for one variant; run ``r`` draws its start point and sampler from ``(seed, r)``."""
    kind, objective = parse_variant(variant)
    f = trajectory_objective(build_task(cfg, T or cfg.T[0], kind, objective, cfg.termination[0]))

    def one(r: int) -> OptimizerRun:
        x0 = np.random.default_rng(derived_seed(cfg.seed, 0, r)).uniform(
            -cfg.init_scale, cfg.init_scale, f.dimension)
        opt = CmaesConfig(cfg.population, cfg.sigma0, cfg.max_evals, derived_seed(cfg.seed, 1, r))
        return cmaes_minimize(f, x0, opt)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(cfg.runs)))
    return [one(r) for r in range(cfg.runs)]


def cmd_opt_compare(cfg: ExperimentConfig, run: _Run) -> None:
    if len(cfg.variants) < 2:
        raise InvalidArgument("opt-compare needs at least two variants")
    series, rows = {}, []
    for variant in cfg.variants:
        table = compare_runs(optimizer_runs(cfg, variant, run.workers))
        run.text(f"opt-{variant}.csv", table.to_csv(variant))
        series[variant] = (table.evals, table.mean_dist)
        rows.append([variant, int(table.evals[-1]), _g(table.mean_dist[-1]), _g(table.std_dist[-1])])
        _say(f"opt {variant}: final mean distance {table.mean_dist[-1]:.4g}")
    run.text("opt-summary.csv", _csv_text(
        ["variant", "evals", "final_mean_dist", "final_std_dist"], rows))
    run.data("opt-compare.svg", render.line_chart_svg(series, log_y=True))


def slice_kappas(d: int, k: int, eps: float, n_bases: int, seed: int, mode: str) -> np.ndarray:
    """Condition numbers of quadratic_k restricted to ``n_bases`` random planes through 0."""
    hess = np.diag(QuadraticKSpec(d, k, eps).hessian_diagonal())
    out = np.empty(n_bases)
    for b in range(n_bases):
        u, v = sample_basis(d, derived_seed(seed, d, k, b), mode)
        basis = np.stack([u, v])
        eig, _ = jacobi_eigen(basis @ hess @ basis.T)
        out[b] = condition_number(eig).kappa
    return out


def secondary_mode_peak(grid: LandscapeGrid) -> float:
    """Largest value of the weaker bimodal term over the grid's points."""
    coords = grid.plane.coords()
    p1, p2 = np.meshgrid(coords, coords, indexing="ij")
    pts = grid.plane.points(p1, p2).reshape(-1, grid.plane.dimension) + 1.0
    sq = np.einsum("ij,ij->i", pts, pts)
    return float(0.8 * np.exp(-0.5 * sq.min()))


def cmd_theory(cfg: ExperimentConfig, run: _Run) -> None:
    rows = []
    for mode in ("orthonormal", "unnormalized"):
        for d in cfg.dims:
            if d < 2:
                raise InvalidArgument("theory dimensions must be at least 2")
            for k in cfg.ks:
                if k > d:
                    continue
                kappas = slice_kappas(d, k, cfg.eps, cfg.n_bases, cfg.seed, mode)
                full = QuadraticKSpec(d, k, cfg.eps).condition_number()
                rows.append([d, k, _g(cfg.eps), mode, cfg.n_bases, _g(float(np.median(kappas))),
                             _g(float(np.mean(np.isinf(kappas)))), _g(full)])
                _say(f"theory d={d} k={k} {mode}: median slice kappa {np.median(kappas):.4g}")
                f = make_objective("quadratic_k", d=d, k=k, eps=cfg.eps)
                u, v = sample_basis(d, derived_seed(cfg.seed, d, k), mode)
                plane = SlicePlane(np.zeros(d), u, v, cfg.theory_extent, cfg.resolution)
                run.grid(f"theory-quadk-d{d}-k{k}-{mode}", evaluate_grid(f, plane, 1, cfg.seed), 0.0)
    run.text("theory-kappa.csv", _csv_text(
        ["d", "k", "eps", "basis", "n_bases", "median_slice_kappa", "fraction_infinite",
         "full_kappa"], rows))

    f = make_objective("rastrigin", d=2)
    plane = SlicePlane(np.zeros(2), [1.0, 0.0], [0.0, 1.0], cfg.theory_extent, cfg.resolution)
    run.grid("theory-rastrigin-d2", evaluate_grid(f, plane, 1, cfg.seed), 0.0)

    bimodal_rows = []
    for d in cfg.bimodal_dims:
        f = make_objective("bimodal", d=d)
        for label, center in (("origin", np.zeros(d)), ("mode", np.ones(d))):
            u, v = sample_basis(d, derived_seed(cfg.seed, d), cfg.basis)
            grid = evaluate_grid(f, SlicePlane(center, u, v, cfg.theory_extent, cfg.resolution),
                                 1, cfg.seed)
            run.grid(f"theory-bimodal-d{d}-{label}", grid, 0.0)
            peak = secondary_mode_peak(grid)
            bimodal_rows.append([d, label, _g(peak)])
            _say(f"theory bimodal d={d} center={label}: secondary peak {peak:.4g}")
    run.text("theory-bimodal.csv", _csv_text(["d", "center", "secondary_peak"], bimodal_rows))


def cmd_hessian_report(cfg: ExperimentConfig, run: _Run) -> None:
    task = build_task(cfg, cfg.T[0], cfg.action_space[0], cfg.objective[0], cfg.termination[0])
    f = trajectory_objective(task)
    x = f.known_optimum if f.known_optimum is not None else np.zeros(f.dimension)
    report = hessian_report(f, x, PENDULUM_FD_STEP, workers=run.workers)
    name = f"hessian-{task.action_space.kind}-{task.objective_kind}-T{task.T}.json"
    run.text(name, report.to_json(include_matrix=True) + "\n")
    _say(f"{name}: kappa={report.kappa:.6g} indefinite={report.indefinite}")


COMMAND_FUNCS: dict[str, Callable[[ExperimentConfig, _Run], None]] = {
    "slice": cmd_slice,
    "sweep-T": cmd_sweep_T,
    "policy-landscape": cmd_policy_landscape,
    "termination": cmd_termination,
    "opt-compare": cmd_opt_compare,
    "theory": cmd_theory,
    "hessian-report": cmd_hessian_report,
}


# ---------------------------------------------------------------- entry point

def resolve_out(flag: Optional[str], cfg: ExperimentConfig) -> Path:
    return Path(flag or cfg.output_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def run_command(command: str, cfg: ExperimentConfig, out: Path, workers: int = 1) -> list[Path]:
    cfg = cfg.replace(command=command)
    run = _Run(out, workers)
    COMMAND_FUNCS[command](cfg, run)
    run.outputs.append(write_manifest(out, command, cfg.to_text(), run.outputs))
    return run.outputs


def _load(args, command: str) -> ExperimentConfig:
    path = args.config or CONFIG_DIR / CONFIG_FILES[command]
    cfg = ExperimentConfig.load(path)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if getattr(args, "w_values", None):
        try:
            cfg = cfg.replace(w_values=[float(t) for t in args.w_values.split(",") if t.strip()])
        except ValueError:
            raise InvalidArgument(f"bad --w-values {args.w_values!r}") from None
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctrlscape", description="Optimization landscape experiments for pendulum control.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(CONFIG_FILES) + ["reproduce-all"]:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config file (default: the shipped one)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--workers", type=int, default=1, help="worker threads")
        if name == "policy-landscape":
            p.add_argument("--w-values", help="comma-separated action cost weights to sweep")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise InvalidArgument("--workers must be positive")
        if args.command == "reproduce-all":
            if args.config:
                raise InvalidArgument("reproduce-all always uses the shipped configs")
            for command, filename in CONFIG_FILES.items():
                cfg = _load(args, command)
                base = resolve_out(args.out, cfg.replace(output_dir=""))
                run_command(command, cfg, base / Path(filename).stem, args.workers)
        else:
            cfg = _load(args, args.command)
            run_command(args.command, cfg, resolve_out(args.out, cfg), args.workers)
    except InvalidArgument as exc:
        print(f"ctrlscape: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, UndefinedResult) as exc:
        print(f"ctrlscape: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
