"""Experiment runner and command-line front end.

    sensreach run config.yaml [--out DIR] [--seed N] [--samples N] [--quiet]
    sensreach suite paper [--out DIR] ...

A run computes sensitivity bounds, picks the sign-stable or the bounded
construction, checks the result against Monte-Carlo successors and compares
its volume with an estimate of the true reachable-set volume. Results are
JSON; plot data are CSV files of two projected coordinates.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .bounds import SensitivityBounds
from .bounds.sampling import FalsificationReport, Grid, RandomSamples, falsify_bounds, sample_bounds
from .bounds.taylor import InfeasibleOrderError, jacobian_bounds, minimal_taylor_order, taylor_sensitivity_bounds
from .models import ConfigError, ExperimentConfig, load_config
from .reach import (
    NotSignStableError,
    OverApprox,
    containment_tolerance,
    overapprox_bounded,
    overapprox_sign_stable,
    sample_successors,
    tightness_check,
)
from .volume import VolumeEstimate, reachable_volume, volume_ratio

__all__ = [
    "ExperimentResult",
    "compute_bounds",
    "run_experiment",
    "emit_plot_data",
    "benchmark_suite",
    "run_suite",
    "main",
]

log = logging.getLogger("sensreach")


@dataclass(eq=False)
class ExperimentResult:
    name: str
    config: ExperimentConfig
    bounds: SensitivityBounds
    overapprox: OverApprox
    contained_fraction: float
    face_gaps: np.ndarray
    volume_estimate: VolumeEstimate
    volume_ratio: float | None
    timings_ms: dict[str, float]
    falsification: FalsificationReport | None = None
    successors: np.ndarray | None = field(default=None, repr=False)
    notes: list[str] = field(default_factory=list)

    def to_dict(self, timings: bool = True) -> dict[str, Any]:
        cfg = self.config
        return {
            "name": self.name,
            "model": cfg.model.name,
            "spec": cfg.spec.to_dict(),
            "bounds_method": cfg.bounds_method,
            "bounds": self.bounds.to_dict(),
            "method": self.overapprox.method,
            "interval": self.overapprox.interval.to_pairs(),
            "interval_volume": self.overapprox.interval.volume,
            "tight": self.overapprox.tight,
            "per_dim_slack": self.overapprox.per_dim_slack.tolist(),
            "phi_evals": self.overapprox.phi_evals,
            "contained_fraction": self.contained_fraction,
            "face_gaps": self.face_gaps.tolist(),
            "reach_volume_estimate": self.volume_estimate.to_dict(),
            "volume_ratio": self.volume_ratio,
            "falsification": None if self.falsification is None else self.falsification.to_dict(),
            "timings_ms": dict(self.timings_ms) if timings else None,
            "seed": cfg.seed,
            "notes": list(self.notes),
        }


class _Timer:
    def __init__(self):
        self.ms: dict[str, float] = {}

    def __call__(self, phase):
        timer = self

        class _Phase:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.ms[phase] = round(1e3 * (time.perf_counter() - self.t), 3)

        return _Phase()


def _streams(seed: int):
    """Independent generators for sampling, falsification and Monte-Carlo."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def compute_bounds(cfg: ExperimentConfig, rngs=None) -> tuple[SensitivityBounds, FalsificationReport | None]:
    """Sensitivity bounds per the configured method.

    Raises :class:`InfeasibleOrderError` when interval-arithmetic bounds
    need a larger Taylor order than configured.
    """
    model, spec = cfg.model, cfg.spec
    rng_sample, rng_fals, _ = rngs or _streams(cfg.seed)
    if cfg.bounds_method == "interval-arith":
        jb = jacobian_bounds(model, model.invariant_box, spec.P)
        minimal = minimal_taylor_order(jb, spec.dt)
        if cfg.taylor_order < minimal:
            raise InfeasibleOrderError(cfg.taylor_order, minimal)
        return taylor_sensitivity_bounds(jb, spec.t0, spec.T, cfg.taylor_order), None
    if cfg.sampling == "grid":
        strategy = Grid(cfg.grid_per_dim)
    else:
        strategy = RandomSamples(cfg.random_samples)
    bounds = sample_bounds(model, spec, strategy, rng=rng_sample)
    report = None
    if cfg.max_falsification_iters > 0:
        bounds, report = falsify_bounds(
            model, spec, bounds, max_iters=cfg.max_falsification_iters, rng=rng_fals
        )
    return bounds, report


def run_experiment(config, name: str | None = None, seed: int | None = None, samples: int | None = None) -> ExperimentResult:
    """Bounds, over-approximation, Monte-Carlo check and volume ratio for one config.

    ``config`` is a path, YAML/JSON text, a mapping or an ExperimentConfig.
    ``seed`` and ``samples`` override the config's ``seed`` and ``mc_samples``.
    """
    cfg = _as_config(config, seed, samples)
    model, spec = cfg.model, cfg.spec
    if name is None:
        name = f"{model.name}_{cfg.bounds_method}"
    rngs = _streams(cfg.seed)
    timer = _Timer()
    notes = []

    with timer("bounds"):
        bounds, report = compute_bounds(cfg, rngs)
    stable = bounds.all_sign_stable()
    with timer("overapprox"):
        if cfg.method == "sign-stable" or (cfg.method == "auto" and stable):
            result = overapprox_sign_stable(model, spec, bounds)
        else:
            result = overapprox_bounded(model, spec, bounds)
    with timer("monte_carlo"):
        _, succ = sample_successors(model, spec, cfg.mc_samples, rngs[2], include_corners=True)
    with timer("tightness"):
        frac, gaps = tightness_check(model, spec, result, max(cfg.mc_samples, 1), successors=succ)
    with timer("volume"):
        est = reachable_volume(succ)
    ratio = volume_ratio(result.interval.volume, est)
    if ratio is None:
        notes.append(
            f"successors span a {est.affine_dim}-dimensional set in {model.n} dimensions; "
            "volume ratio undefined"
        )
    if frac < 1.0:
        notes.append(f"{round((1 - frac) * len(succ))} Monte-Carlo successors fall outside the interval")
    return ExperimentResult(
        name=name,
        config=cfg,
        bounds=bounds,
        overapprox=result,
        contained_fraction=frac,
        face_gaps=gaps,
        volume_estimate=est,
        volume_ratio=ratio,
        timings_ms=timer.ms,
        falsification=report,
        successors=succ,
        notes=notes,
    )


def _as_config(config, seed=None, samples=None) -> ExperimentConfig:
    if isinstance(config, ExperimentConfig):
        data = dict(config.raw) if config.raw else None
        if data is None:
            if seed is None and samples is None:
                return config
            raise ConfigError("overrides need a config built by load_config")
    elif isinstance(config, (str, Path)) and Path(config).suffix.lower() in (".yaml", ".yml", ".json"):
        path = Path(config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        data = dict(load_config(path.read_text()).raw)
    else:
        data = dict(load_config(config).raw)
    if seed is not None:
        data["seed"] = int(seed)
    if samples is not None:
        data["mc_samples"] = int(samples)
    return load_config(data)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _rectangle(lo, hi):
    return [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1]), (lo[0], lo[1])]


def emit_plot_data(result: ExperimentResult, dims=None, out_dir=".", prefix: str = "") -> dict[str, Path]:
    """Write projected samples, over-approximation and ``X0`` rectangles as CSV.

    ``dims`` are 1-based state indices (default: the config's ``plot_dims``).
    Rectangles are closed polygons (first corner repeated).
    """
    if result.successors is None or len(result.successors) == 0:
        raise ValueError("result holds no Monte-Carlo successors")
    dims = tuple(result.config.plot_dims if dims is None else dims)
    n = result.config.model.n
    if len(dims) != 2 or any(int(d) != d or not 1 <= d <= n for d in dims):
        raise ValueError(f"plot dims must be two indices in 1..{n}, got {dims}")
    i, j = int(dims[0]) - 1, int(dims[1]) - 1
    header = [f"x{i + 1}", f"x{j + 1}"]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    iv = result.overapprox.interval
    X0 = result.config.spec.X0
    files = {
        "samples": out / f"{prefix}samples.csv",
        "overapprox": out / f"{prefix}overapprox.csv",
        "x0": out / f"{prefix}x0.csv",
    }
    _write_csv(files["samples"], header, result.successors[:, [i, j]])
    _write_csv(files["overapprox"], header, _rectangle(iv.lo[[i, j]], iv.hi[[i, j]]))
    _write_csv(files["x0"], header, _rectangle(X0.lo[[i, j]], X0.hi[[i, j]]))
    return files


def benchmark_suite() -> list[tuple[str, dict]]:
    """The benchmark experiments: traffic (3 and 11 links) and the satellite orbit."""
    return [
        ("traffic3_sampling", {"model": "traffic3", "bounds_method": "sampling", "sampling": "grid", "grid_per_dim": 2}),
        ("traffic3_interval", {"model": "traffic3", "bounds_method": "interval-arith", "taylor_order": 7}),
        ("traffic11_sampling", {"model": "traffic11", "bounds_method": "sampling", "sampling": "grid", "grid_per_dim": 2}),
        ("traffic11_interval", {"model": "traffic11", "bounds_method": "interval-arith", "taylor_order": 15}),
        ("satellite_sampling", {"model": "satellite", "bounds_method": "sampling", "sampling": "random", "random_samples": 100}),
        ("satellite_interval", {"model": "satellite", "bounds_method": "interval-arith", "taylor_order": 15}),
    ]


def _write_result(doc: dict, out_dir: Path | None, name: str, quiet: bool):
    text = json.dumps(doc, indent=2) + "\n"
    if out_dir is None:
        if not quiet:
            sys.stdout.write(text)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.json").write_text(text)


def _error_doc(name: str, exc: Exception) -> dict:
    doc = {"name": name, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, InfeasibleOrderError):
        doc["minimal_taylor_order"] = exc.minimal
        doc["requested_order"] = exc.order
    return doc


def run_suite(suite: str = "paper", out_dir=None, seed: int | None = None, samples: int | None = None,
              quiet: bool = False, timings: bool = True) -> list:
    """Run every experiment of a suite; failures are recorded per experiment."""
    if suite != "paper":
        raise ConfigError(f"unknown suite {suite!r}")
    out = Path(out_dir) if out_dir is not None else None
    results: list = []
    docs = []
    for name, doc in benchmark_suite():
        if not quiet:
            log.info("running %s", name)
        try:
            res = run_experiment(doc, name=name, seed=seed, samples=samples)
        except (InfeasibleOrderError, NotSignStableError, ConfigError, ValueError, RuntimeError) as exc:
            results.append(exc)
            docs.append(_error_doc(name, exc))
            continue
        results.append(res)
        docs.append(res.to_dict(timings))
        if out is not None:
            emit_plot_data(res, out_dir=out / name)
    comparisons = _comparisons(docs)
    summary = {"suite": suite, "experiments": docs, "comparisons": comparisons}
    _write_result(summary, out, "suite", quiet=True)
    if not quiet:
        sys.stdout.write(_summary_table(docs, comparisons))
    return results


def _comparisons(docs) -> dict:
    by = {d["name"]: d for d in docs}
    out = {}
    for m in ("traffic3", "traffic11"):
        a, b = by.get(f"{m}_interval"), by.get(f"{m}_sampling")
        if a and b and "error" not in a and "error" not in b:
            out[f"{m}_interval_over_sampling_volume"] = a["interval_volume"] / b["interval_volume"]
    return out


def _summary_table(docs, comparisons) -> str:
    rows = [f"{'experiment':<22}{'unstable':>9}{'method':>13}{'phi':>5}{'contained':>11}{'vol ratio':>11}{'time s':>9}"]
    for d in docs:
        if "error" in d:
            rows.append(f"{d['name']:<22}  {d['error']}: {d['message']}")
            continue
        ratio = "-" if d["volume_ratio"] is None else f"{d['volume_ratio']:.3g}"
        secs = "-" if d["timings_ms"] is None else f"{sum(d['timings_ms'].values()) / 1e3:.1f}"
        rows.append(
            f"{d['name']:<22}{d['bounds']['n_unstable']:>9}{d['method']:>13}{d['phi_evals']:>5}"
            f"{d['contained_fraction']:>11.4f}{ratio:>11}{secs:>9}"
        )
    for k, v in comparisons.items():
        rows.append(f"{k}: {v:.4g}")
    return "\n".join(rows) + "\n"


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sensreach", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="directory for result JSON and plot CSVs")
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    common.add_argument("--samples", type=int, default=None, help="Monte-Carlo successors (overrides mc_samples)")
    common.add_argument("--quiet", action="store_true", help="no progress or summary output")
    common.add_argument("--no-timings", action="store_true", help="omit wall-clock timings so output is reproducible")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common], help="run one experiment config")
    run.add_argument("config", help="YAML or JSON experiment config")
    suite = sub.add_parser("suite", parents=[common], help="run a built-in experiment suite")
    suite.add_argument("suite", choices=["paper"])
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.samples is not None and args.samples < 1:
        log.error("--samples must be >= 1")
        return 2
    timings = not args.no_timings
    if args.command == "suite":
        results = run_suite(args.suite, args.out, args.seed, args.samples, args.quiet, timings)
        return 0 if all(isinstance(r, ExperimentResult) for r in results if not isinstance(r, InfeasibleOrderError)) else 1
    name = Path(args.config).stem
    try:
        res = run_experiment(args.config, name=name, seed=args.seed, samples=args.samples)
    except InfeasibleOrderError as exc:
        _write_result(_error_doc(name, exc), args.out, name, args.quiet)
        log.error("%s", exc)
        return 3
    except (ConfigError, NotSignStableError) as exc:
        log.error("error: %s", exc)
        return 2
    _write_result(res.to_dict(timings), args.out, name, args.quiet)
    if args.out is not None:
        emit_plot_data(res, out_dir=args.out, prefix=f"{name}_")
    if not args.quiet and args.out is not None:
        log.info("wrote %s", args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
