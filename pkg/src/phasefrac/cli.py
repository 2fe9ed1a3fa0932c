"""Command line front end.

Subcommands::

    phasefrac bench CASE DECOMP RES --out DIR
    phasefrac generate SEEDS BC DECOMP [--resolution N] [--steps N] --out DIR
    phasefrac eval --pred FILE... [--pred FILE...] --gt FILE... --mode MODE
    phasefrac meshstudy CASE DECOMP --resolutions 64,128,256 --out DIR

Every command writes a JSON run manifest.  Its ``config`` entry holds the
fully resolved configuration and can be fed back through ``--config`` to
repeat the run; explicit flags override values read from that file.

Exit status: 0 success, 1 usage error, 2 solver failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from . import metrics
from . import runs
from .material import DecompKind
from .solver import PRECONDITIONERS, LoadSchedule, SimulationError, SolverConfig

log = logging.getLogger("phasefrac")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

DECOMPS = [k.value for k in DecompKind]
EVAL_MODES = ("dice", "hard", "soft", "search")

_SOLVER_DEFAULTS = SolverConfig().to_dict()

DEFAULTS: dict[str, dict] = {
    "bench": dict(case=None, decomp=None, resolution=None, steps=None, total_displacement=None, out="bench-out"),
    "generate": dict(seeds=None, bc=None, decomp=None, resolution=800, steps=100, total_displacement=None,
                     out="dataset", overwrite=False, workers=1, format="h5", save_every=1),
    "eval": dict(pred=None, gt=None, mode="dice", thr_pred=0.5, thr_gt=0.5, step=metrics.THRESHOLD_STEP,
                 resize=None, out="eval-out"),
    "meshstudy": dict(case=None, decomp=None, resolutions="64,128,256", seed=None, steps=100,
                      total_displacement=None, out="meshstudy-out"),
}
_REQUIRED = {
    "bench": ("case", "decomp", "resolution"),
    "generate": ("seeds", "bc", "decomp"),
    "eval": ("pred", "gt"),
    "meshstudy": ("case", "decomp"),
}
_SIMULATING = ("bench", "generate", "meshstudy")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse reports usage errors with exit status 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Argument parsing and configuration
# ---------------------------------------------------------------------------

def parse_seeds(text) -> list[int]:
    """``"42"`` -> [42]; ``"1..4"`` -> [1, 2, 3, 4]; ``"1,5,9"`` -> [1, 5, 9]."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, list):
        return [int(s) for s in text]
    out = []
    try:
        for part in str(text).split(","):
            if ".." in part:
                a, b = part.split("..")
                a, b = int(a), int(b)
                if b < a:
                    raise UsageError(f"empty seed range {part!r}")
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
    except ValueError as exc:
        raise UsageError(f"bad seed specification {text!r}") from exc
    if any(s < 0 for s in out):
        raise UsageError("seeds must be non-negative")
    return out


def parse_resolutions(text) -> list[int]:
    if isinstance(text, list):
        vals = [int(v) for v in text]
    else:
        try:
            vals = [int(v) for v in str(text).split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"bad resolution list {text!r}") from exc
    if len(vals) < 2:
        raise UsageError("a mesh study needs at least two resolutions")
    if any(v < 1 for v in vals):
        raise UsageError("resolutions must be positive")
    return vals


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--stag-tol", dest="stag_tol", type=float, default=None,
                   help=f"staggered convergence tolerance on max |dphi| (default {_SOLVER_DEFAULTS['stag_tol']})")
    g.add_argument("--max-stag-iters", dest="max_stag_iters", type=int, default=None,
                   help=f"staggered iteration cap per step (default {_SOLVER_DEFAULTS['max_stag_iters']})")
    g.add_argument("--lin-rtol", dest="lin_rtol", type=float, default=None,
                   help=f"linear solver relative residual (default {_SOLVER_DEFAULTS['lin_rtol']})")
    g.add_argument("--lin-maxiter", dest="lin_maxiter", type=int, default=None,
                   help=f"linear solver iteration cap (default {_SOLVER_DEFAULTS['lin_maxiter']})")
    g.add_argument("--preconditioner", choices=PRECONDITIONERS, default=None,
                   help=f"displacement solve preconditioner (default {_SOLVER_DEFAULTS['preconditioner']})")
    g.add_argument("--phase-preconditioner", dest="phase_preconditioner", choices=PRECONDITIONERS, default=None,
                   help=f"phase solve preconditioner (default {_SOLVER_DEFAULTS['phase_preconditioner']})")
    g.add_argument("--consistent-phase", dest="lumped_phase", action="store_const", const=False, default=None,
                   help="use the consistent instead of the lumped reaction term in the phase equation")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phasefrac", description="Phase-field fracture benchmarks, datasets and evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("-q", "--quiet", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, default=None,
                        help="JSON config file (a run manifest works too); flags override its values")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--manifest", type=Path, default=None, help="manifest path (default OUT/manifest.json)")

    b = sub.add_parser("bench", help="run a benchmark case")
    b.add_argument("case", nargs="?", choices=sorted(runs.BENCH_CASES))
    b.add_argument("decomp", nargs="?", choices=DECOMPS)
    b.add_argument("resolution", nargs="?", type=int)
    b.add_argument("--steps", type=int, default=None,
                   help="replace the benchmark schedule by STEPS uniform increments (needs --total-displacement)")
    b.add_argument("--total-displacement", dest="total_displacement", type=float, default=None)
    common(b)
    _add_solver_flags(b)

    g = sub.add_parser("generate", help="simulate random-crack dataset samples")
    g.add_argument("seeds", nargs="?", help="seed, range A..B or comma list")
    g.add_argument("bc", nargs="?", choices=sorted(runs.DATASET_CASES))
    g.add_argument("decomp", nargs="?", choices=DECOMPS)
    g.add_argument("--resolution", type=int, default=None)
    g.add_argument("--steps", type=int, default=None)
    g.add_argument("--total-displacement", dest="total_displacement", type=float, default=None,
                   help="final boundary displacement in mm (default depends on bc and decomposition)")
    g.add_argument("--overwrite", action="store_const", const=True, default=None)
    g.add_argument("--workers", type=int, default=None, help="concurrent seeds (default 1, serial)")
    g.add_argument("--format", choices=("h5", "bin"), default=None)
    g.add_argument("--save-every", dest="save_every", type=int, default=None)
    common(g)
    _add_solver_flags(g)

    e = sub.add_parser("eval", help="score predicted phase fields against ground truth")
    e.add_argument("--pred", action="append", nargs="+", default=None,
                   help="prediction files of one model; repeat the flag for each model")
    e.add_argument("--gt", nargs="+", default=None, help="ground-truth files in the same order")
    e.add_argument("--mode", choices=EVAL_MODES, default=None)
    e.add_argument("--thr-pred", dest="thr_pred", type=float, default=None)
    e.add_argument("--thr-gt", dest="thr_gt", type=float, default=None)
    e.add_argument("--step", type=float, default=None, help="threshold grid spacing for search mode")
    e.add_argument("--resize", type=int, default=None, help="resample every field to RESIZE x RESIZE")
    common(e)

    m = sub.add_parser("meshstudy", help="repeat one scenario over several resolutions")
    m.add_argument("case", nargs="?", help="benchmark case, or dataset bc when --seed is given")
    m.add_argument("decomp", nargs="?", choices=DECOMPS)
    m.add_argument("--resolutions", default=None, help="comma separated, e.g. 64,128,256")
    m.add_argument("--seed", type=int, default=None, help="use this random crack pattern instead of a benchmark")
    m.add_argument("--steps", type=int, default=None)
    m.add_argument("--total-displacement", dest="total_displacement", type=float, default=None)
    common(m)
    _add_solver_flags(m)
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional config file and explicit flags (in that order)."""
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    solver = dict(_SOLVER_DEFAULTS)
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise OSError(f"config file {args.config} not found") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config} is not valid JSON: {exc}") from exc
        if isinstance(loaded, dict) and isinstance(loaded.get("config"), dict):
            loaded = loaded["config"]
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        if loaded.get("command", cmd) != cmd:
            raise UsageError(f"config file was written for {loaded['command']!r}, not {cmd!r}")
        unknown = set(loaded) - set(cfg) - {"command", "solver"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        solver.update(loaded.get("solver") or {})
        cfg.update({k: v for k, v in loaded.items() if k in cfg})
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key in _SOLVER_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            solver[key] = val
    missing = [k for k in _REQUIRED[cmd] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{cmd}: missing required argument(s): {', '.join(missing)}")
    cfg["command"] = cmd
    if cmd in _SIMULATING:
        try:
            SolverConfig(**solver)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid solver settings: {exc}") from exc
        cfg["solver"] = solver
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    cmd = cfg["command"]
    if cfg.get("decomp") is not None and cfg["decomp"] not in DECOMPS:
        raise UsageError(f"unknown decomposition {cfg['decomp']!r}; choose from {DECOMPS}")
    if cmd == "bench":
        if cfg["case"] not in runs.BENCH_CASES:
            raise UsageError(f"unknown benchmark case {cfg['case']!r}")
        if int(cfg["resolution"]) < 1:
            raise UsageError("resolution must be positive")
        if (cfg["steps"] is None) != (cfg["total_displacement"] is None):
            raise UsageError("--steps and --total-displacement go together")
        if cfg["steps"] is not None and int(cfg["steps"]) < 1:
            raise UsageError("steps must be positive")
    elif cmd == "generate":
        cfg["seeds"] = parse_seeds(cfg["seeds"])
        if cfg["bc"] not in runs.DATASET_CASES:
            raise UsageError(f"unknown boundary condition {cfg['bc']!r}")
        if cfg["format"] not in ("h5", "bin"):
            raise UsageError(f"unknown sample format {cfg['format']!r}")
        if int(cfg["resolution"]) < 1 or int(cfg["steps"]) < 1 or int(cfg["workers"]) < 1:
            raise UsageError("resolution, steps and workers must be positive")
    elif cmd == "meshstudy":
        cfg["resolutions"] = parse_resolutions(cfg["resolutions"])
        cases = runs.BENCH_CASES if cfg["seed"] is None else runs.DATASET_CASES
        if cfg["case"] not in cases:
            raise UsageError(f"unknown case {cfg['case']!r}; choose from {sorted(cases)}")
    elif cmd == "eval":
        if cfg["mode"] not in EVAL_MODES:
            raise UsageError(f"unknown eval mode {cfg['mode']!r}")
        preds = cfg["pred"]
        if preds and isinstance(preds[0], str):
            preds = [preds]
        cfg["pred"] = [list(map(str, g)) for g in preds]
        cfg["gt"] = list(map(str, cfg["gt"]))
        for group in cfg["pred"]:
            if len(group) != len(cfg["gt"]):
                raise UsageError(f"{len(group)} prediction files but {len(cfg['gt'])} ground-truth files")
        if cfg["mode"] in ("hard", "soft") and len(cfg["pred"]) < 2:
            raise UsageError(f"{cfg['mode']} voting needs at least two --pred groups")
        try:
            metrics.ThresholdPair(thr_pred=cfg["thr_pred"], thr_gt=cfg["thr_gt"])
        except ValueError as exc:
            raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

class Manifest:
    def __init__(self, argv: list[str], cfg: dict):
        self.data = dict(
            command=["phasefrac", *argv],
            config=cfg,
            version=__version__,
            python=platform.python_version(),
            numpy=np.__version__,
            started=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        self._t0 = time.perf_counter()

    def finish(self, path: Path, status: int, **extra) -> Path:
        self.data.update(extra)
        self.data["exit_status"] = status
        self.data["wall_clock_s"] = round(time.perf_counter() - self._t0, 3)
        return sio.write_json(path, self.data)


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(**cfg["solver"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_bench(cfg: dict, manifest: Manifest, out: Path) -> int:
    schedule = None
    if cfg["steps"] is not None:
        schedule = LoadSchedule.uniform(float(cfg["total_displacement"]), int(cfg["steps"]))
    scenario = runs.bench_scenario(cfg["case"], cfg["decomp"], int(cfg["resolution"]), schedule=schedule)
    log.info("bench %s: %d steps, l0 = %g", scenario.name, len(scenario.schedule), scenario.material.l0)
    records = []
    try:
        result = runs.run_scenario(scenario, _solver_config(cfg), on_step=_progress(records))
    except SimulationError as exc:
        log.error("%s", exc)
        manifest.finish(_manifest_path(cfg, out), EXIT_SOLVER, error=str(exc), failed_step=exc.step,
                        scenario=scenario.to_dict(), convergence=runs.convergence_log(records))
        return EXIT_SOLVER
    final = result.records[-1]
    phase_path = out / "phase_final.npy"
    np.save(phase_path, np.asarray(final.phi).reshape(scenario.grid.node_shape))
    curve_path = sio.export_curve(result.records, out / "force_displacement.csv")
    f = result.force
    manifest.finish(_manifest_path(cfg, out), EXIT_OK, scenario=scenario.to_dict(),
                    outputs=dict(phase=phase_path.name, curve=curve_path.name),
                    peak_force=float(np.max(np.abs(f))), final_force=float(f[-1]),
                    convergence=runs.convergence_log(result.records))
    print(f"{scenario.name}: peak force {np.max(np.abs(f)):.6g} N, final {f[-1]:.6g} N -> {out}")
    return EXIT_OK


def _progress(sink: list):
    def on_step(state, record):
        sink.append(record)
        log.debug("step %d load %.6g force %.6g iters %d%s", record.step, record.displacement, record.force,
                  record.iterations, "" if record.converged else " (not converged)")
    return on_step


def _generate_one(seed: int, cfg: dict, out: str) -> dict:
    """Worker body; returns a manifest entry and never raises."""
    entry = dict(seed=seed)
    suffix = ".bin" if cfg["format"] == "bin" else ".h5"
    try:
        path, result = runs.generate_sample(
            seed, cfg["bc"], cfg["decomp"], int(cfg["resolution"]), out, n_steps=int(cfg["steps"]),
            total_displacement=cfg["total_displacement"], overwrite=bool(cfg["overwrite"]), suffix=suffix,
            config=_solver_config(cfg), save_every=int(cfg["save_every"]))
    except SimulationError as exc:
        entry.update(status="solver_failure", error=str(exc), failed_step=exc.step)
        return entry
    except (OSError, sio.SampleFileError) as exc:
        entry.update(status="io_failure", error=str(exc))
        return entry
    entry.update(status="ok", path=str(path.relative_to(out)), sha256=_sha256(path),
                 n_cracks=len(result.scenario.cracks), l0=result.scenario.material.l0,
                 seconds=round(result.seconds, 3), convergence=runs.convergence_log(result.records))
    return entry


def cmd_generate(cfg: dict, manifest: Manifest, out: Path) -> int:
    seeds = cfg["seeds"]
    workers = min(int(cfg["workers"]), len(seeds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_generate_one, seeds, [cfg] * len(seeds), [str(out)] * len(seeds)))
    else:
        entries = []
        for s in seeds:
            entries.append(_generate_one(s, cfg, str(out)))
            _log_entry(entries[-1])
    statuses = [e["status"] for e in entries]
    status = EXIT_SOLVER if "solver_failure" in statuses else EXIT_IO if "io_failure" in statuses else EXIT_OK
    manifest.finish(_manifest_path(cfg, out), status, entries=entries)
    print(f"generated {statuses.count('ok')}/{len(seeds)} samples in {out}")
    return status


def _log_entry(e: dict):
    if e["status"] == "ok":
        log.info("seed %d -> %s (%.1f s)", e["seed"], e["path"], e["seconds"])
    else:
        log.error("seed %d failed: %s", e["seed"], e["error"])


def load_field(path, resize: int | None = None) -> np.ndarray:
    """Phase field from ``.npy`` or the last phase step of a sample file."""
    path = Path(path)
    if path.suffix == ".npy":
        field = np.load(path)
    else:
        field = sio.read_sample(path).fields["phase"][-1]
    field = np.asarray(field, dtype=float)
    if field.ndim != 2:
        raise sio.MalformedSampleError(f"{path}: expected a 2D field, got shape {field.shape}")
    if resize is not None and field.shape != (resize, resize):
        field = sio.resample(field, (resize, resize))
    return field


def cmd_eval(cfg: dict, manifest: Manifest, out: Path) -> int:
    groups, gt_files, mode = cfg["pred"], cfg["gt"], cfg["mode"]
    resize = cfg["resize"]
    errors, kept = [], []
    preds = [[] for _ in groups]
    gts = []
    for k, gpath in enumerate(gt_files):
        try:
            g = load_field(gpath, resize)
            ps = [load_field(grp[k], resize) for grp in groups]
        except (OSError, ValueError, sio.SampleFileError) as exc:
            errors.append(dict(index=k, gt=gpath, error=str(exc)))
            log.error("sample %d: %s", k, exc)
            continue
        shapes = {g.shape, *(p.shape for p in ps)}
        if len(shapes) != 1:
            msg = f"shape mismatch {sorted(shapes)}"
            errors.append(dict(index=k, gt=gpath, error=msg))
            log.error("sample %d (%s): %s", k, gpath, msg)
            continue
        gts.append(g)
        for lst, p in zip(preds, ps):
            lst.append(p)
        kept.append(k)
    if not kept:
        manifest.finish(_manifest_path(cfg, out), EXIT_IO, errors=errors)
        log.error("no sample could be evaluated")
        return EXIT_IO

    report = dict(mode=mode, n_samples=len(kept), evaluated=kept, errors=errors, models=[], ensembles={})
    tp, tg = float(cfg["thr_pred"]), float(cfg["thr_gt"])
    step = float(cfg["step"])

    def scores(target, m):
        if mode == "search":
            pair, best = metrics.threshold_search(target, gts, step, mode=m)
            return dict(thr_pred=pair.thr_pred, thr_gt=pair.thr_gt, mean_dice=best)
        per = [metrics.dice(metrics.predict_mask(p, tp, m), metrics.binarize(g, tg)) for p, g in zip(target, gts)]
        return dict(thr_pred=tp, thr_gt=tg, mean_dice=float(np.mean(per)), per_sample=per)

    for i, model in enumerate(preds):
        report["models"].append(dict(index=i, files=[groups[i][k] for k in kept], **scores(model, "single")))
    if len(preds) > 1:
        per_sample = [list(fs) for fs in zip(*preds)]
        wanted = ("hard", "soft") if mode == "search" else (mode,) if mode in ("hard", "soft") else ()
        for m in wanted:
            report["ensembles"][m] = scores(per_sample, m)
    report_path = sio.write_json(out / "report.json", report)
    for r in report["models"]:
        print(f"model {r['index']}: mean Dice {r['mean_dice']:.6f} (thr_pred {r['thr_pred']:g}, thr_gt {r['thr_gt']:g})")
    for m, r in report["ensembles"].items():
        print(f"{m} vote: mean Dice {r['mean_dice']:.6f} (thr_pred {r['thr_pred']:g}, thr_gt {r['thr_gt']:g})")
    manifest.finish(_manifest_path(cfg, out), EXIT_OK, report=report_path.name, errors=errors)
    return EXIT_OK


def cmd_meshstudy(cfg: dict, manifest: Manifest, out: Path) -> int:
    scenarios = runs.mesh_study_scenarios(cfg["case"], cfg["decomp"], cfg["resolutions"], seed=cfg["seed"],
                                          n_steps=int(cfg["steps"]), total_displacement=cfg["total_displacement"])
    results, logs = [], {}
    for sc in scenarios:
        log.info("meshstudy %s at %d (l0 = %g)", sc.name, sc.grid.nx, sc.material.l0)
        records = []
        try:
            res = runs.run_scenario(sc, _solver_config(cfg), on_step=_progress(records))
        except SimulationError as exc:
            log.error("resolution %d: %s", sc.grid.nx, exc)
            logs[str(sc.grid.nx)] = runs.convergence_log(records)
            manifest.finish(_manifest_path(cfg, out), EXIT_SOLVER, error=str(exc), failed_step=exc.step,
                            failed_resolution=sc.grid.nx, convergence=logs)
            return EXIT_SOLVER
        sio.export_curve(res.records, out / f"curve_{sc.grid.nx}.csv")
        logs[str(sc.grid.nx)] = runs.convergence_log(res.records)
        results.append(res)
    summary = runs.mesh_study_summary(results)
    sio.write_json(out / "summary.json", summary)
    for e in summary["distances"]:
        print(f"{e['coarse']} -> {e['fine']}: L2 distance {e['l2_distance']:.6g}")
    manifest.finish(_manifest_path(cfg, out), EXIT_OK, summary=summary, convergence=logs)
    return EXIT_OK


COMMANDS = {"bench": cmd_bench, "generate": cmd_generate, "eval": cmd_eval, "meshstudy": cmd_meshstudy}


def _manifest_path(cfg: dict, out: Path) -> Path:
    return Path(cfg["manifest"]) if cfg.get("manifest") else out / "manifest.json"


def _setup_logging(verbose: int, quiet: bool):
    level = logging.WARNING if quiet else logging.DEBUG if verbose > 1 else logging.INFO
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("phasefrac")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    _setup_logging(args.verbose, args.quiet)
    try:
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"phasefrac {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"phasefrac {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest_override = args.manifest
    cfg_for_manifest = dict(cfg)
    cfg["manifest"] = manifest_override
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, Manifest(argv, cfg_for_manifest), out)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
