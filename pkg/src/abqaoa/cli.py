"""Command-line driver: generate graphs, run sweeps, aggregate and fit.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure
(some level lost every restart), 4 I/O or input-file error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .maxcut import (
    GraphFormatError,
    GraphGenerationError,
    GraphParityError,
    CapacityError,
    build_cost_diagonal,
    collect_nonisomorphic_u3r,
    generate_ensemble,
    read_graph,
    write_graph,
)
from .metrics import FIT_FORMS, FitError, UnreachableError, aggregate_ensemble, fit_curve, p_star, scan_landscape, speedup
from .optimizer import OptimizerConfig, VariationalPoint
from .protocol import LevelFailure, ProtocolConfig, run_sweep
from .reference import FIT_PARAMETERS, P_STAR, SIZES

log = logging.getLogger("abqaoa")

SCHEMA_VERSION = 1
OUT_ENV = "ABQAOA_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

RESULT_COLUMNS = [
    "schema_version", "graph_id", "n", "weighted", "mode", "level", "e_best", "e_opt", "e_max",
    "r", "f", "n_ite_mean", "best_restart", "failed_restarts", "seed", "u", "v", "h",
]  # fmt: skip


# minimum needed by report; a results file may carry more
REPORT_COLUMNS = {"schema_version", "graph_id", "n", "weighted", "mode", "level", "r", "f"}


class ConfigError(ValueError):
    pass


class InputError(OSError):
    pass


# -- config ------------------------------------------------------------------


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text: str):
    return None if text.lower() in ("", "none") else int(text)


PROTOCOL_KEYS = {
    "R": int, "alpha": float, "target_p": int, "mode": str, "master_seed": int,
    "init_u_range": float, "init_v_range": float, "init_bias": float,
}  # fmt: skip
OPTIMIZER_KEYS = {
    "eps_g": float, "adam_rate": float, "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
    "learning_rate_ell": float, "tol": float, "max_iter": int, "h_max": float,
    "central_difference": _bool, "shots": _optional_int,
}  # fmt: skip
CONFIG_KEYS = {**PROTOCOL_KEYS, **OPTIMIZER_KEYS}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment. Errors name the line."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


def build_config(values: dict) -> ProtocolConfig:
    opt = {k: v for k, v in values.items() if k in OPTIMIZER_KEYS}
    proto = {k: v for k, v in values.items() if k in PROTOCOL_KEYS}
    try:
        return ProtocolConfig(optimizer=OptimizerConfig(**opt), **proto)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def flatten_config(cfg: ProtocolConfig) -> dict:
    flat = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "optimizer"}
    flat.update(asdict(cfg.optimizer))
    return flat


def _overrides(pairs) -> dict:
    text = "\n".join(pairs or [])
    return parse_config_text(text, "--set")


# -- helpers -----------------------------------------------------------------


def default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "abqaoa_out")) / name


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _vec(a) -> str:
    return " ".join(repr(float(x)) for x in a)


def write_manifest(path: Path, command: str, payload: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        **payload,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def collect_graph_paths(items) -> list[Path]:
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.txt")))
        elif p.is_file():
            paths.append(p)
        else:
            raise InputError(f"no such graph file or directory: {p}")
    if not paths:
        raise InputError("no graph files given")
    return paths


# -- gen ---------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out) if args.out else default_out("graphs")
    out.mkdir(parents=True, exist_ok=True)
    if args.nonisomorphic:
        if args.weighted:
            raise ConfigError("--nonisomorphic applies to unweighted graphs only")
        col = collect_nonisomorphic_u3r(args.n, attempt_budget=args.budget, rng_seed=args.seed, regularity=args.regularity)
        if not col.complete:
            log.warning("collection may be incomplete after %d attempts", col.attempts)
        graphs = col.graphs
    else:
        graphs = generate_ensemble(
            args.n, args.count, args.weighted, args.seed, regularity=args.regularity, connected=not args.allow_disconnected
        )
    written = []
    for g in graphs:
        path = out / f"{g.id}.txt"
        write_graph(g, path)
        written.append({"id": g.id, "path": str(path), "sha256": sha256(path)})
    write_manifest(out / "gen_manifest.json", "gen", {"args": {k: v for k, v in vars(args).items() if k != "func"}, "graphs": written})
    print(f"wrote {len(graphs)} graphs to {out}")
    return EXIT_OK


# -- sweep -------------------------------------------------------------------


def _sweep_one(job):
    path, cfg, record_trace, map_jobs = job
    g = read_graph(path)
    try:
        if map_jobs > 1:
            with ProcessPoolExecutor(map_jobs) as pool:
                recs = run_sweep(g, cfg, map_fn=pool.map, record_trace=record_trace)
        else:
            recs = run_sweep(g, cfg, record_trace=record_trace)
        error = None
    except LevelFailure as exc:
        recs, error = [], str(exc)
    rows, traces = [], {}
    for rec in recs:
        rows.append(
            {
                "schema_version": SCHEMA_VERSION,
                "graph_id": g.id,
                "n": g.n,
                "weighted": int(g.weighted),
                "mode": cfg.mode,
                "level": rec.level,
                "e_best": rec.e_best,
                "e_opt": rec.e_opt,
                "e_max": rec.e_max,
                "r": rec.r,
                "f": rec.f,
                "n_ite_mean": rec.n_ite_mean,
                "best_restart": rec.best_restart,
                "failed_restarts": sum(s.error is not None for s in rec.per_restart),
                "seed": cfg.master_seed,
                "u": _vec(rec.best_point.u),
                "v": _vec(rec.best_point.v),
                "h": _vec(rec.best_point.bias),
            }
        )
        if record_trace and rec.best_result is not None and rec.best_result.trace is not None:
            traces[rec.level] = rec.best_result.trace
    return g.id, rows, traces, error


def run_sweeps(paths, cfg: ProtocolConfig, out: Path, jobs: int, trace_dir: Path | None) -> int:
    for p in paths:
        read_graph(p)  # fail fast on malformed input
    per_graph = 1 if len(paths) > 1 else jobs
    work = [(p, cfg, trace_dir is not None, per_graph) for p in paths]
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_sweep_one, work))
    else:
        results = [_sweep_one(w) for w in work]

    rows = sorted((r for _, rs, _, _ in results for r in rs), key=lambda r: (r["graph_id"], r["level"]))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, RESULT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    if trace_dir is not None:
        trace_dir.mkdir(parents=True, exist_ok=True)
        for gid, _, traces, _ in results:
            for level, tr in traces.items():
                tr.write_csv(trace_dir / f"{gid}_{cfg.mode}_L{level}.csv")

    failures = {gid: err for gid, _, _, err in results if err}
    write_manifest(
        out / "manifest.json",
        "sweep",
        {
            "config": flatten_config(cfg),
            "graphs": [{"path": str(Path(p).resolve()), "sha256": sha256(Path(p))} for p in paths],
            "trace_dir": str(trace_dir) if trace_dir else None,
            "failures": failures,
        },
    )
    print(f"wrote {len(rows)} rows to {out / 'results.csv'}")
    for gid, err in sorted(failures.items()):
        print(f"level failure on {gid}: {err}", file=sys.stderr)
    return EXIT_NUMERIC if failures else EXIT_OK


def cmd_sweep(args) -> int:
    out = Path(args.out) if args.out else default_out("sweep")
    if args.replay:
        manifest = json.loads(Path(args.replay).read_text())
        values = {k: v for k, v in manifest["config"].items() if k in CONFIG_KEYS}
        paths = []
        for entry in manifest["graphs"]:
            p = Path(entry["path"])
            if not p.is_file():
                raise InputError(f"graph file from manifest is missing: {p}")
            if sha256(p) != entry["sha256"]:
                raise InputError(f"graph file changed since the manifest was written: {p}")
            paths.append(p)
        trace_dir = Path(args.trace_dir) if args.trace_dir else None
        return run_sweeps(paths, build_config(values), out, args.jobs, trace_dir)

    values = {}
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        values.update(parse_config_text(text, str(path)))
    values.update(_overrides(args.set))
    for key, flag in (("mode", args.mode), ("target_p", args.target_p), ("master_seed", args.seed)):
        if flag is not None:
            values[key] = flag
    cfg = build_config(values)
    if not args.graphs:
        raise ConfigError("no graphs given")
    paths = collect_graph_paths(args.graphs)
    trace_dir = Path(args.trace_dir) if args.trace_dir else None
    return run_sweeps(paths, cfg, out, args.jobs, trace_dir)


# -- report ------------------------------------------------------------------


def read_results(paths) -> list[dict]:
    rows, versions = [], set()
    for p in paths:
        try:
            with open(p, newline="") as fh:
                reader = csv.DictReader(fh)
                missing = REPORT_COLUMNS - set(reader.fieldnames or ())
                if missing:
                    raise ConfigError(f"{p}: not a results file, missing columns {sorted(missing)}")
                for r in reader:
                    versions.add(r["schema_version"])
                    rows.append(r)
        except OSError as exc:
            raise InputError(f"cannot read {p}: {exc}") from None
    if len(versions) > 1:
        raise ConfigError(f"mixed schema versions in inputs: {sorted(versions)}")
    if versions and versions != {str(SCHEMA_VERSION)}:
        raise ConfigError(f"unsupported schema version {versions.pop()}; expected {SCHEMA_VERSION}")
    return rows


def build_curves(rows):
    groups = defaultdict(lambda: defaultdict(list))
    for r in rows:
        ensemble = "w3r" if int(r["weighted"]) else "u3r"
        key = (ensemble, int(r["n"]), r["mode"])
        groups[key][(r["graph_id"], r.get("seed", ""))].append(
            SimpleNamespace(level=int(r["level"]), r=float(r["r"]), f=float(r["f"]))
        )
    return {key: aggregate_ensemble([g[k] for k in sorted(g)], key[1], key[2]) for key, g in sorted(groups.items())}


def fit_group(curve, ensemble, quantity, weighted_fit):
    form = FIT_FORMS[(ensemble, curve.mode, quantity)]
    pts = [
        (pt.p, pt.mean_infidelity_r if quantity == "accuracy" else pt.mean_infidelity_f,
         pt.std_infidelity_r if quantity == "accuracy" else pt.std_infidelity_f)
        for pt in curve.points
    ]  # fmt: skip
    pts = [x for x in pts if x[1] > 0]
    sigma = [s for _, _, s in pts] if weighted_fit and all(s > 0 for _, _, s in pts) else None
    return fit_curve([(p, y) for p, y, _ in pts], form, sigma=sigma)


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else default_out("report")
    rows = read_results(args.results)
    if not rows:
        raise ConfigError("no result rows to report")
    curves = build_curves(rows)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ensemble", "n", "mode", "p", "mean_1mr", "std_1mr", "mean_1mf", "std_1mf", "ensemble_size"])
        for (ens, n, mode), curve in curves.items():
            for pt in curve.points:
                w.writerow(
                    [ens, n, mode, pt.p]
                    + [_fmt(x) for x in (pt.mean_infidelity_r, pt.std_infidelity_r, pt.mean_infidelity_f, pt.std_infidelity_f)]
                    + [curve.ensemble_size]
                )

    fits = {}
    with open(out / "fits.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ensemble", "mode", "quantity", "n", "form", "p0", "c", "residual"])
        for (ens, n, mode), curve in curves.items():
            for quantity in ("accuracy", "infidelity"):
                try:
                    fit = fit_group(curve, ens, quantity, args.weighted_fit)
                except FitError as exc:
                    log.warning("no %s fit for %s n=%d %s: %s", quantity, ens, n, mode, exc)
                    continue
                fits[(ens, n, mode, quantity)] = fit
                w.writerow([ens, mode, quantity, n, fit.form, _fmt(fit.p0), _fmt(fit.c), _fmt(fit.residual)])

    with open(out / "pstar.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ensemble", "n", "r_star", "p_star_standard", "source_standard", "p_star_adaptive", "source_adaptive", "speedup"])
        for ens, n in sorted({(k[0], k[1]) for k in curves}):
            found = {}
            for mode, prefer_fit in (("standard", True), ("adaptive", False)):
                if (ens, n, mode) not in curves:
                    continue
                fit = fits.get((ens, n, mode, "accuracy"))
                sources = [("fit", fit), ("data", curves[(ens, n, mode)])] if prefer_fit else [("data", curves[(ens, n, mode)])]
                for name, src in sources:
                    if src is None:
                        continue
                    try:
                        found[mode] = (p_star(src, args.r_star), name)
                        break
                    except UnreachableError as exc:
                        log.warning("%s n=%d %s: %s", ens, n, mode, exc)
            std = found.get("standard", ("", ""))
            ada = found.get("adaptive", ("", ""))
            s = _fmt(speedup(std[0], ada[0])) if std[0] != "" and ada[0] != "" else ""
            w.writerow([ens, n, args.r_star, std[0], std[1], ada[0], ada[1], s])

    write_manifest(
        out / "manifest.json",
        "report",
        {"inputs": [{"path": str(Path(p).resolve()), "sha256": sha256(Path(p))} for p in args.results],
         "r_star": args.r_star, "weighted_fit": args.weighted_fit},
    )  # fmt: skip
    print(f"wrote curves, fits and p* tables to {out}")
    return EXIT_OK


# -- reference ---------------------------------------------------------------


def cmd_reference(args) -> int:
    out = Path(args.out) if args.out else default_out("reference")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "reference_fits.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ensemble", "mode", "quantity", "n", "form", "p0", "c"])
        for key, table in FIT_PARAMETERS.items():
            for n, (p0, c) in table.items():
                w.writerow([*key, n, FIT_FORMS[key], p0, c])
    with open(out / "reference_pstar.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ensemble", "n", "p_star_standard", "p_star_adaptive", "speedup"])
        for ens in ("w3r", "u3r"):
            for n in SIZES:
                a, b = P_STAR[ens]["standard"][n], P_STAR[ens]["adaptive"][n]
                w.writerow([ens, n, a, b, f"{speedup(a, b):.4f}"])
    print(f"wrote reference tables to {out}")
    return EXIT_OK


# -- landscape ---------------------------------------------------------------


def _pair(text):
    a, b = (float(x) for x in text.split(","))
    return a, b


def cmd_landscape(args) -> int:
    g = read_graph(args.graph)
    d = build_cost_diagonal(g)
    if args.bias in ("zeros", "ones"):
        h = np.full(g.n, 0.0 if args.bias == "zeros" else 1.0)
    else:
        h = np.array([float(x) for x in args.bias.split(",")])
        if h.size != g.n:
            raise ConfigError(f"--bias has {h.size} entries for a {g.n}-vertex graph")
    base = VariationalPoint.from_arrays([args.u], [args.v], h)
    us, vs, e = scan_landscape(d, base, args.u_range, args.v_range, args.resolution)
    out = Path(args.out) if args.out else default_out("landscape") / f"{g.id}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u1", "v1", "energy"])
        for i, u in enumerate(us):
            for j, v in enumerate(vs):
                w.writerow([_fmt(u), _fmt(v), _fmt(e[i, j])])
    print(f"wrote {e.size} grid points to {out}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="abqaoa", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate random regular graphs")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--count", type=int, default=40)
    gen.add_argument("--regularity", type=int, default=3)
    gen.add_argument("--weighted", action="store_true", help="edge weights uniform in (0, 1]")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--nonisomorphic", action="store_true", help="all distinct unweighted classes (n <= 12)")
    gen.add_argument("--budget", type=int, default=10_000, help="attempt budget for --nonisomorphic")
    gen.add_argument("--allow-disconnected", action="store_true")
    gen.add_argument("--out", help=f"output directory (default ${OUT_ENV}/graphs)")
    gen.set_defaults(func=cmd_gen)

    sw = sub.add_parser("sweep", help="run level sweeps on graph files")
    sw.add_argument("graphs", nargs="*", help="graph files or directories of *.txt files")
    sw.add_argument("--mode", choices=("standard", "adaptive"))
    sw.add_argument("--target-p", type=int)
    sw.add_argument("--seed", type=int, help="master seed")
    sw.add_argument("--config", help="key = value config file")
    sw.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    sw.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sw.add_argument("--trace-dir", help="write per-level iteration traces of the best restart here")
    sw.add_argument("--replay", help="rerun from a sweep manifest.json")
    sw.add_argument("--out", help=f"output directory (default ${OUT_ENV}/sweep)")
    sw.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="aggregate results, fit curves, compute p* and speedup")
    rp.add_argument("results", nargs="+")
    rp.add_argument("--r-star", type=float, default=0.99)
    rp.add_argument("--weighted-fit", action="store_true", help="weight the log-space fit by the ensemble std")
    rp.add_argument("--out", help=f"output directory (default ${OUT_ENV}/report)")
    rp.set_defaults(func=cmd_report)

    rf = sub.add_parser("reference", help="write the published fit and p* tables")
    rf.add_argument("--out")
    rf.set_defaults(func=cmd_reference)

    ls = sub.add_parser("landscape", help="level-1 energy grid over (u1, v1)")
    ls.add_argument("graph")
    ls.add_argument("--bias", default="zeros", help="'zeros', 'ones' or a comma-separated list")
    ls.add_argument("--u", type=float, default=0.0)
    ls.add_argument("--v", type=float, default=0.0)
    ls.add_argument("--u-range", type=_pair)
    ls.add_argument("--v-range", type=_pair)
    ls.add_argument("--resolution", type=int, default=41)
    ls.add_argument("--out", help="output CSV path")
    ls.set_defaults(func=cmd_landscape)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, GraphParityError, GraphGenerationError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
