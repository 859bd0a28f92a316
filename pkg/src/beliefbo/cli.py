"""Command line front-end: run experiment grids, aggregate and plot regret.

Usage::

    beliefbo run --config exp.yaml [--out DIR] [--seeds 0-9] [--workers 4] [--dry-run]
    beliefbo report DIR
    beliefbo plot DIR/aggregate.csv
    beliefbo selfcheck

The default output root is ``$BELIEFBO_OUT`` (or ``./results``).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .beliefs import ArgmaxConfig, McBudget, Uniform
from .benchmarks import BENCHMARKS, NoisyObjective, PriorSpec, build_maxvalue_prior, build_prior, get_benchmark
from .engine import BoConfig, RunRecord, run

logger = logging.getLogger("beliefbo")

OUT_ENV = "BELIEFBO_OUT"
RESULT_COLUMNS = ("method", "benchmark", "seed", "iteration")  # then x0..x{d-1}, y, incumbent, regret, seconds
AGGREGATE_COLUMNS = ("method", "benchmark", "evaluation", "n_seeds", "median", "q25", "q75")
ACQS = ("logei", "mes", "ts")
# sources whose edits can change results (plumbing modules are excluded)
NUMERIC_MODULES = ("gp.py", "pathwise.py", "beliefs.py", "acquisition.py", "engine.py", "benchmarks.py",
                   "_kernels_py.py", "_kernels_ext.pyx", "_backend.py")


class ConfigError(ValueError):
    """Invalid experiment config; the message starts with ``file:line:``."""


# --------------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    benchmark: str
    methods: list
    seeds: list
    iterations: int
    q: int = 1
    n_init: int = 3
    prior: dict = field(default_factory=lambda: {"kind": "location", "quality": "good"})
    budget: dict = field(default_factory=dict)
    argmax: dict = field(default_factory=dict)
    kernel: str = "se"
    restarts: int = 8
    fit_restarts: int = 8
    n_candidates: int | None = None
    output: str | None = None

    def resolved(self) -> dict:
        d = asdict(self)
        d["budget"] = asdict(McBudget(**self.budget))
        d["argmax"] = asdict(ArgmaxConfig(**self.argmax))
        d["output"] = None
        return d


_SCHEMA = {
    "benchmark": str, "methods": list, "seeds": (list, int), "iterations": int, "q": int, "n_init": int,
    "prior": dict, "budget": dict, "argmax": dict, "kernel": str, "restarts": int, "fit_restarts": int,
    "n_candidates": (int, type(None)), "output": (str, type(None)),
}
_REQUIRED = ("benchmark", "methods", "seeds", "iterations")
_SUB = {
    "prior": {"kind": str, "quality": str, "q": (int, float), "sigma_s": (int, float), "sigma_v": (int, float)},
    "budget": {k: int for k in ("n_functions", "n_features", "resample_cap", "n_optimal")},
    "argmax": {"candidates_per_dim": int, "n_starts": int, "steps": int, "initial_step": (int, float)},
}


def parse_method(name: str):
    """``[belief[-importance]-]{logei,mes,ts}`` -> (acquisition, weighting)."""
    parts = name.lower().split("-")
    acq = parts[-1]
    if acq not in ACQS:
        raise ValueError(f"unknown acquisition in method {name!r}")
    head = parts[:-1]
    if not head:
        return acq, "none"
    if head == ["belief"]:
        return acq, "rejection"
    if head == ["belief", "importance"]:
        return acq, "importance"
    raise ValueError(f"unknown method {name!r}")


def parse_seeds(spec) -> list:
    """``"0-4"``, ``"1,3,5"``, an int count or a list."""
    if isinstance(spec, int):
        return list(range(spec))
    if isinstance(spec, list):
        return [int(s) for s in spec]
    out = []
    for part in str(spec).split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _node_value(node):
    return yaml.safe_load(yaml.serialize(node))


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment file; errors name the offending line."""
    path = str(path)
    text = Path(path).read_text()
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        line = mark.line + 1 if mark else 1
        raise ConfigError(f"{path}:{line}: malformed YAML ({getattr(err, 'problem', err)})") from None
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{path}:1: top level must be a mapping")

    def err(node, msg):
        return ConfigError(f"{path}:{node.start_mark.line + 1}: {msg}")

    values = {}
    for knode, vnode in root.value:
        key = knode.value
        if key not in _SCHEMA:
            raise err(knode, f"unknown key {key!r}")
        val = _node_value(vnode)
        if not isinstance(val, _SCHEMA[key]) or isinstance(val, bool):
            raise err(vnode, f"{key!r} has the wrong type ({type(val).__name__})")
        if key in _SUB:
            for sk, sv in vnode.value:
                if sk.value not in _SUB[key]:
                    raise err(sk, f"unknown key {key}.{sk.value}")
                sval = _node_value(sv)
                if not isinstance(sval, _SUB[key][sk.value]) or isinstance(sval, bool):
                    raise err(sv, f"{key}.{sk.value} has the wrong type")
        values[key] = (val, vnode)
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"{path}:1: missing required key {key!r}")

    bench, bnode = values["benchmark"]
    try:
        get_benchmark(bench)
    except KeyError:
        raise err(bnode, f"unknown benchmark {bench!r}; known: {', '.join(sorted(BENCHMARKS))}") from None
    methods, mnode = values["methods"]
    for i, m in enumerate(methods):
        try:
            parse_method(str(m))
        except ValueError as e:
            raise err(mnode.value[i] if i < len(mnode.value) else mnode, str(e)) from None
    if len(set(methods)) != len(methods):
        raise err(mnode, "duplicate methods")
    for key in ("iterations", "q", "n_init", "restarts", "fit_restarts"):
        if key in values and values[key][0] < (0 if key == "iterations" else 1):
            raise err(values[key][1], f"{key!r} out of range")
    if "prior" in values:
        prior, pnode = values["prior"]
        kind = prior.get("kind", "location")
        if kind not in ("location", "value", "none"):
            raise err(pnode, f"prior.kind must be location, value or none (got {kind!r})")
        if prior.get("quality", "good") not in ("good", "bad"):
            raise err(pnode, "prior.quality must be good or bad")
        if kind == "value" and not prior.get("sigma_v", 0) > 0:
            raise err(pnode, "prior.sigma_v must be positive for a value prior")
    for key in ("budget", "argmax"):
        if key in values:
            try:
                (McBudget if key == "budget" else ArgmaxConfig)(**values[key][0])
            except ValueError as e:
                raise err(values[key][1], str(e)) from None
    kwargs = {k: v for k, (v, _) in values.items()}
    kwargs["benchmark"] = get_benchmark(bench).name
    kwargs["methods"] = [str(m) for m in methods]
    kwargs["seeds"] = parse_seeds(kwargs["seeds"])
    return ExperimentConfig(**kwargs)


# --------------------------------------------------------------------------- cells


def cell_name(method: str, seed: int) -> str:
    return f"{method}__seed{seed}"


def make_bo_config(exp: ExperimentConfig, method: str, seed: int) -> BoConfig:
    spec = get_benchmark(exp.benchmark)
    acq, weighting = parse_method(method)
    p = exp.prior
    kind = p.get("kind", "location")
    if kind == "location":
        belief = build_prior(spec, PriorSpec(p.get("quality", "good"), p.get("q"), p.get("sigma_s"), seed))
    elif kind == "value":
        belief = build_maxvalue_prior(spec, float(p["sigma_v"]))
    else:
        belief = Uniform()
    return BoConfig(spec.space, belief, acq, weighting, exp.iterations, exp.q, McBudget(**exp.budget), exp.kernel,
                    seed, exp.n_init, exp.restarts, exp.fit_restarts, exp.n_candidates, ArgmaxConfig(**exp.argmax))


def _write_cell_csv(path: Path, rec: RunRecord, method: str, bench: str, seed: int):
    tmp = path.with_suffix(".csv.tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*RESULT_COLUMNS, *[f"x{i}" for i in range(rec.dim)], "y", "incumbent", "regret", "seconds"])
        for i in range(len(rec)):
            w.writerow([method, bench, seed, rec.iteration[i], *map(repr, rec.X[i].tolist()), repr(rec.y[i]),
                        repr(rec.incumbent[i]), repr(rec.regret[i]), repr(rec.seconds[i])])
    os.replace(tmp, path)


def _read_cell_csv(path: Path, flags=None) -> RunRecord:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    dim = sum(1 for h in header if h.startswith("x") and h[1:].isdigit())
    rec = RunRecord(dim)
    xi = header.index("x0")
    for k, r in enumerate(rows[1:]):
        rec.iteration.append(int(r[3]))
        rec.X.append(np.array([float(v) for v in r[xi : xi + dim]]))
        rec.y.append(float(r[xi + dim]))
        rec.incumbent.append(float(r[xi + dim + 1]))
        rec.regret.append(float(r[xi + dim + 2]))
        rec.seconds.append(float(r[xi + dim + 3]))
        rec.flags.append(flags[k] if flags and k < len(flags) else "")
    return rec


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def code_hash() -> str:
    """Digest of the package sources, so stale results are never reused."""
    h = hashlib.sha256()
    root = Path(__file__).parent
    for name in NUMERIC_MODULES:
        p = root / name
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def run_cell(exp_dict: dict, method: str, seed: int, out_dir: str) -> dict:
    """Run (or resume) one (method, seed) cell; returns its manifest entry."""
    exp = ExperimentConfig(**exp_dict)
    spec = get_benchmark(exp.benchmark)
    cfg = make_bo_config(exp, method, seed)
    path = Path(out_dir) / f"{cell_name(method, seed)}.csv"
    flag_path = Path(out_dir) / f".{cell_name(method, seed)}.flags.json"
    rec = None
    if path.exists():
        flags = json.loads(flag_path.read_text()) if flag_path.exists() else None
        rec = _read_cell_csv(path, flags)
        logger.info("resuming %s at evaluation %d", path.name, len(rec))
    start = len(rec) if rec is not None else 0

    def persist(r):
        _write_cell_csv(path, r, method, spec.name, seed)
        flag_path.write_text(json.dumps(r.flags))

    rec = run(cfg, NoisyObjective(spec, seed, start), rec, noiseless=lambda x: float(spec.noiseless(x)[0]),
              f_opt=spec.f_opt, callback=persist)
    persist(rec)
    return {
        "file": path.name, "method": method, "seed": seed, "evaluations": len(rec), "status": rec.status,
        "complete": rec.status == "ok" and len(rec) == cfg.total_evaluations, "sha256": sha256(path),
        "flags": sorted({f for fl in rec.flags for f in fl.split(";") if f}),
    }


# --------------------------------------------------------------------------- commands


def _out_dir(args_out, exp: ExperimentConfig | None, config_path=None) -> Path:
    if args_out:
        return Path(args_out)
    if exp is not None and exp.output:
        return Path(exp.output)
    root = Path(os.environ.get(OUT_ENV, "results"))
    stem = Path(config_path).stem if config_path else "experiment"
    return root / stem


def cmd_run(args) -> int:
    try:
        exp = load_config(args.config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.seeds:
        exp.seeds = parse_seeds(args.seeds)
    cells = [(m, s) for m in exp.methods for s in exp.seeds]
    out = _out_dir(args.out, exp, args.config)
    if args.dry_run:
        print(f"benchmark={exp.benchmark} evaluations={exp.n_init + exp.iterations * exp.q} out={out}")
        for m, s in cells:
            print(f"  {cell_name(m, s)}")
        print(f"{len(cells)} cells")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    man_path = out / "manifest.json"
    resolved = exp.resolved()
    cfg_hash = hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()[:16]
    chash = code_hash()
    manifest = {"cells": {}}
    if man_path.exists():
        old = json.loads(man_path.read_text())
        if old.get("config_hash") == cfg_hash and old.get("code_hash") == chash:
            manifest = old
        else:
            logger.warning("config or code changed since the last run; recomputing all cells")
            for m, s in cells:
                for p in (out / f"{cell_name(m, s)}.csv", out / f".{cell_name(m, s)}.flags.json"):
                    p.unlink(missing_ok=True)
    manifest.update({"version": __version__, "code_hash": chash, "config_hash": cfg_hash, "config": resolved})
    manifest["config"]["seeds"] = sorted(set(manifest["config"]["seeds"]) | set(exp.seeds))
    todo = []
    for m, s in cells:
        entry = manifest["cells"].get(cell_name(m, s))
        f = out / f"{cell_name(m, s)}.csv"
        if entry and entry.get("complete") and f.exists() and sha256(f) == entry.get("sha256"):
            print(f"skip {cell_name(m, s)} (complete)")
            continue
        todo.append((m, s))

    def record(entry):
        manifest["cells"][cell_name(entry["method"], entry["seed"])] = entry
        man_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
        print(f"done {entry['file']} evaluations={entry['evaluations']} status={entry['status']}", flush=True)

    exp_dict = asdict(exp)
    if args.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            futs = [pool.submit(run_cell, exp_dict, m, s, str(out)) for m, s in todo]
            for fut in futs:
                record(fut.result())
    else:
        for m, s in todo:
            record(run_cell(exp_dict, m, s, str(out)))
    man_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    bad = [k for k, e in manifest["cells"].items() if not e.get("complete")]
    return 1 if bad else 0


def load_results(result_dir) -> list:
    """All result rows of a directory as dicts (numeric fields converted)."""
    rows = []
    for p in sorted(Path(result_dir).glob("*.csv")):
        if p.name == "aggregate.csv":
            continue
        with open(p, newline="") as fh:
            for r in csv.DictReader(fh):
                r["seed"] = int(r["seed"])
                r["iteration"] = int(r["iteration"])
                for k in ("y", "incumbent", "regret", "seconds"):
                    r[k] = float(r[k])
                r["file"] = p.name
                rows.append(r)
    return rows


def aggregate(rows) -> list:
    """Median and quartiles of simple regret per (method, evaluation)."""
    if not rows:
        raise ValueError("no result rows to aggregate")
    benches = {r["benchmark"] for r in rows}
    if len(benches) > 1:
        raise ValueError(f"mixed benchmarks in one report: {sorted(benches)}")
    bench = benches.pop()
    curves: dict = {}
    for r in rows:
        curves.setdefault(r["method"], {}).setdefault(r["seed"], []).append(r["regret"])
    out = []
    for method in sorted(curves):
        runs = list(curves[method].values())
        for n in range(max(len(c) for c in runs)):
            vals = np.array([c[n] for c in runs if len(c) > n])
            q25, med, q75 = np.quantile(vals, [0.25, 0.5, 0.75])
            out.append({"method": method, "benchmark": bench, "evaluation": n + 1, "n_seeds": vals.size,
                        "median": float(med), "q25": float(q25), "q75": float(q75)})
    return out


def cmd_report(args) -> int:
    try:
        agg = aggregate(load_results(args.result_dir))
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    path = Path(args.out) if args.out else Path(args.result_dir) / "aggregate.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, AGGREGATE_COLUMNS)
        w.writeheader()
        for row in agg:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    last = {}
    for row in agg:
        last[row["method"]] = row
    for m, row in last.items():
        print(f"{m}: evaluation {row['evaluation']} median regret {row['median']:.4g} "
              f"[{row['q25']:.4g}, {row['q75']:.4g}] over {row['n_seeds']} seeds")
    print(f"wrote {path}")
    return 0


def plot_aggregate(agg_path, out_dir=None) -> list:
    """One SVG per benchmark; identical input gives identical bytes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(agg_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{agg_path} holds no aggregate rows")
    out_dir = Path(out_dir) if out_dir else Path(agg_path).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for bench in sorted({r["benchmark"] for r in rows}):
        sub = [r for r in rows if r["benchmark"] == bench]
        with matplotlib.rc_context({"svg.hashsalt": "beliefbo", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(5.0, 3.5))
            for method in sorted({r["method"] for r in sub}):
                mr = [r for r in sub if r["method"] == method]
                n = np.array([int(r["evaluation"]) for r in mr])
                floor = 1e-8
                med = np.maximum([float(r["median"]) for r in mr], floor)
                lo = np.maximum([float(r["q25"]) for r in mr], floor)
                hi = np.maximum([float(r["q75"]) for r in mr], floor)
                (line,) = ax.plot(n, med, label=method)
                ax.fill_between(n, lo, hi, color=line.get_color(), alpha=0.2, linewidth=0)
            ax.set_yscale("log")
            ax.set_xlabel("evaluations")
            ax.set_ylabel("simple regret")
            ax.set_title(bench)
            ax.legend()
            fig.tight_layout()
            path = out_dir / f"{bench}_regret.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
        paths.append(path)
    return paths


def cmd_plot(args) -> int:
    try:
        paths = plot_aggregate(args.aggregate, args.out)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_checks

    results = run_checks()
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} checks passed")
    return 0 if n_ok == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beliefbo", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (method, seed) cell of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help=f"result directory (default ${OUT_ENV}/<config stem>)")
    p.add_argument("--seeds", help="override seeds, e.g. 0-9 or 1,3,5")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dry-run", action="store_true", help="print the cell matrix and exit")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate regret curves of a result directory")
    p.add_argument("result_dir")
    p.add_argument("--out", help="aggregate CSV path (default <result_dir>/aggregate.csv)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", help="render regret curves from an aggregate file")
    p.add_argument("aggregate")
    p.add_argument("--out", help="directory for the SVG files")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("selfcheck", help="fast statistical self-test")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
