"""Command-line driver: seeded, parallel, resumable experiment runs.

Each run reads a JSON config, writes its artifacts into ``--out`` together
with ``manifest.json`` and exits 0 (checks passed), 1 (bad config),
2 (runtime failure) or 3 (a check failed).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .coalescent import delta_coalescent_count, simulate_marked_trace, simulate_trace
from .errors import ConfigError, DeltaOutOfRange, ParseError, ValidationError
from .limit import PairRateClock, sample_limit_subtree
from .offspring import Counterexample, OffspringLaw, h_predicates, law_from_dict
from .profile import ContinuousProfile, ProfilePair, discretize
from .rng import ParallelMap, run_replicates, stream
from .thresholds import Thresholds
from .tree import (build_tree, contour_function, first_visit_times, height_function,
                   path_to_csv, tree_to_csv)
from .verify import (appendix_a_check, check_moment_asymptotics, check_transition_law,
                     compare_fdd, contour_height_discrepancy, discrepancy_curve,
                     format_table, lineage_quantiles)

SCHEMA_VERSION = 1
WORKERS_ENV = "CANNINGS_LAB_WORKERS"
UNIT = [[0.0, 1.0], [1.0, 1.0]]


@dataclass
class ExperimentConfig:
    ell: list = field(default_factory=lambda: [list(k) for k in UNIT])
    sigma: list = field(default_factory=lambda: [list(k) for k in UNIT])
    ratio_at_zero: float | None = None
    law: dict = field(default_factory=lambda: {"law": "wright_fisher"})
    n: int = 64
    n_grid: list = field(default_factory=lambda: [64, 128, 256])
    k: int = 2
    reps: int = 1000
    seed: int = 0
    h_star: int | None = None
    q: int = 8
    quantile: float = 0.95
    delta: float = 0.1
    rate_distortion: float = 1.0
    thresholds: dict = field(default_factory=dict)
    out: str | None = None
    workers: int | None = None

    def pair(self) -> ProfilePair:
        ratio = float("nan") if self.ratio_at_zero is None else float(self.ratio_at_zero)
        return ProfilePair(ContinuousProfile(self.ell), ContinuousProfile(self.sigma), ratio)

    def offspring_law(self) -> OffspringLaw:
        return law_from_dict(self.law)

    def limits(self) -> Thresholds:
        return Thresholds.from_dict(self.thresholds)

    def identity(self) -> dict:
        """Fields that determine the results; worker count and paths excluded."""
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _positive_int(cfg, name):
    v = getattr(cfg, name)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ValidationError(name, "must be a positive integer")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    for name in ("n", "k", "reps", "q"):
        _positive_int(cfg, name)
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ValidationError("seed", "must be a non-negative integer")
    if not isinstance(cfg.n_grid, list) or not cfg.n_grid or \
            any(isinstance(x, bool) or not isinstance(x, int) or x < 2 for x in cfg.n_grid):
        raise ValidationError("n_grid", "must be a non-empty list of integers >= 2")
    if cfg.workers is not None and (not isinstance(cfg.workers, int) or cfg.workers < 1):
        raise ValidationError("workers", "must be a positive integer")
    if not 0 < cfg.quantile < 1:
        raise ValidationError("quantile", "must lie in (0, 1)")
    if not cfg.delta > 0:
        raise ValidationError("delta", "must be positive")
    if not cfg.rate_distortion > 0:
        raise ValidationError("rate_distortion", "must be positive")
    try:
        pair = cfg.pair()
    except (ValueError, TypeError) as exc:
        raise ValidationError("ell", str(exc)) from exc
    try:
        law = cfg.offspring_law()
    except (ValueError, TypeError, KeyError) as exc:
        raise ValidationError("law", str(exc)) from exc
    if isinstance(law, Counterexample) and not np.all(pair.ell.vs == pair.ell.vs[0]):
        raise ValidationError("law", "requires constant profile")
    try:
        cfg.limits()
    except (KeyError, TypeError) as exc:
        raise ValidationError("thresholds", str(exc)) from exc
    return cfg


def load_config(text: str | None) -> ExperimentConfig:
    if text is None:
        return validate(ExperimentConfig())
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValidationError(unknown[0], "unknown key")
    return validate(ExperimentConfig(**raw))


def resolve_workers(flag: int | None, cfg: ExperimentConfig) -> int:
    if flag is not None:
        return flag
    if cfg.workers is not None:
        return cfg.workers
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError("workers", f"{WORKERS_ENV} must be an integer") from exc
    return os.cpu_count() or 1


class Outputs:
    """Collects artifacts so the manifest can hash them."""

    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}
        root.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        (self.root / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def report(self, rep) -> None:
        self.write("report.json", rep.to_json())
        self.write("report.txt", rep.to_table())


def _h_star(cfg, profile) -> int:
    return cfg.h_star if cfg.h_star is not None else max(1, profile.h_q // 2)


def cmd_simulate_tree(cfg, out, mapper) -> bool:
    profile = discretize(cfg.pair().ell, cfg.n)
    tree = build_tree(profile, cfg.offspring_law(), stream(cfg.seed, "simulate-tree", 0))
    hgt = height_function(tree)
    c = contour_function(tree)
    tau = first_visit_times(tree, c)
    identity = bool(np.array_equal(tau + hgt, 2 * np.arange(len(hgt))))
    out.write("tree.csv", tree_to_csv(tree))
    out.write("height.csv", path_to_csv(hgt))
    out.write("contour.csv", path_to_csv(c))
    try:
        delta_count = delta_coalescent_count(tree, cfg.delta)
    except DeltaOutOfRange:
        delta_count = None
    summary = {"vertices": tree.size, "generations": tree.height, "identity_holds": identity,
               "discrepancy": contour_height_discrepancy(tree), "delta": cfg.delta,
               "delta_coalescent_count": delta_count}
    out.write("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return identity


def _trace_counts(profile, law, h_star, k, rng):
    return simulate_trace(profile, law, h_star, k, rng).counts.tolist()


def cmd_trace(cfg, out, mapper) -> bool:
    law = cfg.offspring_law()
    profile = discretize(cfg.pair().ell, cfg.n)
    h_star = _h_star(cfg, profile)
    marked, ktree = simulate_marked_trace(profile, law, h_star, cfg.k,
                                          stream(cfg.seed, "trace-marked", 0))
    out.write("trace.csv", marked.trace.to_csv())
    out.write("marked_trace.json", marked.to_json() + "\n")
    out.write("k_point_tree.json", ktree.to_json() + "\n")
    runs = run_replicates(partial(_trace_counts, profile, law, h_star, cfg.k), cfg.seed,
                          "trace", cfg.reps, mapper)
    lines = ["rep,j,X_j\n"] + [f"{r},{h_star - i},{x}\n" for r, c in enumerate(runs)
                               for i, x in enumerate(c)]
    out.write("traces.csv", "".join(lines))
    return all(all(a >= b for a, b in zip(c, c[1:])) and c[-1] == 1 for c in runs)


def _limit_sample(pair, clock, k, rng):
    return sample_limit_subtree(pair, k, rng, clock=clock).to_json()


def cmd_sample_limit(cfg, out, mapper) -> bool:
    pair = cfg.pair()
    clock = PairRateClock.from_pair(pair)
    lines = run_replicates(partial(_limit_sample, pair, clock, cfg.k), cfg.seed, "limit",
                           cfg.reps, mapper)
    out.write("samples.jsonl", "".join(x + "\n" for x in lines))
    return True


def cmd_compare_fdd(cfg, out, mapper) -> bool:
    rep = compare_fdd(cfg.pair(), cfg.offspring_law(), cfg.n, cfg.k, cfg.reps, cfg.seed,
                      mapper, cfg.rate_distortion, cfg.limits())
    out.report(rep)
    return rep.passed


def cmd_moments(cfg, out, mapper) -> bool:
    law = cfg.offspring_law()
    const = isinstance(law, Counterexample)
    rep = check_moment_asymptotics(law, cfg.pair(), cfg.n_grid, cfg.reps, cfg.seed,
                                   cfg.limits(), constant_profile=const)
    out.report(rep)
    preds = h_predicates(law, cfg.n_grid)
    out.write("h_predicates.json", json.dumps(preds, indent=2, sort_keys=True) + "\n")
    header = list(preds["rows"][0])
    slopes = [[key, "n/a" if v is None else v] for key, v in sorted(preds["loglog_slope"].items())]
    out.write("h_predicates.txt", format_table(header, [[r[h] for h in header] for r in preds["rows"]])
              + format_table(["quantity", "loglog_slope"], slopes))
    return rep.passed


def cmd_transition_check(cfg, out, mapper) -> bool:
    h_star = cfg.h_star if cfg.h_star is not None else 5
    rep = check_transition_law(cfg.offspring_law(), cfg.q, h_star, cfg.k, cfg.reps, cfg.seed,
                               mapper, cfg.limits())
    out.report(rep)
    return rep.passed


def cmd_cdfi(cfg, out, mapper) -> bool:
    limits = cfg.limits()
    curve = lineage_quantiles("cdfi", cfg.n_grid, cfg.offspring_law(), cfg.reps, cfg.seed,
                              cfg.quantile, cfg.pair(), mapper, limits)
    curve.passed = all(p["estimate"] <= limits.cdfi_q95_max for p in curve.points)
    out.write("quantiles.json", curve.to_json())
    out.write("quantiles.txt", curve.to_table())
    return curve.passed


def cmd_counterexample(cfg, out, mapper) -> bool:
    law = cfg.offspring_law()
    if not isinstance(law, Counterexample):
        raise ValidationError("law", "counterexample command needs the counterexample law")
    curve = lineage_quantiles("x1", cfg.n_grid, law, cfg.reps, cfg.seed, 0.5, None, mapper,
                              cfg.limits())
    med = [p["estimate"] for p in curve.points]
    curve.passed = all(b > a for a, b in zip(med, med[1:]))
    out.write("quantiles.json", curve.to_json())
    out.write("quantiles.txt", curve.to_table())
    return curve.passed


def cmd_appendix_a(cfg, out, mapper) -> bool:
    rep = appendix_a_check(cfg.offspring_law(), cfg.n, cfg.k, cfg.reps, cfg.seed, cfg.pair(),
                           mapper, cfg.rate_distortion, cfg.limits())
    out.report(rep)
    return rep.passed


def cmd_discrepancy(cfg, out, mapper) -> bool:
    rep = discrepancy_curve(cfg.offspring_law(), cfg.pair(), cfg.n_grid, cfg.reps, cfg.seed,
                            mapper)
    out.report(rep)
    return rep.passed


COMMANDS: dict[str, Callable] = {
    "simulate-tree": cmd_simulate_tree,
    "trace": cmd_trace,
    "sample-limit": cmd_sample_limit,
    "compare-fdd": cmd_compare_fdd,
    "moments": cmd_moments,
    "transition-check": cmd_transition_check,
    "cdfi": cmd_cdfi,
    "counterexample": cmd_counterexample,
    "appendix-a": cmd_appendix_a,
    "discrepancy": cmd_discrepancy,
}


def _manifest(command, cfg, passed, files) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": cfg.digest(),
        "config": cfg.identity(),
        "seed": cfg.seed,
        "passed": passed,
        "versions": {"cannings_lab": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "artifacts": dict(sorted(files.items())),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _up_to_date(root: Path, command: str, cfg: ExperimentConfig):
    path = root / "manifest.json"
    if not path.exists():
        return None
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError:
        return None
    if doc.get("command") != command or doc.get("config_hash") != cfg.digest():
        return None
    for name, digest in doc.get("artifacts", {}).items():
        f = root / name
        if not f.exists() or hashlib.sha256(f.read_bytes()).hexdigest() != digest:
            return None
    return bool(doc.get("passed"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cannings-lab",
                                     description="Simulate Cannings trees and check their limits.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--check", action=argparse.BooleanOptionalAction, default=True,
                       help="exit with status 3 when a check fails")
        p.add_argument("--resume", action="store_true",
                       help="skip the run when --out already holds matching results")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text() if args.config else None
        cfg = load_config(text)
        if args.seed is not None:
            cfg.seed = args.seed
        validate(cfg)
        workers = resolve_workers(args.workers, cfg)
        if workers < 1:
            raise ValidationError("workers", "must be a positive integer")
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    root = Path(args.out or cfg.out or f"out-{args.command}")
    if args.resume:
        prior = _up_to_date(root, args.command, cfg)
        if prior is not None:
            print(f"{args.command}: results in {root} are up to date", file=sys.stderr)
            return 0 if prior or not args.check else 3
    t0 = time.perf_counter()
    try:
        out = Outputs(root)
        passed = COMMANDS[args.command](cfg, out, ParallelMap(workers))
        (root / "manifest.json").write_text(_manifest(args.command, cfg, passed, out.files))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {'PASS' if passed else 'FAIL'} in {time.perf_counter() - t0:.2f}s "
          f"({workers} worker(s)) -> {root}", file=sys.stderr)
    if not passed and args.check:
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
