"""Command-line interface.

Every command that writes an output file also writes a manifest beside it
(``<output>.manifest.json``) holding the fully resolved argument vector;
``odflow rerun <manifest>`` replays it byte-for-byte.

Exit codes: 0 success, 2 usage, 3 parse/validation, 4 infeasible or
unbounded program, 5 iteration limit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from . import fileio
from .estimators import (
    InfeasibleError,
    IterationLimitError,
    UnboundedError,
    WeightMatrix,
    estimate_l1,
    estimate_l1_noisy,
    estimate_l2,
    estimate_l2_noisy,
    estimate_weighted_l1,
    reweighted_l1,
    vmt_bounds,
)
from .experiments import (
    TrialConfig,
    grid_path_count,
    grid_paths_max_turns,
    grid_turn_fraction,
    hoeffding_turn_bound,
    run_noisy_cdf,
    run_recovery_sweep,
    run_vmt_sweep,
)
from .fixtures import FIXTURE_NAMES, get_fixture
from .network import (
    NetworkError,
    PathTable,
    build_dynamic_system,
    build_static_incidence,
    enumerate_paths,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_ITERATION_LIMIT = 5

SEED_ENV_VAR = "ODFLOW_SEED"


class UsageError(ValueError):
    """Bad flag combination detected after argparse."""


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    try:
        return int(raw) if raw is not None else 0
    except ValueError:
        return 0


def _resolve_network(spec: str):
    if spec in FIXTURE_NAMES:
        return get_fixture(spec).network
    return fileio.load_network(spec)


def _resolve_paths(spec: str, net) -> PathTable:
    if spec in FIXTURE_NAMES:
        return get_fixture(spec).table
    paths = fileio.load_paths(spec, net)
    return PathTable.from_paths(paths)


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.replace(";", ",").split(",") if tok)
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


def _parse_grid(text: str) -> tuple[int, ...]:
    """Either 'lo:hi' (inclusive) or a comma-separated list."""
    if ":" in text:
        lo, _, hi = text.partition(":")
        try:
            lo_i, hi_i = int(lo), int(hi)
        except ValueError as exc:
            raise UsageError(f"bad grid spec {text!r}") from exc
        if hi_i < lo_i:
            raise UsageError(f"empty grid {text!r}")
        return tuple(range(lo_i, hi_i + 1))
    return _parse_int_list(text)


def _parse_supports(text: str) -> tuple[tuple[int, ...], ...]:
    groups = [g for g in text.split(";") if g.strip()]
    if not groups:
        raise UsageError("no supports given")
    return tuple(tuple(int(tok) for tok in g.split(",") if tok) for g in groups)


def _write_manifest(args, out: FsPath, extra_outputs=()) -> None:
    fileio.write_manifest(
        out,
        command=args.command,
        argv=args.resolved_argv,
        seed=getattr(args, "seed", None),
        inputs={
            key: getattr(args, key)
            for key in ("network", "paths", "measurements", "fixture")
            if getattr(args, key, None) is not None
        },
        outputs=[str(out), *map(str, extra_outputs)],
    )


def _cmd_enumerate(args) -> int:
    net = _resolve_network(args.network)
    od_specs = args.od or []
    if not od_specs:
        raise UsageError("at least one --od PAIR is required")
    all_paths = []
    od_pairs = []
    for spec in od_specs:
        toks = spec.split(",")
        if len(toks) != 2:
            raise UsageError(f"--od expects 'origin,dest', got {spec!r}")
        origin, dest = (int(t) if t.lstrip("-").isdigit() else t for t in toks)
        od_pairs.append((origin, dest))
        found = enumerate_paths(
            net,
            (origin, dest),
            max_links=args.max_links,
            max_turns=args.max_turns,
            max_length_ratio=args.max_length_ratio,
        )
        if not found:
            print(f"warning: filters excluded every path for OD {origin}-{dest}",
                  file=sys.stderr)
        all_paths.extend(found)
    fileio.save_paths(all_paths, args.output)
    print(f"od_pairs={len(od_pairs)} paths={len(all_paths)} -> {args.output}")
    _write_manifest(args, FsPath(args.output))
    return EXIT_OK


def _build_system(args, net, table):
    meas = fileio.load_measurements(args.measurements)
    y = np.asarray(meas.counts, dtype=float)
    if meas.kind == "dynamic":
        links_in_order = []
        times = sorted({t for (_, t) in meas.row_labels})
        if args.times:
            times = sorted(set(times) | set(_parse_int_list(args.times)))
        for lid, _ in meas.row_labels:
            if lid not in links_in_order:
                links_in_order.append(lid)
        full = build_dynamic_system(table, net, links_in_order, times)
        return full.subsystem(meas.row_labels), y
    if args.dynamic:
        raise UsageError("--dynamic needs a 'link_id,time,count' measurement file")
    measured = list(meas.row_labels)
    return build_static_incidence(table, measured, net), y


def _cmd_estimate(args) -> int:
    net = _resolve_network(args.network)
    table = _resolve_paths(args.paths, net)
    ms, y = _build_system(args, net, table)

    method = args.method
    if method in ("l1-noisy", "l2-noisy"):
        if args.delta is None:
            raise UsageError(f"--delta is required for method {method}")
        if args.delta < 0:
            raise UsageError("--delta must be nonnegative")
    if method == "weighted" and args.weights is None:
        raise UsageError("--weights FILE is required for method weighted")

    if method == "l1":
        result = estimate_l1(ms, y)
    elif method == "l2":
        result = estimate_l2(ms, y)
    elif method == "l1-noisy":
        result = estimate_l1_noisy(ms, y, args.delta)
    elif method == "l2-noisy":
        result = estimate_l2_noisy(ms, y, args.delta)
    elif method == "weighted":
        try:
            lam = json.loads(FsPath(args.weights).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise fileio.FileFormatError(f"cannot read weights: {exc}") from exc
        result = estimate_weighted_l1(ms, y, WeightMatrix(np.asarray(lam, dtype=float)))
    elif method == "reweighted":
        result = reweighted_l1(ms, y, iters=args.iters, epsilon=args.epsilon)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown method {method!r}")

    payload = fileio.result_to_dict(result, table)
    if args.truth is not None:
        try:
            truth = np.asarray(json.loads(FsPath(args.truth).read_text()), dtype=float)
        except (OSError, json.JSONDecodeError, ValueError) as exc:
            raise fileio.FileFormatError(f"cannot read truth file: {exc}") from exc
        if truth.shape != (ms.n_cols,):
            raise fileio.FileFormatError(
                f"truth length {truth.size} does not match {ms.n_cols} columns"
            )
        nrm = float(np.linalg.norm(truth))
        err = float(np.linalg.norm(result.allocation.x - truth))
        rel = err / nrm if nrm > 0 else err
        payload["recovery"] = {
            "relative_error": rel,
            "exact": bool(rel <= 1e-6),
        }
    fileio.dump_json(payload, args.output)
    print(f"{method}: status={result.status} objective={result.objective:.12g} "
          f"sparsity={payload['sparsity']} -> {args.output}")
    _write_manifest(args, FsPath(args.output))
    return EXIT_OK


def _cmd_vmt(args) -> int:
    net = _resolve_network(args.network)
    table = _resolve_paths(args.paths, net)
    ms, y = _build_system(args, net, table)
    if args.unit:
        lengths = np.ones(ms.n_cols)
    elif args.lengths is not None:
        try:
            lengths = np.asarray(json.loads(FsPath(args.lengths).read_text()), dtype=float)
        except (OSError, json.JSONDecodeError, ValueError) as exc:
            raise fileio.FileFormatError(f"cannot read lengths file: {exc}") from exc
    elif args.link_lengths:
        per_path = [
            sum(net.link_by_id[lid].length for lid in table.paths[
                lbl[0] if isinstance(lbl, tuple) else lbl].links)
            for lbl in ms.col_labels
        ]
        lengths = np.asarray(per_path)
    else:
        raise UsageError("one of --lengths FILE, --unit or --link-lengths is required")
    bounds = vmt_bounds(ms, y, lengths)
    fileio.dump_json(fileio.bounds_to_dict(bounds, table), args.output)
    print(f"vmt_lower={bounds.vmt_lower:.12g} vmt_upper={bounds.vmt_upper:.12g} "
          f"-> {args.output}")
    _write_manifest(args, FsPath(args.output))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if (args.supports is None) == (args.sparsity is None):
        raise UsageError("exactly one of --supports or --sparsity is required")
    if args.supports is not None:
        supports = _parse_supports(args.supports)
    else:
        supports = tuple(int(s) for s in _parse_int_list(args.sparsity))
    m_grid = _parse_grid(args.m_grid)
    cfg = TrialConfig(fixture=args.fixture, trials=args.trials, seed=args.seed)
    report = run_recovery_sweep(cfg, m_grid=m_grid, supports=list(supports))
    fileio.write_csv(
        args.output,
        ("S", "M", "criterion", "rate", "stderr", "trials", "seed"),
        report.csv_rows(),
    )
    print(f"{len(report.points)} grid points -> {args.output}")
    _write_manifest(args, FsPath(args.output))
    return EXIT_OK


def _cmd_noisy_cdf(args) -> int:
    support = _parse_int_list(args.support)
    cfg = TrialConfig(
        fixture=args.fixture,
        support=support,
        m=args.m,
        noise_sd=args.nu,
        trials=args.trials,
        seed=args.seed,
    )
    report = run_noisy_cdf(cfg, delta=args.delta)
    fileio.write_csv(args.output, ("method", "error", "cdf"), report.csv_rows())
    print(
        f"delta={report.delta:.12g} infeasible_trials={report.infeasible_trials} "
        f"median_l1={report.quantile('l1', 0.5):.6g} "
        f"median_l2={report.quantile('l2', 0.5):.6g} -> {args.output}"
    )
    _write_manifest(args, FsPath(args.output))
    return EXIT_OK


def _cmd_vmt_sweep(args) -> int:
    m_grid = _parse_grid(args.m_grid)
    cfg = TrialConfig(fixture=args.fixture, trials=args.trials, seed=args.seed)
    report = run_vmt_sweep(cfg, m_grid=m_grid, recovery_tol=args.recovery_tol)
    fileio.write_csv(
        args.output,
        ("M", "rate_min", "rate_max", "mean_ratio_min", "mean_ratio_max",
         "unbounded_count"),
        report.csv_rows(),
    )
    print(f"{len(report.points)} M values -> {args.output}")
    _write_manifest(args, FsPath(args.output))
    return EXIT_OK


def _cmd_grid(args) -> int:
    count = grid_path_count(args.n)
    turns = args.turns if args.turns is not None else int(args.alpha * args.n)
    few = grid_paths_max_turns(args.n, turns)
    fraction = grid_turn_fraction(args.alpha, args.n)
    bound = hoeffding_turn_bound(args.alpha, args.n)
    print(f"paths={count}")
    print(f"paths_with_at_most_{turns}_turns={few}")
    print(f"exact_fraction={fraction:.12g}")
    print(f"tail_bound={bound:.12g}")
    if args.output:
        fileio.write_csv(
            args.output,
            ("n", "alpha", "turns", "path_count", "few_turn_count",
             "exact_fraction", "tail_bound"),
            [(args.n, args.alpha, turns, count, few, fraction, bound)],
        )
        _write_manifest(args, FsPath(args.output))
    return EXIT_OK


def _cmd_rerun(args) -> int:
    manifest = fileio.load_manifest(args.manifest)
    argv = list(manifest["argv"])
    if args.output_dir is not None:
        out_dir = FsPath(args.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, tok in enumerate(argv):
            if tok == "--output" and i + 1 < len(argv):
                argv[i + 1] = str(out_dir / FsPath(argv[i + 1]).name)
    return main(argv)


def _add_seed(parser) -> None:
    parser.add_argument(
        "--seed", type=int, default=_default_seed(),
        help=f"experiment seed (default: ${SEED_ENV_VAR} or 0)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odflow",
        description="Sparse origin-destination flow estimation from link counts",
    )
    parser.add_argument("--version", action="version", version=f"odflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="enumerate simple paths for OD pairs")
    p.add_argument("--network", required=True,
                   help=f"network file or fixture name ({', '.join(FIXTURE_NAMES)})")
    p.add_argument("--od", action="append", metavar="O,D",
                   help="OD pair, repeatable")
    p.add_argument("--max-links", type=int, default=None)
    p.add_argument("--max-turns", type=int, default=None)
    p.add_argument("--max-length-ratio", type=float, default=None)
    p.add_argument("--output", required=True, help="path JSON to write")
    p.set_defaults(func=_cmd_enumerate)

    p = sub.add_parser("estimate", help="recover an allocation from counts")
    p.add_argument("--network", required=True)
    p.add_argument("--paths", required=True,
                   help="path file or fixture name")
    p.add_argument("--measurements", required=True, help="count CSV")
    p.add_argument("--method", required=True,
                   choices=("l1", "l2", "l1-noisy", "l2-noisy", "weighted",
                            "reweighted"))
    p.add_argument("--delta", type=float, default=None,
                   help="ball radius for the noisy methods")
    p.add_argument("--weights", default=None,
                   help="JSON list of per-path weights (weighted method)")
    p.add_argument("--iters", type=int, default=4,
                   help="rounds for the reweighted method")
    p.add_argument("--epsilon", type=float, default=None,
                   help="reweighting damping term")
    p.add_argument("--dynamic", action="store_true",
                   help="expect a dynamic (link,time,count) measurement file")
    p.add_argument("--times", default=None,
                   help="extra count times to model, comma separated")
    p.add_argument("--truth", default=None,
                   help="JSON list with the true allocation, for a recovery check")
    p.add_argument("--output", required=True, help="result JSON to write")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("vmt", help="bound total travel from counts")
    p.add_argument("--network", required=True)
    p.add_argument("--paths", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--lengths", default=None, help="JSON list of per-path lengths")
    p.add_argument("--unit", action="store_true",
                   help="unit lengths: bound the vehicle count")
    p.add_argument("--link-lengths", action="store_true",
                   help="derive path lengths from the network's link lengths")
    p.add_argument("--dynamic", action="store_true")
    p.add_argument("--times", default=None)
    p.add_argument("--output", required=True, help="bounds JSON to write")
    p.set_defaults(func=_cmd_vmt)

    p = sub.add_parser("sweep", help="recovery-rate sweep over measured links")
    p.add_argument("--fixture", default="fig2", choices=FIXTURE_NAMES)
    p.add_argument("--supports", default=None,
                   help="fixed supports, e.g. '4,8,12;1,7,10,13' (0-based)")
    p.add_argument("--sparsity", default=None,
                   help="random-support sparsity levels, e.g. '3,4,5'")
    p.add_argument("--m-grid", default="4:10", help="'lo:hi' or list")
    p.add_argument("--trials", type=int, default=500)
    _add_seed(p)
    p.add_argument("--output", required=True, help="CSV to write")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("noisy-cdf", help="noise-aware l1 vs l2 error comparison")
    p.add_argument("--fixture", default="fig2", choices=FIXTURE_NAMES)
    p.add_argument("--support", required=True, help="e.g. '4,8,12' (0-based)")
    p.add_argument("--nu", type=float, required=True, help="noise standard deviation")
    p.add_argument("--m", type=int, default=10, help="measured links per trial")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--delta", type=float, default=None,
                   help="ball radius (default nu*sqrt(m))")
    _add_seed(p)
    p.add_argument("--output", required=True, help="CSV to write")
    p.set_defaults(func=_cmd_noisy_cdf)

    p = sub.add_parser("vmt-sweep", help="travel-bound recovery sweep")
    p.add_argument("--fixture", default="nguyen", choices=FIXTURE_NAMES)
    p.add_argument("--m-grid", default="14,18,22,26,30,34,38")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--recovery-tol", type=float, default=0.001)
    _add_seed(p)
    p.add_argument("--output", required=True, help="CSV to write")
    p.set_defaults(func=_cmd_vmt_sweep)

    p = sub.add_parser("grid", help="square-grid path counts and turn fractions")
    p.add_argument("--n", type=int, required=True, help="links per path (even)")
    p.add_argument("--alpha", type=float, required=True,
                   help="turn fraction, 0 < alpha < 0.5")
    p.add_argument("--turns", type=int, default=None,
                   help="override the turn cap (default floor(alpha*n))")
    p.add_argument("--output", default=None, help="optional CSV")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("rerun", help="replay a manifest")
    p.add_argument("manifest")
    p.add_argument("--output-dir", default=None,
                   help="redirect outputs into this directory")
    p.set_defaults(func=_cmd_rerun)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage problems
        return int(exc.code or 0)
    args.resolved_argv = _resolved_argv(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnboundedError as exc:
        detail = f" (path {exc.path_label!r})" if exc.path_label is not None else ""
        print(f"unbounded: {exc}{detail}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except IterationLimitError as exc:
        print(f"iteration limit: {exc}", file=sys.stderr)
        return EXIT_ITERATION_LIMIT
    except (fileio.FileFormatError, NetworkError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


# Flags whose values are input files; absolutized in manifests so a rerun
# works from any working directory.
_INPUT_FILE_KEYS = frozenset(
    {"network", "paths", "measurements", "weights", "truth", "lengths"}
)


def _resolved_argv(args) -> list[str]:
    """Reconstruct a replayable argument vector from parsed options."""
    cmd = args.command
    argv = [cmd]
    skip = {"command", "func", "resolved_argv"}
    if cmd == "rerun":
        argv.append(args.manifest)
        if args.output_dir:
            argv += ["--output-dir", args.output_dir]
        return argv
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif key == "od":
            for item in value:
                argv += [flag, str(item)]
        else:
            if key in _INPUT_FILE_KEYS and FsPath(str(value)).exists():
                value = FsPath(str(value)).resolve()
            argv += [flag, str(value)]
    return argv


if __name__ == "__main__":
    sys.exit(main())
