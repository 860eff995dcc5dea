"""Command-line interface.

Subcommands: generate, detect-pure, learn, evaluate, sweep, oracle, ingest.
Configuration comes from a flat INI file (see docs/config.md); only the
output directory (FOLKCOMM_OUTDIR) and parallelism degree (FOLKCOMM_JOBS)
are read from the environment. Exit codes: 0 success, 2 usage or config
error, 3 numerical failure, 4 hard assumption/precondition failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import evaluate as ev
from . import fileio
from . import pipeline
from . import puredetect as pd
from . import tensordecomp as td
from .errors import (
    ConfigError,
    ContractViolationError,
    DimensionError,
    FolkcommError,
    InfeasibleThresholdsError,
    NoPureNodesError,
    NumericalError,
    RankDeficiencyError,
)
from .linalg import MatricizationShape
from .model import ConnectivityPair

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_ASSUMPTION = 4


def _outdir(args) -> Path:
    out = args.outdir or os.environ.get("FOLKCOMM_OUTDIR", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _jobs(args) -> int:
    if getattr(args, "jobs", None):
        return args.jobs
    return int(os.environ.get("FOLKCOMM_JOBS", "1"))


def _load_truth(truth_dir):
    base = Path(truth_dir)
    return tuple(
        fileio.read_membership_csv(base / f"memberships_{role}.csv", role=role)
        for role in ("users", "tags", "resources"))


def _check_strict(args, params):
    if not getattr(args, "strict", False):
        return
    moment = ev.mixture_second_moment(params.k, params.rho, params.alpha)
    rep = ev.assumption_report(params.p, params.q, params.k,
                               min(params.dims), params.rho, moment)
    if not (rep.rank_test_pass and rep.separation_pass):
        raise _StrictFailure(
            f"assumption check failed: rank_test_pass={rep.rank_test_pass} "
            f"(margin {rep.rank_test_margin:.3g}), "
            f"separation_pass={rep.separation_pass} "
            f"(margin {rep.separation_margin:.3g})")


class _StrictFailure(FolkcommError):
    pass


# ----- subcommands ------------------------------------------------------

def cmd_generate(args) -> int:
    if args.from_manifest:
        manifest = json.loads(Path(args.from_manifest).read_text())
        cp = fileio.read_config_string(manifest["config"])
    elif args.config:
        cp = fileio.read_config(args.config)
    else:
        raise ConfigError("generate needs --config or --from-manifest")
    params = fileio.params_from_config(cp)
    _check_strict(args, params)
    outdir = _outdir(args)
    timings = {}
    t0 = time.perf_counter()
    data = pipeline.generate_data(params, n_jobs=_jobs(args))
    timings["generate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    outputs = {}
    tsv = outdir / "hypergraph.tsv"
    fileio.write_hypergraph_tsv(data.sample, tsv)
    outputs["hypergraph"] = tsv
    for role, members in (("users", data.members_u), ("tags", data.members_t),
                          ("resources", data.members_r)):
        path = outdir / f"memberships_{role}.csv"
        fileio.write_membership_csv(members, path)
        outputs[f"memberships_{role}"] = path
    timings["write"] = time.perf_counter() - t0
    manifest = fileio.build_manifest(fileio.config_text(cp), params.seed,
                                     outputs, __version__)
    fileio.write_manifest(manifest, outdir / "manifest.json")
    fileio.write_timings(timings, outdir / "timings.json")
    print(f"wrote {len(outputs)} files + manifest to {outdir} "
          f"({data.sample.n_edges} hyperedges)")
    return EXIT_OK


def _detection_for(args, cp, params, sample):
    options = fileio.options_from_config(cp)
    g = sample.matricized()
    shape = MatricizationShape(sample.dims[0], sample.dims[1])
    partition = pipeline.default_partition(params)
    data = None
    if options.detect_mode == "oracle":
        if not args.truth_dir:
            raise ConfigError("oracle detection mode requires --truth-dir")
        members_u, members_t, members_r = _load_truth(args.truth_dir)
        conn = ConnectivityPair.from_homogeneous(params.k, params.p, params.q)
        data = pipeline.GeneratedData(params=params, members_u=members_u,
                                      members_t=members_t, members_r=members_r,
                                      conn=conn, partition=partition,
                                      sample=sample)
    stage = pipeline.detect_stage(g, shape, partition, params.k, options, data)
    return stage, options, partition, data


def cmd_detect_pure(args) -> int:
    cp = fileio.read_config(args.config)
    params = fileio.params_from_config(cp)
    sample, _ = fileio.read_hypergraph_tsv(args.hypergraph, dims=params.dims)
    stage, _, _, _ = _detection_for(args, cp, params, sample)
    outdir = _outdir(args)
    fileio.write_index_list(stage.result.pure_nodes, outdir / "detected.txt")
    fileio.write_detection_csv(stage.result, outdir / "rank_diagnostics.csv")
    print(f"detected {stage.result.pure_nodes.size} pure resource nodes "
          f"(tau1={stage.result.config.tau1!r}, tau2={stage.result.config.tau2!r})")
    return EXIT_OK


def cmd_learn(args) -> int:
    cp = fileio.read_config(args.config)
    params = fileio.params_from_config(cp)
    _check_strict(args, params)
    sample, _ = fileio.read_hypergraph_tsv(args.hypergraph, dims=params.dims)
    options = fileio.options_from_config(cp)
    partition = pipeline.default_partition(params)
    data = None
    if args.pure:
        pure = fileio.read_index_list(args.pure)
    else:
        stage, options, partition, data = _detection_for(args, cp, params, sample)
        pure = stage.result.pure_nodes
    learn = pipeline.learn_stage(sample, pure, partition, params.k,
                                 params.dims, options, seed=params.seed)
    raw = learn.raw
    if args.truth_dir:
        if data is None:
            members = _load_truth(args.truth_dir)
            truth_r = members[2]
        else:
            truth_r = data.members_r
        perm = ev.align_columns(raw, truth_r.entries)
        raw = raw[list(perm), :]
    if options.tau_mode == "fixed":
        tau = options.tau_value
    elif args.truth_dir:
        tau = ev.l2_max_row_error(raw, truth_r.entries) * params.k / params.n_resources
    else:
        moment = ev.mixture_second_moment(params.k, params.rho, params.alpha)
        theory = ev.theoretical_error_bound(params.p, params.q, params.k,
                                            min(params.dims), params.rho, moment)
        tau = theory.l2_bound * params.k / params.n_resources
    thresholded = td.threshold_memberships(raw, tau)
    outdir = _outdir(args)
    fileio.write_raw_membership_csv(raw, outdir / "memberships_resources_raw.csv")
    fileio.write_raw_membership_csv(thresholded,
                                    outdir / "memberships_resources_thresholded.csv")
    fileio.write_eigen_report(learn.eig, learn.bundle,
                              outdir / "eigen_report.json")
    print(f"learned memberships for {raw.shape[1]} resources from "
          f"{len(pure)} pure nodes (threshold tau={tau!r}, "
          f"power residual {learn.eig.residual!r})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    est = fileio.read_raw_membership_csv(args.estimated)
    truth = fileio.read_membership_csv(args.truth, role="resources")
    perm = ev.align_columns(est, truth.entries)
    aligned = est[list(perm), :]
    report = {
        "permutation": [int(p) for p in perm],
        "l2_max_row": ev.l2_max_row_error(aligned, truth.entries),
        "l1_max_row": ev.l1_max_row_error(aligned, truth.entries),
        "max_abs_error": float(np.abs(aligned - truth.entries).max()),
    }
    if args.detected:
        detected = fileio.read_index_list(args.detected)
        precision, recall = ev.pure_precision_recall(detected, truth.pure_mask())
        report["pure_precision"] = precision
        report["pure_recall"] = recall
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cp = fileio.read_config(args.config)
    params = fileio.params_from_config(cp)
    members = _load_truth(args.truth_dir) if args.truth_dir else None
    options = fileio.options_from_config(cp)
    try:
        result = pipeline.run_oracle(params, options, members=members)
    except ContractViolationError as exc:
        print(f"oracle precondition failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    truth_pure = np.flatnonzero(result.data.members_r.pure_mask())
    detected = result.detection.result.pure_nodes
    exact_set = bool(np.array_equal(np.sort(truth_pure), detected))
    print(f"detected pure set matches ground truth: {exact_set} "
          f"({detected.size} nodes)")
    print(f"max abs error resources: {result.max_abs_error_resources!r}")
    print(f"max abs error users:     {result.max_abs_error_users!r}")
    print(f"max abs error tags:      {result.max_abs_error_tags!r}")
    print(f"max abs error overall:   {result.max_abs_error!r}")
    ok = exact_set and result.max_abs_error < 1e-6
    print(f"exact-moment recovery {'PASS' if ok else 'FAIL'} (tolerance 1e-06)")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_sweep(args) -> int:
    cp = fileio.read_config(args.config)
    if "sweep" not in cp:
        raise ConfigError("config is missing the [sweep] section")
    sec = cp["sweep"]

    def float_list(key, default):
        raw = sec.get(key, fallback=None)
        if raw is None:
            return default
        return [float(v) for v in raw.replace(",", " ").split()]

    grid = {
        "n": [int(v) for v in float_list("n", [300])],
        "k": [int(v) for v in float_list("k", [3])],
        "p": float_list("p", [0.8]),
        "q": float_list("q", [0.1]),
        "rho": float_list("rho", [0.5]),
    }
    trials = sec.getint("trials", fallback=10)
    seed = sec.getint("seed", fallback=0)
    alpha_sym = sec.getfloat("alpha", fallback=1.0)
    max_triples = sec.getfloat("max_triples", fallback=None)
    options = fileio.options_from_config(cp)
    options = replace(options, n_jobs=_jobs(args))
    rows, timings = pipeline.run_sweep(grid, trials, seed, options=options,
                                       alpha_sym=alpha_sym,
                                       max_triples=max_triples)
    outdir = _outdir(args)
    fileio.write_sweep_csv(rows, pipeline.SWEEP_COLUMNS, outdir / "sweep.csv")
    fileio.write_timings(timings, outdir / "sweep_timings.json")
    summary = _sweep_summary(rows)
    (outdir / "sweep_summary.txt").write_text(summary)
    print(summary, end="")
    return EXIT_OK


def _sweep_summary(rows) -> str:
    lines = ["sweep summary (medians per cell)"]
    by_cell = {}
    for row in rows:
        by_cell.setdefault(row["cell"], []).append(row)
    for cell in sorted(by_cell):
        cell_rows = by_cell[cell]
        head = cell_rows[0]
        ok = [r for r in cell_rows if r["status"] == "ok"]
        label = (f"cell {cell}: n={head['n']} k={head['k']} p={head['p']} "
                 f"q={head['q']} rho={head['rho']}")
        if not ok:
            err = cell_rows[0]["error"]
            lines.append(f"{label}: all {len(cell_rows)} trials failed ({err})")
            continue
        med = lambda key: float(np.median([r[key] for r in ok]))
        lines.append(
            f"{label}: trials_ok={len(ok)}/{len(cell_rows)} "
            f"median_l2={med('l2_max_row'):.6g} "
            f"median_precision={med('precision'):.3f} "
            f"median_recall={med('recall'):.3f}")
    return "\n".join(lines) + "\n"


def cmd_ingest(args) -> int:
    dims = None
    if args.dims:
        try:
            dims = tuple(int(v) for v in args.dims.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --dims: {exc}") from exc
        if len(dims) != 3:
            raise ConfigError("--dims needs three comma-separated counts")
    sample, n_dup = fileio.read_hypergraph_tsv(args.input, dims=dims,
                                               allow_duplicates=True)
    print(f"ingested {sample.n_edges} triples (removed {n_dup} duplicates), "
          f"dims={sample.dims}")
    if args.out:
        fileio.write_hypergraph_tsv(sample, args.out)
        print(f"wrote normalized TSV to {args.out}")
    return EXIT_OK


# ----- parser and entry point -------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="folkcomm",
        description="Generate synthetic tagging hypergraphs and recover "
                    "mixed-membership communities via the two-stage "
                    "spectral algorithm.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, outdir=True, jobs=True, strict=False):
        if outdir:
            p.add_argument("--outdir", default=None,
                           help="output directory (default $FOLKCOMM_OUTDIR or .)")
        if jobs:
            p.add_argument("--jobs", type=int, default=None,
                           help="parallelism degree (default $FOLKCOMM_JOBS or 1)")
        if strict:
            p.add_argument("--strict", action="store_true",
                           help="fail (exit 4) when assumption predicates fail")

    p = sub.add_parser("generate", help="sample a hypergraph and ground truth")
    p.add_argument("--config", help="INI config with a [model] section")
    p.add_argument("--from-manifest", default=None,
                   help="re-run from a previous manifest's config snapshot")
    add_common(p, strict=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("detect-pure", help="rank-test detection of pure resources")
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--truth-dir", default=None,
                   help="directory with memberships_*.csv (oracle mode)")
    add_common(p, jobs=False)
    p.set_defaults(func=cmd_detect_pure)

    p = sub.add_parser("learn", help="tensor-stage membership recovery")
    p.add_argument("--hypergraph", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--pure", default=None,
                   help="detected pure-node list (default: auto-detect)")
    p.add_argument("--truth-dir", default=None)
    add_common(p, jobs=False, strict=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("evaluate", help="compare estimated memberships to truth")
    p.add_argument("--estimated", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--detected", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="exact-moment end-to-end correctness run")
    p.add_argument("--config", required=True)
    p.add_argument("--truth-dir", default=None)
    add_common(p, outdir=False, jobs=False)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="parameter-grid experiment harness")
    p.add_argument("--config", required=True)
    add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ingest", help="validate and load a hyperedge TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--dims", default=None, help="n_users,n_tags,n_resources")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ingest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except _StrictFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ConfigError, DimensionError, InfeasibleThresholdsError,
            ContractViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, NoPureNodesError, RankDeficiencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
