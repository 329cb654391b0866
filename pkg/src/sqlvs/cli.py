"""Command-line interface.

    sqlvs gen     --sf 0.01 --dr 64 --di 64 --seed 42 --out data/
    sqlvs run     --query Q16 --vs ivf --strategy hybrid --profile nvlink-c2c
    sqlvs sweep   --batches 1,10,100,1000,10000 --out sweeps/
    sqlvs decide  --device-mem 98GiB --index ivf --batch 1000
    sqlvs tune    --query Q2 --vs ivf --out tune.psv
    sqlvs report  --in runs/ --summary

`run` and `sweep` append pipe-delimited records; with --figures they also
render PNG charts next to the records.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from .datagen import DatasetSpec, generate, save_dataset
from .errors import SqlVsError
from .metrics import find_min_setting, tune_records_to_text
from .plans import PlanParams, QUERIES, VS_MODES
from .profiles import BUILTIN_PROFILES, get_profile, load_profile
from .placement import MemoryBudget
from .report import emit_report, load_report, records_to_text, summarize
from .runner import Workbench, build_workbench, default_nlist, run_query
from .strategy import STRATEGIES, choose_strategy, crossover_sweep

_SIZE_RE = re.compile(r"^(\d+(?:\.\d+)?)\s*(gib|mib|kib|gb|mb|kb|b)?$", re.IGNORECASE)
_SIZE_UNITS = {"b": 1, "kb": 10**3, "mb": 10**6, "gb": 10**9,
               "kib": 2**10, "mib": 2**20, "gib": 2**30, None: 1}


def parse_size(text: str) -> int:
    m = _SIZE_RE.match(text.strip())
    if not m:
        raise argparse.ArgumentTypeError(f"cannot parse size {text!r}")
    value, unit = m.groups()
    return int(float(value) * _SIZE_UNITS[unit.lower() if unit else None])


def _profile_arg(name: str):
    if Path(name).is_file():
        return load_profile(name)
    return get_profile(name)


def _add_dataset_args(p):
    p.add_argument("--sf", type=float, default=0.01)
    p.add_argument("--dr", type=int, default=64, help="review embedding dims")
    p.add_argument("--di", type=int, default=64, help="image embedding dims")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--clusters", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.55)
    p.add_argument("--data", default=None, help="dataset directory (loaded if present, else generated there)")


def _spec_from(args) -> DatasetSpec:
    return DatasetSpec(sf=args.sf, d_r=args.dr, d_i=args.di, seed=args.seed,
                       n_clusters=args.clusters, noise=args.noise)


def _add_index_args(p):
    p.add_argument("--nlist", type=int, default=0, help="IVF partitions (0 = auto)")
    p.add_argument("--degree", type=int, default=16, help="graph neighbors per node")


def _bench_from(args, with_ivf=True, with_graph=True) -> Workbench:
    return build_workbench(_spec_from(args), data_dir=args.data,
                           with_ivf=with_ivf, with_graph=with_graph,
                           nlist=args.nlist, degree=args.degree)


def cmd_gen(args) -> int:
    spec = _spec_from(args)
    dataset = generate(spec)
    save_dataset(dataset, args.out)
    rows = {name: t.row_count for name, t in dataset.tables.items()}
    print(f"wrote {args.out}: " + ", ".join(f"{k}={v}" for k, v in sorted(rows.items())))
    return 0


def cmd_run(args) -> int:
    profile = _profile_arg(args.profile)
    modes = VS_MODES if args.vs == "all" else [args.vs]
    strategies = STRATEGIES if args.strategy == "all" else [args.strategy]
    need_ivf = "ivf" in modes
    need_graph = "graph" in modes
    bench = _bench_from(args, with_ivf=need_ivf, with_graph=need_graph)
    pp = PlanParams.for_scale(args.sf, k=args.k, oversample=args.oversample,
                              nprobe=args.nprobe, ef=args.ef,
                              query_seed=args.query_seed)
    queries = QUERIES if args.query == "all" else [args.query]
    reports = []
    skipped = []
    for query in queries:
        bases = {}
        for mode in modes:
            for strategy in strategies:
                try:
                    rep, base = run_query(bench, query, mode, strategy, profile, pp,
                                          with_quality=not args.no_quality,
                                          base=bases.get(mode),
                                          enn_base=bases.get("enn"))
                except SqlVsError as exc:
                    if len(modes) == 1 and len(strategies) == 1:
                        raise
                    skipped.append((query, mode, strategy, str(exc)))
                    continue
                bases[mode] = base
                if mode == "enn":
                    bases.setdefault("enn", base)
                rep.vs_mode = mode
                reports.append(rep)
    for query, mode, strategy, reason in skipped:
        print(f"skipped {query} {mode} {strategy}: {reason}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "runs.psv"
    emit_report(reports, path)
    print(summarize(reports), end="")
    print(f"records: {path}")
    if args.figures:
        from .figures import render_breakdown

        fig = render_breakdown(reports, out_dir / "breakdown.png")
        print(f"figure: {fig}")
    return 0


def cmd_sweep(args) -> int:
    profile = _profile_arg(args.profile)
    batches = [int(b) for b in args.batches.split(",")]
    bench = _bench_from(args)
    points = crossover_sweep(bench.dataset, bench.catalog, batches, profile,
                             nprobe=args.nprobe, ef=args.ef or 128)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep.psv"
    with open(path, "w", encoding="utf-8") as f:
        f.write("index_kind|batch|strategy|seconds\n")
        for p in points:
            f.write(f"{p.index_kind}|{p.batch}|{p.strategy}|{p.seconds:.9g}\n")
    print(f"records: {path}")
    if args.figures:
        from .figures import render_crossover

        fig = render_crossover(points, out_dir / "crossover.png")
        print(f"figure: {fig}")
    return 0


def cmd_decide(args) -> int:
    profile = _profile_arg(args.profile)
    spec = _spec_from(args)
    rel = args.rel_bytes if args.rel_bytes is not None else int(spec.sf * 1e9)
    emb = args.emb_bytes if args.emb_bytes is not None else int(spec.expected_embedding_bytes())
    if args.index_bytes is not None:
        idx = args.index_bytes
    else:
        n_rev = int(spec.sf * 200_000 * spec.r_bar)
        nlist = args.nlist or default_nlist(n_rev)
        idx = nlist * spec.d_r * 4 if args.index == "ivf" else n_rev * args.degree * 4
    budget = MemoryBudget(args.device_mem)
    decision = choose_strategy(budget, {"relational": rel, "embeddings": emb,
                                        "index_structure": idx},
                               args.index, args.batch, profile)
    print(f"chosen: {decision.chosen}")
    if decision.alternative:
        print(f"alternative: {decision.alternative}")
    print(f"rationale: {decision.rationale}")
    print(f"inputs: {decision.inputs}")
    return 0


def cmd_tune(args) -> int:
    bench = _bench_from(args, with_ivf=args.vs in ("ivf", "all"),
                        with_graph=args.vs in ("graph", "all"))
    pp = PlanParams.for_scale(args.sf, k=args.k, oversample=args.oversample,
                              query_seed=args.query_seed)
    queries = QUERIES if args.query == "all" else [args.query]
    modes = ["ivf", "graph"] if args.vs == "all" else [args.vs]
    results = []
    for query in queries:
        for mode in modes:
            res = find_min_setting(query, mode, bench.dataset, bench.catalog, pp)
            results.append(res)
            setting = res.minimal_setting
            last = res.steps[-1]
            score = f"recall={last.recall:.4f}" if last.recall is not None \
                else f"rel_err={last.rel_err:.6f}"
            print(f"{query} {mode}: minimal {res.setting_name}="
                  f"{setting if setting is not None else 'not reached'} ({score})")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(tune_records_to_text(results))
        print(f"records: {args.out}")
    return 0


def cmd_report(args) -> int:
    from .metrics import share_rel

    in_dir = Path(args.in_dir)
    runs = load_report(in_dir / "runs.psv")
    text = summarize(runs)
    by_key = {(r.query, r.vs_mode, r.strategy): r for r in runs}
    shares = []
    for (query, mode, strategy), cpu_run in by_key.items():
        if strategy != "cpu":
            continue
        gpu_run = by_key.get((query, mode, "gpu"))
        if gpu_run is None:
            continue
        share = share_rel(cpu_run.relational_ops, gpu_run.relational_ops,
                          cpu_run.total, gpu_run.total)
        if share is not None:
            shares.append(f"{query} {mode}: share_rel={share:.2f}")
    if shares:
        text += "relational share of cpu->gpu savings:\n  " + "\n  ".join(shares) + "\n"
    if args.summary:
        print(text, end="")
    summary_path = in_dir / "summary.txt"
    summary_path.write_text(text, encoding="utf-8")
    print(f"summary: {summary_path}")
    if args.figures:
        from .figures import render_breakdown

        fig = render_breakdown(runs, in_dir / "breakdown.png")
        print(f"figure: {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sqlvs", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset directory")
    _add_dataset_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run queries under a strategy and emit records")
    _add_dataset_args(p)
    _add_index_args(p)
    p.add_argument("--query", default="all", choices=list(QUERIES) + ["all"])
    p.add_argument("--vs", default="ivf", choices=list(VS_MODES) + ["all"])
    p.add_argument("--strategy", default="cpu", choices=list(STRATEGIES) + ["all"])
    p.add_argument("--profile", default="nvlink-c2c",
                   help=f"profile name {sorted(BUILTIN_PROFILES)} or a profile file")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--oversample", type=int, default=10)
    p.add_argument("--nprobe", type=int, default=32)
    p.add_argument("--ef", type=int, default=0)
    p.add_argument("--query-seed", type=int, default=7)
    p.add_argument("--no-quality", action="store_true",
                   help="skip the ground-truth run and recall computation")
    p.add_argument("--out", default="runs")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="batch-size crossover sweep on the reviews indexes")
    _add_dataset_args(p)
    _add_index_args(p)
    p.add_argument("--batches", default="1,10,100,1000,10000")
    p.add_argument("--profile", default="nvlink-c2c")
    p.add_argument("--nprobe", type=int, default=32)
    p.add_argument("--ef", type=int, default=128)
    p.add_argument("--out", default="sweeps")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("decide", help="strategy decision for a memory budget")
    _add_dataset_args(p)
    _add_index_args(p)
    p.add_argument("--device-mem", type=parse_size, required=True,
                   help="device memory budget, e.g. 96GiB or 4000000000")
    p.add_argument("--index", required=True, choices=["ivf", "graph"])
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--profile", default="nvlink-c2c")
    p.add_argument("--rel-bytes", type=parse_size, default=None)
    p.add_argument("--emb-bytes", type=parse_size, default=None)
    p.add_argument("--index-bytes", type=parse_size, default=None)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("tune", help="find minimal nprobe/ef meeting the quality targets")
    _add_dataset_args(p)
    _add_index_args(p)
    p.add_argument("--query", default="all", choices=list(QUERIES) + ["all"])
    p.add_argument("--vs", default="all", choices=["ivf", "graph", "all"])
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--oversample", type=int, default=10)
    p.add_argument("--query-seed", type=int, default=7)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("report", help="summarize emitted run records")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--summary", action="store_true")
    p.add_argument("--figures", action="store_true")
    p.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SqlVsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
