"""Command-line entry point: search runs, ablations, self-checks, data tools.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure. Every failure prints a single machine-parsable line on stderr of the
form ``tnsupernet: error [kind]: message``.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, encoding, relational as rel
from .checkpoint import load_checkpoint, save_checkpoint
from .encoding import InitSpec, init_distribution, uniform_ranks
from .errors import (
    ConfigError,
    DataFormatError,
    EnumerationCapError,
    NumericalError,
    SupernetFormatError,
    TnSupernetError,
)
from .search import SearchConfig, config_from_dict, search
from .supernet import (
    Supernet,
    load_supernet_file,
    make_chain,
    make_ring,
    make_star,
    space_size,
    supernet_sha256,
)
from .tabular import (
    SyntheticSpec,
    as_evaluator,
    generate_synthetic,
    load_benchmark_csv,
    save_benchmark_csv,
)
from .utils import sha256_tree, worker_count


def _load_config_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    raise ConfigError(f"config must be .toml or .json, got {path.name}")


def _resolve_config(args) -> SearchConfig:
    raw = _load_config_file(Path(args.config)) if args.config else {}
    for key in ("mode", "iterations", "samples_per_step", "learning_rate", "seed"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            raw[key] = value
    return config_from_dict(raw)


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}")


def _parse_index(text: str) -> tuple[int, ...]:
    for sep in ("-", ","):
        if sep in text:
            return tuple(int(p) for p in text.split(sep))
    return (int(text),)


# ---------------------------------------------------------------------------
# search


def _tabular_setup(args):
    if not args.benchmark:
        raise ConfigError("tabular search needs --benchmark CSV")
    supernet = load_supernet_file(args.supernet) if args.supernet else None
    bench = load_benchmark_csv(args.benchmark, supernet=supernet)
    return bench


def _run_search(args, cfg: SearchConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    rank = args.rank
    init = InitSpec.gaussian(args.init_sd) if args.init_sd > 0 else InitSpec.zeros()
    manifest = {
        "tool_version": __version__,
        "task": args.task,
        "seed": cfg.seed,
        "rank": rank,
        "init_sd": args.init_sd,
        "config": cfg.to_dict(),
        "artifacts": {
            "report": str(out_dir / "report.json"),
            "trajectory": str(out_dir / "trajectory.csv"),
            "checkpoint": str(out_dir / "checkpoint.npz"),
        },
    }
    if args.task == "tabular":
        bench = _tabular_setup(args)
        supernet = bench.supernet
        evaluator = as_evaluator(bench)
        manifest["benchmark"] = str(Path(args.benchmark).resolve())
        manifest["dataset_sha256"] = sha256_tree(args.benchmark)
        if args.supernet:
            manifest["supernet_file"] = str(Path(args.supernet).resolve())
    elif args.task == "kg":
        if not args.data:
            raise ConfigError("kg search needs --data directory")
        graph, task = rel.load_dataset(args.data)
        supernet = rel.chain_supernet(task)
        evaluator = rel.as_chain_evaluator(graph, task, clamp=args.clamp)
        manifest["data"] = str(Path(args.data).resolve())
        manifest["dataset_sha256"] = sha256_tree(args.data)
        manifest["clamp"] = args.clamp
    else:
        raise ConfigError(f"unknown task {args.task!r}")
    manifest["supernet_sha256"] = supernet_sha256(supernet)

    dist = init_distribution(supernet, uniform_ranks(supernet, rank), init, seed=cfg.seed)
    report = search(dist, evaluator, cfg, checkpoint_dir=out_dir)
    if args.task == "tabular":
        report.regret = bench.regret(report.best_index)
    report.write_json(out_dir / "report.json")
    report.write_trajectory_csv(out_dir / "trajectory.csv")
    save_checkpoint(dist, out_dir / "checkpoint.npz")
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )
    if args.task == "kg":
        rules = rel.extract_top_rules(dist, task, args.top_rules)
        lines = [rel.format_rule(task, r) for r in rules]
        (out_dir / "rules.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        (out_dir / "rules.json").write_text(
            json.dumps(
                [{"relations": list(r.relations), "prob": r.score} for r in rules],
                indent=1,
            )
            + "\n",
            encoding="utf-8",
        )
    print(f"best_index={'-'.join(str(i) for i in report.best_index)}")
    print(f"best_score={report.best_score:.6g}")
    if report.regret is not None:
        print(f"regret={report.regret:.6g}")
    return 0


def cmd_search(args) -> int:
    if args.from_manifest:
        stored = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
        args.task = stored["task"]
        args.rank = stored["rank"]
        args.init_sd = stored["init_sd"]
        args.benchmark = stored.get("benchmark")
        args.data = stored.get("data")
        args.supernet = stored.get("supernet_file")
        args.clamp = stored.get("clamp", False)
        cfg = config_from_dict(stored["config"])
    else:
        cfg = _resolve_config(args)
    return _run_search(args, cfg, Path(args.out))


# ---------------------------------------------------------------------------
# ablation sweeps


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    variants: list[tuple[str, int]] = []
    if args.encodings:
        for enc in args.encodings.split(","):
            enc = enc.strip()
            if enc == "rank1":
                variants.append(("rank1", 1))
            elif enc == "trace":
                variants.append(("trace", args.rank))
            else:
                raise ConfigError(f"unknown encoding {enc!r} (expected rank1 or trace)")
    if args.ranks is not None:
        ranks = _int_list(args.ranks)
        if not ranks:
            raise ConfigError("empty rank list")
        variants.extend((f"rank-{r}", r) for r in ranks)
    if not variants:
        variants = [(f"rank-{r}", r) for r in (1, 2, 3, 4)]
    if args.task == "tabular":
        bench = _tabular_setup(args)
        supernet = bench.supernet

        def make_evaluator():
            return as_evaluator(bench)

    else:
        if not args.data:
            raise ConfigError("kg ablate needs --data directory")
        graph, task = rel.load_dataset(args.data)
        supernet = rel.chain_supernet(task)

        def make_evaluator():
            return rel.as_chain_evaluator(graph, task, clamp=args.clamp)

    jobs = [
        (label, rank, seed)
        for label, rank in variants
        for seed in range(args.seeds)
    ]

    def run(job):
        label, rank, seed = job
        local = config_from_dict({**cfg.to_dict(), "seed": seed})
        dist = init_distribution(
            supernet, uniform_ranks(supernet, rank), InitSpec.gaussian(args.init_sd), seed=seed
        )
        report = search(dist, make_evaluator(), local)
        return label, seed, report.best_score

    workers = worker_count()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variant", "seed", "final_score"])
        for label, seed, score in results:
            writer.writerow([label, seed, repr(score)])
    print(f"wrote {len(results)} rows to {out}")
    return 0


# ---------------------------------------------------------------------------
# verify


def _verify_supernet(args) -> Supernet:
    if args.supernet:
        return load_supernet_file(args.supernet)
    if args.topology == "chain":
        return make_chain(args.edges, args.choices)
    if args.topology == "ring":
        return make_ring(args.edges, args.choices)
    if args.topology == "star":
        return make_star(args.edges, args.choices)
    raise ConfigError("verify needs --supernet or --topology chain|ring|star")


def cmd_verify(args) -> int:
    s = _verify_supernet(args)
    if space_size(s) > 200_000:
        raise EnumerationCapError("verify needs an enumerable space; shrink the supernet")
    rng = np.random.default_rng(args.seed)
    dist = init_distribution(s, uniform_ranks(s, args.rank), InitSpec.gaussian(1.0), seed=args.seed)
    failures = []

    full = encoding.materialize(dist)
    residual = abs(float(full.sum()) - 1.0)
    print(f"normalization_residual={residual:.3e} (tolerance 1e-10)")
    if residual >= 1e-10:
        failures.append("normalization")

    rank1 = init_distribution(s, uniform_ranks(s, 1), InitSpec.gaussian(1.0), seed=args.seed)
    soft = rank1.softmax_cores()
    outer = soft[0][0, :, 0]
    for st in soft[1:]:
        outer = np.multiply.outer(outer, st[0, :, 0])
    rank1_residual = float(np.max(np.abs(encoding.materialize(rank1) - outer)))
    print(f"rank1_factorization_residual={rank1_residual:.3e} (tolerance 1e-14)")
    if rank1_residual > 1e-14:
        failures.append("rank1-factorization")

    idx = tuple(int(rng.integers(1, e.num_choices + 1)) for e in s.edges)
    grads = encoding.log_prob_grad(dist, idx)
    if args.inject_grad_error:
        grads[0][tuple(0 for _ in grads[0].shape)] += 1e-3
    h = 1e-5
    worst = 0.0
    for _ in range(args.grad_checks):
        t = int(rng.integers(len(dist.cores)))
        core = dist.cores[t].values
        pos = tuple(int(rng.integers(d)) for d in core.shape)
        orig = core[pos]
        core[pos] = orig + h
        up = encoding.log_prob(dist, idx)
        core[pos] = orig - h
        dn = encoding.log_prob(dist, idx)
        core[pos] = orig
        fd = (up - dn) / (2 * h)
        an = grads[t][pos]
        worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-4))
    print(f"gradient_fd_residual={worst:.3e} (tolerance 1e-5)")
    if worst >= 1e-5:
        failures.append("gradient")

    if failures:
        raise NumericalError(f"verify failed: {', '.join(failures)}")
    print("verify: all checks passed")
    return 0


# ---------------------------------------------------------------------------
# tabular tools


def cmd_tabular_generate(args) -> int:
    if args.spec:
        raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        spec = SyntheticSpec(
            choices=tuple(raw["choices"]),
            planted_index=tuple(raw["planted_index"]),
            gap=raw.get("gap", 0.3),
            noise_sd=raw.get("noise_sd", 0.0),
            correlation=raw.get("correlation", "independent"),
            pairwise_strength=raw.get("pairwise_strength", 0.2),
            seed=raw.get("seed", 0),
        )
    else:
        if not (args.choices and args.planted):
            raise ConfigError("tabular generate needs --spec or --choices/--planted")
        spec = SyntheticSpec(
            choices=tuple(_int_list(args.choices)),
            planted_index=tuple(_int_list(args.planted)),
            gap=args.gap,
            noise_sd=args.noise_sd,
            correlation=args.correlation,
            pairwise_strength=args.pairwise_strength,
            seed=args.seed if args.seed is not None else 0,
        )
    bench = generate_synthetic(spec)
    save_benchmark_csv(bench, args.out)
    print(f"wrote {space_size(bench.supernet)} rows to {args.out}")
    return 0


def cmd_tabular_regret(args) -> int:
    bench = load_benchmark_csv(args.benchmark)
    if args.report:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
        idx = tuple(report["best_index"])
    elif args.index:
        idx = _parse_index(args.index)
    else:
        raise ConfigError("tabular regret needs --index or --report")
    if idx not in bench.test_score:
        raise DataFormatError(f"index {idx} is outside the benchmark space")
    print(f"regret={bench.regret(idx):.6g}")
    return 0


# ---------------------------------------------------------------------------
# kg tools


def cmd_kg_synth(args) -> int:
    rule = tuple(r.strip() for r in args.rule.split(","))
    graph, task = rel.generate_planted_kg(
        args.entities,
        args.relations,
        rule,
        target=args.target,
        base_density=args.density,
        support_fraction=args.support,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 0,
        include_identity=args.identity,
    )
    rel.write_dataset(graph, task, args.out)
    print(
        f"wrote dataset to {args.out}: {graph.num_entities} entities, "
        f"{len(graph.relations)} relations, "
        f"{sum(len(v) for v in task.splits.values())} target pairs"
    )
    return 0


def _rules_to_eval(args, graph, task) -> list[rel.ChainRule]:
    if args.rule:
        return [rel.ChainRule(tuple(r.strip() for r in args.rule.split(",")))]
    if args.rules_file:
        raw = json.loads(Path(args.rules_file).read_text(encoding="utf-8"))
        return [rel.ChainRule(tuple(entry["relations"]), entry.get("prob", 0.0)) for entry in raw]
    if args.checkpoint:
        supernet = rel.chain_supernet(task)
        dist = load_checkpoint(args.checkpoint, supernet)
        return rel.extract_top_rules(dist, task, args.top_rules)
    raise ConfigError("kg eval needs --rule, --rules-file, or --checkpoint")


def cmd_kg_eval(args) -> int:
    graph, task = rel.load_dataset(args.data)
    ks = tuple(_int_list(args.ks))
    for rule in _rules_to_eval(args, graph, task):
        metrics = rel.rule_rank_metrics(
            graph, task, rule, split=args.split, k_list=ks, filtered=not args.raw
        )
        fields = [f"rule={','.join(rule.relations)}", f"MRR={metrics['MRR']:.4f}"]
        fields += [f"Hits@{k}={metrics[f'Hits@{k}']:.4f}" for k in ks]
        print(" ".join(fields))
    return 0


def cmd_kg_rules(args) -> int:
    graph, task = rel.load_dataset(args.data)
    supernet = rel.chain_supernet(task)
    dist = load_checkpoint(args.checkpoint, supernet)
    rules = rel.extract_top_rules(dist, task, args.k)
    lines = [rel.format_rule(task, r) for r in rules]
    for line in lines:
        print(line)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        Path(args.out).with_suffix(".json").write_text(
            json.dumps(
                [{"relations": list(r.relations), "prob": r.score} for r in rules],
                indent=1,
            )
            + "\n",
            encoding="utf-8",
        )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_search_flags(p: argparse.ArgumentParser, include_task=True) -> None:
    if include_task:
        p.add_argument("--task", choices=("tabular", "kg"), help="task backend")
    p.add_argument("--config", help="run config (.toml or .json)")
    p.add_argument("--benchmark", help="benchmark CSV (tabular)")
    p.add_argument("--data", help="dataset directory (kg)")
    p.add_argument("--supernet", help="supernet JSON (topology for tabular CSVs)")
    p.add_argument("--rank", type=int, default=2, help="uniform node rank (default 2)")
    p.add_argument("--init-sd", type=float, default=1e-3, help="Gaussian init sd")
    p.add_argument("--clamp", action="store_true", help="clamp relaxed pair scores at 1 (kg)")
    p.add_argument("--mode", choices=("stochastic", "deterministic"))
    p.add_argument("--iterations", type=int)
    p.add_argument("--samples-per-step", type=int, dest="samples_per_step")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tnsupernet",
        description="Subgraph search on supernets via tensor-network distributions",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run a search and write report artifacts")
    _add_search_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--top-rules", type=int, default=3, dest="top_rules")
    p.add_argument("--from-manifest", dest="from_manifest", help="re-run a recorded manifest")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("ablate", help="sweep ranks/encodings, emit variant,seed,final_score CSV")
    _add_search_flags(p)
    p.add_argument("--ranks", help="comma-separated rank list (default 1,2,3,4)")
    p.add_argument("--encodings", help="comma-separated subset of {rank1,trace}")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds per variant")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify", help="numerical self-checks on a supernet encoding")
    p.add_argument("--supernet", help="supernet JSON file")
    p.add_argument("--topology", choices=("chain", "ring", "star"))
    p.add_argument("--edges", type=int, default=3)
    p.add_argument("--choices", type=int, default=3)
    p.add_argument("--rank", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grad-checks", type=int, default=25, dest="grad_checks")
    p.add_argument("--inject-grad-error", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tabular", help="tabular benchmark tools")
    tsub = p.add_subparsers(dest="subcommand", required=True)

    g = tsub.add_parser("generate", help="write a planted synthetic benchmark CSV")
    g.add_argument("--spec", help="SyntheticSpec JSON file")
    g.add_argument("--choices", help="per-edge choice counts, e.g. 5,5,5")
    g.add_argument("--planted", help="planted index, e.g. 3,3,3")
    g.add_argument("--gap", type=float, default=0.3)
    g.add_argument("--noise-sd", type=float, default=0.0, dest="noise_sd")
    g.add_argument("--correlation", choices=("independent", "pairwise"), default="independent")
    g.add_argument("--pairwise-strength", type=float, default=0.2, dest="pairwise_strength")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_tabular_generate)

    g = tsub.add_parser("search", help="alias of: search --task tabular")
    _add_search_flags(g, include_task=False)
    g.add_argument("--out", required=True)
    g.add_argument("--from-manifest", dest="from_manifest")
    g.set_defaults(func=cmd_search, task="tabular", top_rules=3)

    g = tsub.add_parser("regret", help="oracle regret of an index against a benchmark")
    g.add_argument("--benchmark", required=True)
    g.add_argument("--index", help="index like 2-1-3")
    g.add_argument("--report", help="report.json to read best_index from")
    g.set_defaults(func=cmd_tabular_regret)

    p = sub.add_parser("kg", help="knowledge-graph / typed-network tools")
    ksub = p.add_subparsers(dest="subcommand", required=True)

    g = ksub.add_parser("synth", help="write a planted synthetic dataset directory")
    g.add_argument("--out", required=True)
    g.add_argument("--entities", type=int, default=60)
    g.add_argument("--relations", type=int, default=6)
    g.add_argument("--rule", required=True, help="planted chain, e.g. R1,R2")
    g.add_argument("--target", default="target")
    g.add_argument("--density", type=float, default=0.04)
    g.add_argument("--support", type=float, default=0.9)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int)
    g.add_argument("--identity", action="store_true", help="add an identity relation")
    g.set_defaults(func=cmd_kg_synth)

    g = ksub.add_parser("search", help="alias of: search --task kg")
    _add_search_flags(g, include_task=False)
    g.add_argument("--out", required=True)
    g.add_argument("--top-rules", type=int, default=3, dest="top_rules")
    g.add_argument("--from-manifest", dest="from_manifest")
    g.set_defaults(func=cmd_search, task="kg")

    g = ksub.add_parser("eval", help="rank metrics for rules on a dataset split")
    g.add_argument("--data", required=True)
    g.add_argument("--rule", help="comma-separated relations")
    g.add_argument("--rules-file", dest="rules_file")
    g.add_argument("--checkpoint")
    g.add_argument("--top-rules", type=int, default=3, dest="top_rules")
    g.add_argument("--split", default="test")
    g.add_argument("--ks", default="1,3,10")
    g.add_argument("--raw", action="store_true", help="unfiltered ranking")
    g.set_defaults(func=cmd_kg_eval)

    g = ksub.add_parser("rules", help="extract top rules from a checkpoint")
    g.add_argument("--data", required=True)
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--out", help="write rules text (and .json) here")
    g.set_defaults(func=cmd_kg_rules)

    return parser


_ERROR_KINDS = [
    (ConfigError, "config", 1),
    (NumericalError, "numerical", 3),
    (DataFormatError, "data", 2),
    (SupernetFormatError, "data", 2),
    (EnumerationCapError, "data", 2),
    (TnSupernetError, "data", 2),
]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TnSupernetError as exc:
        for klass, kind, code in _ERROR_KINDS:
            if isinstance(exc, klass):
                print(f"tnsupernet: error [{kind}]: {exc}", file=sys.stderr)
                return code
        raise AssertionError("unreachable")
    except FileNotFoundError as exc:
        print(f"tnsupernet: error [data]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
