"""Table-lookup architecture benchmarks: synthetic planted tasks and CSV ingestion.

A benchmark stores a validation score and a test score for every index of a
supernet's search space. The search loop only ever sees validation scores;
the test column is reserved for finalization, and the evaluator counts
accesses to both so the split discipline is checkable.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoding import TnDistribution, expectation_grad_table
from .errors import DataFormatError, EnumerationCapError
from .search import TaskEvaluator
from .supernet import (
    DEFAULT_ENUMERATION_CAP,
    Edge,
    SubgraphIndex,
    Supernet,
    enumerate_indices,
    make_chain,
    space_size,
    validate_index,
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-optimum score table over a chain-shaped space.

    The planted index is raised above the best competitor by at least `gap`
    in both columns, so oracle regret zero means exact recovery. A pairwise
    bonus rewards matching choices on edges that share a node, which makes
    the landscape correlated in a way per-edge (rank-1) parameterizations
    cannot express. gap > 2 * noise_sd is recommended but not enforced.
    """

    choices: tuple[int, ...]
    planted_index: tuple[int, ...]
    gap: float = 0.3
    noise_sd: float = 0.0
    correlation: str = "independent"  # "independent" | "pairwise"
    pairwise_strength: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if len(self.choices) != len(self.planted_index):
            raise DataFormatError("planted index length != number of edges")
        for c, p in zip(self.choices, self.planted_index):
            if not 1 <= p <= c:
                raise DataFormatError(f"planted pick {p} outside 1..{c}")
        if self.gap <= 0:
            raise DataFormatError("gap must be > 0")
        if self.noise_sd < 0:
            raise DataFormatError("noise_sd must be >= 0")
        if self.correlation not in ("independent", "pairwise"):
            raise DataFormatError(f"unknown correlation model {self.correlation!r}")

    def to_dict(self) -> dict:
        return {
            "choices": list(self.choices),
            "planted_index": list(self.planted_index),
            "gap": self.gap,
            "noise_sd": self.noise_sd,
            "correlation": self.correlation,
            "pairwise_strength": self.pairwise_strength,
            "seed": self.seed,
        }


@dataclass
class TabularBenchmark:
    supernet: Supernet
    val_score: dict[SubgraphIndex, float]
    test_score: dict[SubgraphIndex, float]
    name: str = ""
    source: str = ""

    def max_test(self) -> float:
        return max(self.test_score.values())

    def regret(self, idx: SubgraphIndex) -> float:
        return self.max_test() - self.test_score[tuple(idx)]


def _sharing_pairs(s: Supernet) -> list[tuple[int, int]]:
    pairs = []
    for a in range(s.num_edges):
        for b in range(a + 1, s.num_edges):
            ea, eb = s.edges[a], s.edges[b]
            if {ea.u, ea.v} & {eb.u, eb.v}:
                pairs.append((a, b))
    return pairs


def generate_synthetic(spec: SyntheticSpec, supernet: Supernet | None = None) -> TabularBenchmark:
    """Deterministic planted table; chain topology unless a supernet is given."""
    if supernet is None:
        nodes = tuple(f"n{i}" for i in range(len(spec.choices) + 1))
        edges = tuple(
            Edge(
                id=t,
                u=f"n{t-1}",
                v=f"n{t}",
                choices=tuple(f"op{i}" for i in range(1, c + 1)),
            )
            for t, c in enumerate(spec.choices, start=1)
        )
        supernet = Supernet(name=f"synthetic-{spec.seed}", nodes=nodes, edges=edges)
    elif supernet.choice_counts != spec.choices:
        raise DataFormatError(
            f"supernet choice counts {supernet.choice_counts} != spec {spec.choices}"
        )
    size = space_size(supernet)
    if size > DEFAULT_ENUMERATION_CAP:
        raise EnumerationCapError(f"space of {size} indices is too large to tabulate")
    rng = np.random.default_rng(spec.seed)
    pairs = _sharing_pairs(supernet) if spec.correlation == "pairwise" else []
    planted = tuple(spec.planted_index)

    val: dict[SubgraphIndex, float] = {}
    test: dict[SubgraphIndex, float] = {}
    for idx in enumerate_indices(supernet):
        base = float(rng.uniform(0.0, 0.5))
        bonus = 0.0
        if pairs:
            matches = sum(1 for a, b in pairs if idx[a] == idx[b])
            bonus = spec.pairwise_strength * matches / len(pairs)
        v = base + bonus + float(rng.normal(0.0, spec.noise_sd))
        t = v + float(rng.normal(0.0, spec.noise_sd))
        val[idx] = v
        test[idx] = t
    others_val = max(v for idx, v in val.items() if idx != planted)
    others_test = max(v for idx, v in test.items() if idx != planted)
    val[planted] = others_val + spec.gap
    test[planted] = others_test + spec.gap
    return TabularBenchmark(
        supernet=supernet,
        val_score=val,
        test_score=test,
        name=f"planted-{spec.seed}",
        source="synthetic",
    )


# ---------------------------------------------------------------------------
# CSV interchange: header i_1,...,i_T,val,test with 1-based indices


def save_benchmark_csv(benchmark: TabularBenchmark, path: str | Path) -> None:
    t = benchmark.supernet.num_edges
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"i_{i}" for i in range(1, t + 1)] + ["val", "test"])
        for idx in enumerate_indices(benchmark.supernet):
            writer.writerow(
                list(idx) + [repr(benchmark.val_score[idx]), repr(benchmark.test_score[idx])]
            )


def load_benchmark_csv(path: str | Path, supernet: Supernet | None = None) -> TabularBenchmark:
    """Read a full-space benchmark table; every violation names its line.

    The CSV carries no topology, so pass the intended supernet when node
    sharing matters; otherwise a chain with the inferred choice counts is
    assumed.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        t = len(header) - 2
        if t < 1 or header != [f"i_{i}" for i in range(1, t + 1)] + ["val", "test"]:
            raise DataFormatError(
                f"{path}: line 1: header must be i_1,...,i_T,val,test"
            )
        val: dict[SubgraphIndex, float] = {}
        test: dict[SubgraphIndex, float] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != t + 2:
                raise DataFormatError(f"{path}: line {lineno}: expected {t + 2} fields")
            try:
                idx = tuple(int(x) for x in row[:t])
                v = float(row[t])
                ts = float(row[t + 1])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
            if not (np.isfinite(v) and np.isfinite(ts)):
                raise DataFormatError(f"{path}: line {lineno}: non-finite score")
            if min(idx) < 1:
                raise DataFormatError(f"{path}: line {lineno}: indices are 1-based")
            if idx in val:
                raise DataFormatError(f"{path}: line {lineno}: duplicate index {idx}")
            val[idx] = v
            test[idx] = ts
    if not val:
        raise DataFormatError(f"{path}: no data rows")
    counts = tuple(max(idx[i] for idx in val) for i in range(t))
    if supernet is None:
        supernet = make_chain(t, 1, name=path.stem)
        # rebuild with per-edge counts (make_chain is uniform)
        edges = tuple(
            Edge(
                id=i + 1,
                u=f"n{i}",
                v=f"n{i+1}",
                choices=tuple(f"op{j}" for j in range(1, counts[i] + 1)),
            )
            for i in range(t)
        )
        supernet = Supernet(name=path.stem, nodes=supernet.nodes, edges=edges)
    else:
        if supernet.num_edges != t:
            raise DataFormatError(
                f"{path}: {t} index columns but supernet has {supernet.num_edges} edges"
            )
        if supernet.choice_counts != counts and any(
            c > s for c, s in zip(counts, supernet.choice_counts)
        ):
            raise DataFormatError(
                f"{path}: observed choice counts {counts} exceed supernet {supernet.choice_counts}"
            )
    missing = [idx for idx in enumerate_indices(supernet) if idx not in val]
    if missing:
        raise DataFormatError(
            f"{path}: missing index {missing[0]} ({len(missing)} rows absent)"
        )
    return TabularBenchmark(
        supernet=supernet, val_score=val, test_score=test, name=path.stem, source=str(path)
    )


# ---------------------------------------------------------------------------
# evaluator


@dataclass
class TabularEvaluator(TaskEvaluator):
    benchmark: TabularBenchmark
    val_queries: int = 0
    test_queries: int = 0
    _table: np.ndarray | None = field(default=None, repr=False)

    def evaluate(self, idx: SubgraphIndex) -> float:
        idx = tuple(idx)
        self.val_queries += 1
        try:
            return self.benchmark.val_score[idx]
        except KeyError:
            raise DataFormatError(f"unknown index {idx}") from None

    def final_evaluate(self, idx: SubgraphIndex) -> float:
        idx = tuple(idx)
        self.test_queries += 1
        try:
            return self.benchmark.test_score[idx]
        except KeyError:
            raise DataFormatError(f"unknown index {idx}") from None

    def relaxed_objective(self, dist: TnDistribution):
        """Exact expectation of the validation column under the distribution."""
        if self._table is None:
            s = self.benchmark.supernet
            table = np.empty(s.choice_counts)
            for idx in enumerate_indices(s):
                table[tuple(p - 1 for p in idx)] = self.benchmark.val_score[idx]
            self._table = table
        return expectation_grad_table(dist, self._table)


def as_evaluator(benchmark: TabularBenchmark) -> TabularEvaluator:
    return TabularEvaluator(benchmark)


# ---------------------------------------------------------------------------
# the 6-edge, 5-choice cell used by the public tabular NAS benchmark


NASBENCH201_OPS = (
    "none",
    "skip_connect",
    "nor_conv_1x1",
    "nor_conv_3x3",
    "avg_pool_3x3",
)

# edge order matches the benchmark's architecture-string convention:
# |op~0| + |op~0|op~1| + |op~0|op~1|op~2|
_NASBENCH201_EDGES = ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))


def nasbench201_supernet() -> Supernet:
    nodes = tuple(str(i) for i in range(4))
    edges = tuple(
        Edge(id=i + 1, u=str(a), v=str(b), choices=NASBENCH201_OPS)
        for i, (b, a) in enumerate(_NASBENCH201_EDGES)
    )
    return Supernet(name="nasbench201-cell", nodes=nodes, edges=edges)
