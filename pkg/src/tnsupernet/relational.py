"""Relational-chain discovery: logical rules on knowledge graphs and
meta-paths on typed-edge networks.

A chain task fixes a target relation and a length T; candidates are the
relations allowed on each hop. A rule reaches (x, y) when the product of its
relation adjacency matrices has a nonzero (x, y) entry. Composition is always
evaluated from the x-row outward, so no dense entity-by-entity matrix is ever
materialized; ``DENSE_COMPOSITIONS`` counts the one helper that would, and
stays untouched by every scoring path.

The differentiable relaxation mixes per-hop adjacency matrices with the
chain's softmax cores and propagates forward/backward messages, giving the
exact expected path-count objective and its parameter gradient without
enumerating rules.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .encoding import TnDistribution, _softmax_backward, dense_probabilities
from .errors import DataFormatError, EnumerationCapError, SupernetFormatError
from .search import TaskEvaluator
from .supernet import (
    DEFAULT_ENUMERATION_CAP,
    Edge,
    SubgraphIndex,
    Supernet,
    enumerate_indices,
    space_size,
)

IDENTITY_RELATION = "identity"

# Entity count above which composing a dense n_e x n_e product is refused.
DENSE_THRESHOLD = 200

# Incremented only by compose_dense(); scoring paths must leave it untouched.
DENSE_COMPOSITIONS = 0


@dataclass
class RelationalGraph:
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    triples: tuple[tuple[str, str, str], ...]
    adjacency: dict[str, sp.csr_matrix]

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    def entity_id(self, name: str) -> int:
        return self._entity_index()[name]

    def _entity_index(self) -> dict[str, int]:
        if not hasattr(self, "_eidx"):
            self._eidx = {e: i for i, e in enumerate(self.entities)}
        return self._eidx

    def relation_matrix(self, name: str) -> sp.csr_matrix:
        if name == IDENTITY_RELATION and name not in self.adjacency:
            return sp.identity(self.num_entities, dtype=np.float64, format="csr")
        try:
            return self.adjacency[name]
        except KeyError:
            raise DataFormatError(f"unknown relation {name!r}") from None


@dataclass
class ChainTask:
    target_relation: str
    chain_length: int
    candidate_relations: tuple[str, ...]
    # split name -> tuple of (head id, tail id) pairs for the target relation
    splits: dict[str, tuple[tuple[int, int], ...]]

    def __post_init__(self):
        if self.chain_length < 1:
            raise DataFormatError("chain_length must be >= 1")
        if not self.candidate_relations:
            raise DataFormatError("no candidate relations")

    def pairs(self, split: str) -> tuple[tuple[int, int], ...]:
        try:
            return self.splits[split]
        except KeyError:
            raise DataFormatError(f"unknown split {split!r}") from None


@dataclass(frozen=True)
class ChainRule:
    relations: tuple[str, ...]
    score: float = 0.0


def chain_supernet(task: ChainTask, name: str | None = None) -> Supernet:
    """Linear supernet whose per-edge choices are the candidate relations."""
    t = task.chain_length
    nodes = tuple(f"v{i}" for i in range(t + 1))
    edges = tuple(
        Edge(id=i, u=f"v{i-1}", v=f"v{i}", choices=task.candidate_relations)
        for i in range(1, t + 1)
    )
    return Supernet(name=name or f"chain-{task.target_relation}", nodes=nodes, edges=edges)


def rule_from_index(task: ChainTask, idx: SubgraphIndex, score: float = 0.0) -> ChainRule:
    return ChainRule(
        relations=tuple(task.candidate_relations[p - 1] for p in idx), score=score
    )


# ---------------------------------------------------------------------------
# loading and writing triples


def _parse_triples(path: Path) -> list[tuple[str, str, str]]:
    triples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected head<TAB>relation<TAB>tail"
                )
            triples.append((parts[0], parts[1], parts[2]))
    return triples


def build_graph(triples: list[tuple[str, str, str]]) -> RelationalGraph:
    """Graph from explicit triples; ids assigned by first appearance."""
    if not triples:
        raise DataFormatError("no triples")
    entities: list[str] = []
    relations: list[str] = []
    eidx: dict[str, int] = {}
    ridx: dict[str, int] = {}
    seen = set()
    unique = []
    for h, r, t in triples:
        for e in (h, t):
            if e not in eidx:
                eidx[e] = len(entities)
                entities.append(e)
        if r not in ridx:
            ridx[r] = len(relations)
            relations.append(r)
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            unique.append((h, r, t))
    n = len(entities)
    adjacency = {}
    for rel in relations:
        rows = [eidx[h] for h, r, t in unique if r == rel]
        cols = [eidx[t] for h, r, t in unique if r == rel]
        adjacency[rel] = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(n, n), dtype=np.float64
        )
    return RelationalGraph(
        entities=tuple(entities),
        relations=tuple(relations),
        triples=tuple(unique),
        adjacency=adjacency,
    )


def load_triples(path: str | Path) -> RelationalGraph:
    """One TSV file of head<TAB>relation<TAB>tail lines; duplicates stored once."""
    path = Path(path)
    triples = _parse_triples(path)
    if not triples:
        raise DataFormatError(f"{path}: empty file")
    return build_graph(triples)


def load_dataset(
    directory: str | Path,
    target_relation: str | None = None,
    chain_length: int = 2,
    include_identity: bool = False,
) -> tuple[RelationalGraph, ChainTask]:
    """Dataset directory with train.txt / valid.txt / test.txt.

    Facts (the adjacency) come from train.txt only; the task splits keep the
    target-relation pairs of each file. When the directory carries a
    task.json, its settings fill any argument left unset.
    """
    directory = Path(directory)
    meta = {}
    task_file = directory / "task.json"
    if task_file.exists():
        meta = json.loads(task_file.read_text(encoding="utf-8"))
    target_relation = target_relation or meta.get("target_relation")
    if target_relation is None:
        raise DataFormatError(f"{directory}: no target relation given or in task.json")
    chain_length = meta.get("chain_length", chain_length)
    include_identity = meta.get("include_identity", include_identity)
    files = {}
    for split in ("train", "valid", "test"):
        p = directory / f"{split}.txt"
        if not p.exists():
            raise DataFormatError(f"{directory}: missing {split}.txt")
        files[split] = _parse_triples(p)
    if not files["train"]:
        raise DataFormatError(f"{directory}: train.txt is empty")
    graph = build_graph(files["train"])
    # held-out entities must still be rankable: extend the vocabulary
    extra = []
    known = set(graph.entities)
    for split in ("valid", "test"):
        for h, r, t in files[split]:
            for e in (h, t):
                if e not in known:
                    known.add(e)
                    extra.append(e)
    if extra:
        entities = graph.entities + tuple(extra)
        n = len(entities)
        adjacency = {rel: _grown(m, n) for rel, m in graph.adjacency.items()}
        graph = RelationalGraph(
            entities=entities,
            relations=graph.relations,
            triples=graph.triples,
            adjacency=adjacency,
        )
    eidx = {e: i for i, e in enumerate(graph.entities)}
    splits = {}
    for split, triples in files.items():
        pairs = tuple(
            (eidx[h], eidx[t]) for h, r, t in triples if r == target_relation
        )
        splits[split] = pairs
    candidates = meta.get("candidate_relations")
    if candidates is None:
        candidates = [r for r in graph.relations if r != target_relation]
        if include_identity:
            candidates.append(IDENTITY_RELATION)
    task = ChainTask(
        target_relation=target_relation,
        chain_length=chain_length,
        candidate_relations=tuple(candidates),
        splits=splits,
    )
    return graph, task


def _grown(m: sp.csr_matrix, n: int) -> sp.csr_matrix:
    coo = m.tocoo()
    return sp.csr_matrix((coo.data, (coo.row, coo.col)), shape=(n, n))


def write_dataset(
    graph: RelationalGraph, task: ChainTask, directory: str | Path
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    target = task.target_relation
    target_pairs = {split: set(task.splits[split]) for split in task.splits}
    ent = graph.entities

    def write(path: Path, triples) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for h, r, t in triples:
                fh.write(f"{h}\t{r}\t{t}\n")

    base = [(h, r, t) for h, r, t in graph.triples if r != target]
    train_target = [(ent[x], target, ent[y]) for x, y in task.splits.get("train", ())]
    write(directory / "train.txt", base + train_target)
    for split in ("valid", "test"):
        rows = [(ent[x], target, ent[y]) for x, y in task.splits.get(split, ())]
        write(directory / f"{split}.txt", rows)
    meta = {
        "target_relation": target,
        "chain_length": task.chain_length,
        "candidate_relations": list(task.candidate_relations),
    }
    (directory / "task.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# chain measures


def compose_dense(graph: RelationalGraph, relations: tuple[str, ...]) -> np.ndarray:
    """Full dense chain product; refused above DENSE_THRESHOLD entities.

    Test and oracle helper. Scoring paths never call this.
    """
    global DENSE_COMPOSITIONS
    n = graph.num_entities
    if n > DENSE_THRESHOLD:
        raise EnumerationCapError(
            f"{n} entities is above the dense-composition threshold {DENSE_THRESHOLD}"
        )
    DENSE_COMPOSITIONS += 1
    out = sp.identity(n, dtype=np.float64, format="csr")
    for rel in relations:
        out = out @ graph.relation_matrix(rel)
    return np.asarray(out.todense())


def _chain_rows(
    graph: RelationalGraph, relations, xs: np.ndarray
) -> sp.csr_matrix:
    """Rows of the chain product for the given head entities, kept sparse."""
    n = graph.num_entities
    sel = sp.csr_matrix(
        (np.ones(len(xs)), (np.arange(len(xs)), xs)), shape=(len(xs), n)
    )
    for rel in relations:
        sel = sel @ graph.relation_matrix(rel)
    return sel.tocsr()


def hard_measure(
    graph: RelationalGraph,
    rule: ChainRule | tuple[str, ...],
    task: ChainTask,
    split: str = "train",
) -> int:
    """How many target pairs of the split the rule reaches (count >= 1)."""
    relations = rule.relations if isinstance(rule, ChainRule) else tuple(rule)
    pairs = task.pairs(split)
    if not pairs:
        return 0
    xs = np.array([x for x, _ in pairs])
    rows = _chain_rows(graph, relations, xs)
    hits = 0
    for i, (_, y) in enumerate(pairs):
        if rows[i, y] >= 1.0:
            hits += 1
    return hits


def path_count_measure(
    graph: RelationalGraph,
    rule: ChainRule | tuple[str, ...],
    task: ChainTask,
    split: str = "train",
) -> float:
    """Sum of raw path counts over the split's target pairs."""
    relations = rule.relations if isinstance(rule, ChainRule) else tuple(rule)
    pairs = task.pairs(split)
    if not pairs:
        return 0.0
    xs = np.array([x for x, _ in pairs])
    rows = _chain_rows(graph, relations, xs)
    return float(sum(rows[i, y] for i, (_, y) in enumerate(pairs)))


# ---------------------------------------------------------------------------
# differentiable relaxation


def _task_matrices(graph: RelationalGraph, task: ChainTask) -> list[sp.csr_matrix]:
    return [graph.relation_matrix(rel) for rel in task.candidate_relations]


def _check_chain(dist: TnDistribution, task: ChainTask) -> None:
    s = dist.supernet
    if s.num_edges != task.chain_length:
        raise SupernetFormatError(
            f"supernet has {s.num_edges} edges; task chain length is {task.chain_length}"
        )
    prev = None
    seen = set()
    for e in s.edges:
        if e.choices != task.candidate_relations:
            raise SupernetFormatError(
                f"edge {e.id}: choices do not match the candidate relations"
            )
        if e.is_self_loop or (prev is not None and e.u != prev) or e.v in seen:
            raise SupernetFormatError("relaxation requires a chain supernet")
        seen.update({e.u, e.v})
        prev = e.v


def relaxed_objective(
    graph: RelationalGraph,
    task: ChainTask,
    dist: TnDistribution,
    *,
    split: str = "train",
    clamp: bool = False,
    chunk_size: int = 512,
) -> tuple[float, list[np.ndarray]]:
    """Expected path count over target pairs, with its exact parameter gradient.

    Equals sum_rules P(rule) * path_count(rule, pair) summed over the split,
    computed by mixing per-hop adjacency matrices into message blocks instead
    of enumerating rules. With ``clamp`` the mixed per-pair score saturates at
    one (sub-gradient zero beyond), turning the objective into a soft version
    of the reach count.
    """
    _check_chain(dist, task)
    pairs = task.pairs(split)
    soft = dist.softmax_cores()
    mats = _task_matrices(graph, task)
    n = graph.num_entities
    s = dist.supernet
    node_ranks = [dist.ranks[node] for node in s.nodes]
    z = float(math.prod(node_ranks))
    value = 0.0
    grad_soft = [np.zeros_like(st) for st in soft]
    for start in range(0, len(pairs), chunk_size):
        chunk = pairs[start : start + chunk_size]
        xs = np.array([x for x, _ in chunk])
        ys = np.array([y for _, y in chunk])
        nq = len(chunk)
        x_rows = sp.csr_matrix(
            (np.ones(nq), (np.arange(nq), xs)), shape=(nq, n)
        )
        # forward[t][r] : (nq, n) message after t hops arriving at rank r
        forward: list[list[np.ndarray]] = [
            [np.asarray(x_rows.todense()) for _ in range(node_ranks[0])]
        ]
        hop_products: list[list[list[np.ndarray]]] = []  # [t][r][c] = f_{t-1}[r] @ A_c
        for t in range(1, s.num_edges + 1):
            st = soft[t - 1]
            r_in, n_choices, r_out = st.shape
            prods = [
                [forward[t - 1][r] @ mats[c] for c in range(n_choices)]
                for r in range(r_in)
            ]
            hop_products.append(prods)
            nxt = []
            for rp in range(r_out):
                acc = np.zeros((nq, n))
                for r in range(r_in):
                    for c in range(n_choices):
                        w = st[r, c, rp]
                        if w != 0.0:
                            acc += w * prods[r][c]
                nxt.append(acc)
            forward.append(nxt)
        scores = np.zeros(nq)
        for r in range(node_ranks[-1]):
            scores += forward[-1][r][np.arange(nq), ys]
        scores /= z
        if clamp:
            value += float(np.minimum(scores, 1.0).sum())
            weights = (scores < 1.0).astype(np.float64)
        else:
            value += float(scores.sum())
            weights = np.ones(nq)
        # backward[r] : (nq, n) message from the tail side at rank r
        backward = [
            np.zeros((nq, n)) for _ in range(node_ranks[-1])
        ]
        for r in range(node_ranks[-1]):
            backward[r][np.arange(nq), ys] = weights
        for t in range(s.num_edges, 0, -1):
            st = soft[t - 1]
            r_in, n_choices, r_out = st.shape
            prods = hop_products[t - 1]
            for r in range(r_in):
                for c in range(n_choices):
                    pc = prods[r][c]
                    for rp in range(r_out):
                        grad_soft[t - 1][r, c, rp] += float(
                            np.vdot(pc, backward[rp])
                        ) / z
            if t > 1:
                carried = []
                for c in range(n_choices):
                    carried.append([np.asarray(backward[rp] @ mats[c].T) for rp in range(r_out)])
                prev = []
                for r in range(r_in):
                    acc = np.zeros((nq, n))
                    for c in range(n_choices):
                        for rp in range(r_out):
                            w = st[r, c, rp]
                            if w != 0.0:
                                acc += w * carried[c][rp]
                    prev.append(acc)
                backward = prev
    grads = [
        _softmax_backward(st, gs) for st, gs in zip(soft, grad_soft)
    ]
    return value, grads


# ---------------------------------------------------------------------------
# ranking metrics


def score_rows_for_rule(
    graph: RelationalGraph, relations: tuple[str, ...], xs: np.ndarray
) -> np.ndarray:
    """Dense (len(xs), n_e) score rows for a hard rule."""
    return np.asarray(_chain_rows(graph, relations, xs).todense())


def score_rows_for_distribution(
    graph: RelationalGraph, task: ChainTask, dist: TnDistribution, xs: np.ndarray
) -> np.ndarray:
    """Rows of the probability-mixed chain product, via forward messages only."""
    _check_chain(dist, task)
    soft = dist.softmax_cores()
    mats = _task_matrices(graph, task)
    n = graph.num_entities
    s = dist.supernet
    node_ranks = [dist.ranks[node] for node in s.nodes]
    z = float(math.prod(node_ranks))
    nq = len(xs)
    x_rows = sp.csr_matrix((np.ones(nq), (np.arange(nq), xs)), shape=(nq, n))
    forward = [np.asarray(x_rows.todense()) for _ in range(node_ranks[0])]
    for t in range(1, s.num_edges + 1):
        st = soft[t - 1]
        r_in, n_choices, r_out = st.shape
        prods = [[forward[r] @ mats[c] for c in range(n_choices)] for r in range(r_in)]
        forward = [
            sum(
                st[r, c, rp] * prods[r][c]
                for r in range(r_in)
                for c in range(n_choices)
            )
            for rp in range(r_out)
        ]
    total = forward[0]
    for r in range(1, node_ranks[-1]):
        total = total + forward[r]
    return np.asarray(total) / z


def rank_metrics(
    graph: RelationalGraph,
    scorer,
    queries: list[tuple[int, int]],
    k_list: tuple[int, ...] = (1, 3, 10),
    *,
    filtered: bool = True,
    known_true: dict[int, set[int]] | None = None,
) -> dict:
    """Mean reciprocal rank and Hits@k for (head, true tail) queries.

    ``scorer(xs)`` returns one dense score row per head. The true tail is
    ranked pessimistically (after every equal-scored entity); filtering drops
    other known true tails of the same head from the candidate pool.
    """
    if not queries:
        raise DataFormatError("empty query set")
    xs = np.array([x for x, _ in queries])
    rows = scorer(xs)
    ranks = []
    for i, (x, y) in enumerate(queries):
        row = rows[i]
        mask = np.ones(len(row), dtype=bool)
        if filtered and known_true:
            for other in known_true.get(x, ()):  # never filter the query tail
                if other != y:
                    mask[other] = False
        true_score = row[y]
        # the true tail scores >= itself, so this count is already 1-based
        rank = int(np.sum(row[mask] >= true_score))
        ranks.append(rank)
    ranks = np.array(ranks, dtype=np.float64)
    out = {"MRR": float(np.mean(1.0 / ranks))}
    for k in k_list:
        out[f"Hits@{k}"] = float(np.mean(ranks <= k))
    out["ranks"] = [int(r) for r in ranks]
    return out


def known_true_tails(task: ChainTask) -> dict[int, set[int]]:
    """All (head -> true tails) of the target relation across every split."""
    known: dict[int, set[int]] = {}
    for pairs in task.splits.values():
        for x, y in pairs:
            known.setdefault(x, set()).add(y)
    return known


def rule_rank_metrics(
    graph: RelationalGraph,
    task: ChainTask,
    rule: ChainRule | tuple[str, ...],
    split: str = "test",
    k_list: tuple[int, ...] = (1, 3, 10),
    filtered: bool = True,
) -> dict:
    relations = rule.relations if isinstance(rule, ChainRule) else tuple(rule)
    queries = list(task.pairs(split))
    return rank_metrics(
        graph,
        lambda xs: score_rows_for_rule(graph, relations, xs),
        queries,
        k_list,
        filtered=filtered,
        known_true=known_true_tails(task),
    )


def distribution_rank_metrics(
    graph: RelationalGraph,
    task: ChainTask,
    dist: TnDistribution,
    split: str = "test",
    k_list: tuple[int, ...] = (1, 3, 10),
    filtered: bool = True,
) -> dict:
    queries = list(task.pairs(split))
    return rank_metrics(
        graph,
        lambda xs: score_rows_for_distribution(graph, task, dist, xs),
        queries,
        k_list,
        filtered=filtered,
        known_true=known_true_tails(task),
    )


# ---------------------------------------------------------------------------
# rule extraction


def extract_top_rules(
    dist: TnDistribution,
    task: ChainTask,
    k: int,
    *,
    index_cap: int = DEFAULT_ENUMERATION_CAP,
    beam_width: int | None = None,
) -> list[ChainRule]:
    """The k most probable chains, probabilities attached, ties lexicographic.

    Falls back to a beam search over prefix marginals when the space is not
    enumerable; the beam result is a heuristic.
    """
    if k < 1:
        raise DataFormatError("k must be >= 1")
    s = dist.supernet
    size = space_size(s)
    if size <= index_cap:
        probs = dense_probabilities(dist, index_cap=index_cap)
        flat = probs.reshape(-1)
        take = min(k, flat.size)
        order = np.argsort(-flat, kind="stable")[:take]
        rules = []
        for pos in order:
            coords = np.unravel_index(int(pos), probs.shape)
            idx = tuple(int(c) + 1 for c in coords)
            rules.append(rule_from_index(task, idx, score=float(flat[pos])))
        return rules
    return _beam_rules(dist, task, k, beam_width or max(4 * k, 16))


def _beam_rules(dist, task, k, width) -> list[ChainRule]:
    from .encoding import marginal

    s = dist.supernet
    beams: list[tuple[float, tuple[int, ...]]] = [(1.0, ())]
    for t in range(1, s.num_edges + 1):
        grown = []
        for weight, prefix in beams:
            cond = marginal(dist, t, prefix)
            for c, p in enumerate(cond, start=1):
                grown.append((weight * float(p), prefix + (c,)))
        grown.sort(key=lambda wp: (-wp[0], wp[1]))
        beams = grown[:width]
    return [
        rule_from_index(task, idx, score=weight) for weight, idx in beams[:k]
    ]


def format_rule(task: ChainTask, rule: ChainRule) -> str:
    """Text form: target(C,A) <= r1(C,B1), r2(B1,A) [prob=p]."""
    t = len(rule.relations)
    vars_ = ["C"] + [f"B{i}" for i in range(1, t)] + ["A"]
    body = ", ".join(
        f"{rel}({vars_[i]},{vars_[i+1]})" for i, rel in enumerate(rule.relations)
    )
    return f"{task.target_relation}(C,A) <= {body} [prob={rule.score:.6g}]"


# ---------------------------------------------------------------------------
# planted synthetic graphs


def generate_planted_kg(
    n_entities: int,
    n_relations: int,
    rule: ChainRule | tuple[str, ...],
    target: str = "target",
    *,
    base_density: float = 0.04,
    support_fraction: float = 0.9,
    noise: float = 0.0,
    seed: int = 0,
    include_identity: bool = False,
) -> tuple[RelationalGraph, ChainTask]:
    """Random base relations plus a target implied by the planted chain.

    Target pairs are the chain-reachable pairs (a ``support_fraction`` of
    them), with ``noise`` * |target| random unreachable pairs mixed in.
    Splits are 70/10/20 over the target pairs, deterministic per seed.
    """
    relations = [f"R{i}" for i in range(1, n_relations + 1)]
    planted = rule.relations if isinstance(rule, ChainRule) else tuple(rule)
    for rel in planted:
        if rel not in relations and rel != IDENTITY_RELATION:
            raise DataFormatError(f"planted rule uses unknown relation {rel!r}")
    if not 0 < base_density < 1:
        raise DataFormatError("base_density must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n = n_entities
    entities = [f"e{i}" for i in range(n)]
    adjacency = {}
    triples = []
    for rel in relations:
        grid = rng.random((n, n)) < base_density
        np.fill_diagonal(grid, False)
        rows, cols = np.nonzero(grid)
        adjacency[rel] = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(n, n), dtype=np.float64
        )
        triples.extend((entities[r], rel, entities[c]) for r, c in zip(rows, cols))
    reach = sp.identity(n, dtype=np.float64, format="csr")
    for rel in planted:
        reach = reach @ (
            adjacency[rel]
            if rel != IDENTITY_RELATION
            else sp.identity(n, dtype=np.float64, format="csr")
        )
    reach_pairs = [(int(r), int(c)) for r, c in zip(*reach.nonzero()) if r != c]
    if not reach_pairs:
        raise DataFormatError(
            "base density yields an empty target; raise base_density"
        )
    order = rng.permutation(len(reach_pairs))
    keep = max(1, int(round(support_fraction * len(reach_pairs))))
    target_pairs = [reach_pairs[i] for i in order[:keep]]
    n_noise = int(round(noise * len(target_pairs)))
    reach_set = set(reach_pairs)
    added = 0
    existing = set(target_pairs)
    while added < n_noise:
        x = int(rng.integers(n))
        y = int(rng.integers(n))
        if x == y or (x, y) in reach_set or (x, y) in existing:
            continue
        target_pairs.append((x, y))
        existing.add((x, y))
        added += 1
    shuffle = rng.permutation(len(target_pairs))
    target_pairs = [target_pairs[i] for i in shuffle]
    n_total = len(target_pairs)
    n_train = max(1, int(round(0.7 * n_total)))
    n_valid = max(1, int(round(0.1 * n_total))) if n_total >= 3 else 0
    train = tuple(target_pairs[:n_train])
    valid = tuple(target_pairs[n_train : n_train + n_valid])
    test = tuple(target_pairs[n_train + n_valid :])
    if not test:
        test = train[-1:]
    triples.extend(
        (entities[x], target, entities[y]) for x, y in target_pairs
    )
    graph = RelationalGraph(
        entities=tuple(entities),
        relations=tuple(relations + [target]),
        triples=tuple(triples),
        adjacency={**adjacency, target: _pairs_matrix(target_pairs, n)},
    )
    candidates = list(relations)
    if include_identity:
        candidates.append(IDENTITY_RELATION)
    task = ChainTask(
        target_relation=target,
        chain_length=len(planted),
        candidate_relations=tuple(candidates),
        splits={"train": train, "valid": valid, "test": test},
    )
    return graph, task


def _pairs_matrix(pairs, n) -> sp.csr_matrix:
    if not pairs:
        return sp.csr_matrix((n, n), dtype=np.float64)
    rows = [x for x, _ in pairs]
    cols = [y for _, y in pairs]
    return sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, n), dtype=np.float64
    )


# ---------------------------------------------------------------------------
# evaluator for the search engine


class ChainTaskEvaluator(TaskEvaluator):
    """Adapts a chain task to the search engine.

    Stochastic reward is the fraction of train-split pairs a sampled rule
    reaches; the relaxation is the expected-path-count objective; the final
    metric is filtered MRR on the test split.
    """

    def __init__(
        self,
        graph: RelationalGraph,
        task: ChainTask,
        *,
        clamp: bool = False,
        final_split: str = "test",
    ):
        self.graph = graph
        self.task = task
        self.clamp = clamp
        self.final_split = final_split

    def evaluate(self, idx: SubgraphIndex) -> float:
        rule = rule_from_index(self.task, idx)
        pairs = self.task.pairs("train")
        if not pairs:
            return 0.0
        return hard_measure(self.graph, rule, self.task, "train") / len(pairs)

    def relaxed_objective(self, dist: TnDistribution):
        return relaxed_objective(
            self.graph, self.task, dist, split="train", clamp=self.clamp
        )

    def final_evaluate(self, idx: SubgraphIndex) -> float:
        rule = rule_from_index(self.task, idx)
        metrics = rule_rank_metrics(
            self.graph, self.task, rule, split=self.final_split
        )
        return metrics["MRR"]


def as_chain_evaluator(
    graph: RelationalGraph, task: ChainTask, **kw
) -> ChainTaskEvaluator:
    return ChainTaskEvaluator(graph, task, **kw)
