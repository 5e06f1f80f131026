"""Tensor-network parameterization of a probability distribution over subgraphs.

Every edge t of a supernet owns a third-order parameter block beta^(t) of
shape R_u x C_t x R_v, where R_n is the rank attached to node n. Applying a
softmax along the choice axis of every block and summing one rank variable
per node yields, after dividing by prod_n R_n, a normalized distribution over
subgraph indices: each per-(r, r') softmax slice sums to one, so the full sum
telescopes to exactly one for any topology, ranks, and finite parameters.

Two evaluation routes are kept deliberately separate:

* ``materialize`` enumerates node rank assignments directly (the brute-force
  reference; it never touches einsum);
* ``prob``/``marginal``/``argmax``/gradients contract the network with
  ``numpy.einsum`` over a greedy elimination order.

The test suite holds the two routes against each other on every enumerable
instance.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import EnumerationCapError, SupernetFormatError
from .supernet import (
    DEFAULT_ENUMERATION_CAP,
    SubgraphIndex,
    Supernet,
    enumerate_indices,
    space_size,
    validate_index,
)

DEFAULT_ASSIGNMENT_CAP = 10**6

# numpy's einsum sublist interface allows integer axis labels in [0, 52).
_MAX_EINSUM_LABELS = 52


@dataclass(frozen=True)
class InitSpec:
    """How to fill fresh parameter blocks: all zeros, or i.i.d. Gaussian."""

    kind: str = "gaussian"
    sd: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("zeros", "gaussian"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "gaussian" and self.sd < 0:
            raise ValueError("gaussian init needs sd >= 0")

    @classmethod
    def zeros(cls) -> "InitSpec":
        return cls(kind="zeros", sd=0.0)

    @classmethod
    def gaussian(cls, sd: float = 1e-3) -> "InitSpec":
        return cls(kind="gaussian", sd=sd)


@dataclass
class EdgeCore:
    """Raw parameter block for one edge, shape (R_u, C_t, R_v)."""

    edge_id: int
    values: np.ndarray


class ArgmaxResult(NamedTuple):
    index: SubgraphIndex
    exact: bool


def uniform_ranks(s: Supernet, rank: int) -> dict[str, int]:
    return {n: rank for n in s.nodes}


def validate_ranks(s: Supernet, ranks: dict[str, int]) -> None:
    for n in s.nodes:
        if n not in ranks:
            raise SupernetFormatError(f"rank map is missing node {n!r}")
        if ranks[n] < 1:
            raise SupernetFormatError(f"node {n!r}: rank must be >= 1")


def rank_product(s: Supernet, ranks: dict[str, int]) -> int:
    return math.prod(ranks[n] for n in s.nodes)


class TnDistribution:
    """Edge cores plus a per-node rank map; induces a distribution over indices.

    The object is immutable during evaluation; a search loop may overwrite
    ``cores[t].values`` between evaluation phases.
    """

    def __init__(self, supernet: Supernet, ranks: dict[str, int], cores: list[EdgeCore]):
        validate_ranks(supernet, ranks)
        if len(cores) != supernet.num_edges:
            raise SupernetFormatError(
                f"{len(cores)} cores for {supernet.num_edges} edges"
            )
        for e, core in zip(supernet.edges, cores):
            expected = (ranks[e.u], e.num_choices, ranks[e.v])
            if core.edge_id != e.id:
                raise SupernetFormatError(f"core for edge {e.id} carries id {core.edge_id}")
            if core.values.shape != expected:
                raise SupernetFormatError(
                    f"edge {e.id}: core shape {core.values.shape} != {expected}"
                )
            if not np.all(np.isfinite(core.values)):
                raise SupernetFormatError(f"edge {e.id}: non-finite core entries")
        self.supernet = supernet
        self.ranks = dict(ranks)
        self.cores = cores

    @property
    def betas(self) -> list[np.ndarray]:
        return [c.values for c in self.cores]

    def set_betas(self, betas: list[np.ndarray]) -> None:
        if len(betas) != len(self.cores):
            raise SupernetFormatError("wrong number of parameter blocks")
        for core, b in zip(self.cores, betas):
            if b.shape != core.values.shape:
                raise SupernetFormatError(
                    f"edge {core.edge_id}: block shape {b.shape} != {core.values.shape}"
                )
            core.values = np.asarray(b, dtype=np.float64)

    def softmax_cores(self) -> list[np.ndarray]:
        return [normalized_core(c.values) for c in self.cores]

    def copy(self) -> "TnDistribution":
        cores = [EdgeCore(c.edge_id, c.values.copy()) for c in self.cores]
        return TnDistribution(self.supernet, dict(self.ranks), cores)


def init_distribution(
    s: Supernet,
    ranks: dict[str, int],
    init: InitSpec | None = None,
    seed: int = 0,
) -> TnDistribution:
    """Allocate cores of the declared shapes, filled per `init`, reproducibly."""
    init = init or InitSpec.gaussian(1e-3)
    validate_ranks(s, ranks)
    rng = np.random.default_rng(seed)
    cores = []
    for e in s.edges:
        shape = (ranks[e.u], e.num_choices, ranks[e.v])
        if init.kind == "zeros":
            values = np.zeros(shape)
        else:
            values = rng.normal(0.0, init.sd, size=shape)
        cores.append(EdgeCore(edge_id=e.id, values=values))
    return TnDistribution(s, ranks, cores)


def normalized_core(values: np.ndarray) -> np.ndarray:
    """Softmax along the choice axis, per (r, r') slice, with max subtraction.

    Each slice of the result sums to one; this per-core normalization is what
    makes the induced distribution sum to one globally.
    """
    shifted = values - values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# einsum label bookkeeping


def _node_labels(s: Supernet) -> dict[str, int]:
    return {n: i for i, n in enumerate(s.nodes)}


def _choice_label(s: Supernet, t: int) -> int:
    # t is a 0-based edge position here
    return s.num_nodes + t


def _batch_label(s: Supernet) -> int:
    return s.num_nodes + s.num_edges


def _check_label_budget(s: Supernet) -> None:
    if s.num_nodes + s.num_edges + 1 > _MAX_EINSUM_LABELS:
        raise EnumerationCapError(
            f"contraction needs {s.num_nodes + s.num_edges + 1} einsum labels, "
            f"above the supported {_MAX_EINSUM_LABELS}"
        )


def _connected_rank_norm(s: Supernet, ranks: dict[str, int]) -> float:
    """prod R_n over nodes that touch at least one edge.

    Isolated nodes contribute a bare sum over their rank variable, which
    cancels against their factor of the global 1/prod R_n.
    """
    touched = set()
    for e in s.edges:
        touched.add(e.u)
        touched.add(e.v)
    return float(math.prod(ranks[n] for n in s.nodes if n in touched))


def _check_assignment_cap(s: Supernet, ranks: dict[str, int], cap: int) -> None:
    total = rank_product(s, ranks)
    if total > cap:
        raise EnumerationCapError(
            f"{total} rank assignments, above the cap {cap}"
        )


def _sliced_operands(
    dist: TnDistribution, soft: list[np.ndarray], idx: SubgraphIndex
) -> tuple[list[np.ndarray], list[list[int]]]:
    """Cores with the choice axis fixed at idx; self-loops keep repeated labels."""
    s = dist.supernet
    labels = _node_labels(s)
    ops, subs = [], []
    for e, st, pick in zip(s.edges, soft, idx):
        ops.append(st[:, pick - 1, :])
        subs.append([labels[e.u], labels[e.v]])
    return ops, subs


def _einsum(ops: list[np.ndarray], subs: list[list[int]], out: list[int]):
    args = []
    for op, sub in zip(ops, subs):
        args.extend([op, sub])
    args.append(out)
    return np.einsum(*args, optimize="greedy")


# ---------------------------------------------------------------------------
# evaluation: optimized contraction route


def prob(
    dist: TnDistribution,
    idx: SubgraphIndex,
    *,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> float:
    """Exact probability of one subgraph index."""
    s = dist.supernet
    validate_index(s, idx)
    _check_label_budget(s)
    _check_assignment_cap(s, dist.ranks, assignment_cap)
    ops, subs = _sliced_operands(dist, dist.softmax_cores(), idx)
    raw = float(_einsum(ops, subs, []))
    return raw / _connected_rank_norm(s, dist.ranks)


def log_prob(dist: TnDistribution, idx: SubgraphIndex, **kw) -> float:
    return float(np.log(prob(dist, idx, **kw)))


def dense_probabilities(
    dist: TnDistribution,
    *,
    index_cap: int = DEFAULT_ENUMERATION_CAP,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> np.ndarray:
    """Full probability tensor of shape C_1 x ... x C_T via one contraction.

    This is the fast route; ``materialize`` is the independent reference.
    """
    s = dist.supernet
    if space_size(s) > index_cap:
        raise EnumerationCapError(
            f"space size {space_size(s)} above the enumeration cap {index_cap}"
        )
    _check_label_budget(s)
    _check_assignment_cap(s, dist.ranks, assignment_cap)
    labels = _node_labels(s)
    ops, subs, out = [], [], []
    for pos, (e, st) in enumerate(zip(s.edges, dist.softmax_cores())):
        cl = _choice_label(s, pos)
        ops.append(st)
        subs.append([labels[e.u], cl, labels[e.v]])
        out.append(cl)
    full = _einsum(ops, subs, out)
    return full / _connected_rank_norm(s, dist.ranks)


def materialize(
    dist: TnDistribution,
    *,
    index_cap: int = DEFAULT_ENUMERATION_CAP,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> np.ndarray:
    """Brute-force reference tensor: enumerate every node rank assignment.

    Serves as the oracle for prob/marginal/sample/argmax; intentionally free
    of einsum so the two routes stay independent.
    """
    s = dist.supernet
    size = space_size(s)
    if size > index_cap:
        raise EnumerationCapError(
            f"space size {size} above the enumeration cap {index_cap}"
        )
    total_assignments = rank_product(s, dist.ranks)
    if total_assignments > assignment_cap:
        raise EnumerationCapError(
            f"{total_assignments} rank assignments, above the cap {assignment_cap}"
        )
    soft = dist.softmax_cores()
    pos = s.node_position()
    shape = s.choice_counts
    total = np.zeros(shape)
    for assign in itertools.product(*(range(dist.ranks[n]) for n in s.nodes)):
        term = None
        for e, st in zip(s.edges, soft):
            vec = st[assign[pos[e.u]], :, assign[pos[e.v]]]
            term = vec if term is None else np.multiply.outer(term, vec)
        total += term
    return total / total_assignments


def marginal(
    dist: TnDistribution,
    t: int,
    conditioning: SubgraphIndex = (),
    *,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
    index_cap: int = DEFAULT_ENUMERATION_CAP,
) -> np.ndarray:
    """P(i_t = . | picks for edges 1..t-1), an exact length-C_t vector.

    Edges before t are fixed to `conditioning`, edges after t are summed over
    their choice axis, and the remaining network is contracted. If the
    contraction is refused (label budget, rank-assignment cap) the reference
    tensor takes over when enumeration is still permitted.
    """
    s = dist.supernet
    if not 1 <= t <= s.num_edges:
        raise SupernetFormatError(f"no edge with id {t}")
    if len(conditioning) != t - 1:
        raise SupernetFormatError(
            f"conditioning must fix edges 1..{t-1}; got {len(conditioning)} picks"
        )
    for e, pick in zip(s.edges, conditioning):
        if not 1 <= pick <= e.num_choices:
            raise SupernetFormatError(
                f"edge {e.id}: conditioned pick {pick} outside 1..{e.num_choices}"
            )
    try:
        _check_label_budget(s)
        _check_assignment_cap(s, dist.ranks, assignment_cap)
    except EnumerationCapError:
        full = materialize(dist, index_cap=index_cap, assignment_cap=assignment_cap)
        sl = full[tuple(p - 1 for p in conditioning)]
        axes = tuple(range(1, sl.ndim))
        weights = sl.sum(axis=axes) if axes else sl
        return weights / weights.sum()
    labels = _node_labels(s)
    soft = dist.softmax_cores()
    cl = _choice_label(s, t - 1)
    ops, subs = [], []
    for pos0, (e, st) in enumerate(zip(s.edges, soft)):
        lu, lv = labels[e.u], labels[e.v]
        if pos0 < t - 1:
            ops.append(st[:, conditioning[pos0] - 1, :])
            subs.append([lu, lv])
        elif pos0 == t - 1:
            ops.append(st)
            subs.append([lu, cl, lv])
        else:
            ops.append(st.sum(axis=1))
            subs.append([lu, lv])
    weights = _einsum(ops, subs, [cl])
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        raise EnumerationCapError("degenerate conditional; conditioning weight is zero")
    return weights / total


def edge_marginal(
    dist: TnDistribution,
    t: int,
    *,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> np.ndarray:
    """Unconditional P(i_t = .): every other edge summed over its choices."""
    s = dist.supernet
    if not 1 <= t <= s.num_edges:
        raise SupernetFormatError(f"no edge with id {t}")
    _check_label_budget(s)
    _check_assignment_cap(s, dist.ranks, assignment_cap)
    labels = _node_labels(s)
    soft = dist.softmax_cores()
    cl = _choice_label(s, t - 1)
    ops, subs = [], []
    for pos0, (e, st) in enumerate(zip(s.edges, soft)):
        lu, lv = labels[e.u], labels[e.v]
        if pos0 == t - 1:
            ops.append(st)
            subs.append([lu, cl, lv])
        else:
            ops.append(st.sum(axis=1))
            subs.append([lu, lv])
    weights = _einsum(ops, subs, [cl])
    return weights / weights.sum()


def sample_many(
    dist: TnDistribution, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n exact ancestral samples as an (n, T) array of 1-based picks.

    Edge 1 is drawn from its unconditional marginal, then each later edge from
    its conditional given the draws so far; the joint law of a row is exactly
    the encoded distribution. Vectorized over samples with a shared batch
    axis, which leaves the per-row law unchanged.
    """
    s = dist.supernet
    _check_label_budget(s)
    labels = _node_labels(s)
    soft = dist.softmax_cores()
    summed = [st.sum(axis=1) for st in soft]
    bl = _batch_label(s)
    out = np.zeros((n, s.num_edges), dtype=np.int64)
    sliced_ops: list[np.ndarray] = []  # per earlier edge: (n, R_u, R_v)
    for pos0, e in enumerate(s.edges):
        lu, lv = labels[e.u], labels[e.v]
        cl = _choice_label(s, pos0)
        ops, subs = [], []
        for prev, op in enumerate(sliced_ops):
            pe = s.edges[prev]
            ops.append(op)
            subs.append([bl, labels[pe.u], labels[pe.v]])
        ops.append(soft[pos0])
        subs.append([lu, cl, lv])
        for later in range(pos0 + 1, s.num_edges):
            le = s.edges[later]
            ops.append(summed[later])
            subs.append([labels[le.u], labels[le.v]])
        if sliced_ops:
            weights = _einsum(ops, subs, [bl, cl])
        else:
            row = _einsum(ops, subs, [cl])
            weights = np.broadcast_to(row, (n, row.shape[0]))
        probs = weights / weights.sum(axis=1, keepdims=True)
        draws = _categorical_rows(probs, rng)
        out[:, pos0] = draws + 1
        sliced_ops.append(
            np.ascontiguousarray(soft[pos0][:, draws, :].transpose(1, 0, 2))
        )
    return out


def _categorical_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], 1))
    draws = (u > cum).sum(axis=1)
    return np.minimum(draws, probs.shape[1] - 1)


def sample(dist: TnDistribution, rng: np.random.Generator) -> SubgraphIndex:
    return tuple(int(p) for p in sample_many(dist, 1, rng)[0])


def argmax(
    dist: TnDistribution,
    *,
    index_cap: int = DEFAULT_ENUMERATION_CAP,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> ArgmaxResult:
    """Most probable index; exact when the space is enumerable.

    Ties break lexicographically. Above the cap, falls back to greedy
    sequential mode selection through the conditionals and flags the result
    as approximate (the greedy route is exact for rank-1 distributions).
    """
    s = dist.supernet
    try:
        full = dense_probabilities(
            dist, index_cap=index_cap, assignment_cap=assignment_cap
        )
    except EnumerationCapError:
        picks: list[int] = []
        for t in range(1, s.num_edges + 1):
            vec = marginal(dist, t, tuple(picks), assignment_cap=assignment_cap)
            picks.append(int(np.argmax(vec)) + 1)
        return ArgmaxResult(index=tuple(picks), exact=False)
    flat = int(np.argmax(full))  # first occurrence = lexicographic tie-break
    coords = np.unravel_index(flat, full.shape)
    return ArgmaxResult(index=tuple(int(c) + 1 for c in coords), exact=True)


# ---------------------------------------------------------------------------
# gradients


def _softmax_backward(soft_t: np.ndarray, g_soft: np.ndarray) -> np.ndarray:
    """Pull a gradient on softmax outputs back to the raw parameters."""
    inner = np.sum(g_soft * soft_t, axis=1, keepdims=True)
    return soft_t * (g_soft - inner)


def _environment(
    ops: list[np.ndarray],
    subs: list[list[int]],
    out_labels: list[int],
    out_shape: tuple[int, ...],
) -> np.ndarray:
    """Contract `ops`, leaving `out_labels` free; broadcast labels no operand carries.

    A label can be absent when the removed core was the only edge at a node;
    the summand is then constant along that rank axis.
    """
    present = set()
    for sub in subs:
        present.update(sub)
    kept = [l for l in out_labels if l in present]
    if ops:
        env = _einsum(ops, subs, kept)
    else:
        env = np.array(1.0)
    for axis, l in enumerate(out_labels):
        if l not in kept:
            env = np.expand_dims(env, axis)
    return np.broadcast_to(env, out_shape)


def log_prob_grad(
    dist: TnDistribution,
    idx: SubgraphIndex,
    *,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> list[np.ndarray]:
    """Exact gradient of log prob(idx) w.r.t. every raw parameter block.

    Reverse mode through the contraction: the adjoint of core t is the
    contraction of every other (sliced) core with t's rank axes left free.
    """
    s = dist.supernet
    validate_index(s, idx)
    _check_label_budget(s)
    _check_assignment_cap(s, dist.ranks, assignment_cap)
    labels = _node_labels(s)
    soft = dist.softmax_cores()
    ops, subs = _sliced_operands(dist, soft, idx)
    raw = float(_einsum(ops, subs, []))  # = prob times the rank normalizer
    grads = []
    for pos0, e in enumerate(s.edges):
        others = ops[:pos0] + ops[pos0 + 1 :]
        other_subs = subs[:pos0] + subs[pos0 + 1 :]
        st = soft[pos0]
        g_soft = np.zeros_like(st)
        pick0 = idx[pos0] - 1
        if e.is_self_loop:
            ln = labels[e.u]
            env = _environment(others, other_subs, [ln], (st.shape[0],))
            rr = np.arange(st.shape[0])
            g_soft[rr, pick0, rr] = env / raw
        else:
            lu, lv = labels[e.u], labels[e.v]
            env = _environment(
                others, other_subs, [lu, lv], (st.shape[0], st.shape[2])
            )
            g_soft[:, pick0, :] = env / raw
        grads.append(_softmax_backward(st, g_soft))
    return grads


def expectation_grad(
    dist: TnDistribution,
    score: Callable[[SubgraphIndex], float],
    *,
    index_cap: int = DEFAULT_ENUMERATION_CAP,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> tuple[float, list[np.ndarray]]:
    """Exact E[score] under the distribution, and its parameter gradient.

    Enumerates the score once into a dense table, joins it to the network on
    every choice axis, and differentiates through the joint contraction.
    Raises above the caps; chain-factorizing backends provide their own route.
    """
    s = dist.supernet
    table = np.empty(s.choice_counts)
    for idx in enumerate_indices(s, cap=index_cap):
        table[tuple(p - 1 for p in idx)] = score(idx)
    return expectation_grad_table(
        dist, table, index_cap=index_cap, assignment_cap=assignment_cap
    )


def expectation_grad_table(
    dist: TnDistribution,
    table: np.ndarray,
    *,
    index_cap: int = DEFAULT_ENUMERATION_CAP,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> tuple[float, list[np.ndarray]]:
    """`expectation_grad` with the score already materialized as a tensor."""
    s = dist.supernet
    if space_size(s) > index_cap:
        raise EnumerationCapError(
            f"space size {space_size(s)} above the enumeration cap {index_cap}"
        )
    _check_label_budget(s)
    _check_assignment_cap(s, dist.ranks, assignment_cap)
    if table.shape != s.choice_counts:
        raise SupernetFormatError(
            f"score table shape {table.shape} != {s.choice_counts}"
        )
    labels = _node_labels(s)
    soft = dist.softmax_cores()
    norm = _connected_rank_norm(s, dist.ranks)
    choice_subs = [_choice_label(s, p) for p in range(s.num_edges)]
    ops: list[np.ndarray] = [table]
    subs: list[list[int]] = [list(choice_subs)]
    for pos0, (e, st) in enumerate(zip(s.edges, soft)):
        ops.append(st)
        subs.append([labels[e.u], choice_subs[pos0], labels[e.v]])
    value = float(_einsum(ops, subs, [])) / norm
    grads = []
    for pos0, e in enumerate(s.edges):
        keep = [0] + [1 + p for p in range(s.num_edges) if p != pos0]
        others = [ops[k] for k in keep]
        other_subs = [subs[k] for k in keep]
        st = soft[pos0]
        cl = choice_subs[pos0]
        if e.is_self_loop:
            ln = labels[e.u]
            env = _environment(
                others, other_subs, [ln, cl], (st.shape[0], st.shape[1])
            )
            g_soft = np.zeros_like(st)
            rr = np.arange(st.shape[0])
            g_soft[rr, :, rr] = env / norm
        else:
            lu, lv = labels[e.u], labels[e.v]
            env = _environment(others, other_subs, [lu, cl, lv], st.shape)
            g_soft = env / norm
        grads.append(_softmax_backward(st, g_soft))
    return value, grads
