"""Gradient-ascent search over the encoded subgraph distribution.

Stochastic mode draws subgraphs, scores them with a task evaluator, and
ascends the score-function gradient with a moving-average baseline.
Deterministic mode ascends the exact gradient of a differentiable relaxation
(the task's own, or the exact expectation on enumerable spaces). Either way
the final answer is the most probable index, re-scored once by the task.
"""
from __future__ import annotations

import abc
import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import encoding
from .encoding import TnDistribution
from .errors import ConfigError, EvaluatorError, NumericalError, TnSupernetError
from .supernet import DEFAULT_ENUMERATION_CAP, SubgraphIndex, space_size

MODES = ("stochastic", "deterministic")
OPTIMIZERS = ("plain-gradient", "adaptive-moments")
EARLY_STOPS = ("none", "stable_argmax")


@dataclass
class SearchConfig:
    mode: str
    iterations: int = 300
    samples_per_step: int = 4
    learning_rate: float | None = None  # defaults to 0.05 stochastic / 0.01 deterministic
    optimizer: str = "adaptive-moments"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    baseline_decay: float = 0.9
    seed: int = 0
    log_every: int = 10
    early_stop: str = "none"
    early_stop_k: int = 50
    checkpoint_every: int = 0
    final_check: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.early_stop not in EARLY_STOPS:
            raise ConfigError(f"early_stop must be one of {EARLY_STOPS}")
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if self.samples_per_step < 1:
            raise ConfigError("samples_per_step must be positive")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 <= self.baseline_decay < 1:
            raise ConfigError("baseline_decay must lie in [0, 1)")
        if self.log_every < 1:
            raise ConfigError("log_every must be positive")
        if self.early_stop_k < 1:
            raise ConfigError("early_stop_k must be positive")

    @property
    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return 0.05 if self.mode == "stochastic" else 0.01

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": self.iterations,
            "samples_per_step": self.samples_per_step,
            "learning_rate": self.resolved_learning_rate,
            "optimizer": self.optimizer,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "baseline_decay": self.baseline_decay,
            "seed": self.seed,
            "log_every": self.log_every,
            "early_stop": self.early_stop,
            "early_stop_k": self.early_stop_k,
            "checkpoint_every": self.checkpoint_every,
            "final_check": self.final_check,
        }


def config_from_dict(raw: dict) -> SearchConfig:
    if "mode" not in raw:
        raise ConfigError("missing required key: mode")
    known = set(SearchConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return SearchConfig(**raw)


@dataclass
class TrajectoryPoint:
    iteration: int
    reward_mean: float | None
    objective: float | None
    entropy: float
    argmax: SubgraphIndex


@dataclass
class SearchReport:
    best_index: SubgraphIndex
    best_score: float
    mode: str
    iterations_run: int
    evaluations_used: int
    wall_time: float
    argmax_exact: bool
    trajectory: list[TrajectoryPoint] = field(default_factory=list)
    regret: float | None = None

    def to_dict(self) -> dict:
        return {
            "best_index": list(self.best_index),
            "best_score": self.best_score,
            "mode": self.mode,
            "iterations_run": self.iterations_run,
            "evaluations_used": self.evaluations_used,
            "wall_time": self.wall_time,
            "argmax_exact": self.argmax_exact,
            "regret": self.regret,
            "trajectory": [
                {
                    "iteration": p.iteration,
                    "reward_mean": p.reward_mean,
                    "objective": p.objective,
                    "entropy": p.entropy,
                    "argmax": list(p.argmax),
                }
                for p in self.trajectory
            ],
        }

    def write_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    def write_trajectory_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iter", "reward_mean", "objective", "argmax_index"])
            for p in self.trajectory:
                writer.writerow(
                    [
                        p.iteration,
                        "" if p.reward_mean is None else repr(p.reward_mean),
                        "" if p.objective is None else repr(p.objective),
                        "-".join(str(i) for i in p.argmax),
                    ]
                )


class TaskEvaluator(abc.ABC):
    """Scores subgraph indices for one task.

    ``evaluate`` must be deterministic given the index and the evaluator's own
    seed. Subclasses may additionally provide ``relaxed_objective(dist) ->
    (value, grads)`` to unlock deterministic mode, and ``final_evaluate(idx)``
    for a held-out finalization metric.
    """

    @abc.abstractmethod
    def evaluate(self, idx: SubgraphIndex) -> float:
        ...


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None


def update_step(
    betas: list[np.ndarray],
    grads: list[np.ndarray],
    state: OptimizerState,
    cfg: SearchConfig,
) -> tuple[list[np.ndarray], OptimizerState]:
    """One ascent step; returns fresh arrays and the advanced optimizer state."""
    if len(betas) != len(grads):
        raise ConfigError("parameter/gradient block count mismatch")
    for b, g in zip(betas, grads):
        if b.shape != g.shape:
            raise ConfigError(f"shape mismatch: {b.shape} vs {g.shape}")
    lr = cfg.resolved_learning_rate
    if cfg.optimizer == "plain-gradient":
        return [b + lr * g for b, g in zip(betas, grads)], OptimizerState(step=state.step + 1)
    if state.m is None:
        state = OptimizerState(
            step=state.step,
            m=[np.zeros_like(b) for b in betas],
            v=[np.zeros_like(b) for b in betas],
        )
    step = state.step + 1
    new_m, new_v, out = [], [], []
    for b, g, m, v in zip(betas, grads, state.m, state.v):
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1**step)
        v_hat = v / (1 - cfg.beta2**step)
        out.append(b + lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon))
        new_m.append(m)
        new_v.append(v)
    return out, OptimizerState(step=step, m=new_m, v=new_v)


# ---------------------------------------------------------------------------
# search loop


def _mean_marginal_entropy(dist: TnDistribution) -> float:
    total = 0.0
    for t in range(1, dist.supernet.num_edges + 1):
        p = encoding.edge_marginal(dist, t)
        total += float(-(p * np.log(np.maximum(p, 1e-300))).sum())
    return total / dist.supernet.num_edges


def _check_finite(arrays: list[np.ndarray], what: str, iteration: int) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"iteration {iteration}: non-finite {what}")


def search(
    dist: TnDistribution,
    evaluator: TaskEvaluator,
    cfg: SearchConfig,
    *,
    checkpoint_dir: str | Path | None = None,
) -> SearchReport:
    """Run the full loop and return the finalized report.

    The distribution is updated in place. In stochastic mode the baseline is
    seeded with the first batch mean, so a constant-reward task yields exactly
    zero advantage (and zero drift) from the first step onward.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    relaxed = getattr(evaluator, "relaxed_objective", None)
    if cfg.mode == "deterministic" and relaxed is None:
        if space_size(dist.supernet) > DEFAULT_ENUMERATION_CAP:
            raise ConfigError(
                "deterministic mode needs a relaxed objective or an enumerable space"
            )
        relaxed = _enumeration_relaxation(evaluator)
    state = OptimizerState()
    baseline: float | None = None
    trajectory: list[TrajectoryPoint] = []
    evaluations = 0
    stable_run = 0
    prev_argmax: SubgraphIndex | None = None
    iterations_run = 0

    for it in range(1, cfg.iterations + 1):
        iterations_run = it
        if cfg.mode == "stochastic":
            draws = encoding.sample_many(dist, cfg.samples_per_step, rng)
            try:
                rewards = np.array(
                    [evaluator.evaluate(tuple(int(p) for p in row)) for row in draws]
                )
            except TnSupernetError:
                raise
            except Exception as exc:
                raise EvaluatorError(f"iteration {it}: evaluator failed: {exc}") from exc
            evaluations += len(rewards)
            if not np.all(np.isfinite(rewards)):
                raise NumericalError(f"iteration {it}: non-finite reward")
            mean_reward = float(rewards.mean())
            if baseline is None:
                baseline = mean_reward
            else:
                baseline = cfg.baseline_decay * baseline + (1 - cfg.baseline_decay) * mean_reward
            grads = [np.zeros_like(c.values) for c in dist.cores]
            for row, reward in zip(draws, rewards):
                advantage = reward - baseline
                if advantage == 0.0:
                    continue
                glog = encoding.log_prob_grad(dist, tuple(int(p) for p in row))
                for g, gl in zip(grads, glog):
                    g += (advantage / cfg.samples_per_step) * gl
            step_metric: float | None = mean_reward
            objective: float | None = None
        else:
            objective, grads = relaxed(dist)
            if not math.isfinite(objective):
                raise NumericalError(f"iteration {it}: non-finite objective")
            step_metric = None
        _check_finite(grads, "gradient", it)
        new_betas, state = update_step(dist.betas, grads, state, cfg)
        dist.set_betas(new_betas)

        if it % cfg.log_every == 0 or it == cfg.iterations:
            current = encoding.argmax(dist)
            trajectory.append(
                TrajectoryPoint(
                    iteration=it,
                    reward_mean=step_metric,
                    objective=objective if cfg.mode == "deterministic" else None,
                    entropy=_mean_marginal_entropy(dist),
                    argmax=current.index,
                )
            )
        if checkpoint_dir is not None and cfg.checkpoint_every > 0 and it % cfg.checkpoint_every == 0:
            from .checkpoint import save_checkpoint

            save_checkpoint(dist, Path(checkpoint_dir) / f"step_{it:06d}.npz")
            _save_optimizer_state(state, Path(checkpoint_dir) / f"step_{it:06d}_opt.npz")
        if cfg.early_stop == "stable_argmax":
            current = encoding.argmax(dist).index
            if current == prev_argmax:
                stable_run += 1
            else:
                stable_run = 0
                prev_argmax = current
            if stable_run >= cfg.early_stop_k:
                break

    result = encoding.argmax(dist)
    if cfg.final_check and result.exact:
        reference = _reference_argmax(dist)
        if reference is not None and reference != result.index:
            raise NumericalError(
                f"argmax mismatch against enumeration oracle: {result.index} vs {reference}"
            )
    final_eval = getattr(evaluator, "final_evaluate", None)
    if callable(final_eval):
        best_score = float(final_eval(result.index))
    else:
        best_score = float(evaluator.evaluate(result.index))
    evaluations += 1
    return SearchReport(
        best_index=result.index,
        best_score=best_score,
        mode=cfg.mode,
        iterations_run=iterations_run,
        evaluations_used=evaluations,
        wall_time=time.perf_counter() - start,
        argmax_exact=result.exact,
        trajectory=trajectory,
    )


def _save_optimizer_state(state: OptimizerState, path: Path) -> None:
    payload: dict = {"step": np.array(state.step)}
    if state.m is not None:
        for i, (m, v) in enumerate(zip(state.m, state.v)):
            payload[f"m_{i}"] = m
            payload[f"v_{i}"] = v
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def _enumeration_relaxation(evaluator: TaskEvaluator):
    """Exact-expectation fallback; builds the score table once."""
    table: dict = {}

    def relaxed(dist: TnDistribution):
        if not table:
            from .supernet import enumerate_indices

            for idx in enumerate_indices(dist.supernet):
                table[idx] = evaluator.evaluate(idx)
        return encoding.expectation_grad(dist, table.__getitem__)

    return relaxed


def _reference_argmax(dist: TnDistribution) -> SubgraphIndex | None:
    """Lexicographically-first maximizer of the brute-force tensor, if feasible."""
    try:
        full = encoding.materialize(dist)
    except Exception:
        return None
    flat = int(np.argmax(full))
    return tuple(int(c) + 1 for c in np.unravel_index(flat, full.shape))


# ---------------------------------------------------------------------------
# baseline comparison harness


def compare_baselines(
    benchmark,
    cfg: SearchConfig,
    seeds: list[int],
    ranks: tuple[int, int] = (2, 1),
) -> list[dict]:
    """Search vs. uniform random search vs. a rank-1 ablation, mean +/- std.

    Each algorithm gets the same evaluation budget per seed:
    iterations x samples_per_step + 1 final evaluation.
    """
    from .encoding import init_distribution, uniform_ranks
    from .tabular import as_evaluator

    if not seeds:
        raise ConfigError("at least one seed is required")
    budget = cfg.iterations * cfg.samples_per_step + 1
    if budget <= 1:
        raise ConfigError("evaluation budget must be positive")
    rows = []
    tn_rank, ablation_rank = ranks

    def run_tn(rank: int, seed: int) -> float:
        local_cfg = SearchConfig(**{**cfg.to_dict(), "seed": seed})
        dist = init_distribution(
            benchmark.supernet,
            uniform_ranks(benchmark.supernet, rank),
            encoding.InitSpec.gaussian(1e-3),
            seed=seed,
        )
        report = search(dist, as_evaluator(benchmark), local_cfg)
        return report.best_score

    for label, runner in [
        (f"tn-search(R={tn_rank})", lambda seed: run_tn(tn_rank, seed)),
        ("random-search", lambda seed: random_search(benchmark, budget, seed)),
        (f"rank1-ablation(R={ablation_rank})", lambda seed: run_tn(ablation_rank, seed)),
    ]:
        scores = [runner(seed) for seed in seeds]
        rows.append(
            {
                "algorithm": label,
                "mean": float(np.mean(scores)),
                "std": float(np.std(scores)),
                "scores": scores,
            }
        )
    return rows


def random_search(benchmark, budget: int, seed: int) -> float:
    """Uniform i.i.d. index draws; select by validation, report the test score."""
    if budget < 1:
        raise ConfigError("evaluation budget must be positive")
    rng = np.random.default_rng(seed)
    counts = benchmark.supernet.choice_counts
    best_idx = None
    best_val = -np.inf
    for _ in range(budget):
        idx = tuple(int(rng.integers(1, c + 1)) for c in counts)
        val = benchmark.val_score[idx]
        if val > best_val:
            best_val = val
            best_idx = idx
    return float(benchmark.test_score[best_idx])
