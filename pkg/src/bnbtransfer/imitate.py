"""Supervision for the pruning classifier.

Exact labels come from running the exact search and marking the path to the
optimum.  Transfer to a new setting uses self-imitation: the current policy
is blended with a conservative exploration policy, the blended search's own
best solution marks the path that should have been preserved, and the
classifier is fine-tuned on everything collected so far.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bnb import BnbConfig, Blended, ExactOracle, Learned, PreserveAll, mark_optimal_path, run_bnb
from .errors import EmptyDatasetError, IterationStarved, VersionError
from .features import FEATURE_VERSION
from .mlp import MlpParams, TrainConfig, compute_class_weights, train
from .model import MinlpInstance, Sense
from .relax import SolveCache

log = logging.getLogger(__name__)

NO_INCUMBENT_GAP = 1.0  # relative gap charged when a policy finds nothing


@dataclass(frozen=True)
class LabeledSample:
    feature: np.ndarray
    label: str  # "preserve" | "prune"
    instance_id: str
    node_id: int
    iteration: int = 0
    feature_version: str = FEATURE_VERSION


def _label_trace(trace, iteration: int) -> list:
    labels = mark_optimal_path(trace)
    return [
        LabeledSample(f, labels[node.id], trace.instance_id, node.id, iteration)
        for node, f in zip(trace.visited, trace.features)
    ]


def generate_labeled_dataset(instances: Sequence[MinlpInstance], cache: SolveCache,
                             config: BnbConfig | None = None) -> list:
    """Exact search on every instance; every visited node labelled by the optimal path."""
    if not instances:
        raise EmptyDatasetError("no instances to label")
    out = []
    for inst in instances:
        trace = run_bnb(inst, ExactOracle(), cache, config, record_features=True)
        if trace.no_incumbent:
            log.warning("skipping %s: no feasible solution", inst.instance_id)
            continue
        out.extend(_label_trace(trace, 0))
    return out


def blend_policy(base, explore, alpha: float, seed: int = 0) -> Blended:
    return Blended(base, explore, alpha, seed)


def collect(policy, instance: MinlpInstance, cache: SolveCache, budget: int | None = None,
            iteration: int = 0, config: BnbConfig | None = None) -> list:
    """Search under ``policy`` and label nodes by the best solution the search itself found.

    ``budget`` overrides the node budget of ``config``.  Returns an empty
    list when the search finds no feasible solution.
    """
    config = BnbConfig() if config is None else config
    if budget is not None:
        config = replace(config, node_budget=budget)
    trace = run_bnb(instance, policy, cache, config, record_features=True)
    if trace.no_incumbent:
        log.info("discarding episode on %s: no incumbent", instance.instance_id)
        return []
    return _label_trace(trace, iteration)


# ------------------------------------------------------------------ evaluation


@dataclass
class PolicyScore:
    mean_gap: float  # relative, not percent
    node_speedup: float
    failures: int
    gaps: list = field(default_factory=list)
    nodes: list = field(default_factory=list)


def relative_gap(obj: float | None, opt: float, sense: Sense) -> float:
    if obj is None:
        return NO_INCUMBENT_GAP
    diff = obj - opt if sense is Sense.MINIMIZE else opt - obj
    return diff / max(abs(opt), 1e-12)


def exact_reference(instances, cache: SolveCache, config: BnbConfig | None = None) -> list:
    """(optimal objective, exact node count) per instance."""
    refs = []
    for inst in instances:
        tr = run_bnb(inst, ExactOracle(), cache, config)
        refs.append((tr.best_objective, tr.node_count))
    return refs


def score_policy(policy, instances, references, cache: SolveCache,
                 config: BnbConfig | None = None) -> PolicyScore:
    gaps, nodes, ratios, failures = [], [], [], 0
    for inst, (opt, exact_nodes) in zip(instances, references):
        if opt is None:
            continue
        tr = run_bnb(inst, policy, cache, config)
        failures += tr.no_incumbent
        gaps.append(relative_gap(tr.best_objective, opt, inst.sense))
        nodes.append(tr.node_count)
        ratios.append(exact_nodes / tr.node_count)
    if not gaps:
        return PolicyScore(float("inf"), 0.0, 0)
    return PolicyScore(float(np.mean(gaps)), float(np.mean(ratios)), failures, gaps, nodes)


# ------------------------------------------------------------------ self-imitation


def ramp_alpha(k: int) -> float:
    """Blend ratio min(1, 0.2 k) for outer iteration k (1-based)."""
    return min(1.0, 0.2 * k)


@dataclass(frozen=True)
class SelfImitationConfig:
    M: int = 10
    alpha_schedule: Callable[[int], float] = ramp_alpha
    explore_threshold: float = 0.9
    node_budget: int = 100_000
    validation_fraction: float = 0.2
    seed: int = 0
    fine_tune: TrainConfig = field(default_factory=lambda: TrainConfig.fine_tune(epochs=5))
    class_weight_w2: tuple = (1.0, 4.0)
    eval_threshold: float = 0.5
    guard: str = "incumbent"

    def __post_init__(self):
        object.__setattr__(self, "class_weight_w2", tuple(float(w) for w in self.class_weight_w2))
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if not 0.0 <= self.explore_threshold <= 1.0:
            raise ValueError("explore_threshold must lie in [0, 1]")
        for k in range(1, self.M + 1):
            a = self.alpha_schedule(k)
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"alpha for iteration {k} is {a}, outside [0, 1]")


@dataclass
class SelfImitationResult:
    params: MlpParams
    best_iteration: int
    scores: list  # PolicyScore per candidate pi^(1..M+1)
    dataset_sizes: list  # |D| after each outer iteration
    dataset: list
    starved: bool = False


def split_validation(instances: Sequence, fraction: float):
    """(collect instances, validation instances); the tail is held out."""
    n = len(instances)
    if n < 2:
        return list(instances), list(instances)
    n_val = min(n - 1, max(1, int(round(fraction * n))))
    return list(instances[:n - n_val]), list(instances[n - n_val:])


def _better(a: PolicyScore, b: PolicyScore) -> bool:
    if abs(a.mean_gap - b.mean_gap) > 1e-9:
        return a.mean_gap < b.mean_gap
    return a.node_speedup > b.node_speedup + 1e-9


def self_imitation_run(pretrained: MlpParams, transfer_instances: Sequence[MinlpInstance],
                       config: SelfImitationConfig | None = None,
                       cache: SolveCache | None = None) -> SelfImitationResult:
    """Adapt ``pretrained`` to the setting of ``transfer_instances`` without exact labels.

    Iteration k blends the current policy with the exploration policy
    (pretrained model at ``explore_threshold``) at ratio ``alpha_schedule(k)``,
    collects self-labelled nodes on every collect instance, and fine-tunes
    a fresh copy of ``pretrained`` on the aggregate.  Candidates are scored on
    the held-out instances by mean relative gap, then node speedup.
    """
    config = SelfImitationConfig() if config is None else config
    cache = SolveCache() if cache is None else cache
    if not transfer_instances:
        raise EmptyDatasetError("self-imitation needs at least one transfer instance")
    if pretrained.feature_version != FEATURE_VERSION:
        raise VersionError(f"model features {pretrained.feature_version} != {FEATURE_VERSION}")
    bnb_config = BnbConfig(node_budget=config.node_budget, guard=config.guard)
    train_set, val_set = split_validation(transfer_instances, config.validation_fraction)
    references = exact_reference(val_set, cache, bnb_config)

    explore = Learned(pretrained, config.explore_threshold)
    current = pretrained
    best_params = pretrained
    best_score = score_policy(Learned(current, config.eval_threshold), val_set, references,
                              cache, bnb_config)
    scores, sizes, best_k = [best_score], [], 1
    dataset: list = []
    starved = False
    for k in range(1, config.M + 1):
        alpha = config.alpha_schedule(k)
        blended = blend_policy(Learned(current, config.eval_threshold), explore, alpha,
                               seed=config.seed * 1000 + k)
        kept = 0
        for inst in train_set:
            samples = collect(blended, inst, cache, iteration=k, config=bnb_config)
            kept += bool(samples)
            dataset.extend(samples)
        sizes.append(len(dataset))
        if kept == 0:
            starved = True
            log.warning("%s", IterationStarved(f"iteration {k}: every episode discarded"))
            break
        weights = compute_class_weights(dataset, config.class_weight_w2)
        ft = config.fine_tune
        ft = TrainConfig(per_layer_lr=ft.lr_for(pretrained.num_layers), epochs=ft.epochs,
                         batch_size=ft.batch_size, momentum=ft.momentum,
                         seed=ft.seed + k, l2=ft.l2)
        current = train(pretrained, dataset, weights, ft)
        score = score_policy(Learned(current, config.eval_threshold), val_set, references,
                             cache, bnb_config)
        scores.append(score)
        log.info("self-imitation k=%d alpha=%.2f |D|=%d gap=%.4f speedup=%.2f",
                 k, alpha, len(dataset), score.mean_gap, score.node_speedup)
        if _better(score, best_score):
            best_score, best_params, best_k = score, current, k + 1
    return SelfImitationResult(best_params, best_k, scores, sizes, dataset, starved)


def self_imitation(pretrained: MlpParams, transfer_instances: Sequence[MinlpInstance],
                   config: SelfImitationConfig | None = None,
                   cache: SolveCache | None = None) -> MlpParams:
    return self_imitation_run(pretrained, transfer_instances, config, cache).params


def train_from_scratch(dataset, layer_dims=None, config: TrainConfig | None = None,
                       w2=(1.0, 4.0), init_seed: int = 0) -> MlpParams:
    from .mlp import init_params

    params = init_params(layer_dims or (len(dataset[0].feature), 64, 64, 2), seed=init_seed)
    weights = compute_class_weights(dataset, w2)
    return train(params, dataset, weights, config or TrainConfig())


__all__ = [
    "LabeledSample", "generate_labeled_dataset", "blend_policy", "collect",
    "SelfImitationConfig", "SelfImitationResult", "self_imitation", "self_imitation_run",
    "ramp_alpha", "score_policy", "exact_reference", "relative_gap", "split_validation",
    "train_from_scratch", "PreserveAll",
]
