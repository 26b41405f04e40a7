"""Depth-first branch and bound with a pluggable pruning policy."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError, NoIncumbentError
from .features import branching_variable, featurize
from .mlp import PRUNE, Decision, MlpParams, forward
from .model import MinlpInstance, Sense
from .relax import TOL_INT, TOL_OPT, Fixings, RelaxResult, RelaxStatus, SolveCache, cached_solve

log = logging.getLogger(__name__)

DEFAULT_NODE_BUDGET = 100_000
GUARDS = ("none", "sibling", "incumbent")


class FathomReason(str, Enum):
    INTEGRALITY = "integrality"
    BOUND = "bound"
    INFEASIBILITY = "infeasibility"


# ------------------------------------------------------------------ policies


@dataclass(frozen=True)
class ExactOracle:
    """Never prunes by policy; only the three exact fathoming rules apply."""

    needs_features = False


@dataclass(frozen=True)
class PreserveAll(ExactOracle):
    pass


@dataclass(frozen=True)
class Learned:
    model: MlpParams
    threshold: float = 0.5

    needs_features = True

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")


@dataclass(frozen=True)
class Blended:
    """Per node, ``base`` answers with probability ``alpha``, otherwise ``explore``."""

    base: object
    explore: object
    alpha: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def needs_features(self):
        return self.base.needs_features or self.explore.needs_features


def policy_prune_decision(policy, feature, rng=None) -> Decision:
    if isinstance(policy, ExactOracle):
        return Decision.PRESERVE
    if isinstance(policy, Learned):
        feature = np.asarray(feature, float)
        if feature.shape != (policy.model.input_dim,):
            raise DimensionError(
                f"feature length {feature.size} != model input {policy.model.input_dim}")
        e = forward(policy.model, feature)
        return Decision.PRUNE if e[PRUNE] > policy.threshold else Decision.PRESERVE
    if isinstance(policy, Blended):
        if rng is None:
            rng = np.random.default_rng(policy.seed)
        chosen = policy.base if rng.random() < policy.alpha else policy.explore
        return policy_prune_decision(chosen, feature, rng)
    raise TypeError(f"unknown policy {policy!r}")


def _policy_seed(policy):
    if isinstance(policy, Blended):
        return policy.seed
    return None


# ------------------------------------------------------------------ search


@dataclass(frozen=True)
class BnbConfig:
    node_budget: int = DEFAULT_NODE_BUDGET
    node_selection: str = "depth_first"
    branching: str = "most_fractional"
    # "sibling": the policy may not prune a node whose sibling it already pruned;
    # "incumbent": the policy is consulted only once an incumbent exists
    guard: str = "incumbent"

    def __post_init__(self):
        if self.node_budget < 1:
            raise ValueError("node_budget must be >= 1")
        if self.guard not in GUARDS:
            raise ValueError(f"guard must be one of {GUARDS}, got {self.guard!r}")
        if self.node_selection != "depth_first" or self.branching != "most_fractional":
            raise ValueError("only depth-first selection with most-fractional branching is supported")


@dataclass
class BnbNode:
    id: int
    parent_id: int | None
    depth: int
    fixings: Fixings
    relax: RelaxResult | None = None
    fathom_reason: FathomReason | None = None
    policy_pruned: bool = False
    branch_var: int | None = None
    children: tuple = ()


@dataclass
class BnbTrace:
    instance_id: str
    sense: Sense
    visited: list = field(default_factory=list)
    incumbent_timeline: list = field(default_factory=list)  # (node id, objective)
    best_objective: float | None = None
    best_node_id: int | None = None
    best_values: object = None
    relax_solve_count: int = 0
    budget_exhausted: bool = False
    features: list | None = None  # aligned with ``visited`` when recorded

    @property
    def node_count(self) -> int:
        return len(self.visited)

    @property
    def no_incumbent(self) -> bool:
        return self.best_node_id is None

    def node(self, node_id: int) -> BnbNode:
        return self._index()[node_id]

    def _index(self):
        idx = getattr(self, "_by_id", None)
        if idx is None or len(idx) != len(self.visited):
            idx = {n.id: n for n in self.visited}
            self._by_id = idx
        return idx


def sense_better(a: float, b: float, sense: Sense) -> bool:
    """True when objective ``a`` is strictly better than ``b``."""
    return a < b if sense is Sense.MINIMIZE else a > b


def fathom_check(node_relax: RelaxResult, incumbent: float | None, sense: Sense,
                 tol: float = TOL_OPT) -> FathomReason | None:
    """Exact pruning rule that applies to a node, if any.

    A node is pruned by bound when its relaxation cannot beat the incumbent
    by more than ``tol`` (relative, floored at 1).
    """
    sense = Sense(sense)
    if node_relax.status is RelaxStatus.INFEASIBLE:
        return FathomReason.INFEASIBILITY
    if node_relax.status is not RelaxStatus.OPTIMAL:
        return None
    if node_relax.is_integral:
        return FathomReason.INTEGRALITY
    if incumbent is not None:
        slack = tol * max(1.0, abs(incumbent))
        if sense is Sense.MINIMIZE and node_relax.objective >= incumbent - slack:
            return FathomReason.BOUND
        if sense is Sense.MAXIMIZE and node_relax.objective <= incumbent + slack:
            return FathomReason.BOUND
    return None


def run_bnb(instance: MinlpInstance, policy=None, cache: SolveCache | None = None,
            config: BnbConfig | None = None, record_features: bool = False) -> BnbTrace:
    """Depth-first branch and bound.

    Each popped node is solved through the cache, checked against the
    fathoming rules and, if still open, shown to the policy.  A preserved node
    is split on its most fractional binary; the child that fixes the value
    nearest the relaxation is explored first.  Solving a node also solves its
    sibling so the sibling-rank feature is available; the sibling's later
    visit is a cache hit.
    """
    policy = ExactOracle() if policy is None else policy
    cache = SolveCache() if cache is None else cache
    config = BnbConfig() if config is None else config
    sense = instance.sense
    nb = instance.num_binary
    want_features = record_features or policy.needs_features
    seed = _policy_seed(policy)
    rng = None
    if seed is not None:
        rng = np.random.default_rng([seed, zlib.crc32(instance.instance_id.encode())])

    trace = BnbTrace(instance.instance_id, sense)
    if record_features:
        trace.features = []
    next_id = 1
    stack = [BnbNode(0, None, 0, Fixings())]
    siblings: dict = {}

    def solve(fix):
        trace.relax_solve_count += 1
        return cached_solve(cache, instance, fix)

    while stack:
        if trace.node_count >= config.node_budget:
            trace.budget_exhausted = True
            break
        node = stack.pop()
        node.relax = solve(node.fixings)
        sib_relax = None
        sib = siblings.get(node.id)
        if sib is not None:
            sib_relax = solve(sib.fixings)
        feature = featurize(node, trace, instance, sib_relax) if want_features else None

        reason = fathom_check(node.relax, trace.best_objective, sense)
        node.fathom_reason = reason
        if reason is FathomReason.INTEGRALITY:
            # binaries within tol_int of 0/1 can carry the relaxed value slightly
            # past any true integer solution, so the incumbent is re-solved with
            # every binary pinned to its rounded value
            rounded = np.round(node.relax.values.binaries).astype(int)
            exact = cached_solve(cache, instance, Fixings(enumerate(rounded)))
            if exact.optimal:
                values, obj = exact.values, exact.objective
            else:
                log.debug("rounded point of node %d is infeasible; no incumbent update", node.id)
            if exact.optimal and (trace.best_objective is None
                                  or sense_better(obj, trace.best_objective, sense)):
                trace.best_objective = obj
                trace.best_node_id = node.id
                trace.best_values = values
                trace.incumbent_timeline.append((node.id, obj))
        trace.visited.append(node)
        if record_features:
            trace.features.append(feature)
        if reason is not None:
            continue

        fixed = node.fixings.as_dict()
        if node.relax.status is RelaxStatus.NUMERICAL_FAILURE:
            log.warning("relaxation failed at node %d of %s; preserving it",
                        node.id, instance.instance_id)
            free = [i for i in range(nb) if i not in fixed]
            if not free:
                continue
            var, near = free[0], 0
        else:
            consult = True
            if config.guard == "incumbent":
                consult = trace.best_objective is not None
            elif config.guard == "sibling":
                consult = sib is None or not sib.policy_pruned
            if consult and policy_prune_decision(policy, feature, rng) is Decision.PRUNE:
                node.policy_pruned = True
                continue
            var = branching_variable(node.relax, fixed, nb, TOL_INT)
            if var is None:
                continue
            near = 1 if node.relax.values.binaries[var] >= 0.5 else 0
        node.branch_var = var
        near_child = BnbNode(next_id, node.id, node.depth + 1, node.fixings.with_fix(var, near))
        far_child = BnbNode(next_id + 1, node.id, node.depth + 1,
                            node.fixings.with_fix(var, 1 - near))
        next_id += 2
        node.children = (near_child.id, far_child.id)
        siblings[near_child.id] = far_child
        siblings[far_child.id] = near_child
        stack.append(far_child)
        stack.append(near_child)
    if trace.no_incumbent:
        log.info("no incumbent found for %s after %d nodes", instance.instance_id,
                 trace.node_count)
    return trace


def mark_optimal_path(trace: BnbTrace) -> dict:
    """Label the root-to-incumbent chain ``preserve`` and every other visited node ``prune``."""
    if trace.no_incumbent:
        raise NoIncumbentError(f"trace of {trace.instance_id} has no incumbent")
    labels = {n.id: "prune" for n in trace.visited}
    node = trace.node(trace.best_node_id)
    while True:
        labels[node.id] = "preserve"
        if node.parent_id is None:
            break
        node = trace.node(node.parent_id)
    return labels
