"""Fixed-length node features for the pruning classifier."""

from __future__ import annotations

import numpy as np

from .errors import NotSolvedError
from .model import MinlpInstance
from .relax import RelaxStatus

FEATURE_VERSION = "node17-v1"
NUM_FEATURES = 17
EPS = 1e-9
GAP_SENTINEL = 1.0
OBJ_RATIO_CLIP = 10.0

FEATURE_NAMES = (
    "depth",
    "depth_frac",
    "fixed_frac",
    "fixed_ones_frac",
    "obj_over_root",
    "is_integral",
    "most_fractional",
    "fractional_frac",
    "has_incumbent",
    "incumbent_gap",
    "sibling_rank",
    "branch_var_frac",
    "num_binary_scaled",
    "users_per_rrh",
    "sinr_scaled",
    "fronthaul_scaled",
    "family",
)

NUM_BINARY_SCALE = 64.0
SINR_DB_SCALE = 10.0
FRONTHAUL_SCALE_W = 20.0


def _clamp(x, lo=-1.0, hi=1.0) -> float:
    return float(min(hi, max(lo, x)))


def _fractionality(relax, fixed: dict, nb: int):
    """(distance to nearest integer per free binary, free indices)."""
    if relax.values is None:
        return np.zeros(0), np.zeros(0, dtype=int)
    free = np.array([i for i in range(nb) if i not in fixed], dtype=int)
    a = relax.values.binaries[free]
    return np.abs(a - np.round(a)), free


def branching_variable(relax, fixed: dict, nb: int, tol: float) -> int | None:
    """Most fractional free binary, lowest index on ties; None when all are integral."""
    dist, free = _fractionality(relax, fixed, nb)
    if dist.size == 0 or dist.max() <= tol:
        return None
    return int(free[np.flatnonzero(dist == dist.max())[0]])


def instance_features(instance: MinlpInstance) -> list:
    p = instance.meta.params
    if instance.family == "cloudran":
        users = _clamp(p["K"] / p["L"])
        sinr = _clamp(p["sinr_db"] / SINR_DB_SCALE)
        fronthaul = _clamp(p["mean_fronthaul"] / FRONTHAUL_SCALE_W)
        tag = 1.0
    else:
        users = sinr = fronthaul = tag = 0.0
    return [_clamp(instance.num_binary / NUM_BINARY_SCALE), users, sinr, fronthaul, tag]


def featurize(node, trace_so_far, instance: MinlpInstance, sibling_relax=None) -> np.ndarray:
    """Feature vector of ``node`` given the search state before the node is processed.

    ``trace_so_far`` supplies the root relaxation and the incumbent.
    ``sibling_relax`` is the relaxation of the node's sibling when known; the
    node ranks 1 only when that sibling has a strictly better bound.
    Infeasible nodes report 0 for every objective-derived entry except the
    gap, which takes the sentinel value.
    """
    from .bnb import sense_better  # local: bnb imports this module

    relax = node.relax
    if relax is None:
        raise NotSolvedError(f"node {node.id} has no relaxation result")
    nb = instance.num_binary
    fixed = node.fixings.as_dict()
    depth = node.depth
    n_fixed = len(fixed)
    ones = sum(fixed.values())
    ok = relax.status is RelaxStatus.OPTIMAL

    root = trace_so_far.visited[0].relax if trace_so_far.visited else relax
    if ok and root.status is RelaxStatus.OPTIMAL:
        obj_ratio = relax.objective / max(abs(root.objective), EPS)
        obj_ratio = _clamp(obj_ratio, -OBJ_RATIO_CLIP, OBJ_RATIO_CLIP)
    else:
        obj_ratio = 0.0

    dist, free = _fractionality(relax, fixed, nb)
    most_frac = float(dist.max()) if dist.size else 0.0
    n_frac = int(np.sum(dist > 1e-5))

    incumbent = trace_so_far.best_objective
    has_inc = incumbent is not None
    if has_inc and ok:
        gap = _clamp((relax.objective - incumbent) / (abs(incumbent) + EPS))
    else:
        gap = GAP_SENTINEL

    rank = 0.0
    if sibling_relax is not None:
        if not ok and sibling_relax.status is RelaxStatus.OPTIMAL:
            rank = 1.0
        elif ok and sibling_relax.status is RelaxStatus.OPTIMAL and \
                sense_better(sibling_relax.objective, relax.objective, instance.sense):
            rank = 1.0

    bvar = branching_variable(relax, fixed, nb, 1e-5) if ok else None
    bvar_feat = 0.0 if bvar is None else (bvar + 1) / nb

    vec = [
        float(depth),
        depth / nb,
        n_fixed / nb,
        ones / n_fixed if n_fixed else 0.0,
        obj_ratio,
        1.0 if (ok and relax.is_integral) else 0.0,
        most_frac,
        n_frac / nb,
        1.0 if has_inc else 0.0,
        gap,
        rank,
        bvar_feat,
        *instance_features(instance),
    ]
    return np.array(vec, dtype=float)
