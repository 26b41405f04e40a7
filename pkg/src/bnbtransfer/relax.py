"""Continuous relaxations at tree nodes and the lookup table in front of them.

Linear programs go to the built-in dense simplex (:mod:`.simplex`); programs
with a quadratic objective or second-order cones go to the Clarabel
interior-point solver.  Every relaxation result is memoised in a
:class:`SolveCache` keyed by the instance id and the canonical fixings.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import InvalidFixings
from .model import (
    Assignment, LinearConstraint, MinlpInstance, PowerCapConstraint, Sense, SinrConstraint,
)
from .simplex import solve_lp

log = logging.getLogger(__name__)

TOL_OPT = 1e-6
TOL_INT = 1e-5
SOCP_MAX_ITER = 200
# tightest first; looser retries only when the solver stalls
SOCP_TOLERANCES = (1e-9, 1e-8, 1e-7)


class Fixings:
    """Immutable map from binary index to its fixed value, ordered by index."""

    __slots__ = ("_items",)

    def __init__(self, pairs: Iterable = ()):
        if isinstance(pairs, dict):
            pairs = pairs.items()
        seen = {}
        for idx, val in pairs:
            idx, val = int(idx), int(val)
            if idx in seen:
                raise InvalidFixings(f"binary {idx} fixed more than once")
            if val not in (0, 1):
                raise InvalidFixings(f"binary {idx} fixed to {val}, expected 0 or 1")
            if idx < 0:
                raise InvalidFixings(f"negative binary index {idx}")
            seen[idx] = val
        self._items = tuple(sorted(seen.items()))

    def items(self):
        return self._items

    def as_dict(self) -> dict:
        return dict(self._items)

    def with_fix(self, idx: int, val: int) -> "Fixings":
        return Fixings(self._items + ((idx, val),))

    def key(self) -> str:
        return ",".join(f"{i}:{v}" for i, v in self._items)

    @classmethod
    def from_key(cls, key: str) -> "Fixings":
        if not key:
            return cls()
        return cls(tuple(map(int, p.split(":"))) for p in key.split(","))

    def __len__(self):
        return len(self._items)

    def __contains__(self, idx):
        return any(i == idx for i, _ in self._items)

    def __eq__(self, other):
        return isinstance(other, Fixings) and self._items == other._items

    def __hash__(self):
        return hash(self._items)

    def __repr__(self):
        return f"Fixings({{{self.key()}}})"


def _as_fixings(fixings) -> Fixings:
    return fixings if isinstance(fixings, Fixings) else Fixings(fixings)


@dataclass(frozen=True)
class SocBlock:
    """``||F @ x + g|| <= d @ x + e``."""

    F: np.ndarray
    g: np.ndarray
    d: np.ndarray
    e: float


@dataclass(frozen=True)
class ConicProgram:
    """``minimize c @ x + quad @ x**2 + const`` over ``x = [binaries, continuous]``.

    ``sign`` maps the minimised value back to the instance's sense
    (``-1`` for maximisation problems).
    """

    num_binary: int
    c: np.ndarray
    quad: np.ndarray
    const: float
    lo: np.ndarray
    hi: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    socs: tuple = ()
    sign: float = 1.0

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def is_lp(self) -> bool:
        return not self.socs and not np.any(self.quad)


class RelaxStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class RelaxResult:
    status: RelaxStatus
    objective: float | None
    values: Assignment | None
    is_integral: bool

    @property
    def optimal(self) -> bool:
        return self.status is RelaxStatus.OPTIMAL


# ------------------------------------------------------------------ building


def _sinr_block(con: SinrConstraint, nb: int, n: int) -> tuple[SocBlock, np.ndarray]:
    """SOC form of one SINR constraint after rotating the user's own phase.

    sqrt(1 + 1/gamma) Re(h^H w_k) >= ||(h^H w_1, ..., h^H w_K, sigma)||
    together with Im(h^H w_k) = 0.
    """
    K, m = con.num_users, len(con.channel)
    hr, hi = con.channel.real, con.channel.imag
    # Re(h^H w) = hr.wr + hi.wi ; Im(h^H w) = hr.wi - hi.wr
    re_row = np.empty(2 * m)
    re_row[0::2], re_row[1::2] = hr, hi
    im_row = np.empty(2 * m)
    im_row[0::2], im_row[1::2] = -hi, hr
    F = np.zeros((2 * K + 1, n))
    for i in range(K):
        cols = slice(nb + 2 * m * i, nb + 2 * m * (i + 1))
        F[2 * i, cols] = re_row
        F[2 * i + 1, cols] = im_row
    g = np.zeros(2 * K + 1)
    g[-1] = con.noise_std
    k = con.user
    d = math.sqrt(1.0 + 1.0 / con.gamma) * F[2 * k]
    return SocBlock(F, g, d, 0.0), F[2 * k + 1].copy()


def build_relaxation(instance: MinlpInstance, fixings) -> ConicProgram:
    """Convex relaxation of ``instance`` with ``fixings`` pinned and other binaries in [0, 1].

    A power cap whose binary is pinned to 0 is emitted as zero bounds on its
    group, the exact meaning of ``||w_l||^2 <= 0``.  Other caps become
    rotated cones ``||(2 w_l, cap*s_l - 1)|| <= cap*s_l + 1``.
    """
    fixings = _as_fixings(fixings)
    nb, nc = instance.num_binary, instance.num_continuous
    n = nb + nc
    for idx, _ in fixings.items():
        if idx >= nb:
            raise InvalidFixings(f"binary index {idx} out of range for {nb} binaries")
    obj = instance.objective
    sign = 1.0 if instance.sense is Sense.MINIMIZE else -1.0
    c = sign * np.concatenate([obj.bin_linear, obj.cont_linear])
    quad = sign * np.concatenate([np.zeros(nb), obj.cont_quadratic])
    if sign < 0 and np.any(quad):
        raise ValueError("maximising a convex quadratic is not a convex relaxation")
    lo = np.concatenate([np.zeros(nb), instance.cont_lower])
    hi = np.concatenate([np.ones(nb), instance.cont_upper])
    fixed = fixings.as_dict()
    for idx, val in fixed.items():
        lo[idx] = hi[idx] = val

    ub_rows, ub_rhs, eq_rows, eq_rhs, socs = [], [], [], [], []
    for con in instance.constraints:
        if isinstance(con, LinearConstraint):
            ub_rows.append(np.concatenate([con.bin_coeffs, con.cont_coeffs]))
            ub_rhs.append(con.rhs)
        elif isinstance(con, SinrConstraint):
            block, im_row = _sinr_block(con, nb, n)
            socs.append(block)
            eq_rows.append(im_row)
            eq_rhs.append(0.0)
        elif isinstance(con, PowerCapConstraint):
            cols = nb + con.indices
            if fixed.get(con.binary) == 0:
                lo[cols] = 0.0
                hi[cols] = 0.0
                continue
            F = np.zeros((len(cols) + 1, n))
            F[np.arange(len(cols)), cols] = 2.0
            F[-1, con.binary] = con.cap
            g = np.zeros(len(cols) + 1)
            g[-1] = -1.0
            d = np.zeros(n)
            d[con.binary] = con.cap
            socs.append(SocBlock(F, g, d, 1.0))
    return ConicProgram(
        num_binary=nb, c=c, quad=quad, const=sign * obj.constant, lo=lo, hi=hi,
        A_ub=np.array(ub_rows).reshape(-1, n), b_ub=np.array(ub_rhs, float),
        A_eq=np.array(eq_rows).reshape(-1, n), b_eq=np.array(eq_rhs, float),
        socs=tuple(socs), sign=sign,
    )


# ------------------------------------------------------------------ solving


def _clarabel_solve(prog: ConicProgram):
    import clarabel

    n = prog.num_vars
    zero_A, zero_b, nn_A, nn_b = [prog.A_eq], [prog.b_eq], [prog.A_ub], [prog.b_ub]
    eye = np.eye(n)
    pinned = prog.lo == prog.hi
    if pinned.any():
        zero_A.append(eye[pinned])
        zero_b.append(prog.lo[pinned])
    up = np.isfinite(prog.hi) & ~pinned
    down = np.isfinite(prog.lo) & ~pinned
    nn_A += [eye[up], -eye[down]]
    nn_b += [prog.hi[up], -prog.lo[down]]
    A_parts = [np.vstack(zero_A), np.vstack(nn_A)]
    b_parts = [np.concatenate(zero_b), np.concatenate(nn_b)]
    cones = []
    if b_parts[0].size:
        cones.append(clarabel.ZeroConeT(b_parts[0].size))
    if b_parts[1].size:
        cones.append(clarabel.NonnegativeConeT(b_parts[1].size))
    for blk in prog.socs:
        # s = (d x + e, F x + g) in SOC  <=>  A = -[d; F], b = [e; g]
        A_parts.append(-np.vstack([blk.d, blk.F]))
        b_parts.append(np.concatenate([[blk.e], blk.g]))
        cones.append(clarabel.SecondOrderConeT(blk.F.shape[0] + 1))
    A = sp.csc_matrix(np.vstack(A_parts))
    b = np.concatenate(b_parts)
    P = sp.csc_matrix(sp.diags(2.0 * prog.quad))
    status = None
    for tol in SOCP_TOLERANCES:
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = SOCP_MAX_ITER
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        sol = clarabel.DefaultSolver(P, prog.c, A, b, cones, settings).solve()
        status = str(sol.status)
        if status in ("Solved", "AlmostSolved"):
            return "optimal", np.array(sol.x)
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return "infeasible", None
    log.warning("SOCP relaxation failed with solver status %s", status)
    return "failure", None


def solve_relaxation(program: ConicProgram) -> RelaxResult:
    if program.is_lp:
        res = solve_lp(program.c, program.A_ub, program.b_ub, program.A_eq, program.b_eq,
                       program.lo, program.hi)
        status, x = res.status, res.x
        if status == "unbounded":
            log.warning("LP relaxation unbounded")
            status = "failure"
        elif status == "iteration_limit":
            status = "failure"
    else:
        status, x = _clarabel_solve(program)
    if status == "infeasible":
        return RelaxResult(RelaxStatus.INFEASIBLE, None, None, False)
    if status != "optimal":
        return RelaxResult(RelaxStatus.NUMERICAL_FAILURE, None, None, False)
    nb = program.num_binary
    # snap pinned and near-bound entries, then clip into the box
    x = np.clip(x, program.lo, program.hi)
    a = x[:nb]
    is_integral = bool(np.all(np.abs(a - np.round(a)) <= TOL_INT))
    value = float(program.c @ x + program.quad @ (x * x) + program.const)
    return RelaxResult(RelaxStatus.OPTIMAL, program.sign * value,
                       Assignment(a, x[nb:]), is_integral)


# ------------------------------------------------------------------ caching


def _result_to_record(res: RelaxResult) -> dict:
    rec = {"status": res.status.value, "objective": res.objective, "is_integral": res.is_integral}
    if res.values is not None:
        rec["binaries"] = res.values.binaries.tolist()
        rec["continuous"] = res.values.continuous.tolist()
    return rec


def _result_from_record(rec: dict) -> RelaxResult:
    values = None
    if "binaries" in rec:
        values = Assignment(np.array(rec["binaries"], float), np.array(rec["continuous"], float))
    return RelaxResult(RelaxStatus(rec["status"]), rec["objective"], values, rec["is_integral"])


@dataclass
class SolveCache:
    """Lookup table of solved relaxations.

    With ``path`` set, every insertion is appended to a JSON-lines file and
    existing records are loaded on construction, so separate processes can
    share solves.
    """

    path: str | Path | None = None
    hits: int = 0
    misses: int = 0
    _table: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.path is not None:
            self.path = Path(self.path)
            if self.path.exists():
                with open(self.path) as fh:
                    for line in fh:
                        if not line.strip():
                            continue
                        try:
                            rec = json.loads(line)
                        except json.JSONDecodeError:
                            log.warning("skipping corrupt cache record in %s", self.path)
                            continue
                        self._table[(rec["instance"], rec["fixings"])] = \
                            _result_from_record(rec["result"])

    def __len__(self):
        return len(self._table)

    def get(self, key):
        return self._table.get(key)

    def insert(self, key, result: RelaxResult) -> RelaxResult:
        with self._lock:
            existing = self._table.get(key)
            if existing is not None:
                return existing
            self._table[key] = result
            if self.path is not None:
                rec = {"instance": key[0], "fixings": key[1], "result": _result_to_record(result)}
                with open(self.path, "a") as fh:
                    fh.write(json.dumps(rec) + "\n")
            return result


def cached_solve(cache: SolveCache, instance: MinlpInstance, fixings) -> RelaxResult:
    """Solve the node relaxation once per ``(instance id, fixings)``; failures are not stored."""
    fixings = _as_fixings(fixings)
    key = (instance.instance_id, fixings.key())
    hit = cache.get(key)
    if hit is not None:
        with cache._lock:
            cache.hits += 1
        return hit
    with cache._lock:
        cache.misses += 1
    result = solve_relaxation(build_relaxation(instance, fixings))
    if result.status is RelaxStatus.NUMERICAL_FAILURE:
        return result
    return cache.insert(key, result)
