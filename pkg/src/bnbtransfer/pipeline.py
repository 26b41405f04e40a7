"""End-to-end experiments: train from scratch, transfer, evaluate, report.

A run is described by an :class:`ExperimentConfig`.  Instance sets are drawn
from consecutive generator seeds; draws whose all-RRHs-on relaxation is
infeasible are skipped, so every instance in a set has a feasible solution.
Seeds are offset by ``10_000 * seed`` so different ``--seed`` values give
disjoint instance sets.

Timing columns (``speedup_wallclock``, ``train_speedup``, ``train_seconds``)
are informational; every other column is a deterministic function of the
config.  Search times are wall-clock; training stages are timed in process
CPU seconds, which is less sensitive to other load on the machine.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .bnb import BnbConfig, ExactOracle, Learned, run_bnb
from .errors import ConfigError, EmptyReportError
from .imitate import (
    SelfImitationConfig, generate_labeled_dataset, ramp_alpha, relative_gap,
    self_imitation_run, train_from_scratch,
)
from .mlp import MlpParams, TrainConfig
from .model import gen_cloudran_instance, linear_fronthaul_powers
from .relax import Fixings, RelaxStatus, SolveCache, cached_solve

log = logging.getLogger(__name__)

SWEEP_COUNTS = (2, 5, 10, 20, 50)
SEED_STRIDE = 10_000


class Mode(str, Enum):
    SCRATCH = "scratch"
    TRANSFER_DYNAMIC_MUS = "transfer_dynamic_mus"
    TRANSFER_DIFFERENT_NETWORKS = "transfer_different_networks"
    SAMPLE_SWEEP = "sample_sweep"


@dataclass(frozen=True)
class NetworkSpec:
    L: int = 6
    K: int = 4
    N: int = 2
    # "linear" gives P_l = 5 + l; a [low, high] pair draws each P_l uniformly per instance
    fronthaul: object = "linear"
    region_halfwidth: float = 1000.0
    noise_dbm: float = -102.0

    def __post_init__(self):
        if min(self.L, self.K, self.N) < 1:
            raise ConfigError(f"network dims must be >= 1, got L={self.L} K={self.K} N={self.N}")
        if self.fronthaul != "linear":
            lo, hi = self.fronthaul
            if not 0 < lo <= hi:
                raise ConfigError(f"fronthaul range must satisfy 0 < low <= high, got {self.fronthaul}")
            object.__setattr__(self, "fronthaul", (float(lo), float(hi)))

    def fronthaul_powers(self, seed: int) -> np.ndarray:
        if self.fronthaul == "linear":
            return linear_fronthaul_powers(self.L)
        lo, hi = self.fronthaul
        return np.random.default_rng([seed, 0xF4]).uniform(lo, hi, size=self.L)


@dataclass(frozen=True)
class ExperimentConfig:
    source: NetworkSpec = field(default_factory=NetworkSpec)
    target: NetworkSpec = field(default_factory=lambda: NetworkSpec(K=6))
    different_source: NetworkSpec = field(
        default_factory=lambda: NetworkSpec(L=5, K=3, fronthaul=(6.0, 15.0)))
    source_sinr_db: float = 4.0
    target_sinrs_db: tuple = (4.0,)
    n_original: int = 20
    n_additional: int = 10
    n_test: int = 10
    sweep_counts: tuple = SWEEP_COUNTS
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    class_weight_w2: tuple = (1.0, 4.0)
    eval_threshold: float = 0.5
    self_imitation: SelfImitationConfig = field(default_factory=SelfImitationConfig)
    bnb: BnbConfig = field(default_factory=BnbConfig)
    cache_path: str | None = None

    def __post_init__(self):
        for name in ("n_original", "n_additional", "n_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.target_sinrs_db:
            raise ConfigError("target_sinrs_db must list at least one SINR")
        if not self.sweep_counts or min(self.sweep_counts) < 1:
            raise ConfigError("sweep_counts must be nonempty positive counts")
        if not 0.0 <= self.eval_threshold <= 1.0:
            raise ConfigError("eval_threshold must lie in [0, 1]")
        object.__setattr__(self, "target_sinrs_db", tuple(float(s) for s in self.target_sinrs_db))
        object.__setattr__(self, "sweep_counts", tuple(int(c) for c in self.sweep_counts))
        object.__setattr__(self, "class_weight_w2", tuple(float(w) for w in self.class_weight_w2))

    # ------------------------------------------------------------- seeds

    def seed_bases(self) -> dict:
        base = SEED_STRIDE * int(self.seed)
        return {"original": base + 1000, "additional": base + 2000, "test": base + 3000,
                "source": base + 4000}

    # ------------------------------------------------------------- (de)serialization

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        kw = {}
        try:
            for key in ("source", "target", "different_source"):
                if key in d:
                    spec = dict(d.pop(key))
                    if isinstance(spec.get("fronthaul"), list):
                        spec["fronthaul"] = tuple(spec["fronthaul"])
                    kw[key] = NetworkSpec(**spec)
            if "train" in d:
                kw["train"] = TrainConfig(**d.pop("train"))
            if "bnb" in d:
                kw["bnb"] = BnbConfig(**d.pop("bnb"))
            if "self_imitation" in d:
                si = dict(d.pop("self_imitation"))
                if "fine_tune" in si:
                    si["fine_tune"] = TrainConfig.fine_tune(**si["fine_tune"])
                if "alpha_schedule" in si:
                    raise ConfigError("alpha_schedule is fixed to min(1, 0.2k) in config files")
                kw["self_imitation"] = SelfImitationConfig(**si)
            kw.update(d)
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(f"bad experiment config: {exc}") from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "self_imitation":
                si = {g.name: getattr(v, g.name) for g in fields(v) if g.name != "alpha_schedule"}
                si["fine_tune"] = asdict(v.fine_tune)
                si["class_weight_w2"] = list(v.class_weight_w2)
                d[f.name] = si
            elif hasattr(v, "__dataclass_fields__"):
                d[f.name] = asdict(v)
            elif isinstance(v, tuple):
                d[f.name] = list(v)
            else:
                d[f.name] = v
        for key in ("source", "target", "different_source"):
            if isinstance(d[key]["fronthaul"], tuple):
                d[key]["fronthaul"] = list(d[key]["fronthaul"])
        d["train"]["per_layer_lr"] = list(d["train"]["per_layer_lr"])
        d["self_imitation"]["fine_tune"]["per_layer_lr"] = \
            list(d["self_imitation"]["fine_tune"]["per_layer_lr"])
        return d


# ------------------------------------------------------------------ report rows


@dataclass(frozen=True)
class ReportRow:
    """One method at one target SINR.

    ``gap_percent`` and ``speedup_nodes`` are means over the test instances.
    ``train_speedup`` is None where it does not apply.
    """

    label: str
    target_sinr_db: float
    gap_percent: float
    speedup_nodes: float
    speedup_wallclock: float
    train_speedup: float | None = None
    train_seconds: float | None = None
    failures: int = 0
    n_instances: int = 0
    seeds: str = ""

    TIMING_FIELDS = ("speedup_wallclock", "train_speedup", "train_seconds")

    def deterministic(self) -> tuple:
        """Every column except the wall-clock ones."""
        return tuple(getattr(self, f.name) for f in fields(self)
                     if f.name not in self.TIMING_FIELDS)


def report_row_to_dict(row: ReportRow) -> dict:
    return {f.name: getattr(row, f.name) for f in fields(row)}


def report_row_from_dict(d: dict) -> ReportRow:
    def opt(x):
        return None if x is None else float(x)

    return ReportRow(
        label=str(d["label"]), target_sinr_db=float(d["target_sinr_db"]),
        gap_percent=float(d["gap_percent"]), speedup_nodes=float(d["speedup_nodes"]),
        speedup_wallclock=float(d["speedup_wallclock"]),
        train_speedup=opt(d.get("train_speedup")), train_seconds=opt(d.get("train_seconds")),
        failures=int(d.get("failures", 0)), n_instances=int(d.get("n_instances", 0)),
        seeds=str(d.get("seeds", "")),
    )


CSV_FIELDS = tuple(f.name for f in fields(ReportRow))

TABLE_METRICS = (
    ("gap_percent", "Gap (%)", "{:.2f}"),
    ("speedup_nodes", "Node speedup (x)", "{:.2f}"),
    ("speedup_wallclock", "Wall-clock speedup (x)", "{:.2f}"),
    ("train_speedup", "Training speedup (x)", "{:.2f}"),
)


def report_emit(rows: Sequence[ReportRow], format: str = "table") -> str:
    """Render rows as a human table (``"table"``) or comma-separated text (``"csv"``).

    The table has one block per metric; columns are target SINRs in
    ascending order and there is one line per method label, in first-seen
    order.  The CSV form parses back with :func:`parse_report_csv`.
    """
    rows = list(rows)
    if not rows:
        raise EmptyReportError("no report rows to emit")
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v)
                        for v in (getattr(r, f) for f in CSV_FIELDS)])
        return buf.getvalue()
    if format != "table":
        raise ValueError(f"unknown report format {format!r}")

    sinrs = sorted({r.target_sinr_db for r in rows})
    labels = list(dict.fromkeys(r.label for r in rows))
    cell = {(r.label, r.target_sinr_db): r for r in rows}
    head = ["Target SINR (dB)"] + [f"{s:g}" for s in sinrs]
    out = []
    for attr, title, fmt in TABLE_METRICS:
        body = []
        for lab in labels:
            line = [lab]
            for s in sinrs:
                r = cell.get((lab, s))
                v = None if r is None else getattr(r, attr)
                line.append("-" if v is None else fmt.format(v))
            body.append(line)
        if all(c == "-" for line in body for c in line[1:]):
            continue
        widths = [max(len(x[i]) for x in [head] + body) for i in range(len(head))]
        out.append(title)
        out.append("  ".join(h.ljust(wd) if i == 0 else h.rjust(wd)
                             for i, (h, wd) in enumerate(zip(head, widths))))
        out.append("  ".join("-" * wd for wd in widths))
        for line in body:
            out.append("  ".join(c.ljust(wd) if i == 0 else c.rjust(wd)
                                 for i, (c, wd) in enumerate(zip(line, widths))))
        out.append("")
    return "\n".join(out)


def parse_report_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"unexpected report columns {reader.fieldnames}")
    return [report_row_from_dict({k: (None if v == "" and k in ReportRow.TIMING_FIELDS else v)
                                  for k, v in rec.items()}) for rec in reader]


# ------------------------------------------------------------------ instance sets


def feasible_all_on(instance, cache: SolveCache) -> bool:
    """Whether the instance has any feasible point (all switches on is the loosest choice)."""
    fix = Fixings({i: 1 for i in range(instance.num_binary)})
    return cached_solve(cache, instance, fix).status is RelaxStatus.OPTIMAL


def draw_instances(spec: NetworkSpec, sinr_db: float, count: int, seed_base: int,
                   cache: SolveCache | None = None, max_tries: int | None = None) -> list:
    """``count`` feasible instances from consecutive seeds starting at ``seed_base``."""
    cache = SolveCache() if cache is None else cache
    max_tries = max_tries or 10 * count + 10
    out, tried = [], 0
    seed = seed_base
    while len(out) < count and tried < max_tries:
        _, inst = gen_cloudran_instance(seed, spec.L, spec.K, spec.N, sinr_db,
                                        spec.fronthaul_powers(seed), spec.region_halfwidth,
                                        noise_dbm=spec.noise_dbm)
        if feasible_all_on(inst, cache):
            out.append(inst)
        seed += 1
        tried += 1
    if len(out) < count:
        raise ConfigError(
            f"only {len(out)} of {tried} drawn networks (L={spec.L}, K={spec.K}, N={spec.N}, "
            f"SINR {sinr_db:g} dB) can meet the SINR target with every RRH on; "
            f"lower the SINR target or the user count")
    return out


# ------------------------------------------------------------------ evaluation


@dataclass
class Reference:
    optimum: float
    nodes: int
    seconds: float


def exact_references(instances, config: BnbConfig) -> list:
    refs = []
    for inst in instances:
        t0 = time.perf_counter()
        tr = run_bnb(inst, ExactOracle(), SolveCache(), config)
        refs.append(Reference(tr.best_objective, tr.node_count, time.perf_counter() - t0))
    return refs


@dataclass
class Evaluation:
    gaps: list
    node_ratios: list
    time_ratios: list
    failures: int


def evaluate_policy(policy, instances, refs: Sequence[Reference], config: BnbConfig) -> Evaluation:
    """Run ``policy`` on each instance with a cold cache and compare to the exact search."""
    gaps, nr, tr_, failures = [], [], [], 0
    for inst, ref in zip(instances, refs):
        t0 = time.perf_counter()
        tr = run_bnb(inst, policy, SolveCache(), config)
        secs = time.perf_counter() - t0
        failures += tr.no_incumbent
        gaps.append(relative_gap(tr.best_objective, ref.optimum, inst.sense))
        nr.append(ref.nodes / tr.node_count)
        tr_.append(ref.seconds / max(secs, 1e-9))
    return Evaluation(gaps, nr, tr_, failures)


def _row(label, sinr, ev: Evaluation, seeds: str, train_speedup=None, train_seconds=None):
    return ReportRow(
        label=label, target_sinr_db=float(sinr),
        gap_percent=100.0 * float(np.mean(ev.gaps)),
        speedup_nodes=float(np.mean(ev.node_ratios)),
        speedup_wallclock=float(np.mean(ev.time_ratios)),
        train_speedup=train_speedup, train_seconds=train_seconds,
        failures=int(ev.failures), n_instances=len(ev.gaps), seeds=seeds,
    )


# ------------------------------------------------------------------ training stages


@dataclass
class Stage:
    params: MlpParams
    seconds: float
    dataset: list
    extra: dict = field(default_factory=dict)


def _cache(config: ExperimentConfig) -> SolveCache:
    return SolveCache(config.cache_path) if config.cache_path else SolveCache()


def train_scratch(config: ExperimentConfig, instances) -> Stage:
    """Exact labeling plus training from random init; the timed cost of learning from scratch."""
    t0 = time.process_time()
    cache = _cache(config)
    data = generate_labeled_dataset(instances, cache, config.bnb)
    if not data:
        raise ConfigError("exact labeling produced no samples (every instance infeasible)")
    params = train_from_scratch(data, config=replace(config.train, seed=config.seed),
                                w2=config.class_weight_w2, init_seed=config.seed)
    return Stage(params, time.process_time() - t0, data)


def transfer(config: ExperimentConfig, pretrained: MlpParams, additional) -> Stage:
    """Self-imitation on unlabeled target instances; timed without any exact labeling."""
    si = replace(config.self_imitation, seed=config.seed,
                 class_weight_w2=config.class_weight_w2, eval_threshold=config.eval_threshold,
                 node_budget=config.bnb.node_budget, guard=config.bnb.guard)
    t0 = time.process_time()
    res = self_imitation_run(pretrained, additional, si, _cache(config))
    secs = time.process_time() - t0
    return Stage(res.params, secs, res.dataset,
                 {"best_iteration": res.best_iteration, "starved": res.starved,
                  "dataset_sizes": res.dataset_sizes})


# ------------------------------------------------------------------ pipeline


def run_pipeline(config: ExperimentConfig, mode: Mode | str, stages: dict | None = None) -> list:
    """Run one experiment mode and return its report rows.

    ``stages``, if given, receives the trained parameters of each stage
    (keys such as ``"scratch@4"``, ``"pretrained"``, ``"transfer@4"``) so
    callers can save models.
    """
    mode = Mode(mode)
    stages = {} if stages is None else stages
    bases = config.seed_bases()
    seeds = ";".join(f"{k}={v}" for k, v in [("seed", config.seed)] + sorted(bases.items()))
    probe = SolveCache()
    policy = lambda p: Learned(p, config.eval_threshold)  # noqa: E731
    rows = []

    if mode is Mode.SCRATCH:
        for sinr in config.target_sinrs_db:
            orig = draw_instances(config.target, sinr, config.n_original, bases["original"], probe)
            test = draw_instances(config.target, sinr, config.n_test, bases["test"], probe)
            st = train_scratch(config, orig)
            stages[f"scratch@{sinr:g}"] = st
            refs = exact_references(test, config.bnb)
            rows.append(_row("scratch", sinr, evaluate_policy(policy(st.params), test, refs,
                                                               config.bnb),
                             seeds, 1.0, st.seconds))
        return rows

    source_spec = config.different_source if mode is Mode.TRANSFER_DIFFERENT_NETWORKS \
        else config.source
    src = draw_instances(source_spec, config.source_sinr_db, config.n_original,
                         bases["source"], probe)
    pre = train_scratch(config, src)
    stages["pretrained"] = pre

    for sinr in config.target_sinrs_db:
        test = draw_instances(config.target, sinr, config.n_test, bases["test"], probe)
        refs = exact_references(test, config.bnb)
        rows.append(_row("pretrained", sinr, evaluate_policy(policy(pre.params), test, refs,
                                                              config.bnb), seeds))
        if mode is Mode.SAMPLE_SWEEP:
            pool = draw_instances(config.target, sinr, max(config.sweep_counts),
                                  bases["additional"], probe)
            for count in config.sweep_counts:
                st = transfer(config, pre.params, pool[:count])
                stages[f"transfer-n{count}@{sinr:g}"] = st
                rows.append(_row(f"transfer-n{count}", sinr,
                                 evaluate_policy(policy(st.params), test, refs, config.bnb),
                                 seeds, None, st.seconds))
            continue
        orig = draw_instances(config.target, sinr, config.n_original, bases["original"], probe)
        scratch = train_scratch(config, orig)
        stages[f"scratch@{sinr:g}"] = scratch
        rows.append(_row("scratch", sinr, evaluate_policy(policy(scratch.params), test, refs,
                                                           config.bnb),
                         seeds, 1.0, scratch.seconds))
        add = draw_instances(config.target, sinr, config.n_additional, bases["additional"], probe)
        st = transfer(config, pre.params, add)
        stages[f"transfer@{sinr:g}"] = st
        rows.append(_row("transfer", sinr,
                         evaluate_policy(policy(st.params), test, refs, config.bnb),
                         seeds, scratch.seconds / max(st.seconds, 1e-9), st.seconds))
    return rows


__all__ = [
    "Mode", "NetworkSpec", "ExperimentConfig", "ReportRow", "report_emit", "parse_report_csv",
    "run_pipeline", "draw_instances", "exact_references", "evaluate_policy", "train_scratch",
    "transfer", "feasible_all_on", "SWEEP_COUNTS", "ramp_alpha",
]
