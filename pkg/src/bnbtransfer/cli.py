"""Command-line entry point.

Every verb reads a YAML or JSON config file and takes ``--seed``.  Outputs go
to a run directory (``--run-dir``, default ``runs/<verb>-seed<seed>``) that
also receives ``manifest.json`` listing the resolved config and every file
written with its SHA-256.  Relative paths inside a config are resolved
against the config file's directory.

On failure the process prints one JSON error record to stderr, writes it to
``error.json`` in the run directory when possible, and exits nonzero
(2 for bad input or config, 1 for anything else).

    bnbtransfer gen      configs/gen.yaml      --seed 0
    bnbtransfer label    configs/label.yaml    --seed 0
    bnbtransfer train    configs/train.yaml    --seed 0
    bnbtransfer transfer configs/transfer.yaml --seed 0
    bnbtransfer eval     configs/eval.yaml     --seed 0
    bnbtransfer report   configs/report.yaml   --seed 0
    bnbtransfer sweep    configs/sweep.yaml    --seed 0
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from . import __version__, persist
from .bnb import BnbConfig, ExactOracle, Learned, run_bnb
from .errors import BnbTransferError, ConfigError, ParseError, VersionError
from .features import NUM_FEATURES
from .imitate import SelfImitationConfig, generate_labeled_dataset, self_imitation_run
from .mlp import TrainConfig, compute_class_weights, init_params, train
from .model import Sense, gen_cloudran_instance, gen_toy_milp
from .pipeline import (
    ExperimentConfig, Mode, NetworkSpec, ReportRow, draw_instances, evaluate_policy,
    exact_references, report_emit, run_pipeline,
)
from .relax import SolveCache

log = logging.getLogger("bnbtransfer")

VERBS = ("gen", "label", "train", "transfer", "eval", "report", "sweep")
INPUT_ERRORS = (ConfigError, ParseError, VersionError, FileNotFoundError)


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------------ config helpers


def load_config(path) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = yaml.safe_load(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ParseError(f"config {path} is not valid UTF-8", exc.start) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        offset = None
        if mark is not None:
            offset = len(raw.decode("utf-8")[:mark.index].encode("utf-8"))
        raise ParseError(f"config {path} is not valid YAML/JSON", offset) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return doc


class Ctx:
    """Per-invocation state: resolved config, run directory and output ledger."""

    def __init__(self, verb, config_path, seed, run_dir):
        self.verb = verb
        self.config_path = Path(config_path)
        self.seed = seed
        self.run_dir = Path(run_dir)
        self.base = self.config_path.resolve().parent
        self.config = load_config(self.config_path)
        self.outputs: list = []
        self.summary: dict = {}

    def take(self, key, default=None):
        return self.config.get(key, default)

    def require(self, key):
        if key not in self.config:
            raise ConfigError(f"{self.verb} config needs key {key!r}")
        return self.config[key]

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def out(self, rel) -> Path:
        return self.run_dir / rel

    def record(self, path: Path):
        self.outputs.append(path)
        return path


def _instance_paths(ctx: Ctx, key="instances") -> list:
    spec = ctx.require(key)
    items = spec if isinstance(spec, list) else [spec]
    paths = []
    for item in items:
        p = ctx.path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.json")))
        elif p.exists():
            paths.append(p)
        else:
            raise FileNotFoundError(f"instance path {p} does not exist")
    if not paths:
        raise ConfigError(f"no instance files found under {spec}")
    return paths


def _load_instances(ctx: Ctx, key="instances"):
    return [persist.load_instance(p) for p in _instance_paths(ctx, key)]


def _bnb_config(ctx: Ctx) -> BnbConfig:
    try:
        return BnbConfig(**ctx.take("bnb", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad bnb section: {exc}") from None


def _cache(ctx: Ctx) -> SolveCache:
    p = ctx.take("cache")
    return SolveCache(ctx.path(p)) if p else SolveCache()


def _train_config(ctx: Ctx, section="train", fine_tune=False) -> TrainConfig:
    kw = dict(ctx.take(section, {}) or {})
    kw.setdefault("seed", ctx.seed)
    try:
        return TrainConfig.fine_tune(**kw) if fine_tune else TrainConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {section} section: {exc}") from None


def _save_rows(ctx: Ctx, rows):
    ctx.record(persist.save_report(rows, ctx.out("report.json")))
    ctx.record(persist.write_text_atomic(ctx.out("report.csv"), report_emit(rows, "csv")))
    ctx.record(persist.write_text_atomic(ctx.out("report.txt"), report_emit(rows, "table")))


# ------------------------------------------------------------------ verbs


def cmd_gen(ctx: Ctx):
    """Write ``count`` instances of one family to ``instances/``.

    Cloud-RAN keys: ``network`` (L, K, N, fronthaul, ...), ``sinr_db``,
    ``count``, ``seed_base``, ``feasible_only`` (default true).
    Toy keys: ``n_int``, ``n_cons``, ``upper``, ``n_cont``, ``sense``.
    """
    family = ctx.take("family", "cloudran")
    count = int(ctx.take("count", 10))
    base = int(ctx.take("seed_base", 10_000 * ctx.seed + 1000))
    if count < 1:
        raise ConfigError("count must be >= 1")
    if family == "cloudran":
        try:
            spec = NetworkSpec(**{k: (tuple(v) if isinstance(v, list) else v)
                                  for k, v in (ctx.take("network", {}) or {}).items()})
        except TypeError as exc:
            raise ConfigError(f"bad network section: {exc}") from None
        sinr = float(ctx.take("sinr_db", 4.0))
        if ctx.take("feasible_only", True):
            insts = draw_instances(spec, sinr, count, base)
        else:
            insts = [gen_cloudran_instance(base + i, spec.L, spec.K, spec.N, sinr,
                                           spec.fronthaul_powers(base + i),
                                           spec.region_halfwidth, noise_dbm=spec.noise_dbm)[1]
                     for i in range(count)]
    elif family == "toy":
        try:
            insts = [gen_toy_milp(base + i, int(ctx.take("n_int", 3)), int(ctx.take("n_cons", 3)),
                                  int(ctx.take("upper", 3)), int(ctx.take("n_cont", 1)),
                                  Sense(ctx.take("sense", "minimize")))
                     for i in range(count)]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        raise ConfigError(f"unknown family {family!r} (expected cloudran or toy)")
    for inst in insts:
        ctx.record(persist.save_instance(inst, ctx.out(f"instances/{inst.instance_id}.json")))
    ctx.summary = {"instances": len(insts), "family": family}


def cmd_label(ctx: Ctx):
    """Exact search on every instance; writes ``dataset.json`` and one trace per instance."""
    insts = _load_instances(ctx)
    cache, cfg = _cache(ctx), _bnb_config(ctx)
    data = generate_labeled_dataset(insts, cache, cfg)
    ctx.record(persist.save_dataset(data, ctx.out("dataset.json")))
    if ctx.take("write_traces", True):
        for inst in insts:
            tr = run_bnb(inst, ExactOracle(), cache, cfg, record_features=True)
            ctx.record(persist.save_trace(tr, ctx.out(f"traces/{inst.instance_id}.json")))
    n_pre = sum(s.label == "preserve" for s in data)
    ctx.summary = {"samples": len(data), "preserve": n_pre, "prune": len(data) - n_pre,
                   "cache_hits": cache.hits, "cache_misses": cache.misses}


def cmd_train(ctx: Ctx):
    """Train a classifier from random init on ``dataset``; writes ``model.json``."""
    data = persist.load_dataset(ctx.path(ctx.require("dataset")))
    if not data:
        raise ConfigError("dataset is empty")
    dims = tuple(ctx.take("layer_dims", (NUM_FEATURES, 64, 64, 2)))
    tc = _train_config(ctx)
    w2 = tuple(ctx.take("class_weight_w2", (1.0, 4.0)))
    weights = compute_class_weights(data, w2)
    history: list = []
    params = train(init_params(dims, seed=ctx.seed), data, weights, tc, history)
    prov = {"verb": "train", "seed": ctx.seed, "train": asdict(tc), "class_weight_w2": list(w2),
            "class_weights": weights.w.tolist(), "samples": len(data)}
    ctx.record(persist.save_model(params, ctx.out("model.json"), prov))
    ctx.summary = {"samples": len(data), "initial_loss": history[0], "final_loss": history[-1]}


def cmd_transfer(ctx: Ctx):
    """Self-imitation of ``model`` on unlabeled ``instances``."""
    pretrained = persist.load_model(ctx.path(ctx.require("model")))
    insts = _load_instances(ctx)
    si_kw = dict(ctx.take("self_imitation", {}) or {})
    if "alpha_schedule" in si_kw:
        raise ConfigError("alpha_schedule is fixed to min(1, 0.2k) in config files")
    if "fine_tune" in si_kw:
        si_kw["fine_tune"] = TrainConfig.fine_tune(**si_kw["fine_tune"])
    si_kw.setdefault("seed", ctx.seed)
    try:
        si = SelfImitationConfig(**si_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad self_imitation section: {exc}") from None
    t0 = time.process_time()
    res = self_imitation_run(pretrained, insts, si, _cache(ctx))
    secs = time.process_time() - t0
    prov = {"verb": "transfer", "seed": ctx.seed, "best_iteration": res.best_iteration,
            "self_imitation": {k: v for k, v in si_kw.items() if k != "fine_tune"},
            "fine_tune": asdict(si.fine_tune)}
    ctx.record(persist.save_model(res.params, ctx.out("model.json"), prov))
    ctx.record(persist.save_dataset(res.dataset, ctx.out("dataset.json")))
    scores = [{"candidate": i + 1, "mean_gap": s.mean_gap, "node_speedup": s.node_speedup,
               "failures": s.failures} for i, s in enumerate(res.scores)]
    ctx.record(persist.write_text_atomic(ctx.out("scores.json"), json.dumps(scores, indent=1)))
    ctx.summary = {"best_iteration": res.best_iteration, "starved": res.starved,
                   "dataset_sizes": res.dataset_sizes, "transfer_cpu_seconds": secs}


def cmd_eval(ctx: Ctx):
    """Compare a model (or the exact search when no model is given) against exact search."""
    insts = _load_instances(ctx)
    cfg = _bnb_config(ctx)
    model_path = ctx.take("model")
    if model_path:
        policy = Learned(persist.load_model(ctx.path(model_path)),
                         float(ctx.take("threshold", 0.5)))
    else:
        policy = ExactOracle()
    refs = exact_references(insts, cfg)
    if any(r.optimum is None for r in refs):
        bad = [i.instance_id for i, r in zip(insts, refs) if r.optimum is None]
        raise ConfigError(f"instances without a feasible solution: {bad}")
    ev = evaluate_policy(policy, insts, refs, cfg)
    sinrs = {i.meta.params.get("sinr_db", 0.0) for i in insts}
    sinr = sinrs.pop() if len(sinrs) == 1 else float("nan")
    row = ReportRow(label=str(ctx.take("label", "policy")), target_sinr_db=float(sinr),
                    gap_percent=100.0 * float(np.mean(ev.gaps)),
                    speedup_nodes=float(np.mean(ev.node_ratios)),
                    speedup_wallclock=float(np.mean(ev.time_ratios)),
                    failures=ev.failures, n_instances=len(insts), seeds=f"seed={ctx.seed}")
    _save_rows(ctx, [row])
    if ctx.take("write_traces", False):
        cache = SolveCache()
        for inst in insts:
            tr = run_bnb(inst, policy, cache, cfg)
            ctx.record(persist.save_trace(tr, ctx.out(f"traces/{inst.instance_id}.json")))
    ctx.summary = {"gap_percent": row.gap_percent, "speedup_nodes": row.speedup_nodes,
                   "failures": row.failures}


def _experiment(ctx: Ctx) -> ExperimentConfig:
    exp = dict(ctx.take("experiment", {}) or {})
    exp["seed"] = ctx.seed
    if exp.get("cache_path"):
        exp["cache_path"] = str(ctx.path(exp["cache_path"]))
    return ExperimentConfig.from_dict(exp)


def _run_experiment(ctx: Ctx, mode: Mode):
    cfg = _experiment(ctx)
    stages: dict = {}
    rows = run_pipeline(cfg, mode, stages)
    _save_rows(ctx, rows)
    for name, st in stages.items():
        safe = name.replace("@", "-sinr")
        ctx.record(persist.save_model(st.params, ctx.out(f"models/{safe}.json"),
                                      {"stage": name, "seed": ctx.seed, **st.extra}))
    ctx.summary = {"mode": mode.value, "rows": len(rows), "experiment": cfg.to_dict()}
    print(report_emit(rows, "table"))


def cmd_report(ctx: Ctx):
    """Run one experiment mode (``mode`` key) and write its report."""
    mode = ctx.take("mode", Mode.TRANSFER_DYNAMIC_MUS.value)
    try:
        mode = Mode(mode)
    except ValueError:
        raise ConfigError(f"unknown mode {mode!r}; expected one of "
                          f"{[m.value for m in Mode]}") from None
    _run_experiment(ctx, mode)


def cmd_sweep(ctx: Ctx):
    """Transfer with each additional-sample count in ``experiment.sweep_counts``."""
    _run_experiment(ctx, Mode.SAMPLE_SWEEP)


COMMANDS = {"gen": cmd_gen, "label": cmd_label, "train": cmd_train, "transfer": cmd_transfer,
            "eval": cmd_eval, "report": cmd_report, "sweep": cmd_sweep}


# ------------------------------------------------------------------ driver


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bnbtransfer", description=__doc__.split("\n\n")[0])
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in VERBS:
        p = sub.add_parser(verb, help=(COMMANDS[verb].__doc__ or "").split("\n")[0])
        p.add_argument("config", help="YAML or JSON config file")
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--run-dir", default=None, help="output directory")
    return parser


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(ctx: Ctx, status: str, started: float, error: dict | None = None):
    outputs = [{"path": str(p.relative_to(ctx.run_dir)), "sha256": _sha256(p),
                "bytes": p.stat().st_size} for p in ctx.outputs if p.exists()]
    manifest = {
        "verb": ctx.verb, "seed": ctx.seed, "status": status,
        "package_version": __version__,
        "config_path": str(ctx.config_path), "config": ctx.config,
        "argv": sys.argv[1:],
        "started_unix": started, "finished_unix": time.time(),
        "outputs": outputs, "summary": ctx.summary,
    }
    if error:
        manifest["error"] = error
    persist.write_text_atomic(ctx.run_dir / "manifest.json",
                              json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")


def _error_record(verb, exc) -> dict:
    rec = {"status": "error", "verb": verb, "error_type": type(exc).__name__, "message": str(exc)}
    offset = getattr(exc, "offset", None)
    if offset is not None:
        rec["byte_offset"] = offset
    return rec


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    verb = next((a for a in argv if a in VERBS), None)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(json.dumps(_error_record(verb, exc)), file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    run_dir = Path(args.run_dir or f"runs/{args.verb}-seed{args.seed}")
    started = time.time()
    ctx = None
    try:
        ctx = Ctx(args.verb, args.config, args.seed, run_dir)
        ctx.run_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.verb](ctx)
        _write_manifest(ctx, "ok", started)
        return 0
    except Exception as exc:  # every failure becomes an error record
        rec = _error_record(args.verb, exc)
        code = 2 if isinstance(exc, INPUT_ERRORS) else 1
        rec["exit_code"] = code
        if not isinstance(exc, BnbTransferError | OSError):
            log.debug("unexpected failure", exc_info=True)
        print(json.dumps(rec), file=sys.stderr)
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
            persist.write_text_atomic(run_dir / "error.json", json.dumps(rec, indent=1) + "\n")
            if ctx is not None:
                _write_manifest(ctx, "error", started, rec)
        except OSError:
            pass
        return code


if __name__ == "__main__":
    sys.exit(main())
