"""Versioned JSON files for models, datasets, instances, traces and reports.

Every file is one JSON object with two envelope fields, ``schema`` (the kind
of record, e.g. ``"bnbtransfer/model"``) and ``version`` (an integer bumped on
incompatible layout changes).  Floats are written with Python's shortest
round-trip repr, so loading a file gives back bit-identical arrays.
Non-finite floats are written as the strings ``"inf"``, ``"-inf"`` and
``"nan"``.  Complex arrays are stored as parallel ``real``/``imag`` lists.

Writes are atomic (temporary file plus rename).  Reads either return a
complete object or raise: ``ParseError`` for corrupt or truncated input,
``VersionError`` for a supported schema at an unsupported version.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .bnb import BnbNode, BnbTrace, FathomReason
from .errors import ParseError, VersionError
from .features import FEATURE_VERSION, NUM_FEATURES
from .imitate import LabeledSample
from .mlp import MlpParams
from .model import (
    Assignment, InstanceMeta, LinearConstraint, MinlpInstance, ObjectiveSpec,
    PowerCapConstraint, Sense, SinrConstraint,
)
from .relax import Fixings, RelaxResult, RelaxStatus

SCHEMA_VERSION = 1
SCHEMA_PREFIX = "bnbtransfer/"


# ------------------------------------------------------------------ scalars


def _enc_float(x) -> float | str:
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _dec_float(x) -> float:
    if isinstance(x, str):
        if x not in ("inf", "-inf", "nan"):
            raise ValueError(f"bad float literal {x!r}")
        return float(x)
    return float(x)


def _enc_array(a) -> list:
    a = np.asarray(a, float)
    if np.all(np.isfinite(a)):
        return a.tolist()
    return [_enc_float(v) for v in a.ravel()]


def _dec_array(lst, shape=None) -> np.ndarray:
    a = np.array([_dec_float(v) for v in _flatten(lst)], dtype=float)
    return a.reshape(shape) if shape is not None else a


def _flatten(lst):
    for v in lst:
        if isinstance(v, list):
            yield from _flatten(v)
        else:
            yield v


def _enc_complex(z) -> dict:
    z = np.asarray(z, complex)
    return {"real": z.real.tolist(), "imag": z.imag.tolist()}


def _dec_complex(d) -> np.ndarray:
    re, im = np.array(d["real"], float), np.array(d["imag"], float)
    if re.shape != im.shape:
        raise ValueError("real and imaginary parts differ in length")
    return re + 1j * im


# ------------------------------------------------------------------ envelope


def dumps(kind: str, payload: dict) -> str:
    """Serialize ``payload`` under the envelope for ``kind``."""
    doc = {"schema": SCHEMA_PREFIX + kind, "version": SCHEMA_VERSION}
    doc.update(payload)
    return json.dumps(doc, allow_nan=False, separators=(",", ":")) + "\n"


def loads(kind: str, data: str | bytes) -> dict:
    """Parse and check the envelope; returns the whole document."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("file is not valid UTF-8", exc.start) from None
    else:
        text = data
    if not text.strip():
        raise ParseError("empty file", 0)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON: {exc.msg}", offset) from None
    if not isinstance(doc, dict) or "schema" not in doc or "version" not in doc:
        raise ParseError("missing schema/version envelope", 0)
    if doc["schema"] != SCHEMA_PREFIX + kind:
        raise ParseError(f"expected schema {SCHEMA_PREFIX + kind!r}, found {doc['schema']!r}", 0)
    if doc["version"] != SCHEMA_VERSION:
        raise VersionError(
            f"{doc['schema']} version {doc['version']} is not supported (expected {SCHEMA_VERSION})")
    return doc


def write_text_atomic(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _save(kind: str, payload: dict, path) -> Path:
    return write_text_atomic(path, dumps(kind, payload))


def _load(kind: str, path, decoder):
    data = Path(path).read_bytes()
    doc = loads(kind, data)
    try:
        return decoder(doc)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        if isinstance(exc, (ParseError, VersionError)):
            raise
        raise ParseError(f"invalid {kind} record: {exc!r}", 0) from None


# ------------------------------------------------------------------ models


def model_to_dict(params: MlpParams, provenance: dict | None = None) -> dict:
    return {
        "feature_version": params.feature_version,
        "layer_dims": list(params.layer_dims),
        "weights": [W.tolist() for W in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "provenance": provenance or {},
    }


def model_from_dict(doc: dict, expect_feature_version: str | None = FEATURE_VERSION) -> MlpParams:
    fv = doc["feature_version"]
    if expect_feature_version is not None and fv != expect_feature_version:
        raise VersionError(f"model was trained on features {fv!r}, "
                           f"this build computes {expect_feature_version!r}")
    dims = [int(d) for d in doc["layer_dims"]]
    weights = [np.array(W, float).reshape(dims[k + 1], dims[k]) for k, W in enumerate(doc["weights"])]
    biases = [np.array(b, float).reshape(dims[k + 1]) for k, b in enumerate(doc["biases"])]
    return MlpParams(tuple(dims), tuple(weights), tuple(biases), fv)


def save_model(params: MlpParams, path, provenance: dict | None = None) -> Path:
    return _save("model", model_to_dict(params, provenance), path)


def load_model(path, expect_feature_version: str | None = FEATURE_VERSION) -> MlpParams:
    return _load("model", path, lambda d: model_from_dict(d, expect_feature_version))


def load_model_provenance(path) -> dict:
    return _load("model", path, lambda d: dict(d.get("provenance", {})))


# ------------------------------------------------------------------ datasets


def dataset_to_dict(samples) -> dict:
    versions = {s.feature_version for s in samples} or {FEATURE_VERSION}
    if len(versions) > 1:
        raise VersionError(f"dataset mixes feature versions {sorted(versions)}")
    counts = {"preserve": 0, "prune": 0}
    for s in samples:
        counts[s.label] += 1
    return {
        "header": {
            "feature_version": versions.pop(),
            "F": int(len(samples[0].feature)) if samples else NUM_FEATURES,
            "counts": counts,
        },
        "samples": [
            {"feature": np.asarray(s.feature, float).tolist(), "label": s.label,
             "instance_id": s.instance_id, "node_id": int(s.node_id),
             "iteration": int(s.iteration)}
            for s in samples
        ],
    }


def dataset_from_dict(doc: dict, expect_feature_version: str | None = FEATURE_VERSION) -> list:
    header = doc["header"]
    fv, F = header["feature_version"], int(header["F"])
    if expect_feature_version is not None and fv != expect_feature_version:
        raise VersionError(f"dataset features {fv!r} != expected {expect_feature_version!r}")
    out = []
    for rec in doc["samples"]:
        f = np.array(rec["feature"], float)
        if f.shape != (F,):
            raise ValueError(f"sample has {f.size} features, header says {F}")
        if rec["label"] not in ("preserve", "prune"):
            raise ValueError(f"unknown label {rec['label']!r}")
        out.append(LabeledSample(f, rec["label"], rec["instance_id"], int(rec["node_id"]),
                                 int(rec["iteration"]), fv))
    counts = {"preserve": 0, "prune": 0}
    for s in out:
        counts[s.label] += 1
    if counts != header["counts"]:
        raise ValueError(f"label counts {counts} disagree with header {header['counts']}")
    return out


def save_dataset(samples, path) -> Path:
    return _save("dataset", dataset_to_dict(list(samples)), path)


def load_dataset(path, expect_feature_version: str | None = FEATURE_VERSION) -> list:
    return _load("dataset", path, lambda d: dataset_from_dict(d, expect_feature_version))


# ------------------------------------------------------------------ instances


def _constraint_to_dict(con) -> dict:
    if isinstance(con, LinearConstraint):
        return {"type": "linear", "bin_coeffs": _enc_array(con.bin_coeffs),
                "cont_coeffs": _enc_array(con.cont_coeffs), "rhs": _enc_float(con.rhs)}
    if isinstance(con, SinrConstraint):
        return {"type": "sinr", "user": con.user, "num_users": con.num_users,
                "channel": _enc_complex(con.channel), "gamma": con.gamma,
                "noise_std": con.noise_std}
    if isinstance(con, PowerCapConstraint):
        return {"type": "power_cap", "binary": con.binary,
                "indices": [int(i) for i in con.indices], "cap": con.cap}
    raise TypeError(f"cannot serialize constraint {type(con).__name__}")


def _constraint_from_dict(d: dict):
    kind = d["type"]
    if kind == "linear":
        return LinearConstraint(_dec_array(d["bin_coeffs"]), _dec_array(d["cont_coeffs"]),
                                _dec_float(d["rhs"]))
    if kind == "sinr":
        return SinrConstraint(int(d["user"]), int(d["num_users"]), _dec_complex(d["channel"]),
                              float(d["gamma"]), float(d["noise_std"]))
    if kind == "power_cap":
        return PowerCapConstraint(int(d["binary"]), np.array(d["indices"], np.int64),
                                  float(d["cap"]))
    raise ValueError(f"unknown constraint type {kind!r}")


def instance_to_dict(inst: MinlpInstance) -> dict:
    obj = inst.objective
    return {
        "meta": {"instance_id": inst.meta.instance_id, "seed": inst.meta.seed,
                 "family": inst.meta.family, "params": inst.meta.params},
        "sense": inst.sense.value,
        "num_binary": inst.num_binary,
        "num_continuous": inst.num_continuous,
        "objective": {"bin_linear": _enc_array(obj.bin_linear),
                      "cont_linear": _enc_array(obj.cont_linear),
                      "cont_quadratic": _enc_array(obj.cont_quadratic),
                      "constant": _enc_float(obj.constant)},
        "constraints": [_constraint_to_dict(c) for c in inst.constraints],
        "cont_lower": _enc_array(inst.cont_lower),
        "cont_upper": _enc_array(inst.cont_upper),
    }


def instance_from_dict(doc: dict) -> MinlpInstance:
    m, o = doc["meta"], doc["objective"]
    return MinlpInstance(
        sense=Sense(doc["sense"]),
        num_binary=int(doc["num_binary"]),
        num_continuous=int(doc["num_continuous"]),
        objective=ObjectiveSpec(_dec_array(o["bin_linear"]), _dec_array(o["cont_linear"]),
                                _dec_array(o["cont_quadratic"]), _dec_float(o["constant"])),
        constraints=tuple(_constraint_from_dict(c) for c in doc["constraints"]),
        cont_lower=_dec_array(doc["cont_lower"]),
        cont_upper=_dec_array(doc["cont_upper"]),
        meta=InstanceMeta(m["instance_id"], int(m["seed"]), m["family"], dict(m["params"])),
    )


def save_instance(inst: MinlpInstance, path) -> Path:
    return _save("instance", instance_to_dict(inst), path)


def load_instance(path) -> MinlpInstance:
    return _load("instance", path, instance_from_dict)


def instance_bytes(inst: MinlpInstance) -> bytes:
    return dumps("instance", instance_to_dict(inst)).encode("utf-8")


# ------------------------------------------------------------------ traces


def _relax_to_dict(res: RelaxResult | None):
    if res is None:
        return None
    d = {"status": res.status.value, "objective": res.objective, "is_integral": res.is_integral}
    if res.values is not None:
        d["binaries"] = _enc_array(res.values.binaries)
        d["continuous"] = _enc_array(res.values.continuous)
    return d


def _relax_from_dict(d):
    if d is None:
        return None
    values = None
    if "binaries" in d:
        values = Assignment(_dec_array(d["binaries"]), _dec_array(d["continuous"]))
    obj = None if d["objective"] is None else float(d["objective"])
    return RelaxResult(RelaxStatus(d["status"]), obj, values, bool(d["is_integral"]))


def trace_to_dict(trace: BnbTrace) -> dict:
    """Header plus one record per visited node, in visit order."""
    nodes = []
    for i, n in enumerate(trace.visited):
        rec = {
            "id": n.id, "parent": n.parent_id, "depth": n.depth,
            "fixings": n.fixings.key(),
            "relax": _relax_to_dict(n.relax),
            "fathom": None if n.fathom_reason is None else n.fathom_reason.value,
            "policy_pruned": n.policy_pruned,
            "branch_var": n.branch_var,
            "children": list(n.children),
        }
        if trace.features is not None:
            rec["feature"] = np.asarray(trace.features[i], float).tolist()
        nodes.append(rec)
    return {
        "instance_id": trace.instance_id,
        "sense": trace.sense.value,
        "node_count": trace.node_count,
        "relax_solve_count": trace.relax_solve_count,
        "budget_exhausted": trace.budget_exhausted,
        "best_objective": trace.best_objective,
        "best_node_id": trace.best_node_id,
        "best_values": None if trace.best_values is None else {
            "binaries": _enc_array(trace.best_values.binaries),
            "continuous": _enc_array(trace.best_values.continuous),
        },
        "incumbent_timeline": [[int(i), float(v)] for i, v in trace.incumbent_timeline],
        "nodes": nodes,
    }


def trace_from_dict(doc: dict) -> BnbTrace:
    trace = BnbTrace(doc["instance_id"], Sense(doc["sense"]))
    has_features = bool(doc["nodes"]) and "feature" in doc["nodes"][0]
    trace.features = [] if has_features else None
    for rec in doc["nodes"]:
        node = BnbNode(
            id=int(rec["id"]), parent_id=rec["parent"], depth=int(rec["depth"]),
            fixings=Fixings.from_key(rec["fixings"]), relax=_relax_from_dict(rec["relax"]),
            fathom_reason=None if rec["fathom"] is None else FathomReason(rec["fathom"]),
            policy_pruned=bool(rec["policy_pruned"]), branch_var=rec["branch_var"],
            children=tuple(rec["children"]),
        )
        trace.visited.append(node)
        if has_features:
            trace.features.append(np.array(rec["feature"], float))
    trace.relax_solve_count = int(doc["relax_solve_count"])
    trace.budget_exhausted = bool(doc["budget_exhausted"])
    trace.incumbent_timeline = [(int(i), float(v)) for i, v in doc["incumbent_timeline"]]
    trace.best_objective = doc["best_objective"]
    trace.best_node_id = doc["best_node_id"]
    bv = doc["best_values"]
    if bv is not None:
        trace.best_values = Assignment(_dec_array(bv["binaries"]), _dec_array(bv["continuous"]))
    if trace.node_count != int(doc["node_count"]):
        raise ValueError("node_count disagrees with the node records")
    return trace


def save_trace(trace: BnbTrace, path) -> Path:
    return _save("trace", trace_to_dict(trace), path)


def load_trace(path) -> BnbTrace:
    return _load("trace", path, trace_from_dict)


# ------------------------------------------------------------------ reports


def save_report(rows, path) -> Path:
    from .pipeline import report_row_to_dict

    def enc(v):
        return _enc_float(v) if isinstance(v, float) else v

    recs = [{k: enc(v) for k, v in report_row_to_dict(r).items()} for r in rows]
    return _save("report", {"rows": recs}, path)


def load_report(path) -> list:
    from .pipeline import report_row_from_dict

    return _load("report", path, lambda d: [report_row_from_dict(r) for r in d["rows"]])
