import json
import subprocess
import sys

import pytest
import yaml

from bnbtransfer.cli import main
from bnbtransfer.persist import load_dataset, load_instance, load_model, load_report

TINY_EXPERIMENT = {
    "source": {"L": 3, "K": 2, "N": 1},
    "target": {"L": 3, "K": 3, "N": 1},
    "source_sinr_db": 0.0, "target_sinrs_db": [0.0],
    "n_original": 3, "n_additional": 3, "n_test": 2, "sweep_counts": [1, 2],
    "train": {"epochs": 5},
    "self_imitation": {"M": 2, "fine_tune": {"epochs": 2}},
}


def _write(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return path


def _run(tmp_path, verb, doc, seed=0, name=None):
    cfg = _write(tmp_path / f"{name or verb}.yaml", doc)
    run_dir = tmp_path / "runs" / (name or verb)
    code = main([verb, str(cfg), "--seed", str(seed), "--run-dir", str(run_dir)])
    return code, run_dir


def _manifest(run_dir):
    return json.loads((run_dir / "manifest.json").read_text())


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """gen -> label -> train -> transfer -> eval on tiny networks."""
    tmp = tmp_path_factory.mktemp("cli")
    net = {"L": 3, "K": 2, "N": 1}
    out = {}
    out["gen"] = _run(tmp, "gen", {"network": net, "sinr_db": 0.0, "count": 4})
    out["gen_t"] = _run(tmp, "gen", {"network": {**net, "K": 3}, "sinr_db": 0.0, "count": 3,
                                     "seed_base": 500}, name="gen_t")
    out["label"] = _run(tmp, "label", {"instances": "runs/gen/instances"})
    out["train"] = _run(tmp, "train", {"dataset": "runs/label/dataset.json",
                                        "train": {"epochs": 5}})
    out["transfer"] = _run(tmp, "transfer", {
        "model": "runs/train/model.json", "instances": "runs/gen_t/instances",
        "self_imitation": {"M": 2, "fine_tune": {"epochs": 2}}})
    out["eval"] = _run(tmp, "eval", {"model": "runs/transfer/model.json",
                                      "instances": "runs/gen_t/instances", "label": "transfer",
                                      "write_traces": True})
    return out


def test_every_chain_step_succeeds_with_manifest(chain):
    for name, (code, run_dir) in chain.items():
        assert code == 0, name
        man = _manifest(run_dir)
        assert man["status"] == "ok" and man["seed"] == 0
        for rec in man["outputs"]:
            assert (run_dir / rec["path"]).exists() and len(rec["sha256"]) == 64


def test_chain_outputs_load(chain):
    gen_dir = chain["gen"][1]
    files = sorted((gen_dir / "instances").glob("*.json"))
    assert len(files) == 4 and load_instance(files[0]).num_binary == 3
    data = load_dataset(chain["label"][1] / "dataset.json")
    assert _manifest(chain["label"][1])["summary"]["samples"] == len(data)
    assert list((chain["label"][1] / "traces").glob("*.json"))
    assert load_model(chain["train"][1] / "model.json").layer_dims == (17, 64, 64, 2)
    assert (chain["transfer"][1] / "scores.json").exists()
    rows = load_report(chain["eval"][1] / "report.json")
    assert rows[0].label == "transfer" and rows[0].n_instances == 3
    assert (chain["eval"][1] / "report.csv").exists() and (chain["eval"][1] / "report.txt").exists()


def test_toy_gen(tmp_path):
    code, run_dir = _run(tmp_path, "gen", {"family": "toy", "count": 2, "n_int": 2})
    assert code == 0 and len(list((run_dir / "instances").glob("*.json"))) == 2


def test_report_and_sweep_verbs(tmp_path):
    code, run_dir = _run(tmp_path, "report", {"mode": "transfer_dynamic_mus",
                                             "experiment": TINY_EXPERIMENT})
    assert code == 0
    assert [r.label for r in load_report(run_dir / "report.json")] == \
        ["pretrained", "scratch", "transfer"]
    assert (run_dir / "models" / "pretrained.json").exists()
    code, run_dir = _run(tmp_path, "sweep", {"experiment": TINY_EXPERIMENT})
    assert code == 0
    assert [r.label for r in load_report(run_dir / "report.json")] == \
        ["pretrained", "transfer-n1", "transfer-n2"]


def test_report_is_replayable(tmp_path):
    doc = {"mode": "scratch", "experiment": TINY_EXPERIMENT}
    _, a = _run(tmp_path, "report", doc, name="a")
    _, b = _run(tmp_path, "report", doc, name="b")
    ra, rb = load_report(a / "report.json"), load_report(b / "report.json")
    assert [r.deterministic() for r in ra] == [r.deterministic() for r in rb]


def _error(run_dir, capsys):
    rec = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert json.loads((run_dir / "error.json").read_text()) == rec
    return rec


def test_missing_config_file(tmp_path, capsys):
    run_dir = tmp_path / "r"
    code = main(["gen", str(tmp_path / "nope.yaml"), "--seed", "0", "--run-dir", str(run_dir)])
    assert code == 2
    assert _error(run_dir, capsys)["error_type"] == "FileNotFoundError"


def test_malformed_yaml_reports_offset(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("count: 3\nnetwork: {L: 3\n")
    run_dir = tmp_path / "r"
    assert main(["gen", str(cfg), "--seed", "0", "--run-dir", str(run_dir)]) == 2
    rec = _error(run_dir, capsys)
    assert rec["error_type"] == "ParseError" and rec["byte_offset"] > 0


def test_bad_values_are_config_errors(tmp_path, capsys):
    code, run_dir = _run(tmp_path, "report", {"mode": "nonsense"})
    assert code == 2 and _error(run_dir, capsys)["error_type"] == "ConfigError"
    assert _manifest(run_dir)["status"] == "error"
    code, run_dir = _run(tmp_path, "gen", {"network": {"L": 2, "K": 4, "N": 1}, "sinr_db": 40,
                                           "count": 2}, name="unreachable")
    assert code == 2 and "SINR" in _error(run_dir, capsys)["message"]


def test_corrupt_model_file(tmp_path, capsys):
    model = tmp_path / "model.json"
    model.write_text('{"schema": "bnbtransfer/model", "version": 1, "layer')
    code, run_dir = _run(tmp_path, "transfer", {"model": "model.json", "instances": "."})
    assert code == 2
    rec = _error(run_dir, capsys)
    assert rec["error_type"] == "ParseError" and "byte_offset" in rec


def test_missing_seed_is_a_usage_error(tmp_path, capsys):
    cfg = _write(tmp_path / "g.yaml", {})
    assert main(["gen", str(cfg)]) == 2
    rec = json.loads(capsys.readouterr().err.strip())
    assert rec["status"] == "error" and rec["verb"] == "gen"


def test_console_script_runs(tmp_path):
    cfg = _write(tmp_path / "g.yaml", {"family": "toy", "count": 1})
    res = subprocess.run([sys.executable, "-m", "bnbtransfer.cli", "gen", str(cfg), "--seed", "3",
                          "--run-dir", str(tmp_path / "out")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert _manifest(tmp_path / "out")["seed"] == 3
