import json
import shutil
from pathlib import Path

import pytest

from gridcascade.cli import main
from gridcascade.cases import case_text

pytestmark = pytest.mark.usefixtures("toy4_path")


@pytest.fixture(scope="module")
def toy4_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("case") / "toy4.json"
    path.write_text(case_text("toy4"))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, toy4_path):
    """generate -> train once; several tests read the artifacts."""
    root = tmp_path_factory.mktemp("pipeline")
    data = root / "data"
    assert main(["generate", "--case", str(toy4_path), "--out", str(data),
                 "-n", "120", "--seed", "11", "--scale", "1.0"]) == 0
    model_dir = root / "model"
    assert main(["train", "--case", str(toy4_path), "--out", str(model_dir),
                 "--dataset", str(data / "dataset.jsonl"), "--epochs", "10"]) == 0
    return {"root": root, "case": toy4_path, "data": data, "model": model_dir / "model.json"}


def test_generate_outputs_and_idempotence(tmp_path, toy4_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        code = main(["generate", "--case", str(toy4_path), "--out", str(out),
                     "-n", "25", "--seed", "4", "--scale", "1.0"])
        assert code == 0
    assert (out1 / "dataset.jsonl").read_bytes() == (out2 / "dataset.jsonl").read_bytes()
    assert (out1 / "dataset.meta.json").read_bytes() == (out2 / "dataset.meta.json").read_bytes()
    meta = json.loads((out1 / "dataset.meta.json").read_text())
    assert meta["n_scenarios"] == 25


def test_generate_zero_scenarios(tmp_path, toy4_path):
    out = tmp_path / "empty"
    assert main(["generate", "--case", str(toy4_path), "--out", str(out), "-n", "0"]) == 0
    assert (out / "dataset.jsonl").read_text() == ""
    assert json.loads((out / "dataset.meta.json").read_text())["n_scenarios"] == 0


def test_generate_bad_case_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1,')
    assert main(["generate", "--case", str(bad), "--out", str(tmp_path / "o"), "-n", "1"]) == 2


def test_missing_case_is_io_error(tmp_path):
    assert main(["generate", "--case", str(tmp_path / "none.json"),
                 "--out", str(tmp_path / "o"), "-n", "1"]) == 4


def test_train_model_reproducible_hash(tmp_path, toy4_path, pipeline):
    out = tmp_path / "retrain"
    assert main(["train", "--case", str(toy4_path), "--out", str(out),
                 "--dataset", str(pipeline["data"] / "dataset.jsonl"),
                 "--epochs", "10"]) == 0
    assert (out / "model.json").read_bytes() == pipeline["model"].read_bytes()
    trace = (out / "loss_trace.csv").read_text().splitlines()
    assert trace[0] == "epoch,loss"
    assert len(trace) == 11


def test_train_epochs_zero_initial_model(tmp_path, toy4_path, pipeline):
    out = tmp_path / "init_only"
    assert main(["train", "--case", str(toy4_path), "--out", str(out),
                 "--dataset", str(pipeline["data"] / "dataset.jsonl"),
                 "--epochs", "0"]) == 0
    doc = json.loads((out / "model.json").read_text())
    assert doc["loss_trace"] == []


def test_train_accepts_large_weight_ratio(tmp_path, toy4_path, pipeline):
    out = tmp_path / "w800"
    assert main(["train", "--case", str(toy4_path), "--out", str(out),
                 "--dataset", str(pipeline["data"] / "dataset.jsonl"),
                 "--epochs", "1", "--w-ratio", "800"]) == 0
    doc = json.loads((out / "model.json").read_text())
    assert doc["hyper"]["w1"] == 800.0


def test_train_graph_hash_mismatch(tmp_path, pipeline):
    # dataset generated from toy4, trained against a different case
    other = tmp_path / "other.json"
    doc = json.loads(case_text("toy4"))
    doc["branches"][0]["from"], doc["branches"][0]["to"] = 0, 2
    doc["branches"][2]["from"], doc["branches"][2]["to"] = 0, 1
    other.write_text(json.dumps(doc))
    assert main(["train", "--case", str(other), "--out", str(tmp_path / "o"),
                 "--dataset", str(pipeline["data"] / "dataset.jsonl")]) == 2


def test_search_all_strategies_same_path_set(tmp_path, toy4_path, pipeline):
    out = tmp_path / "search"
    assert main(["search", "--case", str(toy4_path), "--out", str(out),
                 "--model", str(pipeline["model"]), "--R", "2",
                 "--load-scale", "1.0", "--seed", "3"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    total = summary["total_shedding_paths"]
    assert total > 0
    sets = {}
    for kind in ("rand", "pfw", "lodf", "gcn"):
        lines = (out / f"paths_{kind}.jsonl").read_text().splitlines()
        sets[kind] = {tuple(json.loads(ln)["outages"]) for ln in lines}
        assert summary["strategies"][kind.upper()]["paths_found"] == total
    assert len(set(map(frozenset, map(lambda s: frozenset(s), sets.values())))) == 1
    curve = (out / "curve_gcn.csv").read_text().splitlines()
    assert curve[0] == "attempt,found"


def test_search_budget_zero_rejected(tmp_path, toy4_path):
    assert main(["search", "--case", str(toy4_path), "--out", str(tmp_path / "s"),
                 "--strategies", "PFW", "--budget", "0", "--load-scale", "1.0"]) == 2


def test_search_gcn_without_model_rejected(tmp_path, toy4_path):
    assert main(["search", "--case", str(toy4_path), "--out", str(tmp_path / "s"),
                 "--strategies", "GCN", "--load-scale", "1.0"]) == 2


def test_explain_writes_report(tmp_path, toy4_path, pipeline):
    out = tmp_path / "explain"
    code = main(["explain", "--case", str(toy4_path), "--out", str(out),
                 "--model", str(pipeline["model"]), "--branch", "2",
                 "--outages", "0", "--load-scale", "1.0"])
    assert code == 0
    doc = json.loads((out / "explanation.json").read_text())
    assert doc["branch"] == 2
    assert set(doc["groups"]) == {"topology", "protection", "branch_flow", "bus_load"}
    assert len(doc["deficit_per_layer"]) == 3
    csv_lines = (out / "relevance.csv").read_text().splitlines()
    assert csv_lines[0] == "branch,topology,protection,branch_flow,bus_load"
    assert len(csv_lines) == 1 + 4


def test_explain_out_of_service_branch_rejected(tmp_path, toy4_path, pipeline):
    assert main(["explain", "--case", str(toy4_path), "--out", str(tmp_path / "e"),
                 "--model", str(pipeline["model"]), "--branch", "0",
                 "--outages", "0", "--load-scale", "1.0"]) == 2


def test_eval_metrics_file(tmp_path, toy4_path, pipeline):
    out = tmp_path / "eval"
    assert main(["eval", "--case", str(toy4_path), "--out", str(out),
                 "--model", str(pipeline["model"]),
                 "--dataset", str(pipeline["data"] / "dataset.jsonl")]) == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert set(doc["confusion"]) == {"a", "b", "c", "d"}
    assert doc["total_accuracy"] is not None
    assert doc["base_rate"] is not None
