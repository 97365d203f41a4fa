"""CLI round trips: schemas, determinism, command wiring."""

import csv
import json
import os

import numpy as np
import pytest

from freshcert.cli import CASE_CSV_COLUMNS, main

FAMILY = {
    "templates": [
        {"slots": [{"wc": 0}, {"wc": 0}]},
        {"slots": [{"wc": 0}, {"wc": 1}]},
    ],
    "labels": [1, -1],
    "masses": [0.5, 0.5],
    "alphabet": {"train": list(range(16)), "test": list(range(100, 120))},
}

LITERAL_FAMILY = {
    "templates": [
        {"slots": [{"lit": "if"}, {"wc": 0}, {"wc": 1}]},
        {"slots": [{"lit": "while"}, {"wc": 0}, {"wc": 1}]},
    ],
    "labels": [1, -1],
    "masses": [0.5, 0.5],
    "alphabet": {"train": list(range(16)), "test": list(range(100, 110))},
}


@pytest.fixture
def family_path(tmp_path):
    path = tmp_path / "family.json"
    path.write_text(json.dumps(FAMILY))
    return str(path)


@pytest.fixture
def config_path(tmp_path, family_path):
    path = tmp_path / "task.json"
    path.write_text(json.dumps({"family": family_path, "n": 32,
                                "lam": 0.1, "delta": 0.2, "eta": 0.2}))
    return str(path)


def test_task_validate_and_sample(family_path, tmp_path, capsys):
    main(["task", "validate", "--family", family_path, "--trials", "500"])
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["r"] == 2

    ds_path = str(tmp_path / "dataset.json")
    main(["task", "sample", "--family", family_path, "--n", "24",
          "--seed", "3", "--out", ds_path])
    payload = json.loads(open(ds_path).read())
    assert len(payload["samples"]) == 24
    assert os.path.exists(ds_path + ".manifest.json")


def test_glyph_literals_round_trip(tmp_path, capsys):
    path = tmp_path / "fam.json"
    path.write_text(json.dumps(LITERAL_FAMILY))
    main(["task", "validate", "--family", str(path), "--trials", "300"])
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["k"] == 3


def test_sampling_determinism(family_path, tmp_path):
    p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    main(["task", "sample", "--family", family_path, "--n", "40",
          "--seed", "7", "--out", p1])
    main(["task", "sample", "--family", family_path, "--n", "40",
          "--seed", "7", "--out", p2])
    assert open(p1).read() == open(p2).read()


def test_kernel_commands(family_path, capsys):
    main(["kernel", "check", "--family", family_path, "--trials", "50"])
    out = json.loads(capsys.readouterr().out)
    assert out["passed"]
    main(["kernel", "matrix", "--family", family_path])
    out = json.loads(capsys.readouterr().out)
    assert np.allclose(out["n"], [[2.0, 1.0], [1.0, 1.0]])


def test_certify_and_graph_round_trip(config_path, family_path, tmp_path, capsys):
    report_path = str(tmp_path / "report.json")
    main(["certify", "--config", config_path, "--seed", "5", "--out",
          report_path])
    report = json.loads(open(report_path).read())
    assert set(report["report"]["budgets"]) == {"CS", "DEG", "BD", "ANOVA", "BF"}
    assert report["realized_error"] <= report["report"]["b_sharp"]

    ds_path = str(tmp_path / "ds.json")
    main(["task", "sample", "--family", family_path, "--n", "20",
          "--seed", "2", "--out", ds_path])
    test_path = str(tmp_path / "test.json")
    open(test_path, "w").write(json.dumps({"template": 0, "mapping": {"0": 100}}))
    graph_path = str(tmp_path / "graph.json")
    main(["graph", "export", "--family", family_path, "--dataset", ds_path,
          "--test", test_path, "--out", graph_path])
    graph = json.loads(open(graph_path).read())
    assert {n["kind"] for n in graph["nodes"]} == {"train", "test"}
    for edge in graph["edges"]:
        assert {"source", "target", "weight"} <= set(edge)


def _json_tail(text):
    """Parse the JSON object printed after any 'wrote ...' status lines."""
    return json.loads(text[text.index("{"):])


def test_cases_csv_schema(tmp_path, capsys):
    csv_path = str(tmp_path / "cases.csv")
    graph_dir = str(tmp_path / "graphs")
    main(["cases", "--out", csv_path, "--graphs-out", graph_dir])
    rows = open(csv_path).read().strip().splitlines()
    assert rows[0].split(",") == CASE_CSV_COLUMNS
    assert len(rows) == 9
    summary = _json_tail(capsys.readouterr().out)
    assert summary["C5"]["route"] == "CS"
    assert len(os.listdir(graph_dir)) == 8
    panel = json.loads(open(os.path.join(graph_dir, "C2.json")).read())
    assert panel["name"] == "C2"


def test_sweep_csv(config_path, tmp_path):
    out_path = str(tmp_path / "sweep.csv")
    main(["sweep", "--config", config_path, "--axis", "lam",
          "--grid", "0.05,0.1,0.2", "--out", out_path])
    rows = open(out_path).read().strip().splitlines()
    assert len(rows) == 4
    header = rows[0].split(",")
    assert "b_sharp" in header and "route" in header


def test_sweep_empty_grid_header_only(config_path, tmp_path):
    out_path = str(tmp_path / "empty.csv")
    main(["sweep", "--config", config_path, "--axis", "n", "--grid", "",
          "--out", out_path])
    rows = open(out_path).read().strip().splitlines()
    assert len(rows) == 1


def test_coverage_command(config_path, capsys):
    main(["coverage", "--config", config_path, "--trials", "25", "--quiet"])
    out = json.loads(capsys.readouterr().out)
    assert out["trials"] == 25
    assert 0.0 <= out["coverage"] <= 1.0
    assert "wedge_coverage" in out


def test_klr_fit_command(tmp_path, capsys):
    gram = tmp_path / "g.csv"
    labels = tmp_path / "l.csv"
    np.savetxt(gram, np.array([[1.0]]), delimiter=",")
    np.savetxt(labels, np.array([1.0]), delimiter=",")
    main(["klr", "fit", "--gram", str(gram), "--labels", str(labels),
          "--lam", "1.0"])
    out = json.loads(capsys.readouterr().out)
    assert out["c"][0] == pytest.approx(0.4010581375, abs=1e-8)


def test_klbound_command(capsys):
    main(["klbound", "--n-eff", "100", "--q", "0.1", "--u", "1.0"])
    out = json.loads(capsys.readouterr().out)
    assert out["bernstein"] >= out["kl_inverse"]


def test_prompting_command(tmp_path, capsys):
    n_path, h_path = tmp_path / "n.csv", tmp_path / "h.csv"
    q_path, l_path = tmp_path / "q.csv", tmp_path / "l.csv"
    np.savetxt(n_path, np.eye(2), delimiter=",")
    np.savetxt(h_path, np.array([[0.1, 0.0], [0.0, -0.1]]), delimiter=",")
    np.savetxt(q_path, np.array([0.5, 0.5]), delimiter=",")
    np.savetxt(l_path, np.array([1.0, -1.0]), delimiter=",")
    main(["prompting", "derivative", "--nmat", str(n_path), "--hmat",
          str(h_path), "--q", str(q_path), "--labels", str(l_path),
          "--lam", "0.3"])
    out = json.loads(capsys.readouterr().out)
    assert len(out["margin_gains"]) == 2


def test_gram_bundle_serialization(family_path, tmp_path):
    ds_path = str(tmp_path / "ds.json")
    main(["task", "sample", "--family", family_path, "--n", "12",
          "--seed", "4", "--out", ds_path])
    test_path = str(tmp_path / "test.json")
    open(test_path, "w").write(json.dumps({"template": 0, "mapping": {"0": 100}}))
    prefix = str(tmp_path / "bundle")
    main(["gram", "--family", family_path, "--dataset", ds_path,
          "--test", test_path, "--out", prefix])
    header = json.loads(open(prefix + ".json").read())
    assert header["n"] == 12 and header["test_template"] == 0
    gram = np.loadtxt(prefix + ".gram.csv", delimiter=",")
    delta = np.loadtxt(prefix + ".delta.csv", delimiter=",")
    assert gram.shape == (12, 12)
    assert np.allclose(delta, delta.T)


def test_lambda_alias(tmp_path, capsys):
    gram = tmp_path / "g.csv"
    labels = tmp_path / "l.csv"
    np.savetxt(gram, np.array([[1.0]]), delimiter=",")
    np.savetxt(labels, np.array([1.0]), delimiter=",")
    main(["klr", "fit", "--gram", str(gram), "--labels", str(labels),
          "--lambda", "1.0"])
    out = json.loads(capsys.readouterr().out)
    assert out["c"][0] == pytest.approx(0.4010581375, abs=1e-8)


def test_tkernel_limit_and_probe(tmp_path, capsys):
    cfg_path = tmp_path / "attn.json"
    cfg_path.write_text(json.dumps({"k": 3, "beta": 0.0, "gamma": 0.5,
                                    "activation": "identity", "vocab": 6,
                                    "n_inputs": 2}))
    pair_path = tmp_path / "pair.json"
    pair_path.write_text(json.dumps({"vocab": 6, "x": [0, 1, 5],
                                     "y": [0, 2, 5]}))
    main(["tkernel", "limit", "--config", str(cfg_path), "--pair",
          str(pair_path)])
    out = json.loads(capsys.readouterr().out)
    assert out["attn_stderr"] == 0.0
    assert out["trans"] == pytest.approx(out["attn"], abs=1e-12)

    probe_path = str(tmp_path / "probe.csv")
    main(["tkernel", "probe", "--config", str(cfg_path), "--widths", "8,32",
          "--trials", "2", "--mc-samples", "4000", "--out", probe_path])
    rows = open(probe_path).read().strip().splitlines()
    assert rows[0] == "width,trial,max_error"
    assert len(rows) == 5


def test_certify_honors_config_eta(config_path, tmp_path):
    report_path = str(tmp_path / "rep.json")
    main(["certify", "--config", config_path, "--seed", "5", "--out",
          report_path])
    report = json.loads(open(report_path).read())
    # the task config carries eta = 0.2, so the envelope must be present
    assert "envelope" in report
    assert report["envelope"]["b_ew"] >= report["report"]["b_sharp"] - 1e-9


def test_sweep_budget_scaling_in_lambda(config_path, tmp_path):
    """Action-dominated budgets scale like 1/lam^2 along a ridge sweep."""
    out_path = str(tmp_path / "lam_sweep.csv")
    grid = [0.02, 0.04, 0.08, 0.16]
    main(["sweep", "--config", config_path, "--axis", "lam",
          "--grid", ",".join(str(g) for g in grid), "--out", out_path])
    rows = list(csv.DictReader(open(out_path)))
    lam = np.array([float(r["lam"]) for r in rows])
    deg = np.array([float(r["b_deg"]) for r in rows])
    slope = np.polyfit(np.log(lam), np.log(deg), 1)[0]
    # DEG here is pure action (no test collisions): slope -2 up to the
    # mild lambda-dependence of the dual coordinates
    assert -2.3 < slope < -1.7
