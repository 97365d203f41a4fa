"""Secondary component: renders real CLI outputs, schema round trips.

The fixtures shell out to the primary package's CLI so the renderers are
exercised against genuine interface files, never recomputed quantities.
"""

import json
import os
import subprocess
import sys

import pytest

from freshcert_plots import render, schemas
from freshcert_plots.cli import main as plot_main


def run_cli(args):
    subprocess.run([sys.executable, "-m", "freshcert.cli", *args], check=True,
                   capture_output=True)


@pytest.fixture(scope="module")
def cli_outputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    table = str(base / "cases.csv")
    graphs = str(base / "graphs")
    run_cli(["cases", "--out", table, "--graphs-out", graphs])
    fam = {"templates": [{"slots": [{"wc": 0}, {"wc": 0}]},
                         {"slots": [{"wc": 0}, {"wc": 1}]}],
           "labels": [1, -1], "masses": [0.5, 0.5],
           "alphabet": {"train": list(range(14)),
                        "test": list(range(100, 110))}}
    fam_path = base / "family.json"
    fam_path.write_text(json.dumps(fam))
    cfg_path = base / "task.json"
    cfg_path.write_text(json.dumps({"family": str(fam_path), "n": 24,
                                    "lam": 0.1, "delta": 0.2}))
    sweep = str(base / "sweep.csv")
    run_cli(["sweep", "--config", str(cfg_path), "--axis", "lam",
             "--grid", "0.05,0.1,0.2,0.4", "--out", sweep])
    return {"table": table, "graphs": graphs, "sweep": sweep, "base": base}


def test_case_table_schema_round_trip(cli_outputs, tmp_path):
    rows = schemas.load_case_table(cli_outputs["table"])
    assert len(rows) == 8
    copy_path = str(tmp_path / "copy.csv")
    schemas.dump_case_table(rows, copy_path)
    again = schemas.load_case_table(copy_path)
    assert again == rows


def test_graph_schema_round_trip(cli_outputs, tmp_path):
    path = os.path.join(cli_outputs["graphs"], "C1.json")
    payload = schemas.load_graph(path)
    copy_path = str(tmp_path / "copy.json")
    schemas.dump_graph(payload, copy_path)
    assert schemas.load_graph(copy_path) == payload


def test_schema_error_names_missing_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("case,route\nC1,BD\n")
    with pytest.raises(schemas.SchemaError, match="b_sharp"):
        schemas.load_case_table(str(bad))


def test_certificate_bars_figure(cli_outputs, tmp_path):
    out = str(tmp_path / "bars.png")
    render.plot_certificates(cli_outputs["table"], out)
    assert os.path.getsize(out) > 10_000


def test_eight_graph_panels(cli_outputs, tmp_path):
    paths = sorted(os.path.join(cli_outputs["graphs"], f)
                   for f in os.listdir(cli_outputs["graphs"]))
    assert len(paths) == 8
    out = str(tmp_path / "panels.png")
    render.plot_graph_panels(paths, out)
    assert os.path.getsize(out) > 10_000


def test_single_graph_and_empty_graph(cli_outputs, tmp_path):
    out = str(tmp_path / "c2.png")
    render.plot_graph(os.path.join(cli_outputs["graphs"], "C2.json"), out)
    assert os.path.getsize(out) > 5_000
    lonely = tmp_path / "empty.json"
    lonely.write_text(json.dumps({
        "name": "empty", "edges": [],
        "nodes": [{"id": 0, "color": 0, "kind": "train"},
                  {"id": 1, "color": -1, "kind": "test"}]}))
    out2 = str(tmp_path / "empty.png")
    render.plot_graph(str(lonely), out2)
    assert os.path.getsize(out2) > 1_000


def test_sweep_curves(cli_outputs, tmp_path):
    out = str(tmp_path / "curves.png")
    render.plot_curves(cli_outputs["sweep"], out)
    assert os.path.getsize(out) > 5_000


def test_cli_entry_point(cli_outputs, tmp_path):
    out = str(tmp_path / "bars_cli.png")
    plot_main(["bars", "--in", cli_outputs["table"], "--out", out])
    assert os.path.exists(out)
