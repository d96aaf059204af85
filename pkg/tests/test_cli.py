import csv
import json
import shutil
import subprocess

import jsonschema
import pytest

from rankpert import section3_spec
from rankpert.cli import main, schema

TOY = {"diag": {"kind": "finite-list", "values": [[0, 0], [1, 0]]},
       "perturbations": [{"u": {"kind": "finite-list", "values": [[1, 0], [1, 0]]},
                          "v": {"kind": "finite-list", "values": [[1, 0], [1, 0]]}}],
       "pq": [0.5, 0.5]}


@pytest.fixture
def files(tmp_path):
    def write(name, doc):
        p = tmp_path / name
        p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return str(p)
    return write


def run(args, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    doc = json.loads(out.read_text()) if out.exists() and name.endswith(".json") else None
    if doc is not None:
        jsonschema.validate(doc, schema(args[0]))
        assert doc["command"] == args[0]
    return code, doc


def test_spectrum_toy(files, tmp_path):
    code, doc = run(["spectrum", "--spec", files("toy.json", TOY), "--region", "-1,4,-1,1"], tmp_path)
    assert code == 0
    roots = sorted(r["z"][0] for r in doc["result"]["root_candidates"])
    assert roots == pytest.approx([(3 - 5 ** 0.5) / 2, (3 + 5 ** 0.5) / 2], abs=1e-12)
    assert doc["result"]["status"] == "complete"


def test_spectrum_budget_exhausted(files, tmp_path):
    spec = files("s3.json", section3_spec().to_json())
    code, doc = run(["spectrum", "--spec", spec, "--region", "-1.2,1.2,0.3,0.6"], tmp_path)
    assert code == 4
    assert doc["result"]["status"] == "inconclusive" and doc["result"]["undecided_cells"]


def test_malformed_json_reports_position(files, tmp_path, capsys):
    bad = files("bad.json", '{"diag": {"kind": "finite-list",\n  "values": [[0, 0],, [1, 0]]}}')
    code = main(["classify", "--spec", bad])
    assert code == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_invalid_spec_is_input_error(files, capsys):
    doc = json.loads(json.dumps(TOY))
    doc["perturbations"][0]["u"]["values"] = [[0, 0], [0, 0]]
    assert main(["classify", "--spec", files("zero.json", doc)]) == 2
    assert "zero perturbation vector" in capsys.readouterr().err


def test_missing_file_and_bad_flags(tmp_path):
    assert main(["classify", "--spec", str(tmp_path / "nope.json")]) == 2
    assert main(["spectrum", "--spec", "x.json", "--region", "1,2"]) == 2
    assert main(["bogus"]) == 2
    assert main(["quasisim", "--spec", "x.json", "--dim", "0"]) == 2


def test_riesz_through_eigenvalue_is_contract_error(files, capsys):
    curve = json.dumps({"type": "circle", "center": [0, 0], "radius": (3 - 5 ** 0.5) / 2})
    assert main(["riesz", "--spec", files("toy.json", TOY), "--curve", curve]) == 3
    assert "contract violation" in capsys.readouterr().err


def test_riesz_ok(files, tmp_path):
    curve = files("curve.json", {"type": "circle", "center": [0, 0], "radius": 1})
    code, doc = run(["riesz", "--spec", files("toy.json", TOY), "--curve", curve], tmp_path)
    assert code == 0
    proj = doc["result"]["projection"]
    assert proj["rank_estimate"] == 1 and proj["idempotency_defect"] <= 1e-10


def test_quasisim_toy(files, tmp_path):
    code, doc = run(["quasisim", "--spec", files("toy.json", TOY), "--xi0", "-0.5,0.5"], tmp_path)
    assert code == 0
    assert max(doc["result"]["pair"]["intertwining_defects"]) <= 1e-13
    assert doc["config"]["xi0"] == [-0.5, 0.5]


def test_quasisim_on_diagonal_is_contract_error(files):
    assert main(["quasisim", "--spec", files("toy.json", TOY), "--xi0", "1,0"]) == 3


def test_counterexample_csv(tmp_path):
    code = main(["counterexample", "--levels", "20", "--out", str(tmp_path / "t.csv")])
    assert code == 0
    rows = list(csv.reader((tmp_path / "t.csv").open()))
    assert rows[0] == ["level", "phi_partial", "lower_bound"]
    assert len(rows) == 22
    assert all(float(r[1]) >= float(r[2]) for r in rows[1:])


def test_counterexample_json(tmp_path):
    code, doc = run(["counterexample", "--levels", "10"], tmp_path)
    assert code == 0 and len(doc["result"]["rows"]) == 11
    assert doc["result"]["lower_bound_exceeds_3_at"]["level"] == 80


@pytest.mark.parametrize("pq,region", [([0.5, 0.5], "FJKP"), ([2, 1.5], "UNCOVERED")])
def test_classify_regions(files, tmp_path, pq, region):
    code, doc = run(["classify", "--spec", files("toy.json", dict(TOY, pq=pq))], tmp_path)
    assert code == 0 and doc["result"]["region"] == region


def test_classify_without_pq(files, tmp_path):
    doc = {k: v for k, v in TOY.items() if k != "pq"}
    code, out = run(["classify", "--spec", files("nopq.json", doc)], tmp_path)
    assert code == 0
    assert out["result"]["region"] == "inconclusive" and out["result"]["pq"] is None


def test_classify_from_decay_class(files, tmp_path):
    doc = {"diag": {"kind": "rule-generated", "rule": {"name": "dyadic_section3", "params": {}}},
           "perturbations": [{"u": {"kind": "rule-generated",
                                    "rule": {"name": "power", "params": {"exponent": 2}},
                                    "decay_class": {"power": 2}},
                              "v": {"kind": "rule-generated",
                                    "rule": {"name": "power", "params": {"exponent": 1}},
                                    "decay_class": {"power": 1}}}]}
    code, out = run(["classify", "--spec", files("decay.json", doc)], tmp_path)
    assert code == 0
    assert out["result"]["pq_source"] == "decay_class"
    p, q = out["result"]["pq"]
    assert 0.5 < p < 0.5 + 1e-12 and 1 < q < 1 + 1e-12
    assert out["result"]["region"] == "GG"


def test_probe_finite_spec(files, tmp_path):
    code, doc = run(["probe", "--spec", files("toy.json", TOY), "--samples", "8"], tmp_path)
    assert code == 0
    res = doc["result"]
    assert res["status"] == "witnesses found"
    assert [h["side"] for h in res["hypotheses"]] == ["plus", "minus"]
    proj, inv = res["riesz"]["projection"], res["riesz"]["invariance"]
    assert proj["rank_estimate"] == proj["enclosed_count"]
    assert proj["invariance_defect"] <= 1e-10
    assert inv["trivial"] == (proj["rank_estimate"] in (0, res["riesz"]["dim"]))


def test_probe_dyadic_finds_nothing(files, tmp_path):
    spec = files("s3.json", section3_spec().to_json())
    code, doc = run(["probe", "--spec", spec, "--samples", "8"], tmp_path)
    assert code == 0 and doc["result"]["status"] == "no witness found"


def test_probe_trivially_reducible(files, tmp_path):
    doc = {"diag": {"kind": "finite-list", "values": [[0, 0], [1, 0], [2, 0]]},
           "perturbations": [{"u": {"kind": "finite-list", "values": [[1, 0], [0, 0], [0, 0]]},
                              "v": {"kind": "finite-list", "values": [[0, 0], [1, 0], [1, 0]]}}]}
    code, out = run(["probe", "--spec", files("triv.json", doc)], tmp_path)
    assert code == 0 and out["result"]["status"] == "trivially reducible"


def test_svg_outputs(files, tmp_path):
    toy = files("toy.json", TOY)
    svg = tmp_path / "scan.svg"
    assert main(["spectrum", "--spec", toy, "--out", str(tmp_path / "s.json"), "--svg", str(svg)]) == 0
    assert svg.read_text().startswith("<svg")
    assert main(["classify", "--spec", toy, "--out", str(tmp_path / "c.json"), "--svg"]) == 0
    assert "(0.5, 0.5) FJKP" in (tmp_path / "c.svg").read_text()
    curve = '{"type": "gamma", "x": 0.5}'
    assert main(["riesz", "--spec", toy, "--curve", curve, "--out", str(tmp_path / "r.json"),
                 "--svg"]) == 0
    assert (tmp_path / "r.svg").exists()


def test_stdout_default(files, capsys):
    assert main(["classify", "--spec", files("toy.json", TOY)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["result"]["region"] == "FJKP"


def test_workers_env_does_not_change_output(files, tmp_path, monkeypatch):
    spec = files("s3.json", section3_spec().to_json())
    outs = []
    for w in ("1", "3"):
        monkeypatch.setenv("RANKPERT_WORKERS", w)
        out = tmp_path / f"p{w}.json"
        assert main(["probe", "--spec", spec, "--samples", "6", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.skipif(shutil.which("rankpert") is None, reason="console script not installed")
def test_console_script(files):
    proc = subprocess.run(["rankpert", "classify", "--spec", files("toy.json", TOY)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["result"]["region"] == "FJKP"
    proc = subprocess.run(["rankpert", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("rankpert ")
