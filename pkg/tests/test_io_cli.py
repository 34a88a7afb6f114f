import csv
import io
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from horizonforge.cli import run
from horizonforge.geomcore import RadialGrid
from horizonforge.io import (DocumentError, ProfileDocument, deserialize, dumps, format_number, parse_config,
                             read_document, serialize, write_document)

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"


def cli(*argv):
    buf = io.StringIO()
    code = run([str(a) for a in argv], stdout=buf)
    return code, json.loads(buf.getvalue())


# --- documents ------------------------------------------------------------------

@pytest.mark.parametrize("path", sorted(p for p in DATA.glob("*.json") if not p.name.startswith("config")),
                         ids=lambda p: p.stem)
def test_repo_documents_round_trip(path):
    raw = path.read_bytes()
    doc = deserialize(raw)
    assert deserialize(serialize(doc)) == doc
    # files in the repository are written by serialize itself
    assert serialize(doc) == raw


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=8, max_size=40))
def test_round_trip_bit_exact(vals):
    doc = ProfileDocument("trajectory", 3, RadialGrid(0.0, 1.0, len(vals)), np.array(vals), {"src": "h"})
    back = deserialize(serialize(doc))
    assert back == doc
    assert np.array_equal(back.values.view(np.uint64), doc.values.view(np.uint64))


def test_format_number_keeps_17_digits():
    assert format_number(0.1) == "0.10000000000000001"
    assert float(format_number(np.pi)) == np.pi
    assert format_number(-0.0) == "-0.0"
    with pytest.raises(DocumentError):
        format_number(math.inf)


def test_nan_rejected_with_index():
    d = json.loads((DATA / "round_s3.json").read_text())
    d["values"][17] = "NaN"
    text = json.dumps(d).replace('"NaN"', "NaN")
    with pytest.raises(DocumentError, match=r"values\[17\]") as exc:
        deserialize(text)
    assert exc.value.key == "values[17]"
    with pytest.raises(DocumentError, match=r"values\[3\]"):
        ProfileDocument("trajectory", 3, RadialGrid(0.0, 1.0, 8), [0, 1, 2, np.inf, 4, 5, 6, 7])


def test_version_zero_unsupported():
    d = json.loads((DATA / "round_s3.json").read_text())
    d["schema_version"] = 0
    with pytest.raises(DocumentError, match="unsupported schema_version 0") as exc:
        deserialize(json.dumps(d))
    assert exc.value.key == "schema_version"


@pytest.mark.parametrize("mutate,key", [
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d.pop("values"), "values"),
    (lambda d: d.update(kind="blob"), "kind"),
    (lambda d: d["values"].pop(), "values"),
    (lambda d: d["grid"].update(c=1), "grid"),
])
def test_malformed_documents(mutate, key):
    d = json.loads((DATA / "round_s3.json").read_text())
    mutate(d)
    with pytest.raises(DocumentError) as exc:
        deserialize(json.dumps(d))
    assert exc.value.key == key


def test_document_file_io(tmp_path):
    doc = read_document(DATA / "peanut_s2.json")
    write_document(doc, tmp_path / "p.json")
    assert (tmp_path / "p.json").read_bytes() == (DATA / "peanut_s2.json").read_bytes()
    m = doc.to_metric()
    assert m.kind == "closed_sphere" and m.n == 2
    assert ProfileDocument.from_metric(m, doc.metadata) == doc


def test_phase_plane_documents():
    p = read_document(DATA / "band_inner.json").to_planar()
    assert p.x[0] == 1.0 and p.y.size == 64
    with pytest.raises(DocumentError):
        read_document(DATA / "round_s2.json").to_planar()


def test_dumps_sorted_and_stable():
    assert dumps({"b": 1, "a": [0.5, True]}) == '{"a": [0.5, true], "b": 1}'


# --- configuration --------------------------------------------------------------

def test_config_strict_top_level():
    with pytest.raises(DocumentError) as exc:
        parse_config({"command": "lambda1", "colour": "red"}, ("lambda1",))
    assert exc.value.key == "colour"


def test_config_strict_tolerance_and_grid():
    with pytest.raises(DocumentError) as exc:
        parse_config({"command": "lambda1", "tolerances": {"membrship": 1e-6}}, ("lambda1",))
    assert exc.value.key == "tolerances.membrship"
    with pytest.raises(DocumentError) as exc:
        parse_config({"command": "lambda1", "grid": {"pts": 3}}, ("lambda1",))
    assert exc.value.key == "grid.pts"


@pytest.mark.parametrize("cfg,key", [
    ({"command": "lambda1", "params": {"k": 0.5, "metric": "data/round_s2.json"}, "extra": 1}, "extra"),
    ({"command": "lambda1", "params": {"k": 0.5, "metric": "data/round_s2.json"}, "tolerances": {"x": 1}},
     "tolerances.x"),
    ({"command": "lambda1", "params": {"k": 0.5, "metric": "data/round_s2.json", "kk": 2}}, "--kk"),
    ({"command": "lambda1", "params": {"k": 0.5, "metric": "data/round_s2.json"}, "outputs": {"plot": "p"}},
     "outputs.plot"),
    ({"command": "frobnicate"}, "command"),
])
def test_cli_config_unknown_key_exit_2(tmp_path, monkeypatch, cfg, key):
    monkeypatch.chdir(ROOT)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    code, out = cli("--config", path)
    assert code == 2
    assert out["exit_code"] == 2 and out["key"] == key


def test_cli_config_runs(monkeypatch):
    monkeypatch.chdir(ROOT)
    code, out = cli("--config", DATA / "config_lambda1.json")
    assert code == 0
    assert out["lambda1"] == pytest.approx(1.0, abs=1e-9)


# --- subcommands ------------------------------------------------------------------

def test_lambda1_round_s2():
    code, out = cli("lambda1", "--metric", DATA / "round_s2.json", "--k", 0.5)
    assert code == 0
    assert out["lambda1"] == pytest.approx(1.0, abs=1e-9)
    assert out["in_strict"]


def test_bartnik_sequence_csv(tmp_path):
    path = tmp_path / "masses.csv"
    code, out = cli("bartnik-sequence", "--horizon", DATA / "round_s2.json", "--eps-count", 12, "--out", path)
    assert code == 0
    assert out["final_mass"] <= 0.5 + 1e-3
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 12
    masses = [float(r["mass"]) for r in rows]
    assert masses == sorted(masses, reverse=True)
    assert float(rows[-1]["mass"]) == out["final_mass"]


CHECK_RUNS = [
    ("lambda1", "--metric", DATA / "peanut_s2.json", "--k", 0.5),
    ("geometry", "--metric", DATA / "perturbed_s3.json"),
    ("geometry", "--metric", DATA / "product_tube.json"),
    ("path", "--metric", DATA / "peanut_s2.json"),
    ("collar", "--metric", DATA / "peanut_s2.json"),
    ("collar", "--metric", DATA / "peanut_s2.json", "--minimal"),
    ("glue", "--p1", DATA / "band_inner.json", "--p2", DATA / "band_outer.json"),
    ("bend", "--m1", 1, "--m2", 1.05, "--rho1", 2.5, "--rho2", 4),
    ("bartnik-sequence", "--horizon", DATA / "round_s2.json", "--eps-count", 4),
    ("smooth",),
    ("smooth", "--cutoff", "chi", "--eps1", 0.1),
    ("smooth", "--tube", DATA / "product_tube.json", "--log-inv-delta", 30),
    ("flow", "--metric", DATA / "perturbed_s3.json", "--dt", 1e-3, "--T", 0.05),
    ("check",),
]


@pytest.mark.parametrize("argv", CHECK_RUNS, ids=lambda a: "-".join(str(x) for x in a[:1] + a[-1:]))
def test_check_mode_per_subcommand(argv):
    code, out = cli(*argv, "--check") if argv[0] != "check" else cli(*argv)
    assert out["mode"] == "check"
    assert out["checks"] and all({"name", "pass"} <= set(e) for e in out["checks"])
    failed = [e["name"] for e in out["checks"] if not e["pass"]]
    assert code == 0 and out["passed"], failed


def test_perturbed_s3_flow_monotone():
    for k in (0.25, 0.5, 1.0):
        code, out = cli("flow", "--metric", DATA / "perturbed_s3.json", "--dt", 1e-3, "--T", 0.05, "--k", k)
        assert code == 0 and out["min_dlambda_dt"] > 0


def test_failed_check_exits_3():
    # product collar: sigma0 = 0, so k = 0 is the identity and every entry passes
    base = ("smooth", "--tube", DATA / "product_tube.json", "--log-inv-delta", 30, "--check")
    code, out = cli(*base, "--k-target", 0.0)
    assert code == 0 and out["passed"]
    # bending the boundary sff to k = -0.1 costs more scalar curvature than eta
    code, out = cli(*base, "--k-target", -0.1)
    assert code == 3 and not out["passed"]
    assert [e["name"] for e in out["checks"] if not e["pass"]] == ["sff_scalar_curvature_drop"]


def test_smooth_check_on_schwarzschild_tube(tmp_path):
    from horizonforge.geomcore import WarpedMetric
    from horizonforge.schwarzschild import SchwarzschildOrbit

    fwd = SchwarzschildOrbit(1.0, 2).tube_profile(1.5, 1.0, 4097)
    inward = WarpedMetric("tube", 2, fwd.grid, fwd.profile[::-1].copy())
    path = tmp_path / "schw.json"
    write_document(ProfileDocument.from_metric(inward), path)
    code, out = cli("smooth", "--tube", path, "--C", 1.0, "--log-inv-delta", 30, "--window", 0.3, "--check")
    assert code == 0 and out["passed"]
    entry = {e["name"]: e for e in out["checks"]}["boundary_sff_preserved"]
    assert entry["value"] <= 1e-9


def test_unattainable_eta_exits_3():
    code, out = cli("smooth", "--tube", DATA / "product_tube.json", "--delta", 1e-3)
    assert code == 3 and out["error"] == "SmoothingError"


def test_numerical_failure_exit_3(monkeypatch):
    monkeypatch.setenv("HORIZONFORGE_TOL", json.dumps({"eig_max_iter": 1}))
    code, out = cli("lambda1", "--metric", DATA / "peanut_s2.json", "--k", 0.5)
    assert code == 3 and out["error"] == "EigenSolverError"


def test_tolerance_env_validated(monkeypatch):
    monkeypatch.setenv("HORIZONFORGE_TOL", json.dumps({"bogus": 1}))
    code, out = cli("lambda1", "--metric", DATA / "round_s2.json", "--k", 0.5)
    assert code == 2 and out["key"] == "bogus"


def test_tolerance_env_changes_verdict(monkeypatch):
    args = ("lambda1", "--metric", DATA / "round_s2.json", "--k", 0.5)
    _, base = cli(*args)
    monkeypatch.setenv("HORIZONFORGE_TOL", json.dumps({"membership": 10.0}))
    _, loose = cli(*args)
    assert base["in_strict"] and not loose["in_strict"]
    assert loose["in_weak"]


@pytest.mark.parametrize("argv,key", [
    (("lambda1", "--metric", DATA / "round_s2.json"), "--k"),
    (("lambda1", "--metric", DATA / "round_s2.json", "--k", 0.5, "--colour", "red"), "--colour"),
    (("bogus",), None),
    ((), "command"),
])
def test_usage_errors_exit_2(argv, key):
    code, out = cli(*argv)
    assert code == 2 and out["exit_code"] == 2
    if key is not None:
        assert out["key"] == key


def test_missing_input_file_exit_2(tmp_path):
    code, out = cli("geometry", "--metric", tmp_path / "nope.json")
    assert code == 2


def test_wrong_document_kind_exit_2():
    code, out = cli("flow", "--metric", DATA / "product_tube.json", "--dt", 1e-3, "--T", 0.01)
    assert code == 2 and out["key"] == "kind"


def test_outputs_deterministic(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"geo{i}.csv"
        buf = io.StringIO()
        run(["geometry", "--metric", str(DATA / "peanut_s2.json"), "--out", str(path)], stdout=buf)
        outs.append((buf.getvalue(), path.read_bytes()))
    assert outs[0] == outs[1]
    buf1, buf2 = io.StringIO(), io.StringIO()
    run(["check"], stdout=buf1)
    run(["check"], stdout=buf2)
    assert buf1.getvalue() == buf2.getvalue()
