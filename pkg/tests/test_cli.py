import json

import pytest

from collapsemap.cli import json_text, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("argv, code", [
    (["--sigma", "1e-7", "--lambda", "1e-16"], 0),
    (["--sigma", "1e-7", "--lambda", "1"], 10),
    (["--sigma", "1e-7", "--lambda", "1e-25"], 11),
    (["--ontology", "flash", "--sigma", "1e-2", "--lambda", "1e10"], 12),
])
def test_classify_exit_codes(capsys, argv, code):
    assert run(capsys, "classify", *argv)[0] == code


def test_classify_json_report(capsys):
    code, out, _ = run(capsys, "classify", "--json", "--sigma", "1e-7", "--lambda", "1")
    rep = json.loads(out)
    assert code == 10
    assert rep["status"] == "refuted" or rep["status"].lower().startswith("ref")
    assert rep["refuted_by"]
    assert '"sigma": 1.00000e-07' in out


def test_global_json_flag(capsys):
    code, out, _ = run(capsys, "--json", "classify", "--sigma", "1e-7", "--lambda", "1e-16")
    assert code == 0 and json.loads(out)["unsatisfactory"] is False


@pytest.mark.parametrize("argv", [
    ["classify", "--sigma", "0", "--lambda", "1"],
    ["classify", "--sigma", "1e-7"],
    ["classify", "--theory", "csl", "--ontology", "flash", "--sigma", "1e-7", "--lambda", "1"],
    ["diagram", "--resolution", "10", "--out", "x.svg"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(capsys, tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    capsys.readouterr()
    assert code == 2


def test_bad_data_file_exits_3(capsys, tmp_path):
    bad = tmp_path / "bad.tab"
    bad.write_text("1999;X;ref;abc;1;1;1;1;1;1;0\n")
    code, _, err = run(capsys, "classify", "--data", str(bad), "--sigma", "1e-7", "--lambda", "1")
    assert code == 3 and err


def test_missing_data_file_exits_3(capsys, tmp_path):
    code, _, _ = run(capsys, "table", "--data", str(tmp_path / "nope.tab"))
    assert code == 3


def test_empty_data_file(capsys, tmp_path):
    empty = tmp_path / "empty.tab"
    empty.write_text("# nothing here\n")
    code, out, _ = run(capsys, "--json", "table", "--data", str(empty))
    assert code == 0 and json.loads(out)["rows"] == []


def test_table_checks(capsys):
    code, out, _ = run(capsys, "--json", "table")
    rows = json.loads(out)["rows"]
    checks = [r["check"] for r in rows]
    assert code == 0
    assert checks.count("pass-through") == 2
    assert checks.count("ok") == 9
    assert len(rows) == 11


def test_diagram_writes_svg(capsys, tmp_path):
    out_svg = tmp_path / "d.svg"
    code, out, _ = run(capsys, "--json", "diagram", "--resolution", "60", "--out", str(out_svg))
    rep = json.loads(out)
    assert code == 0
    assert out_svg.read_text().startswith("<?xml")
    assert rep["fills"][:2] == ["fill-pur", "fill-err"]
    assert [m["label"] for m in rep["markers"]] == ["GRW", "Adler"]


def test_fig3_diagram(capsys, tmp_path):
    out_svg = tmp_path / "g.svg"
    code, out, _ = run(capsys, "--json", "diagram", "--fig3", "--resolution", "60",
                       "--out", str(out_svg))
    rep = json.loads(out)
    assert code == 0
    assert rep["curves"] == ["outline-v-1930", "outline-v-1988", "outline-v-2011",
                             "outline-v-proposed"]


def test_envelope_text_and_plot(capsys, tmp_path):
    plot = tmp_path / "env.svg"
    code, out, _ = run(capsys, "envelope", "--plot", str(plot))
    assert code == 0
    assert out.strip()
    assert 'id="boundary-envelope"' in plot.read_text()


def test_envelope_json_vertices_increase(capsys):
    code, out, _ = run(capsys, "--json", "envelope", "--log-sigma=-10:-2")
    verts = json.loads(out)["vertices"]
    xs = [v["log10_sigma"] for v in verts]
    assert code == 0
    assert xs[0] == pytest.approx(-10) and xs[-1] == pytest.approx(-2)
    assert xs == sorted(xs)


def test_coverage_reports_witness(capsys):
    code, out, _ = run(capsys, "--json", "coverage", "--layers", "all", "--resolution", "60")
    rep = json.loads(out)
    assert code == 0 and rep["covered"] is False and rep["witness"] is not None
    w = rep["witness"]
    assert run(capsys, "classify", "--layers", "all", "--sigma", repr(w["sigma"]),
               "--lambda", repr(w["lambda"]))[0] == 0


def test_config_file_overrides_thresholds(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# raise the PUR floor\nthresholds.gamma_min = 1e30\n"
                   "thresholds.gamma_over_sigma2_min = 1e50\n")
    base = run(capsys, "classify", "--sigma", "1e-7", "--lambda", "1e-16")[0]
    tuned = run(capsys, "classify", "--config", str(cfg), "--sigma", "1e-7", "--lambda", "1e-16")[0]
    assert (base, tuned) == (0, 11)


def test_config_file_rejects_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("colour = red\n")
    assert run(capsys, "classify", "--config", str(cfg), "--sigma", "1e-7", "--lambda", "1")[0] == 2


def test_simulate_grw_echoes_seed(capsys, tmp_path):
    log = tmp_path / "flashes.txt"
    code, out, err = run(capsys, "--json", "simulate-grw", "--sigma", "1e-7", "--lambda-eff", "1",
                         "--trials", "20", "--seed", "42", "--mass", "proton",
                         "--flash-log", str(log))
    rep = json.loads(out)
    assert code == 0
    assert "# seed 42" in err
    assert rep["seed"] == 42 and "oracle_gain_per_collapse" in rep
    assert len(log.read_text().splitlines()) >= rep["flash_count"]
    again = run(capsys, "--json", "simulate-grw", "--sigma", "1e-7", "--lambda-eff", "1",
                "--trials", "20", "--seed", "42", "--mass", "proton",
                "--flash-log", str(log))[1]
    assert again == out


def test_simulate_csl(capsys):
    code, out, err = run(capsys, "--json", "simulate-csl", "--sigma", "1e-7", "--lambda-eff", "1",
                         "--trials", "8", "--horizon", "0.1", "--seed", "3")
    rep = json.loads(out)
    assert code == 0 and "# seed 3" in err and rep["seed"] == 3


def test_json_text_formats_floats():
    text = json_text({"a": 0.1, "b": [1, 2.5], "c": float("nan")})
    assert json.loads(text) == {"a": 0.1, "b": [1, 2.5], "c": None}
    assert "1.00000e-01" in text and "2.50000e+00" in text
