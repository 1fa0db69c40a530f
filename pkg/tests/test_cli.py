import json
import time
from pathlib import Path

import numpy as np
import pytest

from _synth import write_chfs_like
from bjel.cli import main
from bjel.design import DesignSpec, draw_sample
from bjel.methods import PreparedSample, SurveySample
from bjel.simharness import PopulationSpec, generate_population
from bjel.ustat import get_kernel

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "bjel" / "configs"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def survey_csv(path, n=120, seed=8):
    pop = generate_population(PopulationSpec(N=1200, x_shift=3.0, seed=seed))
    draw = draw_sample(DesignSpec(1200, n, "rao_sampford", pop.x), seed)
    i = draw.indices
    rows = zip(pop.y[i], draw.design_weights, pop.x[i])
    lines = ["y,d,x"] + [f"{float(a)!r},{float(b)!r},{float(c)!r}" for a, b, c in rows]
    path.write_text("\n".join(lines) + "\n")
    return pop.y[i], draw.design_weights, pop.x[i], pop.x.sum()


def test_bundled_configs_parse():
    from bjel.simharness import StudyConfig

    names = sorted(p.name for p in CONFIGS.glob("*.cfg"))
    assert "table1_rho03_n100.cfg" in names
    for p in CONFIGS.glob("*.cfg"):
        cfg = StudyConfig.from_file(p)
        assert cfg.replicates == 500 and len(cfg.methods) == 6


def test_simulate_single_replicate(tmp_path, capsys):
    out = tmp_path / "res.json"
    code, stdout, _ = run(["simulate", "--config", CONFIGS / "table1_rho03_n100.cfg", "--seed", 1,
                           "--replicates", 1, "--out", out], capsys)
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["B"] == 1 and len(payload["methods"]) == 6
    table = out.with_suffix(".txt").read_text()
    assert table == stdout
    assert len(table.strip().splitlines()) == 2 + 6


def test_simulate_is_byte_stable(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("N = 300\nn = 30\nx_shift = 3\nmethods = jel,bjel_d\nreplicates = 3\n")
    outs = []
    for k in range(2):
        code, stdout, _ = run(["simulate", "--config", cfg, "--seed", 4], capsys)
        assert code == 0
        outs.append(stdout)
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["B"] == 3


def test_simulate_errors(tmp_path, capsys):
    code, _, err = run(["simulate", "--config", tmp_path / "missing.cfg", "--seed", 1], capsys)
    assert code == 2 and "missing.cfg" in err
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(["simulate", "--config", bad, "--seed", 1], capsys)[0] == 2
    assert run(["simulate", "--config", CONFIGS / "table1_rho03_n100.cfg"], capsys)[0] == 2


def test_simulate_quality_failure(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    # a huge shift makes x nearly constant inside samples, so calibration and aux EL become singular
    cfg.write_text("N = 200\nn = 20\nx_shift = 1e12\nmethods = jel_w\nreplicates = 2\n")
    code, _, err = run(["simulate", "--config", cfg, "--seed", 1], capsys)
    assert code == 3 and "failed" in err


def test_analyze_matches_library(tmp_path, capsys):
    f = tmp_path / "s.csv"
    y, d, x, xtot = survey_csv(f)
    code, out, _ = run(["analyze", "--input", f, "--kernel", "variance", "--method", "bjel_d",
                        "--weight-col", "d", "--aux-cols", "x", "--aux-totals", repr(float(xtot)),
                        "--population-size", 1200], capsys)
    assert code == 0
    res = json.loads(out)
    sample = SurveySample(y, d, None, x, [xtot / 1200], 1200)
    ci = PreparedSample(sample, get_kernel("variance")).interval("bjel_d")
    assert res["lower"] == pytest.approx(ci.lower, abs=1e-10)
    assert res["upper"] == pytest.approx(ci.upper, abs=1e-10)
    assert res["estimate"] == pytest.approx(ci.estimate, abs=1e-10)
    assert res["n"] == 120 and res["method"] == "bjel_d"
    assert res["lower"] < res["upper"]


def test_equal_weights_collapse(tmp_path, capsys):
    f = tmp_path / "s.csv"
    survey_csv(f)
    text = f.read_text().splitlines()
    f.write_text("\n".join([text[0]] + [",".join(r.split(",")[:1] + ["5.0"] + r.split(",")[2:])
                                        for r in text[1:]]) + "\n")
    res = {}
    for m in ("bjel", "bjel_d"):
        code, out, _ = run(["analyze", "--input", f, "--kernel", "pwm", "--method", m, "--weight-col", "d"],
                           capsys)
        assert code == 0
        res[m] = json.loads(out)
    # without inclusion probabilities no fpc is applied, so n* = n*(n-1)/(n-1) = n
    assert res["bjel_d"]["scale_used"] == pytest.approx(120.0, rel=1e-9)
    spacing = (res["bjel"]["upper"] - res["bjel"]["lower"]) / 300
    assert res["bjel_d"]["lower"] == pytest.approx(res["bjel"]["lower"], abs=spacing)
    assert res["bjel_d"]["upper"] == pytest.approx(res["bjel"]["upper"], abs=spacing)


def test_analyze_text_format(tmp_path, capsys):
    f = tmp_path / "s.csv"
    survey_csv(f)
    code, out, _ = run(["analyze", "--input", f, "--kernel", "mean", "--method", "jel", "--format", "text"],
                       capsys)
    assert code == 0 and out.startswith("method      jel")


@pytest.mark.parametrize("content", [
    "",
    "y\n",
    "z\n1\n2\n3\n",
    "y\n1\nabc\n3\n",
    "y,d\n1,1\n2\n",
    "y\n1\nnan\n2\n",
    "y,y\n1,2\n",
])
def test_malformed_csv(tmp_path, capsys, content):
    f = tmp_path / "bad.csv"
    f.write_text(content)
    code, _, err = run(["analyze", "--input", f, "--kernel", "mean", "--method", "jel"], capsys)
    assert code == 2 and err.startswith("error:")


def test_analyze_input_errors(tmp_path, capsys):
    f = tmp_path / "s.csv"
    survey_csv(f)
    base = ["analyze", "--input", f, "--kernel", "pwm"]
    assert run(base + ["--method", "jel_w", "--aux-cols", "x"], capsys)[0] == 2
    assert run(base + ["--method", "jel", "--weight-col", "nope"], capsys)[0] == 2
    assert run(base + ["--method", "magic"], capsys)[0] == 2
    assert run(["analyze", "--input", tmp_path / "none.csv", "--kernel", "pwm", "--method", "jel"], capsys)[0] == 2
    g = tmp_path / "neg.csv"
    g.write_text("y,d\n1,1\n2,-1\n3,1\n")
    assert run(["analyze", "--input", g, "--kernel", "mean", "--method", "jel_d", "--weight-col", "d"],
               capsys)[0] == 2
    h = tmp_path / "tiny.csv"
    h.write_text("y\n1\n2\n")
    assert run(["analyze", "--input", h, "--kernel", "pwm", "--method", "jel"], capsys)[0] == 2


def test_analyze_degenerate_data_is_infeasible(tmp_path, capsys):
    f = tmp_path / "c.csv"
    f.write_text("y\n" + "4\n" * 30)
    code, _, err = run(["analyze", "--input", f, "--kernel", "mean", "--method", "bjel"], capsys)
    assert code == 4 and "infeasible" in err


def test_chfs_shaped_workflow(tmp_path, capsys):
    f = tmp_path / "households.csv"
    totals = write_chfs_like(f)
    results = {}
    for m in ("jel", "bjel", "jel_d", "bjel_d", "jel_w", "bjel_w"):
        aux = [] if m in ("jel", "bjel") else ["--aux-cols", "tier1,tier2",
                                                "--aux-totals", ",".join(repr(float(t)) for t in totals)]
        t0 = time.perf_counter()
        code, out, _ = run(["analyze", "--input", f, "--kernel", "variance", "--method", m, "--y-col", "happy",
                            "--weight-col", "weight", *aux], capsys)
        assert time.perf_counter() - t0 < 60
        assert code == 0
        results[m] = json.loads(out)
        assert results[m]["lower"] < results[m]["estimate"] < results[m]["upper"]
    a, b = results["bjel_d"], results["bjel_w"]
    la, lb = a["upper"] - a["lower"], b["upper"] - b["lower"]
    assert abs(a["lower"] - b["lower"]) <= 0.1 * min(la, lb)
    assert abs(a["upper"] - b["upper"]) <= 0.1 * min(la, lb)


def test_sample_command(tmp_path, capsys):
    sizes = tmp_path / "z.csv"
    sizes.write_text("z\n1\n1\n1\n1\n2\n")
    code, out, _ = run(["sample", "--population-size", 5, "--sample-size", 2, "--sizes", sizes, "--seed", 3],
                       capsys)
    assert code == 0
    rows = out.strip().splitlines()
    assert rows[0] == "index,pi,d" and len(rows) == 3
    for r in rows[1:]:
        i, pi, d = r.split(",")
        assert float(pi) == pytest.approx(2 / 3 if i == "4" else 1 / 3, rel=1e-15)
        assert float(d) == pytest.approx(1 / float(pi), rel=1e-15)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(["sample", "--population-size", 50, "--sample-size", 7, "--seed", 9, "--out", p], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(np.loadtxt(a, delimiter=",", skiprows=1)) == 7


def test_sample_errors(tmp_path, capsys):
    assert run(["sample", "--population-size", 5, "--sample-size", 5, "--seed", 1], capsys)[0] == 2
    sizes = tmp_path / "z.csv"
    sizes.write_text("z\n1\n1\n1\n5\n")
    assert run(["sample", "--population-size", 4, "--sample-size", 2, "--sizes", sizes, "--seed", 1], capsys)[0] == 2
    assert run(["sample", "--population-size", 5, "--sample-size", 2, "--sizes", sizes, "--seed", 1], capsys)[0] == 2
