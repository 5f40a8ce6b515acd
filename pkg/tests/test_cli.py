import csv
import json

import numpy as np
import pytest

from rnnchaos import highdim
from rnnchaos.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _config_line(path):
    return json.loads(path.read_text().split("\n", 1)[0][len("# config:") :])


def test_detect_reference_triangle(capsys):
    code, out, _ = run(capsys, "detect", "--reference", "triangle")
    assert code == 0
    rec = json.loads(out)
    assert rec["is_period3"] and rec["reliable"]
    np.testing.assert_allclose(sorted(rec["cycle"]), [2 / 9, 4 / 9, 8 / 9], atol=1e-9)


def test_detect_is_deterministic(capsys):
    a = run(capsys, "detect", "--k", "64", "--scheme", "he-normal", "--seed", "7")
    b = run(capsys, "detect", "--k", "64", "--scheme", "he-normal", "--seed", "7")
    assert a == b and a[0] == 0


def test_detect_bogus_scheme(capsys):
    code, _, err = run(capsys, "detect", "--k", "8", "--scheme", "bogus", "--seed", "1")
    assert code == 2 and "bogus" in err


def test_detect_budget_exit(capsys):
    code, _, err = run(capsys, "detect", "--reference", "triangle", "--budget", "4")
    assert code == 3 and "budget" in err


def test_detect_screen_and_numeric(capsys):
    code, out, _ = run(capsys, "detect", "--k", "3", "--seed", "1", "--detector", "screen")
    assert code == 0 and json.loads(out)["lower_bound_only"]
    code, out, _ = run(capsys, "detect", "--reference", "triangle", "--detector", "numeric", "--grid", "20000")
    rec = json.loads(out)
    assert rec["method"] == "numeric" and rec["is_period3"]


def test_detect_emit_plot(tmp_path, capsys):
    grid = tmp_path / "fp.csv"
    code, _, _ = run(capsys, "detect", "--reference", "triangle", "--emit-plot", str(grid), "--plot")
    assert code == 0
    rows = list(csv.DictReader(grid.read_text().splitlines()[1:]))
    assert len(rows) == 2001
    x = float(rows[500]["x"])
    assert float(rows[500]["f"]) == pytest.approx(2 * x)
    assert (tmp_path / "fp.png").stat().st_size > 0


def test_generated_seed_is_reported(capsys):
    code, out, err = run(capsys, "detect", "--k", "8")
    seed = int(err.split("master seed:")[1].split()[0])
    assert json.loads(out)["seed"] == seed


def test_sweep_header_reproduces_file(tmp_path, capsys):
    first = tmp_path / "a.csv"
    code, _, _ = run(capsys, "sweep", "--k", "16,32", "--sigma2", "2,500", "--trials", "60", "--seed", "3", "--output", str(first))
    assert code == 0
    cfg = _config_line(first)
    assert cfg["seed"] == 3 and cfg["k"] == [16, 32]
    assert not (tmp_path / "a.csv.partial").exists()
    second = tmp_path / "b.csv"
    code, _, _ = run(capsys, "--config", str(first), "sweep", "--output", str(second))
    assert code == 0
    a_lines = first.read_text().splitlines()
    b_lines = second.read_text().splitlines()
    assert a_lines[1:] == b_lines[1:]
    # re-feeding b's own header reproduces b byte for byte
    third = tmp_path / "c.csv"
    cfg_b = _config_line(second)
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps(cfg_b))
    run(capsys, "--config", str(cfg_file), "sweep", "--output", str(third))
    cfg_c = dict(_config_line(third), output=cfg_b["output"])
    assert cfg_c == cfg_b and third.read_text().splitlines()[1:] == b_lines[1:]


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": [8], "trials": 10, "seed": 1}))
    code, out, _ = run(capsys, "--config", str(cfg), "sweep", "--trials", "20")
    header = json.loads(out.splitlines()[0][len("# config:") :])
    assert header["trials"] == 20 and header["k"] == [8]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"wibble": 1}))
    code, _, _ = run(capsys, "--config", str(cfg), "sweep", "--seed", "1")
    assert code == 2


def test_sweep_jsonl(capsys):
    code, out, _ = run(capsys, "sweep", "--k", "8", "--trials", "20", "--seed", "1", "--format", "jsonl")
    lines = [json.loads(l) for l in out.splitlines()]
    assert "config" in lines[0] and lines[1]["n_trials"] == 20


def test_io_error_exit(tmp_path, capsys):
    code, _, _ = run(capsys, "sweep", "--k", "8", "--trials", "5", "--seed", "1", "--output", str(tmp_path / "no" / "x.csv"))
    assert code == 4


def test_plot_needs_output(capsys):
    code, _, err = run(capsys, "sweep", "--k", "8", "--trials", "5", "--seed", "1", "--plot")
    assert code == 2


def test_sweep_plot(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = run(capsys, "sweep", "--k", "16", "--sigma2", "2,100", "--trials", "20", "--seed", "1", "--output", str(out), "--plot")
    assert code == 0 and (tmp_path / "s.png").stat().st_size > 0


def test_regions_reference_triangle(capsys):
    code, out, err = run(capsys, "regions", "--reference", "triangle", "--t", "10")
    rows = list(csv.DictReader(out.splitlines()[1:]))
    assert [int(r["regions"]) for r in rows] == [2**t for t in range(1, 11)]
    assert json.loads(err)["fitted_rate"] == pytest.approx(2.0)


def test_regions_perturbed(capsys):
    code, out, err = run(capsys, "regions", "--reference", "triangle", "--t", "6", "--noise", "0.05", "--trials", "4", "--seed", "2")
    rows = list(csv.DictReader(out.splitlines()[1:]))
    assert code == 0 and len(rows) == 8
    assert {r["mode"] for r in rows} == {"shared", "independent"}


def test_scramble_non_chaotic_decays(capsys):
    code, out, _ = run(capsys, "scramble", "--k", "256", "--scheme", "custom-variance", "--sigma2", "low-variance", "--seed", "4", "--t", "150", "--x0", "0.4")
    assert code == 0
    d = [float(r["d_t"]) for r in csv.DictReader(out.splitlines()[1:])]
    assert len(d) == 151 and max(d[75:]) < 1e-6


def test_scramble_search_finds_chaotic_seed(tmp_path, capsys):
    out = tmp_path / "sc.csv"
    code, _, err = run(capsys, "scramble", "--k", "64", "--sigma2", "1000", "--seed", "1", "--search", "50", "--output", str(out), "--plot")
    assert code == 0 and (tmp_path / "sc.png").exists()


def test_highdim_with_idx(tmp_path, capsys):
    idx = tmp_path / "imgs.idx"
    highdim.write_idx(idx, np.random.default_rng(0).integers(0, 256, size=(5, 4, 4), dtype=np.uint8))
    out = tmp_path / "h.csv"
    traces = tmp_path / "traces.csv"
    code, _, _ = run(
        capsys, "highdim", "--d", "16", "--sigma", "0.5,4", "--trials", "30", "--t", "8", "--seed", "2",
        "--idx", str(idx), "--output", str(out), "--traces", str(traces), "--plot",
    )
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()[1:]))
    assert len(rows) == 4 and {r["scheme"] for r in rows} == {"he-normal", "glorot-normal"}
    assert float(rows[0]["fraction_norm_gt_1"]) <= float(rows[1]["fraction_norm_gt_1"])
    assert traces.exists() and (tmp_path / "h.he-normal.png").exists()


def test_table_small(capsys):
    code, out, _ = run(capsys, "table", "--trials", "50", "--seed", "1", "--schemes", "he-normal,glorot-uniform")
    rows = list(csv.DictReader(out.splitlines()[1:]))
    assert code == 0 and [r["scheme"] for r in rows] == ["he-normal", "glorot-uniform"]
    code, out, _ = run(capsys, "table", "--trials", "20", "--seed", "1", "--schemes", "he-normal", "--activation", "tanh", "--grid", "10000")
    assert list(csv.DictReader(out.splitlines()[1:]))[0]["detector"] == "numeric"
