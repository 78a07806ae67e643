"""Scenario config parsing, figure emission and the command-line entry point."""
import csv
import json
import math

import numpy as np
import pytest

from forwardnash import (ConfigError, FigureSpec, bundled_scenario_path,
                         default_figure_specs, emit_figure, load_scenario,
                         parse_scenario, run_scenario)
from forwardnash.cli import main
from forwardnash.figures import FIGURE_IDS

MINIMAL = """
[scenario]
name = "tiny"
kind = "nplayer"

[grid]
t_end = 0.25
n_steps = 50

[simulation]
n_paths = 100
seed = 7

[[agents]]
alpha = 2.0
theta = 0.6
mu = 0.3
nu = 0.0
sigma = 1.0
lam = 1.0
count = 2
"""


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def test_parse_minimal():
    cfg = parse_scenario(MINIMAL)
    assert cfg.name == "tiny" and cfg.kind == "nplayer"
    assert len(cfg.agents) == 2  # count expands into the stored tuple
    assert cfg.agents[0] == cfg.agents[1]
    assert cfg.grid.n_steps == 50 and cfg.n_paths == 100
    assert len(cfg.source_sha256) == 64
    pop = cfg.population()
    assert pop.n == 2 and pop.kind == "nplayer"


@pytest.mark.parametrize("mangle,loc", [
    (lambda s: s.replace('kind = "nplayer"', 'kind = "solo"'), "scenario.kind"),
    (lambda s: s.replace("n_steps = 50", "n_steps = 50\ndt = 0.1"), "grid"),
    (lambda s: s.replace("t_end = 0.25", "t_end = -1.0"), "grid.t_end"),
    (lambda s: s.replace("alpha = 2.0", "alpha = 2.0\nshade = 1"), "agents[0]"),
    (lambda s: s.replace("[grid]", "[grid]\nwobble = 3"), "grid"),
    (lambda s: s + '\n[figures]\nids = ["mystery_plot"]\n', "figures.ids"),
    (lambda s: s + '\n[verification]\ntasks = ["sorcery"]\n', "verification.tasks"),
    (lambda s: s.replace("count = 2", "count = 0"), "count"),
    (lambda s: s.replace("theta = 0.6", "theta = 1.6"), "agents[0]"),
], ids=["kind", "grid-both", "t-end", "agent-key", "grid-key",
        "figure-id", "task", "count", "theta"])
def test_parse_errors_carry_location(mangle, loc):
    with pytest.raises(ConfigError, match=loc.replace("[", r"\[").replace("]", r"\]")):
        parse_scenario(mangle(MINIMAL))


def test_verification_options_must_match_tasks():
    text = MINIMAL + '\n[verification]\ntasks = ["martingale"]\n[verification.gamma_law]\nc0 = 0.5\n'
    with pytest.raises(ConfigError, match="gamma_law"):
        parse_scenario(text)


def test_bundled_scenarios_load():
    for name in ("paper_figures", "verification_suite"):
        cfg = load_scenario(bundled_scenario_path(name))
        assert cfg.name == name
    with pytest.raises(ConfigError):
        bundled_scenario_path("missing_scenario")


def test_figure_spec_validation():
    with pytest.raises(ValueError, match="unknown figure id"):
        FigureSpec("spaghetti")
    with pytest.raises(ValueError, match="steps"):
        FigureSpec("K_surface", {"alpha": (0.1, 2.0, 1)})
    with pytest.raises(ValueError, match="max > min"):
        FigureSpec("K_surface", {"alpha": (2.0, 0.1, 5)})
    spec = default_figure_specs()["K_surface"]
    assert spec.axis("alpha").shape == (30,)
    with pytest.raises(ValueError, match="missing fixed parameter"):
        spec.param("nonexistent")


def test_default_specs_cover_all_ids():
    specs = default_figure_specs()
    assert set(specs) == set(FIGURE_IDS)
    # the preference grid never touches the log-utility point
    alphas = specs["K_surface"].axis("alpha")
    assert np.min(np.abs(alphas - 1.0)) > 1e-3


def test_k_surface_csv(tmp_path):
    path = emit_figure(default_figure_specs()["K_surface"], tmp_path)
    rows = read_csv(path)
    assert len(rows) == 30 * 21
    for row in rows:
        K = float(row["K"])
        theta = float(row["theta"])
        alpha = float(row["alpha"])
        if theta == 0.0:
            assert row["K"] == "0"
        else:
            assert math.copysign(1.0, K) == math.copysign(1.0, alpha - 1.0)


def test_q_sign_region_marks_zero_volatility(tmp_path):
    path = emit_figure(default_figure_specs()["q_sign_region"], tmp_path)
    rows = read_csv(path)
    zero_block = [r for r in rows if float(r["delta_zb"]) == 0.0]
    assert zero_block and all(r["q"] == "nan" for r in zero_block)
    assert {r["regime"] for r in zero_block} <= {"DeterministicPositive",
                                                 "DeterministicExtinction"}
    live = [r for r in rows if float(r["delta_zb"]) == 0.5 and r["q"] != "nan"]
    assert {"GammaLimit", "ExtinctionToZero"} <= {r["regime"] for r in live}


def test_consumption_surfaces_sign_split(tmp_path):
    specs = default_figure_specs()
    pos = read_csv(emit_figure(specs["consumption_surface_Kpos"], tmp_path))
    neg = read_csv(emit_figure(specs["consumption_surface_Kneg"], tmp_path))
    for rows, ratio in ((pos, 1.4), (neg, 0.7)):
        for row in rows:
            alpha, theta = float(row["alpha"]), float(row["theta"])
            c0 = float(row["c0_star"])
            if theta == 0.0:
                # no competition: c0 = ratio^(1/alpha) exactly
                assert c0 == pytest.approx(ratio ** (1.0 / alpha), rel=1e-14)


def test_figures_pipeline_byte_identical(tmp_path):
    out1 = run_scenario(bundled_scenario_path("paper_figures"),
                        steps=("figures",), out_dir=tmp_path / "a")
    out2 = run_scenario(bundled_scenario_path("paper_figures"),
                        steps=("figures",), out_dir=tmp_path / "b")
    assert out1.exit_code == 0 and out2.exit_code == 0
    csvs1 = sorted((out1.run_dir / "figures").glob("*.csv"))
    assert len(csvs1) == len(FIGURE_IDS)
    for p1 in csvs1:
        p2 = out2.run_dir / "figures" / p1.name
        assert p1.read_bytes() == p2.read_bytes()
    manifest = json.loads((out1.run_dir / "manifest.json").read_text())
    assert manifest["scenario"] == "paper_figures"
    assert manifest["backend"] in ("numba", "numpy")
    assert len(manifest["config_sha256"]) == 64
    assert sorted(manifest["outputs"]) == manifest["outputs"]


def test_run_scenario_simulate_step(tmp_path):
    cfg_path = tmp_path / "tiny.toml"
    cfg_path.write_text(MINIMAL)
    res = run_scenario(cfg_path, steps=("simulate",), out_dir=tmp_path / "runs")
    assert res.exit_code == 0
    rows = read_csv(res.run_dir / "equilibrium_paths.csv")
    assert len(rows) == 51
    assert {"t", "c_tilde", "c_0", "c_1", "interaction"} <= set(rows[0])
    assert float(rows[-1]["interaction"]) <= 1e-12


def test_cli_validate_and_errors(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.toml"
    cfg_path.write_text(MINIMAL)
    assert main(["validate", str(cfg_path)]) == 0
    out = capsys.readouterr().out
    assert "tiny" in out
    assert main(["validate", str(tmp_path / "absent.toml")]) == 2
    assert "absent" in capsys.readouterr().err
    broken = tmp_path / "broken.toml"
    broken.write_text(MINIMAL.replace("alpha = 2.0", "alpha = -2.0"))
    assert main(["validate", str(broken)]) == 2


def test_cli_simulate_quiet(tmp_path):
    cfg_path = tmp_path / "tiny.toml"
    cfg_path.write_text(MINIMAL)
    code = main(["simulate", str(cfg_path), "--output-dir", str(tmp_path / "runs"),
                 "--quiet", "--seed", "3"])
    assert code == 0
    manifest = json.loads((tmp_path / "runs" / "tiny" / "manifest.json").read_text())
    assert manifest["seed"] == 3


def test_cli_resolves_bundled_names(tmp_path, capsys):
    assert main(["validate", "paper_figures"]) == 0
    assert main(["validate", "no_such_bundle"]) == 2
