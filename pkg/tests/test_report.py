import os

from plumetrace.harness import export_results, run_batch
from plumetrace.report import render_report
from plumetrace.scenario import load_scenario


def test_report_renders_figures(tmp_path):
    cfg = load_scenario("no_meander_80_60")
    cfg.episode.T = 3.0
    batch = run_batch(cfg, "seek+anchor_heuristic", 2, seed_base=0,
                      record_traces=True)
    out = tmp_path / "results"
    export_results(batch, out, export_trajectories=True)
    figures = render_report([str(out)], tmp_path / "figs")
    assert any(f.endswith("cdf.png") for f in figures)
    assert any(f.endswith("success.png") for f in figures)
    assert any("traj_" in f for f in figures)
    for f in figures:
        assert os.path.getsize(f) > 0


def test_cdf_multiple_runs(tmp_path):
    cfg = load_scenario("no_meander_80_60")
    cfg.episode.T = 2.0
    dirs = []
    for k, controller in enumerate(["seek+anchor_heuristic"]):
        batch = run_batch(cfg, controller, 2, seed_base=k)
        out = tmp_path / f"r{k}"
        export_results(batch, out)
        dirs.append(str(out))
    from plumetrace.report import render_cdf
    path = render_cdf(dirs, tmp_path / "cdf.png", labels=["heuristic"])
    assert os.path.getsize(path) > 0
