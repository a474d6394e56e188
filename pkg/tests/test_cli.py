import json
import os
import subprocess
import sys

import numpy as np
import pytest

from critic_landscape import cli, metrics, rundir
from critic_landscape.rundir import RunDirectory, read_csv, read_json

TINY = {
    "system": "cartpole",
    "seed": 2,
    "train": {"episodes": 4, "max_steps_per_episode": 80},
    "perf": {"horizon": 100},
    "landscape": {"n_alpha": 11, "n_beta": 11},
}


def write_config(tmp_path, data=TINY, name="tiny.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def trained(tmp_path):
    out = tmp_path / "run"
    assert run_cli("train", write_config(tmp_path), "-o", out, "-q") == 0
    return out


def snapshot_dir(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_writes_run_directory(trained, capsys):
    files = set(snapshot_dir(trained))
    assert {"config.json", "weights.csv", "params.json", "summary.json", "manifest.json"} <= files
    assert sum(f.startswith("episodes/") for f in files) == 4
    header, data = read_csv(trained / "weights.csv")
    assert header[0] == "episode" and data.shape == (4, 37)
    assert RunDirectory(trained).verify_manifest() == []
    assert read_json(trained / "summary.json")["episodes_run"] == 4


def test_train_prints_progress(tmp_path, capsys):
    run_cli("train", write_config(tmp_path), "-o", tmp_path / "r")
    out = capsys.readouterr().out
    assert "episode    1:" in out and "steps" in out


def test_episode_log_roundtrip(trained):
    lg = rundir.read_episode(trained / rundir.episode_file(1))
    first = (trained / rundir.episode_file(1)).read_text().splitlines()
    assert json.loads(first[0])["episode"] == 1
    assert json.loads(first[1])["r"] is None  # NaN stored as null
    assert np.isnan(lg.r[0]) and lg.states.shape[1] == 4


def test_zero_episodes_gives_valid_directory(tmp_path):
    cfg = dict(TINY, train={"episodes": 0})
    out = tmp_path / "zero"
    assert run_cli("train", write_config(tmp_path, cfg), "-o", out, "-q") == 0
    header, data = read_csv(out / "weights.csv")
    assert data.shape[0] == 0 and len(header) == 37
    assert RunDirectory(out).verify_manifest() == []
    # a landscape needs at least three weight vectors
    assert run_cli("landscape", out) == cli.EXIT_DEGENERATE


def test_rerun_is_noop_and_force_needed_for_changes(tmp_path, trained):
    before = snapshot_dir(trained)
    assert run_cli("train", write_config(tmp_path), "-o", trained, "-q") == 0
    assert snapshot_dir(trained) == before
    other = write_config(tmp_path, dict(TINY, seed=3), "other.json")
    assert run_cli("train", other, "-o", trained, "-q") == cli.EXIT_IO
    assert run_cli("train", other, "-o", trained, "-q", "--force") == 0
    assert read_json(trained / "config.json")["seed"] == 3


def test_root_environment_variable(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ROOT_ENV, str(tmp_path / "root"))
    assert run_cli("train", write_config(tmp_path), "-o", "rel", "-q") == 0
    assert (tmp_path / "root" / "rel" / "config.json").is_file()
    monkeypatch.chdir(tmp_path)
    cfg = dict(TINY, output_dir="from-config")
    assert run_cli("train", write_config(tmp_path, cfg, "od.json"), "-q") == 0
    assert (tmp_path / "root" / "from-config" / "manifest.json").is_file()


def test_validation_and_io_exit_codes(tmp_path):
    bad = write_config(tmp_path, {"system": "cartpole", "nope": 1}, "bad.json")
    assert run_cli("train", bad) == cli.EXIT_VALIDATION
    assert run_cli("train", tmp_path / "missing.json") == cli.EXIT_IO
    assert run_cli("indices", tmp_path / "nowhere") == cli.EXIT_IO


# ---------------------------------------------------------------------------
# landscape / indices / perf
# ---------------------------------------------------------------------------

def test_landscape_and_indices(trained, capsys):
    assert run_cli("landscape", trained) == 0
    base = trained / "landscape" / "pca_final"
    header, grid = read_csv(base / "grid.csv")
    assert header == ["alpha", "beta", "loss"] and grid.shape == (121, 3)
    assert np.all(np.diff(grid[:11, 0]) > 0) and np.all(grid[:11, 1] == grid[0, 1])  # alpha inner
    plane = read_json(base / "plane.json")
    center = grid[(grid[:, 0] == 0) & (grid[:, 1] == 0)]
    assert center[0, 2] == plane["L_star"]
    assert run_cli("indices", trained) == 0
    idx = read_json(base / "indices.json")
    for key in ("sharpness", "basin_area", "log_kappa", "normalized_cost", "epsilon", "rho", "r_fit", "iqr"):
        assert key in idx
    assert "Sharpness" in capsys.readouterr().out
    assert RunDirectory(trained).verify_manifest() == []


def test_random_projection_is_reproducible(trained):
    assert run_cli("landscape", trained, "--projection", "random", "--seed", 7) == 0
    first = (trained / "landscape" / "random-seed7_final" / "grid.csv").read_bytes()
    assert run_cli("landscape", trained, "--projection", "random", "--seed", 7, "--force") == 0
    assert (trained / "landscape" / "random-seed7_final" / "grid.csv").read_bytes() == first


def test_snapshot_reference_and_bounds(trained):
    assert run_cli("landscape", trained, "--reference", "episode=2") == 0
    assert (trained / "landscape" / "pca_episode2" / "grid.csv").is_file()
    assert run_cli("landscape", trained, "--reference", "episode=99") == cli.EXIT_VALIDATION
    assert run_cli("landscape", trained, "--alpha-min", -1) == cli.EXIT_VALIDATION
    assert run_cli("landscape", trained, "--alpha-min", -1, "--alpha-max", 1,
                   "--beta-min", -1, "--beta-max", 1, "--reference", "episode=3") == 0
    info = read_json(trained / "landscape" / "pca_episode3" / "plane.json")
    assert info["grid"]["alpha_min"] == -1.0 and info["reference_episode"] == 3


def inject_grid(root, f):
    base = root / "landscape" / "pca_final"
    info = read_json(base / "plane.json")
    g = info["grid"]
    a = np.linspace(g["alpha_min"], g["alpha_max"], g["n_alpha"])
    b = np.linspace(g["beta_min"], g["beta_max"], g["n_beta"])
    A, B = np.meshgrid(a, b)
    loss = info["L_star"] + f(A, B)
    (base / "grid.csv").write_text(rundir.csv_text(["alpha", "beta", "loss"],
                                                   zip(A.ravel(), B.ravel(), loss.ravel())))


def test_injected_paraboloid_gives_oracle_indices(trained):
    args = ("--alpha-min", -1, "--alpha-max", 1, "--beta-min", -1, "--beta-max", 1,
            "--n-alpha", 101, "--n-beta", 101)
    assert run_cli("landscape", trained, *args) == 0
    inject_grid(trained, lambda A, B: A ** 2 + B ** 2)
    ax = np.linspace(-1, 1, 101)
    A, B = np.meshgrid(ax, ax)
    scale = metrics.iqr((A ** 2 + B ** 2).ravel())
    assert run_cli("indices", trained, "--epsilon", 1.0, "--rho", 0.25 / scale, "--force") == 0
    idx = read_json(trained / "landscape" / "pca_final" / "indices.json")
    assert idx["iqr"] == pytest.approx(scale, rel=1e-9)
    assert idx["sharpness"] * scale == pytest.approx(1.0, abs=1e-3)
    assert idx["basin_area"] == pytest.approx(np.pi / 4, rel=0.05)
    assert idx["log_kappa"] == pytest.approx(0.0, abs=1e-3) and not idx["indefinite"]


def test_constant_grid_is_degenerate(trained):
    assert run_cli("landscape", trained) == 0
    inject_grid(trained, lambda A, B: 0.0 * A)
    assert run_cli("indices", trained) == cli.EXIT_DEGENERATE


def test_perf_writes_rollout(trained):
    assert run_cli("perf", trained) == 0
    perf = read_json(trained / "perf.json")
    assert 0.0 <= perf["normalized_cost"] <= 1.0 and perf["horizon"] == 100
    header, data = read_csv(trained / "rollout.csv")
    assert header[:2] == ["t", "psi"] and header[-1] == "cost"
    assert data.shape[0] == perf["steps"]


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def test_plot_scripts(trained, capsys):
    assert run_cli("landscape", trained) == 0
    assert run_cli("plot", trained) == 0
    base = trained / "landscape" / "pca_final"
    scripts = {p.name: p.read_bytes() for p in base.glob("plot_*.py")}
    assert set(scripts) == {"plot_surface.py", "plot_contour.py"}
    assert run_cli("plot", trained) == 0
    assert {p.name: p.read_bytes() for p in base.glob("plot_*.py")} == scripts
    env = dict(os.environ, MPLBACKEND="Agg")
    for name in scripts:
        subprocess.run([sys.executable, str(base / name)], check=True, env=env, capture_output=True)
    assert (base / "surface.png").is_file() and (base / "contour.png").is_file()


def test_plot_single_point_path_warns(trained, capsys):
    assert run_cli("landscape", trained) == 0
    path = trained / "landscape" / "pca_final" / "path.csv"
    path.write_text("\n".join(path.read_text().splitlines()[:2]) + "\n")
    assert run_cli("plot", trained) == 0
    assert "warning" in capsys.readouterr().out
    script = (trained / "landscape" / "pca_final" / "plot_contour.py").read_text()
    assert "path.csv" not in script


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def fake_indices(root, **values):
    base = root / "landscape" / "pca_final"
    base.mkdir(parents=True)
    (base / "indices.json").write_text(rundir.json_text(values))


def test_compare_checks(tmp_path, capsys):
    good = dict(system="cartpole", sharpness=0.01, basin_area=1.5, log_kappa=2.0, normalized_cost=0.001,
                explained_variance=[0.7, 0.2])
    bad = dict(system="spacecraft", sharpness=0.2, basin_area=7.0, log_kappa=None, normalized_cost=0.15,
               explained_variance=[0.8, 0.1])
    fake_indices(tmp_path / "a", **good)
    fake_indices(tmp_path / "b", **bad)
    assert run_cli("compare", tmp_path / "a", tmp_path / "b") == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "Normalized cost" in out and "inf" in out and "70.0/20.0" in out
    assert out.count("[PASS]") == 5
    assert run_cli("compare", tmp_path / "b", tmp_path / "a") == cli.EXIT_CHECKS
    assert "[FAIL]" in capsys.readouterr().out


def test_format_table_columns_are_separated():
    table = cli.format_table(["x", "y"], [{"sharpness": 123456.789}, {"sharpness": 0.000123456}])
    line = [ln for ln in table.splitlines() if ln.startswith("Sharpness")][0]
    assert "123457 " in line and line.endswith("0.000123456")
