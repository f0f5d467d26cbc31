import csv
import os

import numpy as np
import pytest

from stwind import cli, config, st_model, terrain
from stwind.errors import ConfigError

SMALL = """\
# small synthetic run
model.seed = 7
model.members = 3
model.k_retained = 4
synth.stations = 30
synth.times = 120
synth.cellsize = 10000
synth.dem_cellsize = 2000
features.bandwidths = 2000, 4000, 8000
output.format = {fmt}
"""

ORDER = ("synth", "clean", "features", "fit", "predict", "power", "site", "benchmark")


def write_config(tmp_path, fmt="csv", extra=""):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL.format(fmt=fmt) + extra)
    return str(p)


def run_all(cfg_path, stage_dir, *flags, stages=ORDER):
    for stage in stages:
        rc = cli.main([stage, "--config", cfg_path, "--stage-dir", stage_dir, *flags])
        assert rc == 0, stage


# ---------------------------------------------------------------- config

def test_parse_config_values(tmp_path):
    cfg = config.parse_config("model.seed = 3\nmodel.alpha_grid = logspace:-2:2:5\n"
                              "features.bandwidths = 100, 200, 400\n", str(tmp_path))
    assert cfg["model.seed"] == 3 and cfg["model.members"] == 20
    np.testing.assert_allclose(cfg["model.alpha_grid"], [0.01, 0.1, 1, 10, 100])
    assert tuple(cfg["features.bandwidths"]) == (100.0, 200.0, 400.0)
    assert config.parse_alphas("0.5") == 0.5


@pytest.mark.parametrize("text", ["model.sed = 3", "model.seed = 1\nmodel.seed = 2",
                                  "just words", "model.seed = x"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        config.parse_config(text)


def test_missing_seed_exit_code(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text("model.members = 3\n")
    assert cli.main(["synth", "--config", str(p), "--stage-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("stwind: error=config_error")


def test_unknown_key_exit_code(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text("model.seed = 1\nmodel.colour = red\n")
    assert cli.main(["synth", "--config", str(p)]) == 2
    assert "config_error" in capsys.readouterr().err


def test_missing_stage_input(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["fit", "--config", cfg, "--stage-dir", str(tmp_path / "s")]) == 3
    assert "error=data_error" in capsys.readouterr().err


# ---------------------------------------------------------------- pipeline

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = write_config(root)
    stages = str(root / "stages")
    run_all(cfg, stages)
    return root, cfg, stages


def test_stage_outputs(pipeline):
    _, _, s = pipeline
    for f in ("synth/stations.csv", "synth/mask.asc", "clean/hourly.csv",
              "clean/quality_report.csv", "features/manifest.json", "fit/model/model.json",
              "fit/variance_model/floor.json", "fit/cross_covariance.json", "fit/split.json",
              "predict/prediction.npz", "predict/values.csv", "power/power.npz",
              "power/values.csv", "site/layout.csv", "site/summary.csv", "site/turbines.csv",
              "benchmark/benchmark.csv"):
        assert os.path.exists(os.path.join(s, f)), f
    with open(os.path.join(s, "predict/values.csv")) as fh:
        assert next(csv.reader(fh)) == ["easting", "northing", "timestamp", "mean",
                                        "var_model", "var_pred"]
    with open(os.path.join(s, "power/values.csv")) as fh:
        assert next(csv.reader(fh))[3:] == ["power_mean_kw", "power_var_kw2", "cutout_flag"]


def test_prediction_sane(pipeline):
    _, _, s = pipeline
    p = np.load(os.path.join(s, "predict/prediction.npz"))
    assert np.isfinite(p["mean"]).all()
    assert (p["var_model"] >= 0).all() and (p["var_pred"] >= 0).all()
    w = np.load(os.path.join(s, "power/power.npz"))
    assert ((w["mean"] >= 0) & (w["mean"] <= 3075.31)).all()


def test_benchmark_row(pipeline):
    _, _, s = pipeline
    with open(os.path.join(s, "benchmark/benchmark.csv")) as fh:
        row = next(csv.DictReader(fh))
    # the error direction is checked at full scale in the acceptance suite
    assert int(row["n_train"]) == 24 and int(row["n_test"]) == 6
    assert int(row["members"]) == 3 and int(row["neurons"]) == 21
    assert 0 < float(row["mae"]) <= float(row["rmse"])
    assert 0 <= float(row["coverage_1.96"]) <= 1


def test_site_summary_consistent(pipeline):
    _, _, s = pipeline
    with open(os.path.join(s, "site/summary.csv")) as fh:
        rows = {r["zone"]: r for r in csv.DictReader(fh)}
    with open(os.path.join(s, "site/layout.csv")) as fh:
        n = sum(1 for _ in fh) - 1
    assert int(rows["total"]["virtual_turbines"]) == n > 0
    assert int(rows["prohibited"]["virtual_turbines"]) == 0


def test_ascii_grid_output(pipeline, tmp_path):
    root, _, s = pipeline
    cfg = write_config(tmp_path, fmt="ascii-grid", extra="predict.end = 2017-01-01T02:00:00Z\n")
    rc = cli.main(["predict", "--config", cfg, "--stage-dir", s, "--format", "ascii-grid"])
    assert rc == 0
    names = sorted(f for f in os.listdir(os.path.join(s, "predict")) if f.endswith(".asc"))
    assert names[:2] == ["mean_20170101T000000.asc", "mean_20170101T010000.asc"]
    assert len(names) == 6


def test_fit_reproduces_noiseless_training_data(tmp_path):
    # the synthetic field is a function of the coordinates alone
    cfg = write_config(tmp_path, extra="synth.noise_sd = 0\nfeatures.set = coordinates\n")
    s = str(tmp_path / "s")
    run_all(cfg, s, stages=("synth", "clean", "features", "fit"))
    model = st_model.load_model(os.path.join(s, "fit/model"))
    m = cli._load_hourly(cli.Run(config.load_config(cfg), s))
    stack = terrain.load_feature_stack(os.path.join(s, "features"))
    pos = {sid: i for i, sid in enumerate(m.station_ids)}
    train = m.subset([pos[sid] for sid in model.station_ids])
    pred = st_model.predict(model, terrain.sample_features(stack, train.coords)[:, :2])
    rmse = np.sqrt(np.mean((pred - train.values) ** 2))
    assert rmse < 0.1 * train.values.std()


def test_thread_count_bit_identical(tmp_path):
    cfg = write_config(tmp_path)
    outs = []
    for threads in ("1", "4"):
        s = str(tmp_path / f"t{threads}")
        run_all(cfg, s, "--threads", threads)
        outs.append(s)
    for f, keys in (("predict/prediction.npz", ("mean", "var_model", "var_pred")),
                    ("power/power.npz", ("mean", "var"))):
        a, b = (np.load(os.path.join(o, f)) for o in outs)
        for k in keys:
            assert np.array_equal(a[k], b[k]), (f, k)
    for f in ("site/summary.csv", "benchmark/benchmark.csv", "predict/values.csv"):
        with open(os.path.join(outs[0], f), "rb") as x, open(os.path.join(outs[1], f), "rb") as y:
            assert x.read() == y.read(), f
