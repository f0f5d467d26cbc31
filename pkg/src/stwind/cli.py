"""Command-line pipeline.

Stages hand over files under a stage directory::

    synth/      stations.csv, dem.asc, roughness.asc, mask.asc
    clean/      hourly.csv, quality_report.csv
    features/   13 grids and manifest.json
    fit/        model/, variance_model/, split.json, cross_covariance.json
    predict/    prediction.npz plus CSV or ASCII grids
    power/      power.npz plus CSV or ASCII grids
    site/       layout.csv, turbines.csv, summary.csv
    benchmark/  benchmark.csv

Input paths left out of the config default to the files of the ``synth``
stage.
"""
import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import data, power, siting, st_model, synth, terrain
from .config import RunConfig, load_config
from .errors import CompletenessError, ConfigError, DataError, StwindError
from .grids import read_ascii_grid, write_ascii_grid

logger = logging.getLogger("stwind")

COMMANDS = ("clean", "features", "fit", "predict", "power", "site", "benchmark", "synth")
PREDICT_CHUNK = 1000


class Run:
    def __init__(self, cfg, stage_dir):
        self.cfg = cfg
        self.stage_dir = stage_dir

    def dir(self, name, create=False):
        p = os.path.join(self.stage_dir, name)
        if create:
            os.makedirs(p, exist_ok=True)
        return p

    def input(self, key, synth_name):
        p = self.cfg.path(key)
        if p is None:
            p = os.path.join(self.dir("synth"), synth_name)
        if not os.path.exists(p):
            raise DataError(f"{key}: input file {p} not found")
        return p

    def need(self, path):
        if not os.path.exists(path):
            raise DataError(f"{path} missing; run the producing stage first")
        return path

    def model_config(self):
        c = self.cfg
        return st_model.StModelConfig(n_members=c["model.members"], n_neurons=c["model.neurons"],
                                      alphas=c["model.alpha_grid"], k_retained=c["model.k_retained"],
                                      floor=c["model.floor"], seed=c["model.seed"],
                                      threads=c["model.threads"])


# ---------------------------------------------------------------- helpers

def _load_hourly(run):
    series = data.load_station_csv(run.need(os.path.join(run.dir("clean"), "hourly.csv")))
    start = min(s.times[0] for s in series)
    end = max(s.times[-1] for s in series) + data.HOUR
    return data.build_matrix(series, start, end)


def _feature_matrix(run, stack, points):
    X = terrain.sample_features(stack, points)
    if run.cfg["features.set"] == "coordinates":
        X = X[:, :2]
    return X


def _prediction_cells(run):
    rough = read_ascii_grid(run.input("paths.roughness", "roughness.asc"))
    x, y = rough.cell_centers()
    flat = np.flatnonzero(~np.isnan(rough.values.ravel()))
    pts = np.column_stack([x.ravel()[flat], y.ravel()[flat]])
    return rough, flat, pts


def _time_slice(cfg, times):
    lo, hi = 0, times.size
    if cfg["predict.start"]:
        lo = int(np.searchsorted(times, data.parse_timestamp(cfg["predict.start"])))
    if cfg["predict.end"]:
        hi = int(np.searchsorted(times, data.parse_timestamp(cfg["predict.end"])))
    if not lo < hi:
        raise ConfigError("predict.start/predict.end select no time steps")
    return np.arange(lo, hi)


def _stamp(t):
    return data.format_timestamp(t).replace("-", "").replace(":", "").rstrip("Z")


def _write_gridded(out_dir, fmt, geo, flat, pts, times, columns):
    """Long CSV or one ASCII grid per (quantity, time step)."""
    if fmt == "csv":
        with open(os.path.join(out_dir, "values.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["easting", "northing", "timestamp"] + list(columns))
            arrays = list(columns.values())
            for j, t in enumerate(times):
                ts = data.format_timestamp(t)
                for p in range(pts.shape[0]):
                    w.writerow([repr(float(pts[p, 0])), repr(float(pts[p, 1])), ts]
                               + [repr(float(a[p, j])) for a in arrays])
        return
    for name, arr in columns.items():
        for j, t in enumerate(times):
            vals = np.full(geo.nrows * geo.ncols, np.nan)
            vals[flat] = arr[:, j]
            write_ascii_grid(os.path.join(out_dir, f"{name}_{_stamp(t)}.asc"),
                             geo.like(vals.reshape(geo.nrows, geo.ncols)))


# ---------------------------------------------------------------- stages

def cmd_synth(run):
    c = run.cfg
    sc = synth.SyntheticScenario(noise=c["synth.noise"], noise_sd=c["synth.noise_sd"],
                                 noise_sd_high=c["synth.noise_sd_high"],
                                 layout=c["synth.layout"], seed=c["model.seed"])
    m, truth = synth.generate(sc, c["synth.stations"], c["synth.times"], c["model.seed"])
    out = run.dir("synth", create=True)
    data.write_station_csv(os.path.join(out, "stations.csv"), data.matrix_to_series(m))
    dem, rough, mask = synth.synthetic_rasters(sc, c["synth.cellsize"], c["model.seed"],
                                                c["synth.dem_cellsize"])
    write_ascii_grid(os.path.join(out, "dem.asc"), dem)
    write_ascii_grid(os.path.join(out, "roughness.asc"), rough)
    write_ascii_grid(os.path.join(out, "mask.asc"), mask, fmt="%d")
    logger.info("synthetic network: %d stations x %d hours", *m.shape)


def cmd_clean(run):
    c = run.cfg
    p = c.path("paths.stations")
    paths = [s.strip() for s in p.split(",")] if p else [run.input("paths.stations", "stations.csv")]
    series = data.load_station_csv(paths)
    kept, report = data.clean_network(series, (c["clean.missing"], c["clean.negative"],
                                               c["clean.zero"]))
    if len(kept) < 2:
        raise DataError(f"only {len(kept)} stations survive cleaning")
    hourly = [data.downsample_hourly(s) for s in kept]
    start = data.parse_timestamp(c["clean.start"]) if c["clean.start"] else \
        min(s.times[0] for s in hourly)
    end = data.parse_timestamp(c["clean.end"]) if c["clean.end"] else \
        max(s.times[-1] for s in hourly) + data.HOUR
    # gaps stay missing here; only the training stations are imputed, in ``fit``
    m = data.build_matrix(hourly, start, end)
    out = run.dir("clean", create=True)
    data.write_station_csv(os.path.join(out, "hourly.csv"), data.matrix_to_series(m))
    data.write_quality_report(os.path.join(out, "quality_report.csv"), report)
    logger.info("kept %d of %d stations, %d hours", len(kept), len(series), m.shape[1])


def cmd_features(run):
    dem = read_ascii_grid(run.input("paths.dem", "dem.asc"))
    stack = terrain.assemble_features(dem, run.cfg["features.bandwidths"])
    terrain.save_feature_stack(run.dir("features", create=True), stack)


def cmd_fit(run):
    c = run.cfg
    m = _load_hourly(run)
    stack = terrain.load_feature_stack(run.need(run.dir("features")))
    X = _feature_matrix(run, stack, m.coords)
    split = data.split_network(m.shape[0], c["model.split_fraction"], c["model.seed"])
    train = data.impute_missing(m.subset(split.train_indices), c["clean.k_space"],
                                c["clean.k_time"])
    Xtr = X[split.train_indices]
    mcfg = run.model_config()
    model = st_model.fit(train, Xtr, mcfg)
    vm = st_model.fit_variance_model(model, train, Xtr, mcfg)
    diag = st_model.cross_covariance_check(model)
    out = run.dir("fit", create=True)
    st_model.save_model(os.path.join(out, "model"), model)
    st_model.save_variance_model(os.path.join(out, "variance_model"), vm)
    with open(os.path.join(out, "split.json"), "w") as fh:
        json.dump({"train": [m.station_ids[i] for i in split.train_indices],
                   "test": [m.station_ids[i] for i in split.test_indices],
                   "fraction": split.split_fraction}, fh, indent=1)
    with open(os.path.join(out, "cross_covariance.json"), "w") as fh:
        json.dump({"max_abs_correlation": diag.max_abs, "pair": list(diag.pair),
                   "threshold": diag.threshold, "flagged": diag.flagged}, fh, indent=1)


def _load_models(run):
    fit_dir = run.need(run.dir("fit"))
    return (st_model.load_model(os.path.join(fit_dir, "model")),
            st_model.load_variance_model(os.path.join(fit_dir, "variance_model")))


def cmd_predict(run):
    model, vm = _load_models(run)
    stack = terrain.load_feature_stack(run.need(run.dir("features")))
    geo, flat, pts = _prediction_cells(run)
    idx = _time_slice(run.cfg, model.times)
    X = _feature_matrix(run, stack, pts)
    P, T = pts.shape[0], idx.size
    mean, vmod, vpred = (np.empty((P, T)) for _ in range(3))
    for lo in range(0, P, PREDICT_CHUNK):
        pr = st_model.predict_all(model, vm, X[lo:lo + PREDICT_CHUNK], idx)
        sl = slice(lo, lo + PREDICT_CHUNK)
        mean[sl], vmod[sl], vpred[sl] = pr.mean, pr.var_model, pr.var_pred
    out = run.dir("predict", create=True)
    times = model.times[idx]
    np.savez(os.path.join(out, "prediction.npz"), cells=flat, points=pts,
             times=times.astype("int64"), mean=mean, var_model=vmod, var_pred=vpred)
    _write_gridded(out, run.cfg["output.format"], geo, flat, pts, times,
                   {"mean": mean, "var_model": vmod, "var_pred": vpred})


def _curve(run):
    p = run.cfg.path("paths.power_curve")
    if p:
        v, pw = power.read_power_curve_csv(run.need(p))
        # points past the cut-out drop to zero and are not part of the logistic rise
        keep = v <= run.cfg["power.cutout"]
        return power.fit_power_curve(v[keep], pw[keep])
    c = run.cfg
    return power.PowerCurve(c["power.phi1"], c["power.phi2"], c["power.phi3"])


def cmd_power(run):
    c = run.cfg
    pred = np.load(run.need(os.path.join(run.dir("predict"), "prediction.npz")))
    geo, flat, pts = _prediction_cells(run)
    if not np.array_equal(flat, pred["cells"]):
        raise DataError("roughness grid changed since the predict stage")
    h0 = geo.values.ravel()[flat]
    tcfg = power.TurbineConfig(c["power.h1"], c["power.h2"], c["power.cutout"])
    res = power.wind_to_power(pred["mean"], pred["var_pred"], h0[:, None], _curve(run), tcfg)
    if res.n_clamped:
        logger.warning("%d negative variances clamped", res.n_clamped)
    out = run.dir("power", create=True)
    times = pred["times"].astype("datetime64[s]")
    np.savez(os.path.join(out, "power.npz"), cells=flat, points=pts, times=pred["times"],
             mean=res.mean, var=res.var, cutout=res.cutout)
    _write_gridded(out, c["output.format"], geo, flat, pts, times,
                   {"power_mean_kw": res.mean, "power_var_kw2": res.var,
                    "cutout_flag": res.cutout.astype(float)})


def cmd_site(run):
    c = run.cfg
    pw = np.load(run.need(os.path.join(run.dir("power"), "power.npz")))
    mask = siting.RestrictionMask(read_ascii_grid(run.input("paths.mask", "mask.asc")))
    geo, flat, _ = _prediction_cells(run)
    layout = siting.place_turbines(mask, c["siting.direction"],
                                   (c["siting.streamwise"], c["siting.spanwise"]))
    lookup = np.full(geo.nrows * geo.ncols, -1)
    lookup[pw["cells"]] = np.arange(pw["cells"].size)
    r, col = geo.cell_index(layout.positions) if layout.n else (np.zeros(0, int),) * 2
    rows = lookup[r * geo.ncols + col]
    if np.any(rows < 0):
        raise CompletenessError(f"{int(np.sum(rows < 0))} turbines fall on cells without power")
    T = pw["times"].size
    e, v = siting.annual_energy(pw["mean"][rows], pw["var"][rows])
    e, v = siting.annualize(e, T), siting.annualize(v, T)
    summary = siting.summarize_potential(layout, e, mask, v)
    out = run.dir("site", create=True)
    siting.write_layout_csv(os.path.join(out, "layout.csv"), layout)
    siting.write_summary_csv(os.path.join(out, "summary.csv"), summary)
    with open(os.path.join(out, "turbines.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("turbine_id", "annual_energy_gwh", "annual_energy_var_gwh2"))
        for k, (a, b) in enumerate(zip(e, v)):
            w.writerow((k + 1, repr(float(a)), repr(float(b))))


def cmd_benchmark(run):
    model, vm = _load_models(run)
    m = _load_hourly(run)
    with open(run.need(os.path.join(run.dir("fit"), "split.json"))) as fh:
        split = json.load(fh)
    pos = {sid: i for i, sid in enumerate(m.station_ids)}
    test = m.subset([pos[s] for s in split["test"]])
    stack = terrain.load_feature_stack(run.need(run.dir("features")))
    X = _feature_matrix(run, stack, test.coords)
    pred = st_model.predict_all(model, vm, X, model.time_index(test.times))
    met = st_model.evaluate(model, test, X, pred)
    cov = st_model.coverage_check(model, vm, test, X, pred)
    out = run.dir("benchmark", create=True)
    with open(os.path.join(out, "benchmark.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("n_train", "n_test", "neurons", "members", "rmse", "mae",
                    "baseline_rmse", "baseline_mae", "coverage_1.96"))
        ens = model.ensembles[0] if model.ensembles else None
        w.writerow((len(split["train"]), len(split["test"]),
                    ens.n_neurons if ens else 0, ens.n_members if ens else 0,
                    f"{met.rmse:.6f}", f"{met.mae:.6f}", f"{met.baseline_rmse:.6f}",
                    f"{met.baseline_mae:.6f}", f"{cov:.6f}"))
    logger.info("rmse %.4f (baseline %.4f), coverage %.3f", met.rmse, met.baseline_rmse, cov)


STAGES = {"synth": cmd_synth, "clean": cmd_clean, "features": cmd_features, "fit": cmd_fit,
          "predict": cmd_predict, "power": cmd_power, "site": cmd_site,
          "benchmark": cmd_benchmark}


def build_parser():
    ap = argparse.ArgumentParser(prog="stwind",
                                 description="Spatio-temporal wind speed mapping and "
                                             "wind power potential pipeline.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat 'section.key = value' configuration file")
    ap.add_argument("--seed", type=int, help="master seed (overrides model.seed)")
    ap.add_argument("--threads", type=int, help="worker threads (overrides model.threads)")
    ap.add_argument("--format", choices=("ascii-grid", "csv"), dest="fmt",
                    help="gridded output format (overrides output.format)")
    ap.add_argument("--stage-dir", help="directory for stage outputs (overrides paths.output_dir)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.set("model.seed", args.seed)
        if args.threads is not None:
            cfg.set("model.threads", args.threads)
        if args.fmt is not None:
            cfg.set("output.format", args.fmt)
        cfg.validate()
        stage_dir = args.stage_dir or cfg.path("paths.output_dir")
        STAGES[args.command](Run(cfg, stage_dir))
    except StwindError as exc:
        msg = " ".join(str(exc).split())
        print(f"stwind: error={exc.code} {msg}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"stwind: error=io_error {exc.strerror}: {exc.filename}", file=sys.stderr)
        return DataError.exit_status
    return 0


if __name__ == "__main__":
    sys.exit(main())
