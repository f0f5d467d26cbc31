"""Run configuration: flat ``section.key = value`` text.

Blank lines and ``#`` comments are ignored. Unknown sections or keys are
errors, so a typo never silently falls back to a default.
"""
import os
from dataclasses import dataclass, field

import numpy as np

from .elm import DEFAULT_ALPHA_GRID
from .errors import ConfigError

# key -> (type, default); ``None`` default means optional and unset
SCHEMA = {
    "paths.stations": (str, None),
    "paths.dem": (str, None),
    "paths.roughness": (str, None),
    "paths.mask": (str, None),
    "paths.power_curve": (str, None),
    "paths.output_dir": (str, "stages"),
    "clean.missing": (float, 0.10),
    "clean.negative": (float, 0.10),
    "clean.zero": (float, 0.10),
    "clean.start": (str, None),
    "clean.end": (str, None),
    "clean.k_space": (int, 8),
    "clean.k_time": (int, 1),
    "features.bandwidths": ("floats", (500.0, 2000.0, 8000.0)),
    "features.set": (str, "terrain"),
    "model.members": (int, 20),
    "model.neurons": (int, None),
    "model.alpha_grid": ("alphas", None),
    "model.k_retained": (int, None),
    "model.floor": (float, 1e-6),
    "model.seed": (int, None),
    "model.threads": (int, 1),
    "model.split_fraction": (float, 0.8),
    "predict.start": (str, None),
    "predict.end": (str, None),
    "power.h1": (float, 10.0),
    "power.h2": (float, 100.0),
    "power.cutout": (float, 25.0),
    "power.phi1": (float, 3075.31),
    "power.phi2": (float, 8.47),
    "power.phi3": (float, 1.27),
    "siting.direction": (float, 60.0),
    "siting.streamwise": (float, 1600.0),
    "siting.spanwise": (float, 1000.0),
    "output.format": (str, "csv"),
    "synth.stations": (int, 125),
    "synth.times": (int, 2000),
    "synth.noise": (str, "homoskedastic"),
    "synth.noise_sd": (float, 1.0),
    "synth.noise_sd_high": (float, 3.0),
    "synth.layout": (str, "uniform"),
    "synth.cellsize": (float, 2000.0),
    "synth.dem_cellsize": (float, 500.0),
}

FORMATS = ("ascii-grid", "csv")
FEATURE_SETS = ("terrain", "coordinates")


def parse_alphas(text):
    """``logspace:lo:hi:n`` for a log grid, otherwise comma-separated values.

    A single value fixes the Tikhonov factor and disables GCV.
    """
    text = text.strip()
    if text.startswith("logspace:"):
        parts = text.split(":")[1:]
        if len(parts) != 3:
            raise ConfigError(f"bad alpha grid {text!r}")
        return np.logspace(float(parts[0]), float(parts[1]), int(parts[2]))
    vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ConfigError("empty alpha grid")
    return vals[0] if len(vals) == 1 else np.array(vals)


def _convert(key, kind, raw):
    try:
        if kind == "floats":
            return tuple(float(v) for v in raw.split(","))
        if kind == "alphas":
            return parse_alphas(raw)
        if kind is int:
            return int(raw, 0)
        return kind(raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    base_dir: str = "."

    def __getitem__(self, key):
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key}")
        if key in self.values:
            return self.values[key]
        default = SCHEMA[key][1]
        if key == "model.alpha_grid" and default is None:
            return DEFAULT_ALPHA_GRID.copy()
        return default

    def set(self, key, value):
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key}")
        self.values[key] = value

    def path(self, key):
        p = self[key]
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def validate(self):
        if self["model.seed"] is None:
            raise ConfigError("model.seed is required (or pass --seed)")
        if self["output.format"] not in FORMATS:
            raise ConfigError(f"output.format must be one of {FORMATS}")
        if self["features.set"] not in FEATURE_SETS:
            raise ConfigError(f"features.set must be one of {FEATURE_SETS}")
        for k in ("clean.missing", "clean.negative", "clean.zero"):
            if not 0 <= self[k] <= 1:
                raise ConfigError(f"{k} must be a fraction")
        if not 0 < self["model.split_fraction"] < 1:
            raise ConfigError("model.split_fraction must lie in (0, 1)")
        if self["model.threads"] < 1 or self["model.members"] < 2:
            raise ConfigError("model.threads >= 1 and model.members >= 2 required")
        return self


def parse_config(text, base_dir="."):
    cfg = RunConfig(base_dir=base_dir)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg.values:
            raise ConfigError(f"line {lineno}: {key} set twice")
        cfg.values[key] = _convert(key, SCHEMA[key][0], raw)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
