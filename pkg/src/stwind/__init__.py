"""Spatio-temporal wind speed mapping with EOFs and ELM ensembles, and the
wind power potential derived from it."""
from .data import (ObservationMatrix, StationSeries, build_matrix, characteristic_scale,
                   clean_network, downsample_hourly, impute_missing, load_station_csv,
                   split_network)
from .elm import ElmEnsemble, fit_ridge, gcv_select
from .eof import decompose, fit_eof, reconstruct, verify_eq4
from .errors import StwindError
from .grids import DemGrid, read_ascii_grid, write_ascii_grid
from .power import ENERCON_E101, PowerCurve, TurbineConfig, fit_power_curve, wind_to_power
from .siting import RestrictionMask, place_turbines, summarize_potential
from .st_model import StModelConfig, fit, fit_variance_model, predict_all
from .synth import SyntheticScenario, generate
from .terrain import assemble_features, sample_features

__version__ = "0.1.0"
