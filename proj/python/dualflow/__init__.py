"""Continuous flow models: maximum-likelihood, flow-matching and dual
flow-matching training, with density estimation and sliding-window anomaly
scoring on top of a small C++ core."""

import json as _json

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    NumericalError,
    auc,
    default_config_json,
    density_grid,
    density_points,
    dfm_loss_value,
    gen_telemetry,
    gen_two_moons,
    make_windows,
    point_adjust,
    sample,
    save_series,
    sweep_threshold,
    time_embed,
)
from ._core import score_json as _score_json
from ._core import train_json as _train_json

__all__ = [
    "auc",
    "default_config",
    "density_grid",
    "density_points",
    "dfm_loss_value",
    "gen_telemetry",
    "gen_two_moons",
    "make_windows",
    "point_adjust",
    "sample",
    "save_series",
    "score",
    "sweep_threshold",
    "time_embed",
    "train",
    "ConfigError",
    "DataError",
    "NumericalError",
]


def default_config():
    """The full run config with every default filled in."""
    return _json.loads(default_config_json())


def train(config, out_dir):
    """Train per `config` (a dict); returns the run summary as a dict."""
    return _json.loads(_train_json(_json.dumps(config), out_dir))


def score(checkpoint_dir, out_dir="", **overrides):
    """Score held-out windows with a trained checkpoint.

    Keyword overrides: solver ("euler"|"dopri5"), steps, atol, rtol,
    trace ("exact"|"hutchinson"), probes, strategy, point_adjust,
    data_path, labels_path.
    """
    return _json.loads(_score_json(checkpoint_dir, out_dir, **overrides))
