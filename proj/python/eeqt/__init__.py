"""Event-enhanced quantum theory simulations.

Configs are plain dicts with the same keys as the JSON files under configs/.
"""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    EXIT_ACCEPTANCE,
    EXIT_OK,
    EXIT_USAGE,
    box_counting_dimension,
    chaos_game,
    free_flight_time,
    ifs_map,
    ifs_probs,
    larmor_time,
    phase_time,
    semiclassical_time,
    sha256_file,
    tetra_directions,
    transmission_amplitude,
)

__all__ = [
    "ConfigError",
    "EXIT_ACCEPTANCE",
    "EXIT_OK",
    "EXIT_USAGE",
    "box_counting_dimension",
    "chaos_game",
    "free_flight_time",
    "ifs_map",
    "ifs_probs",
    "larmor_time",
    "load_config",
    "phase_time",
    "run",
    "semiclassical_time",
    "sha256_file",
    "tetra_directions",
    "transmission_amplitude",
    "tunnel_scan",
    "validate",
]


def _dump(config):
    return _json.dumps(config or {})


def load_config(path):
    """Read a JSON config (or the config snapshot of a manifest)."""
    with open(path) as f:
        cfg = _json.load(f)
    if isinstance(cfg, dict) and cfg.get("tool") == "eeqt" and "config" in cfg:
        return cfg["config"]
    return cfg


def run(command, config=None, out_dir="out", seed=42, workers=1):
    """Run a workflow ("validate", "cloud", "tunnel", "fractal") and write its
    outputs and manifest.json into out_dir. Returns the exit code."""
    return _core.run_workflow(command, _dump(config), str(out_dir), seed, workers)


def validate(config=None, seed=42, workers=1):
    """PDP ensemble versus master equation on the toy model."""
    return _core.validate(_dump(config), seed, workers)


def tunnel_scan(config=None, seed=42, workers=1):
    """Barrier scan; one dict per scan point."""
    return _core.tunnel_scan(_dump(config), seed, workers)
