"""Runtime configuration: defaults, optional JSON overrides.

The override file is looked up from --config or the CENTAURSIM_CONFIG
environment variable. Only keys present in the file replace defaults.
"""

from __future__ import annotations

import json
import os

ENV_VAR = "CENTAURSIM_CONFIG"

DEFAULTS = {
    "control_period": 0.01,
    "stepping": {},  # StepConfig field overrides
    "trajopt": {},  # CostWeights field overrides
    "telemetry_clouds": False,
}


def load_app_config(path: str | None = None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))  # deep copy
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return cfg
    with open(path) as f:
        user = json.load(f)
    for key, value in user.items():
        if key not in cfg:
            raise KeyError(f"unknown config key '{key}'")
        if isinstance(cfg[key], dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg
