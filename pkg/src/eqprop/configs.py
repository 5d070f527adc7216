"""Named presets and configuration resolution for the command line.

A run's effective settings come from three layers, later ones winning:
a named preset, an INI config file, then command-line flags.  The INI
format groups keys into four sections:

    [run]         arch, data, data_dir, seed, threads
    [hyperparams] T, K, beta, epsilon, activation, clip
    [training]    algorithm, epochs, batch_size, learning_rates,
                  subset_train, subset_test
    [gdu]         batch_size, threshold

learning_rates is a comma-separated list, output-side group first.
Unknown sections or keys are rejected by name, as are missing required
keys, so a typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser

__all__ = ["ConfigError", "PRESETS", "resolve_settings", "require"]


class ConfigError(ValueError):
    """Configuration is unusable; the message names the offending key."""


# (setting key, section, parser)
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(text):
    t = text.strip().lower()
    if t not in _BOOL:
        raise ValueError(f"expected a boolean, got {text!r}")
    return _BOOL[t]


def _parse_rates(text):
    return tuple(float(p) for p in text.split(",") if p.strip())


_SCHEMA = {
    "run": {
        "arch": str,
        "data": str,
        "data_dir": str,
        "seed": int,
        "threads": int,
    },
    "hyperparams": {
        "T": int,
        "K": int,
        "beta": float,
        "epsilon": float,
        "activation": str,
        "clip": _parse_bool,
    },
    "training": {
        "algorithm": str,
        "epochs": int,
        "batch_size": int,
        "learning_rates": _parse_rates,
        "subset_train": int,
        "subset_test": int,
    },
    "gdu": {
        "batch_size": int,
        "threshold": float,
    },
}

# flat setting name -> (section, key); gdu.batch_size gets its own name
SETTING_HOME = {}
for _section, _keys in _SCHEMA.items():
    for _key in _keys:
        _name = "gdu_batch_size" if (_section, _key) == ("gdu", "batch_size") else _key
        SETTING_HOME[_name] = (_section, _key)

_DEFAULTS = {
    "data": "mnist",
    "data_dir": None,
    "seed": 0,
    "threads": 1,
    "epsilon": None,
    "activation": None,
    "clip": False,
    "algorithm": "ep",
    "subset_train": None,
    "subset_test": None,
    "gdu_batch_size": 20,
}


# ---------------------------------------------------------------------------
# presets: the standard schedules for each architecture
#
# gdu-* rows are the update-versus-gradient demonstrations; train-* rows are
# the digit-classification runs.  learning_rates are listed from the output
# connection inward.

PRESETS = {
    # toy model on its synthetic task
    "gdu-toy": dict(
        arch="toy", data="toy", T=5000, K=80, beta=0.01, epsilon=0.08,
        activation="tanh", gdu_batch_size=1, threshold=5e-2,
    ),
    "gdu-eb-1h": dict(
        arch="eb-1h", T=800, K=80, beta=0.001, epsilon=0.08,
        activation="tanh", gdu_batch_size=20, threshold=5e-2,
    ),
    "gdu-eb-2h": dict(
        arch="eb-2h", T=5000, K=150, beta=0.01, epsilon=0.08,
        activation="tanh", gdu_batch_size=20, threshold=5e-2,
    ),
    "gdu-eb-3h": dict(
        arch="eb-3h", T=30000, K=200, beta=0.02, epsilon=0.08,
        activation="tanh", gdu_batch_size=20, threshold=5e-2,
    ),
    "gdu-p-1h": dict(
        arch="p-1h", T=150, K=10, beta=0.01,
        activation="tanh", gdu_batch_size=20, threshold=2e-1,
    ),
    "gdu-p-2h": dict(
        arch="p-2h", T=1500, K=40, beta=0.01,
        activation="tanh", gdu_batch_size=20, threshold=2e-1,
    ),
    "gdu-p-3h": dict(
        arch="p-3h", T=5000, K=40, beta=0.015,
        activation="tanh", gdu_batch_size=20, threshold=2e-1,
    ),
    "gdu-p-conv": dict(
        arch="p-conv", T=5000, K=10, beta=0.02,
        activation="hard_sigmoid", gdu_batch_size=20, threshold=5e-1,
    ),
    # training schedules; the energy-based runs clip states to [0, 1]
    "train-toy": dict(
        arch="toy", data="toy", T=400, K=15, beta=0.02, activation="tanh",
        algorithm="ep", epochs=4, batch_size=20,
        learning_rates=(0.2, 0.1, 0.1),
        subset_train=300, subset_test=100,
    ),
    "train-eb-1h": dict(
        arch="eb-1h", T=100, K=12, beta=0.5, epsilon=0.2,
        activation="sigmoid", clip=True,
        algorithm="ep", epochs=30, batch_size=20,
        learning_rates=(0.1, 0.05),
    ),
    "train-eb-2h": dict(
        arch="eb-2h", T=500, K=40, beta=0.8, epsilon=0.2,
        activation="sigmoid", clip=True,
        algorithm="ep", epochs=50, batch_size=20,
        learning_rates=(0.4, 0.1, 0.01),
    ),
    "train-p-1h": dict(
        arch="p-1h", T=30, K=10, beta=0.1,
        activation="sigmoid",
        algorithm="ep", epochs=30, batch_size=20,
        learning_rates=(0.08, 0.04),
    ),
    "train-p-2h": dict(
        arch="p-2h", T=100, K=20, beta=0.5,
        activation="sigmoid",
        algorithm="ep", epochs=50, batch_size=20,
        learning_rates=(0.2, 0.05, 0.005),
    ),
    "train-p-3h": dict(
        arch="p-3h", T=180, K=20, beta=0.5,
        activation="sigmoid",
        algorithm="ep", epochs=100, batch_size=20,
        learning_rates=(0.2, 0.05, 0.01, 0.002),
    ),
    "train-p-conv": dict(
        arch="p-conv", T=200, K=10, beta=0.4,
        activation="hard_sigmoid",
        algorithm="ep", epochs=40, batch_size=20,
        learning_rates=(0.15, 0.035, 0.015),
    ),
}


def _read_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (T, K)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config file {path!r} is not valid INI: {exc}") from exc

    out = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"{path}: unknown section [{section}] "
                f"(have {', '.join(sorted(_SCHEMA))})"
            )
        for key, text in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"{path}: unknown key {key!r} in section [{section}] "
                    f"(have {', '.join(sorted(_SCHEMA[section]))})"
                )
            name = "gdu_batch_size" if (section, key) == ("gdu", "batch_size") else key
            try:
                out[name] = _SCHEMA[section][key](text)
            except ValueError as exc:
                raise ConfigError(
                    f"{path}: bad value for {key!r} in [{section}]: {exc}"
                ) from exc
    return out


def resolve_settings(preset: str | None, config_path: str | None, overrides: dict) -> dict:
    """Merge preset, config file, and flag overrides into one flat dict."""
    settings = dict(_DEFAULTS)
    settings["preset"] = preset
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r} (have {', '.join(sorted(PRESETS))})"
            )
        settings.update(PRESETS[preset])
    if config_path is not None:
        settings.update(_read_config_file(config_path))
    for key, value in overrides.items():
        if value is not None:
            settings[key] = value
    return settings


def require(settings: dict, keys, context: str) -> None:
    """Fail with the first missing key named."""
    for key in keys:
        if settings.get(key) is None:
            raise ConfigError(
                f"{context} needs a value for {key!r} "
                f"(set it via a preset, the config file, or a flag)"
            )
