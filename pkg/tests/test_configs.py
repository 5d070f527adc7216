"""Settings resolution: presets, INI files, flag overrides, and the
typed errors for unusable input."""

import pytest

from eqprop.configs import ConfigError, PRESETS, require, resolve_settings
from eqprop.models import make_model
from eqprop.training import TrainConfig


def write_ini(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_every_preset_resolves():
    for name in PRESETS:
        settings = resolve_settings(name, None, {})
        assert settings["arch"], name
        assert settings["T"] >= settings["K"] >= 1, name
        assert settings["beta"] > 0, name


def test_gdu_presets_carry_threshold_and_buildable_arch():
    for name in PRESETS:
        if not name.startswith("gdu-"):
            continue
        settings = resolve_settings(name, None, {})
        assert settings["threshold"] > 0, name
        make_model(
            settings["arch"], settings.get("activation"),
            settings.get("epsilon"), settings.get("clip", False),
        )


def test_train_presets_build_with_matching_rate_counts():
    # one rate per parameter group, order follows param_names
    for name in PRESETS:
        if not name.startswith("train-"):
            continue
        settings = resolve_settings(name, None, {})
        cfg = TrainConfig(
            arch=settings["arch"],
            algorithm=settings["algorithm"],
            T=settings["T"],
            K=settings["K"],
            beta=settings["beta"],
            learning_rates=settings["learning_rates"],
            epochs=settings["epochs"],
            batch_size=settings["batch_size"],
            seed=settings["seed"],
            epsilon=settings.get("epsilon"),
            activation=settings.get("activation"),
            clip=settings.get("clip", False),
        )
        model, rates = cfg.build_model()
        assert tuple(rates) == model.param_names(), name


def test_file_overrides_preset_and_flags_override_file(tmp_path):
    path = write_ini(tmp_path, "[hyperparams]\nT = 123\n\n[run]\nseed = 5\n")
    settings = resolve_settings("gdu-toy", path, {"seed": 9})
    assert settings["T"] == 123          # file beats preset (preset says 5000)
    assert settings["seed"] == 9         # flag beats file
    assert settings["beta"] == pytest.approx(0.01)  # untouched preset value


def test_none_overrides_do_not_mask_lower_layers(tmp_path):
    path = write_ini(tmp_path, "[run]\nseed = 4\n")
    settings = resolve_settings(None, path, {"seed": None, "threads": None})
    assert settings["seed"] == 4
    assert settings["threads"] == 1


def test_unknown_preset_is_named():
    with pytest.raises(ConfigError, match="gdu-p-9h"):
        resolve_settings("gdu-p-9h", None, {})


def test_unknown_section_is_named(tmp_path):
    path = write_ini(tmp_path, "[optimizer]\nmomentum = 0.9\n")
    with pytest.raises(ConfigError, match="optimizer"):
        resolve_settings(None, path, {})


def test_unknown_key_is_named(tmp_path):
    path = write_ini(tmp_path, "[hyperparams]\ntemperature = 3\n")
    with pytest.raises(ConfigError, match="temperature"):
        resolve_settings(None, path, {})


def test_bad_value_is_typed(tmp_path):
    path = write_ini(tmp_path, "[hyperparams]\nbeta = warm\n")
    with pytest.raises(ConfigError, match="beta"):
        resolve_settings(None, path, {})


def test_missing_config_file_is_an_error(tmp_path):
    with pytest.raises(ConfigError, match="no-such"):
        resolve_settings(None, str(tmp_path / "no-such.ini"), {})


def test_learning_rates_parse_as_tuple(tmp_path):
    path = write_ini(tmp_path, "[training]\nlearning_rates = 0.2, 0.1,0.05\n")
    settings = resolve_settings(None, path, {})
    assert settings["learning_rates"] == (0.2, 0.1, 0.05)


def test_clip_parses_booleans(tmp_path):
    for text, expect in (("true", True), ("false", False), ("1", True), ("no", False)):
        path = write_ini(tmp_path, f"[hyperparams]\nclip = {text}\n", f"{text}.ini")
        assert resolve_settings(None, path, {})["clip"] is expect
    path = write_ini(tmp_path, "[hyperparams]\nclip = maybe\n", "bad.ini")
    with pytest.raises(ConfigError, match="clip"):
        resolve_settings(None, path, {})


def test_require_names_first_missing_key():
    with pytest.raises(ConfigError, match=r"train needs a value for 'beta'"):
        require({"arch": "toy", "beta": None}, ("arch", "beta", "epochs"), "train")
