"""Configuration resolution: defaults, file, environment, flags."""
import pytest

from tarot.config import (ENV_CONFIG, ENV_GATEWAY, ENV_OUT_DIR, PipelineConfig,
                          parse_config_file, resolve_config, resolve_out_dir)
from tarot.errors import ConfigError


def test_defaults_pin_the_two_thresholds():
    cfg = PipelineConfig()
    assert cfg.tau == 0.80
    assert cfg.s_neg == 0.30
    assert cfg.anchors == 5
    assert cfg.max_rounds == 2
    assert cfg.rpo and cfg.text_aug and cfg.bbox_aug and cfg.ips and cfg.opm


def test_resolve_with_nothing_gives_validated_defaults():
    cfg = resolve_config(flags={}, env={})
    assert cfg == PipelineConfig()


def test_file_overrides_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("tau = 0.7\nopm = off  # disable the repair loop\n\nworkers=2\n")
    cfg = resolve_config(flags={}, env={}, config_path=path)
    assert cfg.tau == 0.7
    assert cfg.opm is False
    assert cfg.workers == 2
    assert cfg.s_neg == 0.30  # untouched keys keep defaults


def test_env_overrides_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("gateway = http://file-host:1\nbackend_mode = remote\n")
    cfg = resolve_config(flags={}, env={ENV_GATEWAY: "http://env-host:2"},
                         config_path=path)
    assert cfg.gateway == "http://env-host:2"


def test_flags_override_everything(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("tau = 0.7\ngateway = http://file-host:1\n")
    cfg = resolve_config(
        flags={"tau": "0.9", "gateway": "http://flag-host:3"},
        env={ENV_GATEWAY: "http://env-host:2"}, config_path=path)
    assert cfg.tau == 0.9
    assert cfg.gateway == "http://flag-host:3"


def test_none_valued_flags_do_not_override():
    cfg = resolve_config(flags={"tau": None, "opm": "off"}, env={})
    assert cfg.tau == 0.80
    assert cfg.opm is False


def test_config_file_found_through_environment(tmp_path):
    path = tmp_path / "env.cfg"
    path.write_text("anchors = 7\n")
    cfg = resolve_config(flags={}, env={ENV_CONFIG: str(path)})
    assert cfg.anchors == 7


def test_bool_words_accept_on_off(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("ips = off\nstrict = true\nrpo = 0\n")
    cfg = resolve_config(flags={}, env={}, config_path=path)
    assert cfg.ips is False and cfg.strict is True and cfg.rpo is False


@pytest.mark.parametrize("line,excerpt", [
    ("mystery = 1", "unknown config key"),
    ("tau value", "expected key = value"),
    ("tau = warm", "expects a number"),
    ("workers = 1.5", "expects an integer"),
    ("opm = maybe", "expects a boolean"),
])
def test_file_parse_errors(tmp_path, line, excerpt):
    path = tmp_path / "bad.cfg"
    path.write_text(line + "\n")
    with pytest.raises(ConfigError, match=excerpt):
        parse_config_file(path)


def test_missing_config_file_is_an_error(tmp_path):
    with pytest.raises(ConfigError):
        resolve_config(flags={}, env={}, config_path=tmp_path / "absent.cfg")


@pytest.mark.parametrize("overrides", [
    {"tau": 1.5},
    {"s_neg": -0.1},
    {"anchors": 0},
    {"min_region_frac": 0.0},
    {"max_rounds": -1},
    {"backend_mode": "imaginary"},
    {"backend_mode": "remote"},  # remote without a gateway URL
    {"workers": 0},
    {"retries": -1},
    {"timeout_s": 0.0},
])
def test_validation_rejects_out_of_range(overrides):
    with pytest.raises(ConfigError):
        resolve_config(flags=overrides, env={})


def test_digest_tracks_semantic_changes_only():
    base = PipelineConfig()
    same = PipelineConfig()
    assert base.digest() == same.digest()
    assert len(base.digest()) == 12
    assert PipelineConfig(tau=0.9).digest() != base.digest()


def test_out_dir_resolution_order():
    assert resolve_out_dir("given", env={ENV_OUT_DIR: "from-env"}) == "given"
    assert resolve_out_dir(None, env={ENV_OUT_DIR: "from-env"}) == "from-env"
    assert resolve_out_dir(None, env={}) is None
