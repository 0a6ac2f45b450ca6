import math

import pytest

from srdetect.config import ConfigError, RunConfig, from_mapping, load


def test_defaults_and_inf():
    cfg = from_mapping({"nu": "inf", "seed": 1})
    assert math.isinf(cfg.nu) and cfg.K == "auto" and cfg.rel_tol == 0.02


@pytest.mark.parametrize("data", [
    {"treshold": 1.0},
    {"threshold": 1.0, "B": 2.0},
    {"nu": 0},
    {"nu": "never"},
    {"K": "all"},
    {"rule": "page"},
    {"family": "bernoulli", "pre": 0.5, "post": 0.5},
    {"rule": "shiryaev", "rho": 0.0},
    {"n_reps": 1},
])
def test_rejected(data):
    with pytest.raises(ConfigError):
        from_mapping(data)


def test_point_required():
    with pytest.raises(ConfigError):
        RunConfig().require_point()


def test_load_with_override(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('family = "bernoulli"\npre = 0.5\npost = 0.75\nthreshold = 1.4\nseed = 3\n')
    cfg = load(str(p), {"seed": 9, "out": None})
    assert cfg.seed == 9 and cfg.fixed_rule().threshold == 1.4
    assert cfg.model().family == "bernoulli"
    p.write_text("family = \n")
    with pytest.raises(ConfigError):
        load(str(p))
