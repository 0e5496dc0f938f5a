from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fragkin.config import (
    PRESETS,
    ConfigError,
    RunConfiguration,
    load_config,
    load_preset,
    norm_specs,
    parse_config,
    preset_text,
    serialize,
)

FIXTURES = Path(__file__).parent / "fixtures"

MINIMAL = """
[grids]
points = 16
sizes = 32
"""


def test_minimal_text_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.grids.points == 16 and cfg.grids.sizes == 32
    default = RunConfiguration()
    assert cfg.rates == default.rates and cfg.solver == default.solver
    assert cfg.coag_kernel.rho == 0.5 and cfg.analysis.certify is True


def test_empty_text_is_all_defaults():
    assert parse_config("").to_dict() == RunConfiguration().to_dict()


def test_rho_outside_interval():
    with pytest.raises(ConfigError) as err:
        parse_config("[coag_kernel]\nfamily = \"constant\"\nrho = 1.5\n")
    assert "must lie in the open interval (0, 1)" in str(err.value)
    assert err.value.errors[0].startswith("line 3:")


def test_unknown_key_has_line_number():
    text = "[solver]\ndt = 0.01\nt_edn = 2.0\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.errors == ["line 3: unknown key 't_edn' in [solver]"]


def test_unknown_section():
    with pytest.raises(ConfigError, match=r"line 1: unknown section \[solvers\]"):
        parse_config("[solvers]\ndt = 0.1\n")


def test_type_mismatch():
    with pytest.raises(ConfigError, match="expected an integer"):
        parse_config("[grids]\npoints = 16.5\n")


def test_all_errors_reported():
    with pytest.raises(ConfigError) as err:
        parse_config("[grids]\npoints = 12\nsizes = 1\n")
    assert len(err.value.errors) == 2


def test_syntax_error():
    with pytest.raises(ConfigError, match="syntax error"):
        parse_config("[grids\n")


def test_bad_norm_key():
    with pytest.raises(ConfigError, match="p\\|ell\\|s"):
        parse_config('[analysis]\nnorms = ["2|x"]\n')


@pytest.mark.parametrize("name", PRESETS)
def test_presets_round_trip(name):
    cfg = load_preset(name)
    again = parse_config(serialize(cfg))
    assert again.to_dict() == cfg.to_dict()
    assert serialize(again) == serialize(cfg)
    assert again.sha256 == cfg.sha256


def test_golden_preset():
    expected = json.loads((FIXTURES / "constant-kernel-coagulation.json").read_text())
    assert load_preset("constant-kernel-coagulation").to_dict() == expected


def test_unknown_preset():
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_text("nope")


def test_load_config_resolves_relative_paths(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('[initial_condition]\ncheckpoint = "state.ckpt"\n')
    cfg = load_config(path)
    assert cfg.checkpoint_path() == tmp_path / "state.ckpt"


def test_hash_changes_with_content():
    a = parse_config(MINIMAL)
    b = parse_config(MINIMAL + "[solver]\ndt = 0.002\n")
    assert a.sha256 != b.sha256 and len(a.sha256) == 64


def test_norm_specs():
    cfg = parse_config('[analysis]\nnorms = ["1|xi|0", "2|1|0.5"]\n')
    assert [s.key for s in norm_specs(cfg)] == ["1|xi|0", "2|1|0.5"]
    assert len(norm_specs(parse_config(""))) == 6


@given(st.floats(1e-6, 1.0), st.floats(1e-3, 100.0), st.integers(1, 100), st.sampled_from(["guard", "patankar"]),
       st.floats(0.01, 0.99))
def test_round_trip_property(dt, t_end, every, policy, rho):
    cfg = RunConfiguration()
    cfg.solver = dataclasses.replace(cfg.solver, dt=dt, t_end=t_end, output_every=every, positivity_policy=policy)
    cfg.coag_kernel = dataclasses.replace(cfg.coag_kernel, rho=rho)
    assert parse_config(serialize(cfg)).to_dict() == cfg.to_dict()
