import json
from pathlib import Path

import numpy as np
import pytest

from mfgpen.config import DEFAULT_LADDER
from mfgpen.errors import ConfigError, DomainError
from mfgpen.io import config_digest, format_csv, format_json, level_name, load_config, parse_config
from mfgpen.io.formatters import format_number
from mfgpen.model.catalog import SaturatingCoupling, ZeroCoupling

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = {
    "horizon": 1.0,
    "constants": {"K": 1.0, "delta": 1.0, "eps0": 1.0},
    "coefficients": {"B": 1.0, "Q": 1.0, "R": 1.0},
    "law": {"family": "point", "value": 1.0, "count": 2},
}


def parse(**overrides):
    doc = dict(MINIMAL)
    doc.update(overrides)
    return parse_config(json.dumps(doc))


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_parse(name):
    config = load_config(CONFIGS / name)
    assert config.grid.T == config.coefficients.T
    assert len(config.ladder) >= 1


def test_default_config():
    config = load_config(CONFIGS / "default.json")
    assert config.ladder == DEFAULT_LADDER
    assert config.law.count == 64 and config.law.seed == 0
    assert isinstance(config.coefficients.h, ZeroCoupling)
    assert config.grid.eps_T == 1e-3


def test_minimal_document_uses_defaults():
    config = parse()
    assert config.ladder == DEFAULT_LADDER
    assert config.output == "out"
    assert config.coefficients.A(0.5) == 0.0
    assert config.tolerances.shoot == 1e-9


def test_coupling_declaration():
    config = parse(coefficients={"B": 1.0, "Q": 1.0, "R": 1.0,
                                 "h": {"family": "saturating", "c": -0.2, "s": 1.0}})
    assert isinstance(config.coefficients.h, SaturatingCoupling)


@pytest.mark.parametrize("overrides, field", [
    ({"extra": 1}, "extra"),
    ({"constants": {"K": 1.0, "delta": 1.0, "eps0": 1.0, "kappa": 2.0}}, "constants.kappa"),
    ({"grid": {"interval": 10}}, "grid.interval"),
    ({"tolerances": {"shot": 1e-9}}, "tolerances.shot"),
    ({"law": {"family": "point", "value": 1.0, "seed": 3}}, "law.seed"),
    ({"coefficients": {"B": 1.0, "Q": 1.0}}, "coefficients.R"),
    ({"coefficients": {"B": 1.0, "Q": 1.0, "R": {"family": "cubic"}}}, "coefficients.R.family"),
    ({"ladder": [10, 1]}, "ladder"),
    ({"horizon": "one"}, "horizon"),
    ({"samples_in_csv": "yes"}, "samples_in_csv"),
])
def test_rejections_name_the_field(overrides, field):
    with pytest.raises(ConfigError) as info:
        parse(**overrides)
    assert info.value.field == field


def test_missing_law_is_rejected():
    doc = {k: v for k, v in MINIMAL.items() if k != "law"}
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(doc))
    assert info.value.field == "law"


def test_negative_sample_is_a_domain_error():
    with pytest.raises(DomainError):
        parse(law={"family": "samples", "values": [1.0, -1.0]})


def test_json_syntax_error_has_position():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "horizon": 1.0,\n  "constants": }\n')
    assert info.value.line == 3
    assert info.value.column is not None
    assert str(info.value).startswith("line 3")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_probe_times_become_grid_nodes():
    config = parse(probes={"times": [0.1234], "slope": [0.4321]})
    assert config.grid.node_index(0.1234) is not None
    assert config.grid.node_index(0.4321) is not None
    assert config.probes.slope_times == (0.4321,)


def test_seed_override_changes_samples_and_digest():
    text = json.dumps(dict(MINIMAL, law={"family": "uniform", "low": 0.0, "high": 1.0,
                                         "count": 8, "seed": 1}))
    a, b, c = parse_config(text), parse_config(text), parse_config(text, seed=2)
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest(c)
    np.testing.assert_array_equal(a.law.samples, b.law.samples)
    assert not np.array_equal(a.law.samples, c.law.samples)


def test_digest_ignores_key_order():
    reordered = dict(reversed(list(MINIMAL.items())))
    assert config_digest(parse_config(json.dumps(MINIMAL))) == \
        config_digest(parse_config(json.dumps(reordered)))


def test_csv_layout():
    text = format_csv({"t": [0.0, 0.5], "P": [1.0, 1.0 / 3.0]}, "d1g")
    lines = text.split("\n")
    assert lines[0] == "# config_digest: d1g"
    assert lines[1] == "t,P"
    assert lines[3] == "0.5,0.33333333333333331"
    assert text.endswith("\n")


def test_number_and_json_formatting():
    assert format_number(float("inf")) == "inf"
    assert format_number(float("nan")) == "nan"
    data = json.loads(format_json({"b": np.float64(2.0), "a": np.arange(2), "c": float("inf")}))
    assert data == {"a": [0, 1], "b": 2.0, "c": "inf"}
    assert level_name(1e6) == "level_1e+06"
    assert level_name(10.0) == "level_10"
