from pathlib import Path

import pytest

from crnsens.config import (
    ConfigError,
    load_scaling_config,
    load_time_config,
    read_config_text,
    scaling_config_lines,
    time_config_lines,
)
from crnsens.estimators import EstimatorMethod
from crnsens.study import OutputFunction

RECIPES = Path(__file__).resolve().parents[1] / "recipes"


def test_read_config_text():
    kv = read_config_text("# c\n a = 1 \n\nb=x, y  # tail\n")
    assert kv == {"a": "1", "b": "x, y"}
    with pytest.raises(ConfigError):
        read_config_text("a = 1\na = 2\n")
    with pytest.raises(ConfigError):
        read_config_text("just words\n")


def test_header_mode_stops_at_data():
    text = "# crnsens 0.1.0\n# a = 1\n# b = 2\nmethod,slope\n# c = 3\n"
    assert read_config_text(text, header=True) == {"a": "1", "b": "2"}


def test_load_recipe_resolves_model_relative_to_file():
    cfg = load_scaling_config(RECIPES / "table1.cfg")
    assert Path(cfg.model) == RECIPES / "models" / "reversible_isomerization.crn"
    assert cfg.output == OutputFunction("component", 0)
    assert cfg.param_index == 0
    assert cfg.n_grid == (10, 20, 50, 100, 200, 500)
    assert cfg.methods == (EstimatorMethod.GT, EstimatorMethod.CGT, EstimatorMethod.FD1_CRN)
    assert cfg.h == 0.01 and cfg.n_samples == 100_000 and cfg.seed == 2024


def test_time_recipe_range_syntax():
    cfg = load_time_config(RECIPES / "time_study.cfg")
    assert cfg.t_grid == tuple(float(t) for t in range(1, 21))
    assert cfg.N == 10


def test_unknown_and_missing_keys(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text((RECIPES / "table1.cfg").read_text() + "colour = blue\n")
    with pytest.raises(ConfigError, match="unknown"):
        load_scaling_config(p)
    p.write_text("model = builtin:birth_death\n")
    with pytest.raises(ConfigError, match="missing"):
        load_scaling_config(p)


def test_bad_values(tmp_path):
    p = tmp_path / "c.cfg"
    base = (RECIPES / "table1.cfg").read_text()
    for old, new in [("n_samples = 100000", "n_samples = lots"),
                     ("h = 0.01", "h = 0.01\nx0 = 1/0, 1"),
                     ("methods = GT, CGT, FD1_CRN", "methods = GT, BOGUS")]:
        p.write_text(base.replace(old, new))
        with pytest.raises(ConfigError):
            load_scaling_config(p)


@pytest.mark.parametrize("name", ["table1.cfg", "table1_square.cfg", "table2.cfg", "indicator.cfg"])
def test_scaling_lines_round_trip(tmp_path, name):
    cfg = load_scaling_config(RECIPES / name)
    p = tmp_path / "again.cfg"
    p.write_text("\n".join(scaling_config_lines(cfg)) + "\n")
    assert load_scaling_config(p) == cfg


def test_time_lines_round_trip(tmp_path):
    cfg = load_time_config(RECIPES / "time_study.cfg")
    p = tmp_path / "again.cfg"
    p.write_text("\n".join(time_config_lines(cfg)) + "\n")
    assert load_time_config(p) == cfg
