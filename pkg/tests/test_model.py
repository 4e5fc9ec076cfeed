from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crnsens.model import (
    BUILTIN_MODELS,
    ModelSyntaxError,
    SystemInstance,
    builtin_network,
    convert_sensitivity,
    fluid_rate,
    from_stochastic_param,
    load_network,
    parse_network,
    propensity,
    to_stochastic_param,
)


def test_parse_reversible_isomerization():
    net = parse_network("S1 -> S2 @ 0.3 \n S2 -> S1 @ 0.2")
    assert net.species == ("S1", "S2")
    assert net.n_reactions == 2
    assert net.stoichiometry.tolist() == [[-1, 1], [1, -1]]
    assert net.rates.tolist() == [0.3, 0.2]


def test_parse_pure_production():
    net = parse_network("0 -> S @ 1.0")
    r = net.reactions[0]
    assert r.reactant_counts == (0,)
    assert r.product_counts == (1,)
    assert r.order == 0


def test_parse_empty_is_error():
    with pytest.raises(ModelSyntaxError):
        parse_network("")
    with pytest.raises(ModelSyntaxError):
        parse_network("# only a comment\n\n")


def test_parse_header_lines_and_coefficients():
    net = parse_network(
        "species A B C\ninit A=1/2 B=0 C=3\n2*A + B -> C @ 0.5  # comment\nC -> 0 @ 1\n"
    )
    assert net.species == ("A", "B", "C")
    assert net.reactant_matrix.tolist() == [[2, 1, 0], [0, 0, 1]]
    assert net.default_x0 == (Fraction(1, 2), Fraction(0), Fraction(3))
    assert net.orders.tolist() == [3, 1]


@pytest.mark.parametrize(
    "text",
    [
        "S1 -> S2",  # missing rate
        "S1 -> S2 @ -1",
        "S1 -> S2 @ 0",
        "S1 => S2 @ 1",
        "2.5*S1 -> S2 @ 1",
        "species A\nB -> A @ 1",  # undeclared species
        "A -> B @ 1\nspecies A B",  # header after reactions
        "S1 -> S2 @ abc",
        " -> S2 @ 1",
    ],
)
def test_parse_errors(text):
    with pytest.raises(ModelSyntaxError):
        parse_network(text)


def test_parse_error_reports_line():
    with pytest.raises(ModelSyntaxError) as exc:
        parse_network("A -> B @ 1\nB -> @ 2\n")
    assert exc.value.lineno == 2


def test_zero_rates_allowed_on_request():
    net = parse_network("A -> B @ 0", allow_zero_rates=True)
    assert net.rates.tolist() == [0.0]


def test_format_round_trip():
    for name in BUILTIN_MODELS:
        net = builtin_network(name)
        again = parse_network(net.format())
        assert again == net
        assert again.default_x0 == net.default_x0


def test_load_network_builtin_and_file(tmp_path):
    p = tmp_path / "m.crn"
    p.write_text(BUILTIN_MODELS["reversible_isomerization"])
    assert load_network(p) == load_network("builtin:reversible_isomerization")
    with pytest.raises(KeyError):
        load_network("builtin:missing")


def _dimer_instance(N):
    return SystemInstance.from_network(builtin_network("decaying_dimerizing"), N)


def test_propensity_dimerization():
    inst = _dimer_instance(10)
    assert propensity(inst, np.array([20, 0, 0]), 1) == pytest.approx(0.038, rel=1e-14)


@pytest.mark.parametrize("N", [1, 7, 100])
def test_propensity_pure_production(N):
    inst = SystemInstance.from_network(builtin_network("birth_death"), N)
    for x in (0, 5, 1000):
        assert propensity(inst, np.array([x]), 0) == pytest.approx(N * 1.0)


def test_propensity_empty_reactant_pool():
    inst = _dimer_instance(10)
    assert propensity(inst, np.array([0, 3, 0]), 0) == 0.0
    assert propensity(inst, np.array([1, 0, 0]), 1) == 0.0


def test_fluid_rates():
    net = builtin_network("decaying_dimerizing")
    assert fluid_rate(net, [2.0, 0, 0], 1) == pytest.approx(0.004)
    lin = parse_network("A -> B @ 0.5")
    assert fluid_rate(lin, [3.0, 0], 0) == pytest.approx(1.5)
    for j in range(net.n_reactions):
        assert fluid_rate(net, [0.0, 0.0, 0.0], j) == 0.0


def test_stochastic_parameter_conversion():
    assert to_stochastic_param(0.002, 10, 2) == pytest.approx(0.0002)
    assert to_stochastic_param(0.7, 10, 1) == 0.7
    assert to_stochastic_param(1.0, 10, 0) == pytest.approx(10.0)
    assert convert_sensitivity(5.0, 10, 2) == pytest.approx(50.0)
    assert convert_sensitivity(3.5, 10, 1) == 3.5
    assert convert_sensitivity(0.0, 123, 3) == 0.0


@given(c=st.floats(1e-6, 1e6), N=st.integers(1, 10**6), order=st.integers(0, 3))
def test_stochastic_parameter_round_trip(c, N, order):
    back = from_stochastic_param(to_stochastic_param(c, N, order), N, order)
    assert back == pytest.approx(c, rel=1e-12)


@given(N=st.integers(1, 200), x=st.integers(0, 400))
def test_propensity_approaches_fluid_rate(N, x):
    # a^N(N y) / N -> fluid rate; for unimolecular channels it is exact
    inst = _dimer_instance(N)
    y = x / N
    assert propensity(inst, np.array([x, 0, 0]), 0) / N == pytest.approx(
        fluid_rate(inst.network, [y, 0, 0], 0), rel=1e-12)
    exact = 0.002 * y * (y - 1 / N) / 2
    assert propensity(inst, np.array([x, 0, 0]), 1) / N == pytest.approx(exact, rel=1e-12, abs=1e-300)


def test_system_instance_validation():
    net = builtin_network("reversible_isomerization")
    with pytest.raises(ValueError):
        SystemInstance.from_network(net, 0)
    with pytest.raises(ValueError):
        SystemInstance.from_network(net, 3, (Fraction(1, 2), 1))
    with pytest.raises(ValueError):
        SystemInstance.from_network(net, 3, (1,))
    inst = SystemInstance.from_network(net, 4, (Fraction(1, 2), 1))
    assert inst.initial_state.tolist() == [2, 4]


def test_stochastic_rates_vector():
    inst = _dimer_instance(10)
    assert np.allclose(inst.stochastic_rates, [1.0, 0.0002, 0.5, 0.04])
