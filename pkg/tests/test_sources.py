import math

import pytest

from homqst.sources import SourceEnsemble, SourceModel, cross_g_n, g_n


def test_fixed_g2():
    assert SourceModel.coherent(0.3).g2 == 1.0
    assert SourceModel.thermal(0.3).g2 == 2.0
    with pytest.raises(ValueError):
        SourceModel("thermal", 0.3, g2=1.5)
    with pytest.raises(ValueError):
        SourceModel("heralded_single_photon", 0.3)
    with pytest.raises(ValueError):
        SourceModel.coherent(-1.0)


@pytest.mark.parametrize("order", range(1, 7))
def test_thermal_and_coherent_orders(order):
    assert g_n(SourceModel.thermal(1.0), order) == math.factorial(order)
    assert g_n(SourceModel.coherent(1.0), order) == 1.0


def test_g_n_examples():
    assert g_n(SourceModel.thermal(1.0), 3) == 6
    assert g_n(SourceModel.coherent(1.0), 5) == 1
    assert g_n(SourceModel.heralded(0.1, 0.2), 1) == 1
    assert g_n(SourceModel.heralded(0.1, 0.2), 2) == 0.2


def test_heralded_higher_orders_need_table():
    with pytest.raises(ValueError):
        g_n(SourceModel.heralded(0.1, 0.2), 3)
    s = SourceModel("heralded_single_photon", 0.1, 0.2, gn_table={3: 0.05})
    assert g_n(s, 3) == 0.05


def test_cross_g_n():
    assert cross_g_n(SourceEnsemble.replicate(SourceModel.thermal(1.0), 2, "partitioned_thermal")) == 2
    assert cross_g_n(SourceEnsemble.replicate(SourceModel.coherent(1.0), 3)) == 1
    for s in (SourceModel.thermal(1.0), SourceModel.coherent(2.0), SourceModel.heralded(0.1, 0.1)):
        assert cross_g_n(SourceEnsemble((s,))) == 1


def test_partitioned_requires_thermal():
    with pytest.raises(ValueError):
        SourceEnsemble((SourceModel.thermal(1.0), SourceModel.coherent(1.0)), "partitioned_thermal")


def test_moments():
    ens = SourceEnsemble((SourceModel.heralded(0.2, 0.3), SourceModel.coherent(0.5)))
    assert ens.moment([2, 1]) == pytest.approx(0.3 * 0.04 * 0.5)
    part = SourceEnsemble.replicate(SourceModel.thermal(0.1), 2, "partitioned_thermal")
    assert part.moment([1, 1]) == pytest.approx(2 * 0.01)
    assert part.moment([2, 1]) == pytest.approx(6 * 0.001)


def test_json_round_trip():
    s = SourceModel("custom", 0.4, 0.7, gn_table={3: 0.2})
    assert SourceModel.from_json_dict(s.to_json_dict()) == s
