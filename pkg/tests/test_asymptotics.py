from __future__ import annotations

import numpy as np
import pytest

from martinet.asymptotics import (
    cross_validate, dF_minus, dF_plus, direct_gap, lambda_minus, lambda_plus, loglog_slope, pairing_gap,
)
from martinet.exceptions import DomainError
from martinet.oscillator import eigenpair

# Herring/Wronskian gaps lambda_2 - lambda_1, frozen from the first build
GAP_GOLDEN = {
    -5.0: 2.9818542887e-5,
    -6.0: 3.50846076e-7,
    -10.0: 1.0818e-16,
    -15.0: 8.516e-32,
    -20.0: 8.6314e-50,
    -25.0: 2.9409e-70,
}


def test_lambda_plus_values():
    assert lambda_plus(100, 1) == pytest.approx(10014.1421, abs=1e-4)
    assert lambda_plus(100, 2) == pytest.approx(10042.4264, abs=1e-4)


def test_lambda_plus_against_solver():
    assert abs(eigenpair(100.0).lambda_ - lambda_plus(100, 1)) < 0.05


def test_dF_plus_values():
    assert dF_plus(100, 1) == pytest.approx(0.99964645, abs=1e-8)
    assert dF_plus(25, 3) == pytest.approx(1 - 5 / (2 * np.sqrt(2)) * 25**-1.5, rel=1e-14)
    assert dF_plus(25, 3) == pytest.approx(0.98586, abs=1e-5)


def test_lambda_minus_values():
    assert lambda_minus(-100, 1) == 20.0
    assert lambda_minus(-25, 2) == 30.0
    assert eigenpair(-100.0).lambda_ == pytest.approx(20.0, rel=0.15)


def test_dF_minus_values():
    assert dF_minus(-100, 1) == pytest.approx(-0.011180, abs=1e-6)
    assert dF_minus(-16, 1) == pytest.approx(-0.044194, abs=1e-6)


def test_wrong_regime_rejected():
    with pytest.raises(DomainError):
        lambda_plus(-1.0)
    with pytest.raises(DomainError):
        dF_minus(3.0)
    with pytest.raises(DomainError):
        pairing_gap(-2.0)


def test_gap_agrees_with_direct_difference():
    assert pairing_gap(-5.0) == pytest.approx(direct_gap(-5.0), rel=1e-6)
    assert pairing_gap(-6.0) == pytest.approx(direct_gap(-6.0), rel=1e-5)
    assert pairing_gap(-6.0, k=2) == pytest.approx(direct_gap(-6.0, k=2), rel=1e-5)


@pytest.mark.parametrize("mu", sorted(GAP_GOLDEN))
def test_gap_golden(mu):
    assert pairing_gap(mu) == pytest.approx(GAP_GOLDEN[mu], rel=1e-3)


def test_gap_decays_faster_than_any_power_sampled():
    g = [pairing_gap(m) for m in (-5.0, -10.0, -15.0, -20.0, -25.0)]
    assert all(x > 0 for x in g)
    assert all(a > b for a, b in zip(g, g[1:]))
    for p in range(7):
        assert g[1] * 2.0**p < g[0]
    assert g[4] < 1e-6 * eigenpair(-25.0).lambda_


def test_loglog_slope_exact():
    x = np.array([1.0, 10.0, 100.0])
    assert loglog_slope(x, 3 * x**-2.5) == pytest.approx(-2.5)


def test_cross_validate_plus_lambda():
    r = cross_validate(1, "plus", [25, 50, 100, 200], quantity="lambda")
    assert r.fitted_order <= -0.9


def test_cross_validate_plus_speed():
    r = cross_validate(1, "plus", [25, 50, 100])
    assert r.fitted_order <= -2.5
    for mu, err in zip(r.mu_list, r.abs_err):
        assert err <= 10 * mu**-3


def test_cross_validate_minus_speed():
    r = cross_validate(1, "minus", [-100, -50, -25])
    assert r.fitted_order <= -1.2
    rel = np.array(r.abs_err) / np.abs(r.asymptotic)
    assert np.all(rel <= 0.15)
    assert abs(r.numeric[r.mu_list.index(-50)] - dF_minus(-50)) / abs(dF_minus(-50)) < 0.1


def test_cross_validate_requires_increasing_mu():
    with pytest.raises(ValueError):
        cross_validate(1, "plus", [50, 25, 100])


def test_report_serialises():
    r = cross_validate(2, "plus", [25, 50, 100], quantity="lambda")
    d = r.to_dict()
    assert d["k"] == 2 and d["regime"] == "plus" and len(d["numeric"]) == 3
