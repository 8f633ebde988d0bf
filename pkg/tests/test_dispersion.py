from __future__ import annotations

import json

import numpy as np
import pytest

from martinet.dispersion import (
    DispersionCurve, DispersionTable, build_table, cheb_coefficients, export_plot, find_min_speed, lobatto_nodes,
    speed_direct, speed_window,
)
from martinet.exceptions import NoInteriorMinimum, OutOfRange
from martinet.oscillator import eigenpair

from test_oscillator import QUARTIC_GROUND

# minimiser and minimum of F_1', Brent on direct solves seeded from a 257-node table
MU_STAR_1 = -1.5137576
A_1 = -0.47552624308


def test_lobatto_nodes_and_interpolation_identity():
    x = lobatto_nodes(-1.0, 1.0, 9)
    assert x[0] == -1.0 and x[-1] == 1.0
    f = np.exp(x)
    coef = cheb_coefficients(f)
    assert np.allclose(np.polynomial.chebyshev.chebval(x, coef), f, atol=1e-14)


def test_speed_limits_on_small_table(table10):
    assert 0.97 < table10.Fprime(10.0) < 1.0
    assert -0.12 < table10.Fprime(-10.0) < 0.0


def test_F_at_zero_is_root_of_quartic_energy(table10):
    assert table10.F(0.0) == pytest.approx(np.sqrt(QUARTIC_GROUND), rel=1e-9)


def test_nodes_reproduced(table10):
    assert np.allclose(table10.F(table10.nodes), table10.F_values, rtol=0, atol=1e-12)
    assert np.allclose(table10.Fprime(table10.nodes), table10.Fprime_values, rtol=0, atol=1e-12)


def test_midpoints_match_direct_solves(table10):
    mids = 0.5 * (table10.nodes[1:] + table10.nodes[:-1])[::37]
    for m in mids:
        assert abs(table10.Fprime(m) - speed_direct(float(m))) < 1e-6


def test_random_points_match_direct_F(table10):
    rng = np.random.default_rng(7)
    for m in rng.uniform(-10, 10, 20):
        assert abs(table10.F(m) - np.sqrt(eigenpair(float(m)).lambda_)) < 1e-7


def test_F_increasing_for_positive_mu(table10):
    v = table10.F(np.linspace(0, 10, 2001))
    assert np.all(np.diff(v) > 0)


def test_interpolant_derivative_agrees_with_hf(table10):
    mu = np.linspace(-9.5, 9.5, 101)
    assert np.max(np.abs(table10.F_series_derivative(mu) - table10.Fprime(mu))) < 1e-6


def test_out_of_range_raises(table10):
    with pytest.raises(OutOfRange):
        table10.F(10.5)


def test_minimiser(table10):
    mu_star, a = find_min_speed(table10)
    assert mu_star < 0
    assert -1 < a < 0
    assert mu_star == pytest.approx(MU_STAR_1, abs=1e-5)
    assert a == pytest.approx(A_1, abs=1e-9)


def test_no_interior_minimum():
    with pytest.raises(NoInteriorMinimum):
        find_min_speed(build_table(1, 1.0, 5.0))


def test_speed_window_forward(table10):
    w = speed_window(table10, 5.0, 0.5)
    assert w.monotone
    assert 0 < w.image[0] < w.image[1] < 1
    assert w.scaled(-1.0) == (-w.image[1], -w.image[0])


def test_speed_window_at_minimiser(table10):
    assert not speed_window(table10, MU_STAR_1, 0.5).monotone


def test_speed_window_backward(table10):
    w = speed_window(table10, -8.0, 0.5)
    assert -1 < w.image[0] < w.image[1] < 0


def test_speed_window_outside_table(table10):
    with pytest.raises(OutOfRange):
        speed_window(table10, 9.8, 0.5)


def test_export_plot(table10, tmp_path):
    path = export_plot(table10, tmp_path / "fig.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 1002
    assert lines[0] == "mu,F,Fprime"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.all(np.abs(data[:, 2]) < 1)
    assert np.all(data[:, 1] > 0)


def test_table_json_round_trip(table10):
    from martinet.io import json_text
    back = DispersionTable.from_dict(json.loads(json_text(table10.to_dict())))
    mu = np.linspace(-10, 10, 33)
    assert np.array_equal(back.F(mu), table10.F(mu))
    assert np.array_equal(back.Fprime(mu), table10.Fprime(mu))


def test_estimator_interface(table10):
    curve = DispersionCurve.from_table(table10)
    X = np.array([[0.0], [5.0]])
    out = curve.transform(X)
    assert out.shape == (2, 2)
    assert np.allclose(out[:, 0], curve.predict(X))
    assert np.allclose(out[:, 1], curve.predict_speed(X))
    assert curve.get_params()["mu_max"] == 10.0


@pytest.mark.slow
def test_wide_table_range_property(table50):
    mus = np.linspace(-50, 50, 4001)
    v = table50.Fprime(mus)
    assert v.max() < 1
    assert table50.Fprime(50.0) > 0.99
    assert table50.Fprime(-50.0) < 0
    i = int(np.argmin(v))
    assert mus[i] < 0
    # single local minimum on the sampled grid
    interior = (v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])
    assert interior.sum() == 1


@pytest.mark.slow
def test_left_speed_matches_power_law(table50):
    law = -(np.sqrt(2) / 4) * 50**-0.75
    assert table50.Fprime(-50.0) == pytest.approx(law, rel=0.01)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the -(sqrt2/4)(-mu)^(-3/4) law gives -0.0188 at mu = -50")
def test_left_speed_within_one_percent_of_zero(table50):
    assert -0.01 < table50.Fprime(-50.0) < 0
