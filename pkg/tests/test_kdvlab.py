import math

import numpy as np
import pytest
import sympy as sp

from varstring.kdvlab import (
    BlowUpError,
    FitError,
    GKdVParams,
    GridSpec,
    ResolutionError,
    WindowError,
    etdrk4_coefficients,
    fit_order,
    integrate,
    kdv_soliton,
    soliton_is_exact,
    soliton_transit,
    spectral_derivatives,
    window_mask,
)
from varstring.perturb import kdv
from varstring.semiclassics import XSYM, CharacteristicSolution, InitialData


@pytest.fixture(scope="module")
def sin_data():
    return InitialData(sp.sin(XSYM), (-math.pi / 2, math.pi / 2), 2 * math.pi)


def test_grid_requires_power_of_two():
    with pytest.raises(ValueError):
        GridSpec(2 * math.pi, 300)
    g = GridSpec(2 * math.pi, 256, -math.pi)
    assert g.x[0] == -math.pi and len(g.x) == 256
    assert g.refined().N == 512


def test_resolution_check():
    g = GridSpec(2 * math.pi, 256)
    with pytest.raises(ResolutionError):
        g.check_resolves(0.05)
    g.check_resolves(0.2)


def test_spectral_derivatives_of_sine():
    g = GridSpec(2 * math.pi, 256)
    d = spectral_derivatives(np.sin(g.x), g, 3)
    assert np.allclose(d[1], np.cos(g.x), atol=1e-12)
    assert np.allclose(d[3], -np.cos(g.x), atol=1e-11)


def test_etdrk4_coefficients_small_L():
    # at L -> 0 the coefficient of the nonlinear term reduces to h/6
    E, E2, Q, f1, f2, f3 = etdrk4_coefficients(np.array([1e-12]), 0.1)
    assert E[0] == pytest.approx(1.0)
    assert f1[0].real == pytest.approx(0.1 / 6, rel=1e-10)
    assert Q[0].real == pytest.approx(0.1 / 2, rel=1e-10)


def test_linear_symbol_kdv():
    p = GKdVParams.kdv(0.5)
    k = np.array([0.0, 1.0, 2.0])
    assert np.allclose(p.linear_symbol(k), 0.25 * (1j * k) ** 3)


def test_soliton_is_exact_symbolically():
    assert soliton_is_exact()


def test_soliton_regression():
    err, traj = soliton_transit()
    assert err < 1e-6
    assert traj.resolved


def test_soliton_profile_moves():
    x = np.linspace(-10, 10, 201)
    assert np.argmax(kdv_soliton(x, 1.0, 0.5, 1.0)) != np.argmax(kdv_soliton(x, 0.0, 0.5, 1.0))


def test_dispersionless_run_matches_characteristics(sin_data):
    S = CharacteristicSolution(kdv(), sin_data)
    g = GridSpec(2 * math.pi, 512, -math.pi)
    u = integrate(GKdVParams.kdv(0.0), sin_data, 0.5, g, 2e-3).final
    assert np.abs(u - S.solve_v0(g.x, 0.5)).max() < 1e-10


def test_conservation_is_tracked(sin_data):
    g = GridSpec(2 * math.pi, 256, -math.pi)
    tr = integrate(GKdVParams.kdv(0.3), sin_data, 0.3, g, 2e-3)
    assert tr.mass_drift < 1e-12
    assert tr.momentum_drift < 1e-8


def test_blowup_detected():
    # an explicit step far beyond the advective limit
    g = GridSpec(2 * math.pi, 256, -math.pi)
    with pytest.raises(BlowUpError):
        integrate(GKdVParams.kdv(0.0), lambda x: 10 * np.sin(x), 3.0, g, 0.1, n_out=100)


def test_unresolved_shock_warns(sin_data):
    g = GridSpec(2 * math.pi, 256, -math.pi)
    with pytest.warns(RuntimeWarning, match="spectral tail"):
        tr = integrate(GKdVParams.kdv(0.0), sin_data, 2.0, g, 1e-2)
    assert not tr.resolved


def test_window_excludes_far_branch(sin_data):
    S = CharacteristicSolution(kdv(), sin_data)
    x = GridSpec(2 * math.pi, 256, -math.pi).x
    m = window_mask(S, x, 0.5, (-math.pi / 2, math.pi / 2))
    assert 0 < m.sum() < len(x)
    assert m[np.argmin(np.abs(x))]


def test_fit_order_recovers_slope():
    eps = np.array([0.2, 0.14, 0.1, 0.07, 0.05])
    fit = fit_order(3.0 * eps ** 4, eps)
    assert fit.slope == pytest.approx(4.0, abs=1e-12)


def test_fit_order_rejects_bad_input():
    with pytest.raises(FitError):
        fit_order([1.0, 2.0, 3.0], [0.1, 0.2, 0.3])
    with pytest.raises(FitError):
        fit_order([1e-3, 2e-3, 1e-4, 1e-5], [0.2, 0.14, 0.1, 0.07])


def test_window_error_is_value_error():
    assert issubclass(WindowError, ValueError)
