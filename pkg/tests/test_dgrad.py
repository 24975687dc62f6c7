import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resdg.dgrad import DGradPair, itoh_abe_dgrad, validate_closed_forms
from resdg.model import make_damped_harmonic, make_duffing, make_van_der_pol

quad = make_damped_harmonic(0.0).H
duff = make_duffing(0.0).H
coord = st.floats(-10, 10, allow_nan=False)


def test_quadratic_mean():
    g = itoh_abe_dgrad(quad, 0.0, 0.0, 1.0, 3.0)
    assert isinstance(g, DGradPair)
    assert g.dy_part == 2.0


def test_degenerate_increment_falls_back_to_derivative():
    g = itoh_abe_dgrad(quad, 0.5, 0.5, 1.0, 1.0)
    assert g.dy_part == pytest.approx(1.0, abs=1e-9)
    assert g.dx_part == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("y", [-3.0, 0.0, 2.5])
def test_duffing_matches_brute_force_and_closed_form(y):
    g = itoh_abe_dgrad(duff, 0.0, 2.0, y, y + 1.0)
    brute = (duff(2.0, y) - duff(0.0, y)) / 2.0
    assert g.dx_part == brute == 1.0
    assert g.dx_part == make_duffing(0.2).dgradH_x(0.0, 2.0, y)


def test_rejects_non_positive_switch():
    with pytest.raises(ValueError):
        itoh_abe_dgrad(quad, 0, 1, 0, 1, eps_switch=0.0)


def test_non_finite_energy_propagates():
    def H(x, y):
        return math.inf if x > 1 else x

    with pytest.raises(FloatingPointError):
        itoh_abe_dgrad(H, 0.0, 2.0, 0.0, 1.0)


@settings(max_examples=300, deadline=None)
@given(coord, coord, coord, coord, st.sampled_from([quad, duff]))
def test_mean_value_and_telescoping(xa, xb, ya, yb, H):
    g = itoh_abe_dgrad(H, xa, xb, ya, yb)
    scale = max(1.0, abs(H(xa, ya)), abs(H(xb, ya)), abs(H(xb, yb)))
    if abs(yb - ya) > 1e-12:
        assert abs(g.dy_part * (yb - ya) - (H(xb, yb) - H(xb, ya))) <= 1e-12 * scale
    if abs(xb - xa) > 1e-12:
        assert abs(g.dx_part * (xb - xa) - (H(xb, ya) - H(xa, ya))) <= 1e-12 * scale
    if abs(yb - ya) > 1e-12 and abs(xb - xa) > 1e-12:
        total = g.dx_part * (xb - xa) + g.dy_part * (yb - ya)
        assert abs(total - (H(xb, yb) - H(xa, ya))) <= 1e-12 * scale


@pytest.mark.parametrize("H", [quad, duff], ids=["quadratic", "duffing"])
def test_branch_continuity(H):
    # Same increment evaluated on either side of the switch. At the default
    # eps_switch=1e-12 the divided difference alone carries ~1e-4*|H| of
    # cancellation noise, so the check runs where that noise is small.
    eps = 1e-6
    rng = np.random.default_rng(11)
    for x, y in rng.uniform(-10, 10, size=(200, 2)).tolist():
        for delta in (0.5 * eps, 0.99 * eps, 1.01 * eps, 2 * eps):
            quotient = itoh_abe_dgrad(H, x, x + delta, y, y + delta, eps_switch=0.25 * delta)
            derivative = itoh_abe_dgrad(H, x, x + delta, y, y + delta, eps_switch=4 * delta)
            assert abs(quotient.dy_part - derivative.dy_part) <= 1e-6
            assert abs(quotient.dx_part - derivative.dx_part) <= 1e-6 * max(1.0, abs(H(x, y)))


@pytest.mark.parametrize("model, bound", [
    (make_damped_harmonic(0.2), 1e-12),
    (make_van_der_pol(1.0), 1e-12),
    (make_duffing(0.2), 1e-10),
])
def test_validate_closed_forms(model, bound):
    worst = validate_closed_forms(model, 1000, seed=1)
    assert 0.0 <= worst <= bound


def test_validate_closed_forms_single_sample():
    assert validate_closed_forms(make_duffing(0.2), 1, seed=5) >= 0.0
    with pytest.raises(ValueError):
        validate_closed_forms(make_duffing(0.2), 0)
