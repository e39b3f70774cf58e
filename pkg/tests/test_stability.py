import math

import numpy as np
import pytest

from crossdiff.model import builtin_example, coexistence_equilibrium, diffusion_matrix, jacobian_K
from crossdiff.stability import (
    EmptyBandError,
    NoBracketError,
    bracketed_root,
    critical_pair,
    dispersion,
    dispersion_coeffs,
    growth_rate,
    km_sq,
    marginal_delta,
    marginal_function,
    q_delta,
    unstable_band,
)

B_ROWS = (3.85e-2, 9.91e-3, 4.42e-3)


def phi_smaller_root(b):
    """Smaller root of -4 b s^2 + (8 - 6 b) s - b^2 / 4."""
    a, c = 8 - 6 * b, b * b / 4
    disc = math.sqrt(a * a - 16 * b * c)
    return 2 * c / (a + disc)  # stable form of (a - disc) / (8 b)


@pytest.mark.parametrize("b", [0.0385, 0.2, 0.4])
@pytest.mark.parametrize("delta", [0.0, 1e-4, 0.01])
def test_q_delta_closed_form(b, delta):
    p = builtin_example("E1", b, delta)
    u1, u2 = coexistence_equilibrium(p)
    assert q_delta(p) == pytest.approx(-u1 * u2 * (b / 2 - 2 * delta), rel=1e-12, abs=1e-15)


def test_q_zero_at_quarter_b():
    b = 0.2
    assert abs(q_delta(builtin_example("E1", b, b / 4))) < 1e-15


def test_dispersion_matches_brute_force_determinant():
    for fam in ("E1", "E2"):
        p = builtin_example(fam, 0.0385, 3e-5)
        K = jacobian_K(p)
        D = diffusion_matrix(p, coexistence_equilibrium(p))
        for k in range(1, 51):
            brute = np.linalg.det(K - k * k * D)
            assert dispersion(p, None, k * k) == pytest.approx(brute, rel=1e-9, abs=1e-12 * abs(brute) + 1e-12)
        a, q, c = dispersion_coeffs(p)
        ks = np.arange(1, 51.0) ** 2
        np.testing.assert_allclose(dispersion(p, None, ks), a * ks ** 2 + q * ks + c, rtol=1e-12)


def test_dispersion_at_zero_is_det_K():
    p = builtin_example("E1", 0.1, 0.01)
    assert dispersion(p, None, 0.0) == pytest.approx(np.linalg.det(jacobian_K(p)), rel=1e-14)
    assert dispersion(p, None, 0.0) > 0


def test_dispersion_rejects_negative():
    with pytest.raises(ValueError):
        dispersion(builtin_example("E1", 0.1), 0.0, -1.0)


@pytest.mark.parametrize("b", B_ROWS + (1e-3, 0.1))
def test_marginal_delta_is_phi_root(b):
    p = builtin_example("E1", b)
    d = marginal_delta(p)
    assert d == pytest.approx(phi_smaller_root(b), rel=1e-12)
    phi = -4 * b * d * d + (8 - 6 * b) * d - b * b / 4
    assert abs(phi) < 1e-14 * (8 - 6 * b) * d
    u1, u2 = coexistence_equilibrium(p)
    assert marginal_function(p, d) / (u1 * u2) ** 2 == pytest.approx(phi, abs=1e-14 * (8 - 6 * b) * d)


def test_double_root_at_marginal(e1_row1, report_row1):
    dbar = report_row1.delta_bar_c
    kmsq = km_sq(e1_row1, dbar)
    c = dispersion_coeffs(e1_row1, dbar)[2]
    assert abs(dispersion(e1_row1, dbar, kmsq)) < 1e-10 * c
    km, kp = unstable_band(e1_row1, dbar)
    assert km == pytest.approx(kmsq, rel=1e-6) and kp == pytest.approx(kmsq, rel=1e-6)


def test_band_row1(e1_row1, report_row1):
    km, kp = unstable_band(e1_row1, 0.95 * report_row1.delta_bar_c)
    assert km < 100 < kp
    assert km < report_row1.kc_sq_marginal < kp
    mid = 0.5 * (km + kp)
    assert dispersion(e1_row1, 0.95 * report_row1.delta_bar_c, mid) < 0


def test_band_errors(e1_row1, report_row1):
    with pytest.raises(ValueError):
        unstable_band(e1_row1, 0.0)
    with pytest.raises(EmptyBandError):
        unstable_band(e1_row1, 2 * report_row1.delta_bar_c)


def test_no_bracket_for_stable_system():
    # alpha, B chosen so the kinetics are stable but no q < 0 is possible (no cross terms)
    p = builtin_example("E1", 0.0)
    with pytest.raises(NoBracketError):
        marginal_delta(p, delta_max=1.0, delta_min=1e-12)


@pytest.mark.parametrize("b,delta,k", [(3.85e-2, 4.53e-5, 10), (9.91e-3, 2.94e-6, 20), (4.42e-3, 5.83e-7, 30)])
def test_critical_pair_reference(b, delta, k):
    p = builtin_example("E1", b)
    for conv in ("marginal-nearest-integer", "integer-entry"):
        rep = critical_pair(p, conv)
        assert rep.k_c == k
        assert rep.mode_convention == conv
        assert 0 < rep.delta_c <= rep.delta_bar_c
        # the mode lies in the band just below threshold
        km, kp = unstable_band(p, 0.95 * rep.delta_c)
        assert km < k * k < kp
    entry = critical_pair(p, "integer-entry")
    assert entry.band[0] * (1 - 1e-9) <= k * k <= entry.band[1] * (1 + 1e-9)
    rep = critical_pair(p)
    # at the marginal threshold the band is the single point k_m^2
    assert abs(rep.k_c - math.sqrt(rep.kc_sq_marginal)) <= 0.5
    assert 0.95 * rep.delta_c == pytest.approx(delta, rel=0.02)
    assert rep.q_value < 0


def test_integer_entry_marginal_mode():
    p = builtin_example("E1", 3.85e-2)
    rep = critical_pair(p, "integer-entry")
    assert abs(dispersion(p, rep.delta_c, rep.k_c ** 2)) < 1e-10 * dispersion(p, rep.delta_c, 0.0)


def test_unknown_convention():
    with pytest.raises(ValueError):
        critical_pair(builtin_example("E1", 0.1), "nearest")


def test_growth_rate_matches_eigenvalues(e1_row1, report_row1):
    d = 0.95 * report_row1.delta_c
    K = jacobian_K(e1_row1)
    D = diffusion_matrix(e1_row1, coexistence_equilibrium(e1_row1), d)
    for k in (0, 1, 5, 10, 11, 30):
        A = K - k * k * D
        lam = np.max(np.linalg.eigvals(A).real)
        assert np.trace(A) < 0
        assert growth_rate(e1_row1, d, k) == pytest.approx(lam, rel=1e-6, abs=1e-12)
        assert np.sign(growth_rate(e1_row1, d, k)) == -np.sign(dispersion(e1_row1, d, k * k))


def test_growth_signs(e1_row1, report_row1):
    assert growth_rate(e1_row1, 0.0, 0) < 0
    assert growth_rate(e1_row1, 0.95 * report_row1.delta_c, 10) > 0
    above = 1.05 * report_row1.delta_bar_c
    assert all(growth_rate(e1_row1, above, k) < 0 for k in range(0, 21))
    with pytest.raises(ValueError):
        growth_rate(e1_row1, 0.0, -1)


def test_k_plus_diverges_as_delta_vanishes(e1_row1, report_row1):
    deltas = report_row1.delta_bar_c * np.logspace(-0.01, -8, 12)
    kp = [unstable_band(e1_row1, d)[1] for d in deltas]
    assert np.all(np.diff(kp) > 0)
    assert kp[-1] > 1e8


def test_bracketed_root_newton_polish():
    r = bracketed_root(lambda x: x ** 3 - 2, lambda x: 3 * x * x, 0.0, 5.0)
    assert r == pytest.approx(2 ** (1 / 3), rel=1e-14)
    with pytest.raises(NoBracketError):
        bracketed_root(lambda x: x * x + 1, lambda x: 2 * x, -1.0, 1.0)


def test_report_as_dict(report_row1):
    d = report_row1.as_dict()
    assert d["k_c"] == 10 and isinstance(d["band"], tuple)
