import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdcc.capacity import capacity
from mdcc.channel import Channel, binary_entropy, bsc, conditional_kl, identity_channel, mutual_information
from mdcc.exponents import (
    EXPONENT_COLUMNS,
    critical_rate,
    err_exponent,
    esp_exponent,
    esp_haroutunian,
    exponent_csv,
    exponent_curve,
    exponent_point,
    max_eo_over_p,
    optimizer_path,
)
from mdcc.gallager import eo, eo_batch

from conftest import channel_corpus

C_BSC = math.log(2) - binary_entropy(0.1)


def bsc_sphere_packing_mp(R, p=0.1):
    """BSC sphere-packing exponent D(d||p), with h(d) = ln 2 - R and d in [p, 1/2]."""
    with mpmath.workdps(40):
        p = mpmath.mpf(p)
        h = lambda d: -d * mpmath.log(d) - (1 - d) * mpmath.log(1 - d)
        d = mpmath.findroot(lambda d: h(d) - (mpmath.log(2) - R), (p, mpmath.mpf("0.5")), solver="anderson")
        return float(d * mpmath.log(d / p) + (1 - d) * mpmath.log((1 - d) / (1 - p)))


def bsc_critical_rate_mp(p=0.1):
    with mpmath.workdps(40):
        p = mpmath.mpf(p)
        d = mpmath.sqrt(p) / (mpmath.sqrt(p) + mpmath.sqrt(1 - p))
        return float(mpmath.log(2) + d * mpmath.log(d) + (1 - d) * mpmath.log(1 - d))


class TestInnerMax:
    def test_identity(self):
        for k in (2, 3):
            P, v = max_eo_over_p(0.7, identity_channel(k))
            assert v == pytest.approx(0.7 * math.log(k), abs=1e-12)
            assert np.allclose(P.weights, 1 / k, atol=1e-6)

    def test_bsc_symmetric(self, W_bsc):
        for rho in (0.1, 1.0, 10.0):
            P, v = max_eo_over_p(rho, W_bsc)
            assert np.allclose(P.weights, 0.5, atol=1e-8)
            assert v == pytest.approx(eo(rho, [0.5, 0.5], W_bsc), abs=1e-13)

    def test_rho_zero(self, W_bsc):
        assert max_eo_over_p(0.0, W_bsc)[1] == 0.0

    def test_brute_grid_two_inputs(self):
        for W in channel_corpus(5, 40, max_k=2, max_m=4):
            a = np.linspace(0, 1, 100_001)
            for rho in (0.3, 1.0):
                best = eo_batch(np.full(a.size, rho), np.column_stack([a, 1 - a]), W)[:, 0].max()
                assert max_eo_over_p(rho, W)[1] == pytest.approx(best, abs=1e-9)
                assert max_eo_over_p(rho, W)[1] >= best - 1e-14


class TestRandomCoding:
    def test_at_capacity(self, W_bsc):
        pt = err_exponent(C_BSC, W_bsc)
        assert pt.E_r == pytest.approx(0.0, abs=1e-12)
        assert pt.rho_star_r == pytest.approx(0.0, abs=1e-6)

    def test_at_zero_rate(self, W_bsc):
        pt = err_exponent(0.0, W_bsc)
        assert pt.rho_star_r == 1.0
        assert pt.E_r == pytest.approx(max_eo_over_p(1.0, W_bsc)[1], abs=1e-13)

    def test_bsc_brute_grid(self, W_bsc):
        """Dense (rho, P) scan at step 1e-3."""
        R = 0.2
        rho = np.arange(0, 1001) * 1e-3
        a = np.arange(0, 1001) * 1e-3
        P = np.column_stack([a, 1 - a])
        best = max(float((eo_batch(np.full(a.size, r), P, W_bsc)[:, 0] - r * R).max()) for r in rho)
        pt = err_exponent(R, W_bsc)
        assert pt.E_r >= best - 1e-12
        assert pt.E_r == pytest.approx(best, abs=1e-6)

    def test_bsc_closed_form_above_critical(self, W_bsc):
        for R in (0.15, 0.2, 0.3, 0.35):
            assert err_exponent(R, W_bsc).E_r == pytest.approx(bsc_sphere_packing_mp(R), abs=1e-10)

    def test_bsc_straight_line_below_critical(self, W_bsc):
        R_cr = bsc_critical_rate_mp()
        E0_1 = eo(1.0, [0.5, 0.5], W_bsc)
        for R in (0.0, 0.05, 0.1):
            assert err_exponent(R, W_bsc).E_r == pytest.approx(E0_1 - R, abs=1e-12)
        assert E0_1 - R_cr == pytest.approx(bsc_sphere_packing_mp(R_cr), abs=1e-10)

    def test_audit_mode_agrees(self, W_bsc):
        assert err_exponent(0.2, W_bsc, audit=True).E_r == pytest.approx(err_exponent(0.2, W_bsc).E_r, abs=1e-12)

    def test_negative_rate(self, W_bsc):
        with pytest.raises(ValueError):
            err_exponent(-0.1, W_bsc)


class TestSpherePacking:
    def test_at_and_above_capacity(self, W_bsc):
        assert esp_exponent(C_BSC, W_bsc).E_SP == pytest.approx(0.0, abs=1e-12)
        assert esp_exponent(0.5, W_bsc).E_SP == 0.0

    def test_equals_random_coding_above_critical(self, W_bsc):
        pt = exponent_point(0.3, W_bsc)
        assert pt.E_SP == pytest.approx(pt.E_r, abs=1e-10)

    def test_bsc_closed_form(self, W_bsc):
        for R in (0.01, 0.05, 0.1, 0.2, 0.3):
            assert esp_exponent(R, W_bsc).E_SP == pytest.approx(bsc_sphere_packing_mp(R), abs=1e-9)

    def test_infinite_below_threshold(self, W_bsc):
        cr = critical_rate(W_bsc)
        pt = esp_exponent(cr.R_inf / 2, W_bsc)
        assert not pt.esp_finite and pt.E_SP == math.inf
        assert esp_exponent(2 * cr.R_inf, W_bsc).esp_finite

    def test_convex_decreasing(self):
        W = channel_corpus(1, 3, max_k=3, max_m=3)[0]
        C = capacity(W).C
        cr = critical_rate(W)
        Rs = np.linspace(cr.R_inf + 0.05 * (C - cr.R_inf), C, 12)
        E = np.array([esp_exponent(R, W).E_SP for R in Rs])
        assert np.all(np.diff(E) <= 1e-12)
        assert np.all(np.diff(E, 2) >= -1e-9)


class TestHaroutunian:
    def test_above_mutual_information(self, W_bsc):
        assert esp_haroutunian(C_BSC + 1e-3, W_bsc, [0.5, 0.5]) == 0.0

    def test_zero_rate_constant_rows(self, W_bsc):
        """At R = 0 the optimal V has identical rows; scan that one-parameter family."""
        v = np.linspace(1e-6, 1 - 1e-6, 200_001)
        D = 0.5 * (v * np.log(v / 0.9) + (1 - v) * np.log((1 - v) / 0.1)) \
            + 0.5 * (v * np.log(v / 0.1) + (1 - v) * np.log((1 - v) / 0.9))
        assert esp_haroutunian(0.0, W_bsc, [0.5, 0.5]) == pytest.approx(D.min(), abs=1e-9)

    def test_dual_form_fixed_p(self, W_bsc):
        R = 0.3
        rho = np.linspace(0, 20, 200_001)
        dual = (eo_batch(rho, [0.5, 0.5], W_bsc)[:, 0] - rho * R).max()
        assert esp_haroutunian(R, W_bsc, [0.5, 0.5]) == pytest.approx(dual, abs=1e-5)

    def test_matches_gallager_form(self):
        for W in channel_corpus(4, 17, max_k=3, max_m=3):
            cap = capacity(W)
            cr = critical_rate(W)
            for R in np.linspace(cr.R_cr, cap.C, 5)[1:-1]:
                pt = esp_exponent(R, W)
                assert esp_haroutunian(R, W, pt.P_star) == pytest.approx(pt.E_SP, abs=1e-8)

    def test_feasible_v_bound(self, W_bsc):
        """Any V with I(P;V) <= R gives an upper bound on the minimum."""
        R = 0.1
        val = esp_haroutunian(R, W_bsc, [0.5, 0.5])
        for d in np.linspace(0.2, 0.5, 31):
            V = np.array([[1 - d, d], [d, 1 - d]])
            if mutual_information([0.5, 0.5], V) <= R:
                assert val <= conditional_kl(V, W_bsc, [0.5, 0.5]) + 1e-12


class TestCriticalRate:
    def test_bsc_closed_form(self, W_bsc):
        cr = critical_rate(W_bsc)
        assert cr.R_cr == pytest.approx(bsc_critical_rate_mp(), abs=1e-8)
        assert not cr.no_critical_rate
        assert 0 < cr.R_inf < cr.R_cr

    def test_bsc_grid_scan(self, W_bsc):
        """rho*_SP(R) drops below 1 between the two grid rates bracketing R_cr (step 1e-4)."""
        cr = critical_rate(W_bsc)
        grid = np.round(np.arange(0.1250, 0.1370, 1e-4), 4)
        rho = np.array([esp_exponent(R, W_bsc).rho_star_sp for R in grid])
        j = int(np.flatnonzero(rho < 1.0)[0])
        assert np.all(rho[:j] >= 1.0 - 1e-9) and np.all(rho[j:] < 1.0)
        assert grid[j - 1] <= cr.R_cr <= grid[j]

    def test_identity_has_none(self, W_id3):
        cr = critical_rate(W_id3)
        assert cr.no_critical_rate and cr.R_cr is None
        assert cr.R_inf == pytest.approx(math.log(3))

    def test_critical_rate_identity_above(self):
        for W in channel_corpus(3, 9, max_k=3, max_m=3):
            cr = critical_rate(W)
            C = capacity(W).C
            for R in np.linspace(cr.R_cr, C, 6)[1:]:
                pt = exponent_point(R, W)
                assert abs(pt.E_r - pt.E_SP) <= 1e-6


def test_optimizer_path(W_bsc):
    path = optimizer_path(W_bsc, [0.1, 0.05, 0.025, 0.0125])
    rhos = [r.rho_star for r in path]
    assert all(b < a for a, b in zip(rhos, rhos[1:]))
    assert all(r.capacity_gap <= 1e-9 for r in path)
    W = Channel([[0.8, 0.15, 0.05], [0.1, 0.6, 0.3]])
    gaps = [r.capacity_gap for r in optimizer_path(W, [0.1, 0.05, 0.025, 0.0125])]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < gaps[0]


def test_curve_csv(W_bsc):
    pts = exponent_curve(W_bsc, [1e-5, 0.1, 0.2, C_BSC])
    text = exponent_csv(pts)
    lines = text.strip().splitlines()
    assert lines[0].split(",") == EXPONENT_COLUMNS
    first, last = lines[1].split(","), lines[-1].split(",")
    assert first[EXPONENT_COLUMNS.index("finite_flag")] == "0"
    assert first[EXPONENT_COLUMNS.index("E_SP")] == "inf"
    assert abs(float(last[EXPONENT_COLUMNS.index("E_SP")])) < 1e-12
    for R in (0.1, 0.2):
        row = [l.split(",") for l in lines[1:] if abs(float(l.split(",")[0]) - R) < 1e-15][0]
        assert float(row[1]) == pytest.approx(err_exponent(R, W_bsc).E_r, abs=1e-4)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.36))
def test_random_coding_below_sphere_packing(R):
    W = bsc(0.1)
    pt = exponent_point(R, W)
    assert pt.E_r <= pt.E_SP + 1e-10
    assert pt.E_r >= 0.0
