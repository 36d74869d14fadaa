import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdcc.channel import Channel, bsc, identity_channel, info_density_variance, mutual_information
from mdcc.errors import NegativeRho, ShapeMismatch
from mdcc.gallager import eo, eo_batch, eo_derivatives, output_contributions, third_derivative_bound

from conftest import channel_corpus


def eo_mp(rho, p, W):
    """E0 by direct summation at the ambient mpmath precision."""
    rho = mpmath.mpf(rho)
    total = mpmath.mpf(0)
    for y in range(W.shape[1]):
        inner = mpmath.fsum(mpmath.mpf(p[x]) * mpmath.mpf(W[x, y]) ** (1 / (1 + rho))
                            for x in range(W.shape[0]) if W[x, y] > 0)
        total += inner ** (1 + rho)
    return -mpmath.log(total)


def corpus_with_p(count=50, seed=11):
    rng = np.random.default_rng(seed)
    out = []
    for W in channel_corpus(count, seed, floor=0.0):
        out.append((W, rng.dirichlet(np.ones(W.input_size)) * 0.9 + 0.1 / W.input_size))
    return out


def test_rho_zero_is_zero():
    for W, p in corpus_with_p(10):
        assert eo(0.0, p, W) == 0.0


def test_identity_linear_in_rho():
    for k in (2, 3, 4):
        W = identity_channel(k)
        for rho in (0.0, 0.3, 1.0, 5.0):
            ev = eo_derivatives(rho, np.full(k, 1 / k), W)
            assert ev.value == pytest.approx(rho * math.log(k), abs=1e-13)
            assert ev.d1 == pytest.approx(math.log(k), abs=1e-13)
            assert abs(ev.d2) < 1e-13 and abs(ev.d3) < 1e-13


def test_bsc_rho_one_high_precision():
    W = bsc(0.1)
    with mpmath.workdps(40):
        ref = eo_mp(1.0, [0.5, 0.5], W.probabilities)
    # closed form: ln2 - 2 ln(sqrt(0.9) + sqrt(0.1))
    assert float(ref) == pytest.approx(math.log(2) - 2 * math.log(math.sqrt(0.9) + math.sqrt(0.1)), abs=1e-15)
    assert eo(1.0, [0.5, 0.5], W) == pytest.approx(float(ref), abs=1e-14)


def test_derivative_identities_at_zero():
    for W, p in corpus_with_p():
        ev = eo_derivatives(0.0, p, W)
        assert abs(ev.d1 - mutual_information(p, W)) <= 1e-10
        assert abs(ev.d2 + info_density_variance(p, W)) <= 1e-10


@pytest.mark.parametrize("rho", [0.0, 0.37, 1.0, 2.5])
def test_derivatives_against_mpmath(rho):
    """Analytic derivatives vs high-precision numerical differentiation."""
    for W, p in corpus_with_p(15, seed=3):
        ev = eo_derivatives(rho, p, W)
        f = lambda r: eo_mp(r, p, W.probabilities)
        with mpmath.workdps(50):
            # one-sided at rho = 0, where E0 is still analytic
            ref = [float(mpmath.diff(f, mpmath.mpf(rho), n=k, direction=1 if rho == 0 else 0))
                   for k in (0, 1, 2, 3)]
        assert ev.value == pytest.approx(ref[0], abs=1e-13)
        assert ev.d1 == pytest.approx(ref[1], rel=1e-10, abs=1e-12)
        assert ev.d2 == pytest.approx(ref[2], rel=1e-9, abs=1e-11)
        assert ev.d3 == pytest.approx(ref[3], rel=1e-8, abs=1e-10)


def test_derivatives_against_central_differences():
    h = 1e-3
    for W, p in corpus_with_p():
        rho = 0.5
        f = lambda r: eo(r, p, W)
        ev = eo_derivatives(rho, p, W)
        fd1 = (f(rho + h) - f(rho - h)) / (2 * h)
        fd2 = (f(rho + h) - 2 * f(rho) + f(rho - h)) / h ** 2
        fd3 = (f(rho + 2 * h) - 2 * f(rho + h) + 2 * f(rho - h) - f(rho - 2 * h)) / (2 * h ** 3)
        assert abs(ev.d1 - fd1) <= 1e-6 * max(abs(ev.d1), 1e-3)
        assert abs(ev.d2 - fd2) <= 1e-5 * max(abs(ev.d2), 1e-2)
        assert abs(ev.d3 - fd3) <= 1e-3 * max(abs(ev.d3), 1e-1)


def test_third_derivative_assembly_sign():
    """d3 = -sum pi h3 + 3 d1 d2 - d1^3; the variant with +3 d1 d2 disagrees with differences."""
    W = Channel([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
    p = np.array([0.4, 0.6])
    rho, h = 0.8, 1e-3
    f = lambda r: eo(r, p, W)
    fd3 = (f(rho + 2 * h) - 2 * f(rho + h) + 2 * f(rho - h) - f(rho - 2 * h)) / (2 * h ** 3)
    ev = eo_derivatives(rho, p, W)
    c = output_contributions(rho, p, W)
    h3, d1, d2 = c[2].sum(), ev.d1, ev.d2
    assert ev.d3 == pytest.approx(-h3 + 3 * d1 * d2 - d1 ** 3, rel=1e-12)
    wrong = -h3 - 3 * d1 * d2 + d1 ** 3
    assert abs(wrong - fd3) > 100 * abs(ev.d3 - fd3)


def test_output_contributions_sum_to_first_derivative():
    W, p = corpus_with_p(1)[0]
    c = output_contributions(0.6, p, W)
    assert c.shape == (3, W.output_size)
    assert -c[0].sum() == pytest.approx(eo_derivatives(0.6, p, W).d1, abs=1e-13)


def test_boundary_continuity():
    """Outputs reachable only from an input leaving the support stop contributing."""
    W = Channel([[0.6, 0.4, 0.0], [0.3, 0.3, 0.4], [0.5, 0.5, 0.0]])
    P_o = np.array([0.5, 0.0, 0.5])  # output 2 reachable only from input 1
    u = np.full(3, 1 / 3)
    prev = None
    for k in range(4, 40, 4):
        Pk = (1 - 2.0 ** -k) * P_o + 2.0 ** -k * u
        c = np.abs(output_contributions(0.7, Pk, W)[:, 2]).max()
        if prev is not None:
            assert c < prev
        prev = c
    assert prev < 1e-9
    assert np.all(output_contributions(0.7, P_o, W)[:, 2] == 0.0)
    ev_lim = eo_derivatives(0.7, Pk, W)
    ev_o = eo_derivatives(0.7, P_o, W)
    assert ev_lim.d3 == pytest.approx(ev_o.d3, abs=1e-8)


def test_batch_matches_scalar():
    W, p = corpus_with_p(1)[0]
    rhos = np.array([0.0, 0.2, 1.0, 3.0])
    rows = eo_batch(rhos, p, W)
    for r, row in zip(rhos, rows):
        ev = eo_derivatives(r, p, W)
        assert np.allclose(row[1:], [ev.d1, ev.d2, ev.d3], rtol=1e-14, atol=1e-15)


def test_errors():
    W = bsc(0.1)
    with pytest.raises(NegativeRho):
        eo(-0.1, [0.5, 0.5], W)
    with pytest.raises(ShapeMismatch):
        eo(0.5, [1.0, 0.0, 0.0], W)
    with pytest.raises(ShapeMismatch):
        eo_batch([0.1, 0.2], np.full((3, 2), 0.5), W)


def test_third_derivative_bound_identity():
    M = third_derivative_bound(identity_channel(2))
    assert M.M >= 0.0
    assert M.certified == "heuristic"


def test_third_derivative_bound_bsc_brute_grid():
    """Dense (rho, P) grid oracle at steps 1e-3."""
    W = bsc(0.1)
    rho = np.arange(0, 1001) * 1e-3
    a = np.arange(0, 1001) * 1e-3
    best = 0.0
    for r in rho[::1]:
        P = np.column_stack([a, 1 - a])
        best = max(best, float(np.abs(eo_batch(np.full(a.size, r), P, W)[:, 3]).max()))
    M = third_derivative_bound(W)
    assert M.M >= best - 1e-9
    assert M.M <= best + 1e-4


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 4.0), st.floats(0.01, 0.99), st.floats(0.01, 0.49))
def test_eo_concave_increasing(rho, a, p):
    W = bsc(p)
    ev = eo_derivatives(rho, [a, 1 - a], W)
    assert ev.value >= -1e-14
    assert ev.d1 >= -1e-14
    assert ev.d2 <= 1e-14
