import math

import numpy as np
import pytest
from scipy import integrate

from mode_atlas.errors import InvalidInputError, InvalidMomentError
from mode_atlas.kacrice import (
    OMEGA_RULE,
    MomentPack,
    asymptotic_moments,
    belt_params,
    exact_moments,
    gaussian_moment,
    intervals_T,
    kr_density,
    kr_density_at,
    kr_integral,
    omega,
    raw_moments,
    snr_squared,
)
from oracles import kr_quad, raw_moment_quad

RAW_INDEX = {"EG": (1, 0), "EGp": (0, 1), "EG2": (2, 0), "EGGp": (1, 1), "EGp2": (0, 2)}


def test_closed_form_examples():
    assert exact_moments(0.0, 7.0, 11).mu[0] == 0.0
    assert raw_moments(0.0, 1.0).EGp == pytest.approx(2**-1.5, rel=1e-15)
    assert raw_moments(1.0, 3.0).EG == pytest.approx(math.exp(-3 / 8) / 8, rel=1e-15)


@pytest.mark.parametrize("t", [-2.5, -0.7, 0.0, 0.3, 1.0, 3.2])
@pytest.mark.parametrize("beta", [0.5, 3.0, 50.0, 2000.0])
def test_raw_moments_against_quadrature(t, beta):
    r = raw_moments(t, beta)._asdict()
    for name, (a, b) in RAW_INDEX.items():
        ref = raw_moment_quad(a, b, t, beta)
        assert r[name] == pytest.approx(ref, rel=1e-9, abs=1e-14 * max(1.0, beta))


def test_exact_moments_structure():
    mp = exact_moments(1.3, 40.0, 1000)
    r = raw_moments(1.3, 40.0)
    assert mp.exact and mp.n == 1000
    np.testing.assert_allclose(mp.mu, math.sqrt(1000) * np.array([r.EG, r.EGp]), rtol=1e-15)
    assert mp.sigma[0, 0] == pytest.approx(r.EG2 - r.EG**2, rel=1e-14)
    assert mp.sigma[0, 1] == mp.sigma[1, 0]
    assert np.linalg.det(mp.sigma) > 0


@pytest.mark.parametrize("make", [exact_moments, asymptotic_moments])
def test_parity(make):
    for t in (0.2, 1.0, 2.7):
        a, b = make(t, 30.0, 500), make(-t, 30.0, 500)
        assert b.mu[0] == -a.mu[0]
        assert b.mu[1] == a.mu[1]
        assert b.sigma[0, 0] == a.sigma[0, 0] and b.sigma[1, 1] == a.sigma[1, 1]
        assert b.sigma[0, 1] == -a.sigma[0, 1]


def test_asymptotic_forms():
    n, beta = 10**6, 400.0
    mp = asymptotic_moments(0.0, beta, n)
    np.testing.assert_allclose(mp.mu, [0.0, math.sqrt(n) * beta**-1.5], rtol=1e-15)
    assert not mp.exact
    assert asymptotic_moments(0.5, beta, n).sigma[0, 1] < 0
    assert asymptotic_moments(-0.5, beta, n).sigma[0, 1] > 0


def test_asymptotic_close_to_exact_at_large_beta():
    e, a = exact_moments(1.0, 1e4, 10**8), asymptotic_moments(1.0, 1e4, 10**8)
    # mu[1] is exactly zero in the leading form at |t| = 1, so it is compared on its scale
    scale = math.sqrt(1e8) * 1e4**-1.5 * math.exp(-0.5)
    assert abs(a.mu[0] - e.mu[0]) <= 0.02 * abs(e.mu[0])
    assert abs(a.mu[1] - e.mu[1]) <= 0.02 * scale
    np.testing.assert_allclose(a.sigma, e.sigma, rtol=0.02)


def test_asymptotic_error_shrinks_with_beta():
    def err(beta):
        e, a = exact_moments(0.7, beta, 100), asymptotic_moments(0.7, beta, 100)
        return np.max(np.abs(a.sigma - e.sigma) / np.abs(e.sigma))

    errs = [err(b) for b in (1e2, 1e3, 1e4, 1e5)]
    assert all(y < x for x, y in zip(errs, errs[1:]))


def test_belt_params_basics():
    p = belt_params(0.0, 100.0, 10**4)
    assert p.A == 0.0
    assert p.delta == pytest.approx(math.sqrt(10**4) * 100**-1.5, rel=1e-15)
    for t in (0.3, 1.5, 2.5):
        q, r = belt_params(t, 100.0, 10**4), belt_params(-t, 100.0, 10**4)
        assert q.A == r.A and q.A > 0
        assert q.Delta >= q.delta
        assert q.alpha > 0


def test_belt_delta_is_continuous_at_zero():
    for eps in (1e-4, 1e-6, 1e-8):
        assert belt_params(eps, 50.0, 1000).delta == pytest.approx(belt_params(0.0, 50.0, 1000).delta, rel=10 * eps)


def test_belt_A_matches_scaling():
    ratios = []
    for beta in np.geomspace(1e2, 1e4, 7):
        n = 10**6
        b = intervals_T(n, beta)
        for t in np.linspace(0.05, b.t_end, 20):
            ratios.append(belt_params(t, beta, n).A / (beta**-1.5 * n * t * t * math.exp(-0.5 * t * t)))
    assert max(ratios) / min(ratios) == pytest.approx(1.0, abs=1e-12)


def test_A_equals_snr_squared():
    for t in (0.1, 1.0, 2.0):
        assert snr_squared(t, 200.0, 10**5) == pytest.approx(belt_params(t, 200.0, 10**5).A, rel=1e-12)


def test_exp_minus_A_below_one_off_zero():
    for t in (-2.0, -1e-3, 1e-3, 0.5, 3.0):
        assert math.exp(-belt_params(t, 100.0, 10**4).A) < 1
    assert math.exp(-belt_params(0.0, 100.0, 10**4).A) == 1.0


def test_omega():
    assert omega(2.0) == 1.0 and omega(math.e) == 1.0
    assert omega(1e6) == pytest.approx(math.sqrt(math.log(math.log(1e6))))
    assert OMEGA_RULE == "sqrt(loglog)"


def test_intervals():
    b = intervals_T(10**4, 100.0)
    assert b.tprime_end == pytest.approx(2.1460, abs=1e-4)
    assert b.t_end == pytest.approx(math.sqrt(2 * math.log(1e4) - math.log(100) - omega(100)), rel=1e-15)
    assert b.T == (-b.t_end, b.t_end)
    assert intervals_T(10**4, 1000.0).Tprime is None
    assert intervals_T(10**4, 1e9).T is None
    with pytest.raises(InvalidInputError):
        intervals_T(1, 10.0)


def test_tprime_inside_T():
    for n in (10, 100, 10**4, 10**6):
        for beta in np.geomspace(1.0, 1e4, 30):
            b = intervals_T(n, beta)
            if b.tprime_end is not None:
                assert b.t_end is not None and b.tprime_end <= b.t_end


def test_kr_density_standard():
    mp = MomentPack(0.0, 1.0, 1, np.zeros(2), np.eye(2), True)
    assert kr_density(mp) == pytest.approx(1 / (2 * math.pi), rel=1e-15)


def test_kr_density_against_quadrature(rng):
    for _ in range(100):
        L = rng.normal(size=(2, 2))
        S = L @ L.T + 0.05 * np.eye(2)
        mu = rng.normal(scale=2, size=2)
        mp = MomentPack(0.0, 1.0, 1, mu, S, True)
        assert kr_density(mp) == pytest.approx(kr_quad(mu, S), abs=1e-8)


def test_kr_density_rejects_bad_sigma():
    for S in ([[1.0, 2.0], [2.0, 1.0]], [[0.0, 0.0], [0.0, 1.0]], [[1.0, 0.1], [0.2, 1.0]]):
        with pytest.raises(InvalidMomentError):
            kr_density(MomentPack(0.0, 1.0, 1, np.zeros(2), np.array(S), True))


def test_kr_density_even_in_t():
    for t in (0.3, 1.7, 3.1):
        assert kr_density_at(t, 100.0, 10**4) == pytest.approx(kr_density_at(-t, 100.0, 10**4), rel=1e-12)


def test_kr_density_tracks_half_A_exponent():
    # the density scales like sqrt(beta) exp(-A/2); the literal exp(-A) form drifts apart
    half, full = [], []
    for n in (10**4, 10**5):
        for beta in np.geomspace(1e2, 1e4, 9):
            b = intervals_T(n, beta)
            if b.t_end is None:
                continue
            for t in np.linspace(-b.t_end, b.t_end, 41):
                d = kr_density(asymptotic_moments(t, beta, n))
                A = belt_params(t, beta, n).A
                half.append(d / (math.sqrt(beta) * math.exp(-A / 2)))
                full.append(d / (math.sqrt(beta) * math.exp(-A)))
    assert 0.05 <= min(half) and max(half) <= 1.0
    assert max(full) / min(full) > 1e10


def test_kr_integral():
    assert kr_integral(10**4, 100.0, (0.5, 0.5)) == 0.0
    assert kr_integral(10**4, 100.0, None) == 0.0
    direct, _ = integrate.quad(kr_density_at, -1.0, 2.0, args=(100.0, 10**4), epsrel=1e-10)
    assert kr_integral(10**4, 100.0, (-1.0, 2.0)) == pytest.approx(direct, rel=1e-6)
    n, beta = 10**5, 300.0
    ratio = kr_integral(n, beta, intervals_T(n, beta).T) / math.sqrt(beta * math.log(beta))
    assert 0.05 <= ratio <= 5


def test_gaussian_moment():
    assert gaussian_moment(0, 1.0) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-15)
    assert gaussian_moment(1, 1.0) == pytest.approx(0.5, rel=1e-15)
    for k in range(7):
        for alpha in (0.3, 1.0, 2.0, 17.0):
            ref, _ = integrate.quad(lambda u: u**k * math.exp(-alpha * u * u), 0, math.inf, epsrel=1e-13)
            assert gaussian_moment(k, alpha) == pytest.approx(ref, rel=1e-11)
    with pytest.raises(InvalidInputError):
        gaussian_moment(2, 0.0)


@pytest.mark.parametrize("beta, n", [(0.0, 10), (-1.0, 10), (math.nan, 10), (1.0, 0)])
def test_moment_input_errors(beta, n):
    with pytest.raises(InvalidInputError):
        exact_moments(0.0, beta, n)
