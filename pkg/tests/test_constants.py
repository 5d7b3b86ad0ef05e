import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from stochheat import constants as C
from stochheat.noise import SpectralMeasure, riesz_spectral_density

EIGHT_PI2 = 8 * math.pi**2

# frozen outputs of the current implementation; each one is backed by an
# independent recomputation below
FIXTURES = {
    "c_prime_1_6_03_1": 105.79994633750107,
    "c_double_prime_1_6_03_0_1": 5529599.999999998,
    "c_T_p_eta_1_6_0_1_1": (534560134.02233404, 0.30669806265421856),
    "log_c_T_p_eta_eps_1_2_0_sixth": (54.28031232011671, 5.612401954909384),
    "log_theorem_full": 2.247974430171007e24,
    "k_eta_riesz_2d": 16.474873499707666,
    "k_eta_riesz_1d": 23.59662588739729,
}


# K_eta -----------------------------------------------------------------------

@pytest.mark.parametrize("eta", [0.0, 0.3, 0.99])
def test_k_eta_point_mass(eta):
    k = C.k_eta(SpectralMeasure.point_mass(1), eta)
    assert k.value == 1.0 and k.finite


def test_k_eta_ball_closed_form():
    k = C.k_eta(SpectralMeasure.ball_uniform(1.0, 1, 0.5))
    assert k.value == pytest.approx(2 * math.log(1 + math.sqrt(2)), rel=1e-14)
    assert k.value == pytest.approx(1.76275, abs=1e-5)
    assert k.value == pytest.approx(oracles.k_eta_radial(lambda r: 1.0, 1, 0.5, upper=1.0), rel=1e-12)


def test_k_eta_riesz_fixtures():
    k2 = C.k_eta(SpectralMeasure.riesz(1.0, 2, 0.75))
    assert k2.finite and k2.value == FIXTURES["k_eta_riesz_2d"]
    dens2 = lambda r: riesz_spectral_density(1.0, 2, (r, 0.0)) if r > 0 else 0.0  # noqa: E731
    assert k2.value == pytest.approx(oracles.k_eta_radial(dens2, 2, 0.75), rel=1e-11)
    assert k2.value == pytest.approx(C._riesz_k_eta_closed(1.0, 2, 0.75), rel=1e-12)

    k1 = C.k_eta(SpectralMeasure.riesz(0.5, 1, 0.3))
    assert k1.finite and k1.value == FIXTURES["k_eta_riesz_1d"]
    # c_{1,1/2} = 1, so the density is |xi|^-1/2
    dens1 = lambda r: r**-0.5 if r > 0 else 0.0  # noqa: E731
    assert k1.value == pytest.approx(oracles.k_eta_radial(dens1, 1, 0.3, singular=-0.5), rel=1e-9)


@pytest.mark.parametrize("kappa,d,eta", [(1.0, 2, 0.4), (1.0, 2, 0.5), (0.5, 1, 0.2), (0.5, 1, 0.0)])
def test_k_eta_riesz_divergence_flagged(kappa, d, eta):
    # the measure itself demands 2 eta > kappa, so evaluate at an override
    m = SpectralMeasure.riesz(kappa, d, 0.9)
    k = C.k_eta(m, eta)
    assert not k.finite and k.value == math.inf
    assert k.tail_exponent > -1e-3


def test_k_eta_rejects_eta():
    with pytest.raises(ValueError):
        C.k_eta(SpectralMeasure.point_mass(1), 1.0)


def test_constants_report_refuses_divergent():
    # the measure constructor already rejects 2 eta <= kappa, so bypass it
    m = SpectralMeasure.riesz(1.0, 2, 0.9)
    object.__setattr__(m, "eta", 0.4)
    with pytest.raises(ValueError, match="diverges"):
        C.constants_report(m, 1.0, 8.0)


# alpha window ----------------------------------------------------------------

def test_alpha_window_values():
    assert C.alpha_window(6, 1, 0.0) == (0.25, pytest.approx(1 / 3))
    lo, hi = C.alpha_window(13, 2, 0.5)
    assert lo == pytest.approx(4 / 26) and hi == pytest.approx(0.5 - 1 / 13 - 0.25)
    assert (round(lo, 5), round(hi, 5)) == (0.15385, 0.17308)


@pytest.mark.parametrize("p,d,eta", [(5, 1, 0.0), (4.9, 1, 0.0), (6, 2, 0.0), (10, 1, 0.5)])
def test_alpha_window_empty(p, d, eta):
    with pytest.raises(C.WindowError) as err:
        C.alpha_window(p, d, eta)
    assert err.value.threshold == pytest.approx((4 + d) / (1 - eta))


@settings(max_examples=100, deadline=None)
@given(st.floats(2.1, 60), st.integers(1, 2), st.floats(0, 0.9))
def test_alpha_window_nonempty_iff_threshold(p, d, eta):
    above = p > (4 + d) / (1 - eta)
    try:
        lo, hi = C.alpha_window(p, d, eta)
        assert above and lo < hi
    except C.WindowError:
        assert not above


# C' and C'' ------------------------------------------------------------------

def test_c_prime_fixture():
    val = C.c_prime(1.0, 6, 0.3, 1)
    assert val == FIXTURES["c_prime_1_6_03_1"]
    direct = abs(math.sin(0.3 * math.pi) / math.pi) ** 6 * (4 * math.pi) ** -0.5 * (5 / 0.3) ** 5
    assert val == pytest.approx(direct, rel=1e-13)


def test_c_prime_degenerate_and_errors():
    assert C.c_prime(1.0, 6, 1.0, 1) == pytest.approx(0.0, abs=1e-60)
    assert C.log_c_prime(1.0, 6, 2.0, 1) < -60
    with pytest.raises(ValueError):
        C.c_prime(1.0, 6, 0.2, 1)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.26, 0.33), st.floats(0.1, 5))
def test_c_prime_power_law_in_T(alpha, T):
    ratio = C.c_prime(2 * T, 6, alpha, 1) / C.c_prime(T, 6, alpha, 1)
    assert ratio == pytest.approx(2 ** (alpha * 6 - 0.5), rel=1e-12)
    assert ratio > 1


def test_c_double_prime_fixture():
    val = C.c_double_prime(1.0, 6, 0.3, 0.0, 1.0)
    assert val == FIXTURES["c_double_prime_1_6_03_0_1"]
    assert val == pytest.approx(0.25 * 48**3 * 200, rel=1e-14)
    assert val == pytest.approx(5_529_600, rel=1e-14)


def test_c_double_prime_errors():
    with pytest.raises(ValueError):
        C.c_double_prime(1.0, 6, 1 / 3, 0.0, 1.0)
    with pytest.raises(ValueError):
        C.c_double_prime(1.0, 8, 0.3, 0.3, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.0, 0.2))
def test_c_double_prime_scales_with_K(K, eta):
    p, alpha = 10.0, 0.2
    ratio = C.c_double_prime(1.0, p, alpha, eta, 2 * K) / C.c_double_prime(1.0, p, alpha, eta, K)
    assert ratio == pytest.approx(2 ** (p / 2), rel=1e-12)


def test_c_double_prime_general_eta():
    T, p, a, eta, K = 0.7, 12.0, 0.2, 0.3, 1.5
    e = (p - 2) / 2
    ref = 0.25 * (8 * p * K) ** (p / 2) * (
        ((p - 2) / (p - 2 - 2 * a * p)) ** e * T ** (p / 2 - 1 - a * p)
        + (eta / EIGHT_PI2) ** (eta * e) * ((p - 2) / (p - 2 - 2 * a * p - eta * p)) ** e
        * T ** (p / 2 - 1 - a * p - eta * p / 2))
    assert C.c_double_prime(T, p, a, eta, K) == pytest.approx(ref, rel=1e-12)


# C_{T,p,eta} -----------------------------------------------------------------

def grid_scan(T, p, eta, d, K, n=10_000):
    lo, hi = C.alpha_window(p, d, eta)
    a = np.linspace(lo + C.WINDOW_SHRINK, hi - C.WINDOW_SHRINK, n)
    vals = np.array([C.log_product(x, T, p, eta, d, K) for x in a])
    i = int(np.argmin(vals))
    return a[i], vals[i]


def test_c_T_p_eta_fixture():
    val, alpha = C.c_T_p_eta(1.0, 6, 0.0, 1, 1.0)
    assert (val, alpha) == FIXTURES["c_T_p_eta_1_6_0_1_1"]
    assert 0.25 < alpha < 1 / 3
    a_grid, v_grid = grid_scan(1.0, 6, 0.0, 1, 1.0)
    assert abs(math.exp(v_grid) - val) / val < 1e-6
    assert val <= math.exp(v_grid) * (1 + 1e-12)
    assert val <= C.c_T_p_eta_bound(1.0, 6, 0.0, 1, 1.0)


@pytest.mark.parametrize("p", [8, 12, 20])
@pytest.mark.parametrize("eta", [0.1, 0.2, 0.3])
def test_c_T_p_eta_below_explicit_bound(p, eta):
    for K in (0.5, 1.0, 23.6):
        val, alpha = C.c_T_p_eta(1.0, p, eta, 1, K)
        assert 0 < val < math.inf
        assert val <= C.c_T_p_eta_bound(1.0, p, eta, 1, K)


@pytest.mark.parametrize("p,eta,d", [(8, 0.1, 1), (12, 0.3, 1), (9, 0.0, 2), (20, 0.2, 2)])
def test_golden_section_matches_grid(p, eta, d):
    val, alpha = C.log_c_T_p_eta(1.0, p, eta, d, 1.3)
    _, v_grid = grid_scan(1.0, p, eta, d, 1.3)
    assert abs(math.exp(val - v_grid) - 1) < 1e-6
    assert val <= v_grid + 1e-12


def test_c_T_p_eta_monotone_in_T():
    vals = [C.c_T_p_eta(T, 8, 0.1, 1, 1.0)[0] for T in (0.5, 1.0, 2.0)]
    assert vals[0] <= vals[1] <= vals[2]


def test_explicit_bound_infinite_at_eta_zero():
    assert C.c_T_p_eta_bound(1.0, 8, 0.0, 1, 1.0) == math.inf


def test_golden_section_quadratic():
    x, f = C.golden_section(lambda t: (t - 0.3) ** 2 + 1, 0.0, 1.0)
    assert x == pytest.approx(0.3, abs=1e-7) and f == pytest.approx(1.0, abs=1e-13)


# C_{T,p,eta,eps} -------------------------------------------------------------

def test_c_T_p_eta_eps_fixture():
    log_val, q = C.log_c_T_p_eta_eps(1.0, 2.0, 0.0, 1 / 6, 1, 1.0)
    assert (log_val, q) == FIXTURES["log_c_T_p_eta_eps_1_2_0_sixth"]
    assert q > 5
    # the minimiser is a genuine local minimum of the objective
    obj = lambda qq: C.log_small_p_objective(qq, 1.0, 2.0, 0.0, 1 / 6, 1, 1.0)  # noqa: E731
    assert obj(q) <= obj(q * 1.01) and obj(q) <= obj(5 + (q - 5) * 0.99)
    # a coarse independent scan cannot beat it
    qs = 5 + np.geomspace(1e-3, 50, 2000)
    assert log_val <= min(obj(x) for x in qs) + 1e-9


def test_c_T_p_eta_eps_monotone_in_eps():
    small = C.c_T_p_eta_eps(1.0, 2.0, 0.0, 1e-2, 1, 1.0)
    big = C.c_T_p_eta_eps(1.0, 2.0, 0.0, 1.0, 1, 1.0)
    assert 0 < small <= big < math.inf


def test_c_T_p_eta_eps_domain():
    C.log_c_T_p_eta_eps(1.0, 5.0, 0.0, 0.5, 1, 1.0)
    with pytest.raises(ValueError):
        C.log_c_T_p_eta_eps(1.0, 5.01, 0.0, 0.5, 1, 1.0)
    with pytest.raises(ValueError):
        C.log_c_T_p_eta_eps(1.0, 2.0, 0.0, 0.0, 1, 1.0)


# C_{G,T,eta} and the kernel bound --------------------------------------------

def test_c_G_T_eta_values():
    assert C.c_G_T_eta(1.0, 0.0, 1.0) == 1.0
    assert C.c_G_T_eta(1.0, 0.3, 2.0) == pytest.approx(2 + 0.09 / (EIGHT_PI2 * 0.7), rel=1e-15)
    assert C.c_G_T_eta(1.0, 0.3, 2.0) == pytest.approx(2.00163, abs=1e-5)
    brk = 0.5 / EIGHT_PI2
    small = 1 / 0.5 * brk**0.5 * brk**0.5
    large = brk + 0.25 / (EIGHT_PI2 * 0.5)
    assert small == pytest.approx(large, rel=1e-14)
    assert C.c_G_T_eta(brk, 0.5, 1.0) == pytest.approx(1 / EIGHT_PI2, rel=1e-14)
    assert C.c_G_T_eta(brk * 0.5, 0.5, 1.0) == pytest.approx(2 * brk**0.5 * (brk / 2) ** 0.5)
    with pytest.raises(ValueError):
        C.c_G_T_eta(0.0, 0.5, 1.0)


def test_g_h_norm_bound_values():
    assert C.g_h_norm_bound(1e-6, 0.0, 2.5) == 2.5
    assert C.g_h_norm_bound(1e-4, 0.5, 1.0) == pytest.approx((0.5 / EIGHT_PI2) ** 0.5 * 100, rel=1e-14)
    assert C.g_h_norm_bound(1e-4, 0.5, 1.0) == pytest.approx(7.9577, abs=1e-4)
    with pytest.raises(ValueError):
        C.g_h_norm_bound(0.0, 0.5, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.1, 10), st.floats(1.0, 1e3))
def test_g_h_norm_bound_large_t_branch(eta, K, stretch):
    t = eta / EIGHT_PI2 * stretch
    assert C.g_h_norm_bound(t, eta, K) == K


# theorem constant -------------------------------------------------------------

def test_theorem_constant_additive():
    assert C.theorem_constant(1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1) == 6.0
    assert C.theorem_constant(1.0, 0.0, 0.5, 2.0, 0.0, 1.0, 1) == pytest.approx(
        6 * 4 * math.exp(6 * 0.25), rel=1e-14)


def test_theorem_constant_full_case_overflows():
    log_c = C.log_theorem_constant(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1)
    assert log_c == FIXTURES["log_theorem_full"]
    c_eps = C.c_T_p_eta_eps(1.0, 2.0, 0.0, 1 / 6, 1, 1.0)
    assert log_c == pytest.approx(math.log(6) + 6 * (c_eps + 1), rel=1e-14)
    assert C.theorem_constant(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1) == math.inf


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 10), st.floats(0, 2))
def test_theorem_constant_quadratic_in_K_sigma(K_sigma, L_b):
    a = C.theorem_constant(1.0, 0.0, L_b, K_sigma, 0.2, 1.0, 1)
    b = C.theorem_constant(1.0, 0.0, L_b, 2 * K_sigma, 0.2, 1.0, 1)
    assert b / a == pytest.approx(4.0, rel=1e-12)


def test_theorem_constant_errors():
    with pytest.raises(ValueError):
        C.theorem_constant(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1)
    with pytest.raises(ValueError):
        C.theorem_constant(1.0, -1.0, 0.0, 1.0, 0.0, 1.0, 1)


# report ----------------------------------------------------------------------

def test_constants_report_consistency():
    rep = C.constants_report(SpectralMeasure.riesz(0.5, 1, 0.3), 1.0, 12.0, L_sigma=0.0)
    assert rep.K_eta == FIXTURES["k_eta_riesz_1d"]
    assert rep.alpha_lo < rep.alpha_star < rep.alpha_hi
    assert rep.C_prime * rep.C_double_prime == pytest.approx(rep.C_Tpeta, rel=1e-12)
    assert rep.C_Tpeta <= rep.C_Tpeta_bound
    assert rep.theorem_C == pytest.approx(6 * rep.C_GTeta, rel=1e-14)
    names = [k for k, _ in rep.rows()]
    assert names[0] == "T" and "theorem_C" in names
    again = C.constants_report(SpectralMeasure.riesz(0.5, 1, 0.3), 1.0, 12.0, L_sigma=0.0)
    assert again.rows() == rep.rows()
