import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import erfcx

from weaknoise import NotAttractedError, NotSaddleError
from weaknoise.equilibrium import analyze_equilibrium
from weaknoise.exit_regular import (SADDLE_BETA_NEG, SADDLE_BETA_POS, SADDLE_BETA_ZERO, SaddleCoefficients,
                                    attracted_exit_gradient, boundary_normal_form, exit_flux_coefficient,
                                    saddle_exit_analysis, saddle_exit_from_coefficients, w0_prefactor)
from weaknoise.model import builtin


def _circle(n=400, r=1.0):
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


@pytest.mark.parametrize("alpha, beta, eps, want", [(0.0, 2.0, 0.01, 11.283791670955125),
                                                    (1.0, 0.0, 0.05, 20.0),
                                                    (0.1, -1.0, 0.001, 100.0 * 10.0 / 11.0)])
def test_flux_coefficient_examples(alpha, beta, eps, want):
    assert exit_flux_coefficient(alpha, beta, eps) == pytest.approx(want, rel=1e-9)


@pytest.mark.parametrize("alpha", [-0.3, -0.05, 0.0, 0.02, 0.4, 2.0])
@pytest.mark.parametrize("beta", [0.1, 1.0, 7.0])
def test_flux_coefficient_erfcx_oracle(alpha, beta):
    eps = 0.02
    a, b = alpha / eps, beta / eps
    # int_0^inf exp(-a r - b r^2 / 2) dr = sqrt(pi / 2b) erfcx(a / sqrt(2b))
    ref = 1.0 / (math.sqrt(math.pi / (2.0 * b)) * erfcx(a / math.sqrt(2.0 * b)))
    assert exit_flux_coefficient(alpha, beta, eps) == pytest.approx(ref, rel=1e-8)


def test_flux_coefficient_continuous_in_beta():
    eps, alpha = 0.01, 0.5
    at0 = exit_flux_coefficient(alpha, 0.0, eps)
    for b in (1e-7, -1e-7):
        assert exit_flux_coefficient(alpha, b, eps) == pytest.approx(at0, rel=1e-4)
    assert exit_flux_coefficient(-0.5, -1.0, eps) == 0.0


def test_attracted_gradient_examples():
    assert attracted_exit_gradient(builtin("linear_ou"), (1.0, 0.0), (-1.0, 0.0), 0.1) == pytest.approx(10.0)
    m = builtin("linear_ou")
    assert attracted_exit_gradient(m, (0.5, 0.0), (-1.0, 0.0), 0.05) == pytest.approx(10.0)
    for p in _circle(16):
        assert attracted_exit_gradient(m, p, -p, 0.02) == pytest.approx(50.0)
    with pytest.raises(NotAttractedError):
        attracted_exit_gradient(m, (1.0, 0.0), (1.0, 0.0), 0.02)


@pytest.mark.parametrize("name, kw, chi", [("linear_ou", {}, 0.0), ("rotational_ou", {"omega": 1.0}, 1.0)])
def test_normal_form_unit_circle(name, kw, chi):
    form = boundary_normal_form(builtin(name, **kw), _circle(), chi, (1.0, 0.0), inside=(0.0, 0.0))
    interior = slice(2, -2)
    assert np.allclose(form.alpha[interior], 1.0, atol=1e-4)
    assert np.allclose(np.hypot(*form.normals.T), 1.0)


def test_from_eigen_chi_zero():
    co = SaddleCoefficients.from_eigen(0.0, 1.5, -2.0)
    assert co.m == 0.0 and co.beta == 1.5 and co.k == 2.0 and co.regime == SADDLE_BETA_POS
    with pytest.raises(NotSaddleError):
        SaddleCoefficients.from_eigen(0.0, -1.0, -2.0)


def test_chi_zero_density_symmetric():
    rep = saddle_exit_from_coefficients(SaddleCoefficients.from_eigen(0.0, 1.0, -1.0), 0.01, 1.0)
    assert np.allclose(rep.weight, rep.weight[::-1], rtol=1e-12, atol=0)


def test_chi_one_one_sided():
    eps = 0.02
    co = SaddleCoefficients.from_eigen(1.0, 0.7, -2.0)
    assert co.regime == SADDLE_BETA_ZERO and co.beta == 0.0
    rep = saddle_exit_from_coefficients(co, eps, 1.0)
    assert np.all(rep.weight[rep.s <= 0.0] == 0.0)
    pos = rep.s > 0
    # |grad q| = m s / eps with m = 2 for chi = 1, lambda_- = -2
    g = rep.weight[pos] / np.exp(-co.k * rep.s[pos] ** 2 / (2 * eps))
    assert np.allclose(g, 2.0 * rep.s[pos] / eps)
    # trapezoid over the kink at s = 0 against the closed form
    assert rep.rate == pytest.approx(rep.extra["rate_closed_form"], rel=1e-3)


def test_chi_two_mode_dense_scan():
    co = SaddleCoefficients.from_eigen(2.0, 1.0, -1.0)
    assert (co.k, co.m, co.beta) == pytest.approx((0.2, 0.8, -0.6))
    assert co.regime == SADDLE_BETA_NEG
    eps = 1e-4
    rep = saddle_exit_from_coefficients(co, eps, 1.0, half_width=12.0, per_sqrt_eps=400)
    mode_scan = rep.s_scaled[np.argmax(rep.weight)]
    # stationary point of log(exp(-k s^2/2) m^3 s^3 / (m^2 s^2 + |beta|))
    b, k, m = abs(co.beta), co.k, co.m
    mode = brentq(lambda s: -k * s + 3.0 / s - 2.0 * m * m * s / (m * m * s * s + b), 0.1, 20.0)
    assert mode_scan == pytest.approx(mode, abs=2.5e-3)
    assert rep.rate == pytest.approx(rep.extra["rate_trapezoid"], rel=1e-3)


def test_saddle_analysis_linear_models():
    def model(c, lb):
        from weaknoise.model import load_model
        return load_model({"drift_a": [[1, 1, 0], [c, 0, 1]], "drift_b": [[-c, 1, 0], [-lb, 0, 1]],
                           "diff_A": [[1, 0, 0]], "diff_B": [], "diff_C": [[1, 0, 0]],
                           "domain_box": [-1, 1, -1, 1]})
    for c, lb, chi in ((0.0, 2.0, 0.0), (0.5, 2.0, 1.0), (0.5, 1.1, 10.0)):
        m = model(c, lb)
        sad = analyze_equilibrium(m, (0.0, 0.0))
        rep = saddle_exit_analysis(m, sad, 0.01, 1.0)
        assert rep.coefficients["chi"] == pytest.approx(chi, rel=1e-12)


def test_w0_prefactor():
    assert w0_prefactor(np.eye(2), 0.0, 0.5) == pytest.approx(1.0 / math.pi)
    assert w0_prefactor(np.diag([4.0, 1.0]), 0.1, 0.05) == pytest.approx(2.0 / (0.1 * math.pi) * math.exp(-2.0))
