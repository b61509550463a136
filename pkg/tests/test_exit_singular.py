import math

import numpy as np
import pytest

from conftest import kramers_separatrix
from weaknoise import ModelError
from weaknoise import kramers as kr
from weaknoise.equilibrium import analyze_equilibrium
from weaknoise.exit_singular import (ABOVE, BELOW, SingularBoundaryCoefficients, associated_matrix_singular,
                                     saddle_alpha, singular_boundary_coefficients, singular_exit,
                                     singular_exit_gradient)
from weaknoise.model import builtin


def _separatrix_coefficients(gamma, eps, n=2001):
    sep = kramers_separatrix(gamma)
    model = builtin("kramers_cubic", gamma=gamma, omega=1.0)
    lo = max(sep.x1, -12.0 * math.sqrt(2.0 * eps))
    # x_1 itself is left out: the separatrix slope is infinite there
    x = np.unique(np.concatenate([np.linspace(sep.x1, 0.0, n), np.linspace(lo, 0.0, n)]))
    x = x[x > sep.x1]
    graph = np.column_stack([x, sep.v_s(x)])
    co = singular_boundary_coefficients(model, graph, 1.0, side=BELOW, slope=sep.dv_s,
                                        g=lambda s: kr.g_function(s, eps, 1.0))
    return model, sep, co


@pytest.mark.parametrize("gamma", [0.3, 1.0, 4.0])
def test_separatrix_alpha(gamma):
    _, sep, co = _separatrix_coefficients(gamma, 0.01, 401)
    assert np.allclose(co.alpha, -2.0 * gamma * sep.v_s(co.x), atol=1e-9)


def test_exit_gradient_example():
    x = np.array([-0.1, 0.0, 0.1])
    co = SingularBoundaryCoefficients(x, 0 * x, 0 * x, np.full(3, 0.3), 0 * x, 1.0, ABOVE, lambda s: np.ones_like(s))
    assert np.allclose(singular_exit_gradient(co, x, 0.05), 6.0)


def test_exit_gradient_on_separatrix():
    eps = 0.02
    for gamma in (0.5, 2.0):
        _, sep, co = _separatrix_coefficients(gamma, eps, 201)
        qy = singular_exit_gradient(co, co.x, eps)
        ref = -2.0 * kr.g_function(co.x, eps, 1.0) * sep.v_s(co.x) / eps
        assert np.allclose(qy, ref, atol=1e-8)
        assert qy[-1] == 0.0       # g = 0 at the saddle


def test_saddle_alpha_kramers():
    gamma = 1.5
    sad = analyze_equilibrium(builtin("kramers_cubic", gamma=gamma), (0.0, 0.0))
    x = np.array([-0.01, -0.001])
    assert np.allclose(saddle_alpha(sad, x, gamma), x * (-sad.lambda_minus) * 2.0 * gamma)
    # agrees with -2 gamma v_s to first order near the saddle
    sep = kramers_separatrix(gamma)
    assert np.allclose(saddle_alpha(sad, x, gamma), -2.0 * gamma * sep.v_s(x), rtol=1e-2)


@pytest.mark.parametrize("gamma, omega", [(1.0, 1.0), (0.4, 2.0)])
def test_associated_matrix_kramers(gamma, omega):
    sad = analyze_equilibrium(builtin("kramers_cubic", gamma=gamma, omega=omega), (0.0, 0.0))
    am = associated_matrix_singular(sad, gamma)
    assert am.psi == pytest.approx(1.0)
    assert np.allclose(am.M_assoc, [[0.0, -1.0], [-omega ** 2, -gamma]])
    assert np.trace(am.M_assoc) == pytest.approx(-gamma)
    assert np.linalg.det(am.M_assoc) == pytest.approx(-omega ** 2)
    for lam, e in ((am.lambda_plus, am.e_plus), (am.lambda_minus, am.e_minus)):
        assert np.allclose(am.M_assoc @ e, lam * e)


def test_psi_zero_limit():
    sad = analyze_equilibrium(builtin("kramers_cubic"), (0.0, 0.0))
    from weaknoise.equilibrium import singular_K
    K = singular_K(0.0, np.diag([0.0, 1.0]))
    assert np.allclose(K @ sad.M, -sad.M)


def test_requires_singular_model():
    with pytest.raises(ModelError):
        singular_boundary_coefficients(builtin("linear_ou"), np.zeros((3, 2)) + [[0, 0], [1, 0], [2, 0]], 0.0)


@pytest.mark.parametrize("gamma, tol", [(0.2, 1e-8), (1.0, 1e-8), (5.0, 1e-6)])
def test_singular_flux_matches_kramers_rate(gamma, tol):
    eps = 0.01
    model, sep, co = _separatrix_coefficients(gamma, eps)
    pot = sep.potential
    att = analyze_equilibrium(model, (pot.x_A, 0.0))
    phi = lambda P: pot.u(P[:, 0]) + 0.5 * P[:, 1] ** 2 - pot.U_A
    rep = singular_exit(co, phi, att.S, eps)
    ref = kr.exit_rate(sep, eps).rate
    assert rep.rate == pytest.approx(ref, rel=tol)
    assert rep.regime == "singular"
