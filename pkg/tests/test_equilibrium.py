import math

import numpy as np
import pytest

from weaknoise import ChiUndeterminedError, NotSaddleError
from weaknoise.equilibrium import (ATTRACTOR, SADDLE, analyze_all, analyze_equilibrium,
                                   associated_eigvec_out, eigen_pair, find_equilibria)
from weaknoise.model import builtin

GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _parallel(u, v):
    u, v = np.asarray(u, float), np.asarray(v, float)
    return abs(u[0] * v[1] - u[1] * v[0]) / (np.linalg.norm(u) * np.linalg.norm(v))


def test_find_kramers():
    roots = find_equilibria(builtin("kramers_cubic"), [(-0.9, 0.1), (0.1, -0.1)])
    assert np.allclose(roots, [(-1.0, 0.0), (0.0, 0.0)], atol=1e-12)


def test_find_linear_and_maier_stein():
    assert np.allclose(find_equilibria(builtin("linear_ou"), [(0.3, 0.7)]), [(0.0, 0.0)])
    roots = find_equilibria(builtin("maier_stein", alpha=1.0), [(-0.9, 0.1), (0.05, 0.02), (1.1, -0.1)])
    assert np.allclose(roots, [(-1, 0), (0, 0), (1, 0)], atol=1e-12)


def test_find_deduplicates():
    roots = find_equilibria(builtin("linear_ou"), [(0.3, 0.7), (-1.0, 0.2), (0.0, 0.0)])
    assert len(roots) == 1


def test_kramers_saddle():
    sad = analyze_equilibrium(builtin("kramers_cubic", gamma=1.0, omega=1.0), (0.0, 0.0))
    assert sad.kind == SADDLE
    assert sad.chi == pytest.approx(1.0, abs=1e-14)
    assert sad.psi == pytest.approx(1.0, abs=1e-14)
    assert sad.lambda_plus == pytest.approx(GOLD, abs=1e-14)
    assert sad.lambda_minus == pytest.approx(-1.0 - GOLD, abs=1e-14)
    assert _parallel(associated_eigvec_out(sad), (-1.0, GOLD)) < 1e-12


def test_linear_attractor():
    att = analyze_equilibrium(builtin("linear_ou"), (0.0, 0.0))
    assert att.kind == ATTRACTOR and att.chi == 0.0
    assert np.allclose(att.M_assoc, -np.eye(2)) and np.allclose(att.S, np.eye(2))


def test_chi_zero_saddle_assoc_vector():
    sad = analyze_equilibrium(builtin("maier_stein", alpha=2.0), (0.0, 0.0), chi_if_undetermined=0.0)
    assert sad.chi == 0.0
    assert _parallel(associated_eigvec_out(sad), sad.eig_vecs["e_plus"]) < 1e-14


def test_chi_undetermined():
    with pytest.raises(ChiUndeterminedError):
        analyze_equilibrium(builtin("maier_stein", alpha=2.0), (0.0, 0.0))


def test_not_saddle():
    with pytest.raises(NotSaddleError):
        associated_eigvec_out(analyze_equilibrium(builtin("linear_ou"), (0.0, 0.0)))


@pytest.mark.parametrize("M", [[[0, 1], [1, -1]], [[-1, 2], [-2, -1]], [[3, 1e-9], [0, 1e-7]],
                               [[1e8, 1], [1, -1e-8]]])
def test_eigen_pair_matches_numpy(M):
    M = np.array(M, dtype=float)
    ours = sorted(eigen_pair(M), key=lambda z: (z.real, z.imag))
    ref = sorted(np.linalg.eigvals(M), key=lambda z: (z.real, z.imag))
    for a, b in zip(ours, ref):
        assert abs(a - b) <= 1e-9 * max(1.0, abs(b))


def test_analyze_all_invariants():
    for eq in analyze_all(builtin("kramers_cubic", gamma=0.6, omega=1.2)):
        assert np.trace(eq.M_assoc) == pytest.approx(np.trace(eq.M), abs=1e-12)
        assert np.linalg.det(eq.M_assoc) == pytest.approx(np.linalg.det(eq.M), abs=1e-12)
        assert np.allclose(eq.S, eq.S.T, atol=1e-12)
