import json

import numpy as np
import pytest

from weaknoise import ModelError, DomainError
from weaknoise.model import builtin, contraction, decompose_drift, load_model
from weaknoise.polynomial import Poly

MODELS = [("linear_ou", {}), ("rotational_ou", {"omega": 1.7}), ("maier_stein", {"alpha": 2.0}),
          ("kramers_cubic", {"gamma": 0.7, "omega": 1.3})]


def test_kramers_cubic_drift_and_equilibria():
    m = builtin("kramers_cubic", gamma=1.0, omega=1.0)
    x = np.linspace(-2, 1, 7)
    # b = -gamma v - U'(x) with U'(x) = -x - x^2
    assert np.allclose(m.b(x, 0.0 * x), x + x * x)
    assert np.allclose(m.a(x, 0.3 + 0 * x), 0.3)
    for x0 in (0.0, -1.0):
        assert m.a(x0, 0.0) == 0.0 and m.b(x0, 0.0) == 0.0
    assert m.singular


def test_linear_ou_definition():
    m = builtin("linear_ou")
    assert m.drift(0.4, -1.2) == pytest.approx((-0.4, 1.2))
    assert np.array_equal(m.diffusion_matrix(0.1, 0.2), np.eye(2))
    assert not m.singular


def test_explicit_terms_accepted():
    doc = {"drift_a": [[1, 1, 0], [-1, 3, 0]], "drift_b": [[-1, 0, 1]], "diff_A": [[1, 0, 0]],
           "diff_B": [], "diff_C": [[1, 0, 0]], "domain_box": [-2, 2, -2, 2]}
    m = load_model(json.dumps(doc))
    assert m.a(0.5, 0.3) == pytest.approx(0.5 - 0.125)
    assert m.b(0.5, 0.3) == pytest.approx(-0.3)


@pytest.mark.parametrize("name, kw, rho", [("linear_ou", {}, 2.0), ("kramers_cubic", {"gamma": 0.35}, 0.35),
                                           ("rotational_ou", {"omega": 3.0}, 2.0)])
def test_contraction(name, kw, rho):
    m = builtin(name, **kw)
    for p in ((0.0, 0.0), (0.7, -0.4), (-1.1, 1.3)):
        assert contraction(m, p) == pytest.approx(rho, abs=1e-14)


def test_decompose_kramers():
    g = 0.8
    m = builtin("kramers_cubic", gamma=g, omega=1.0)
    x, v = -0.6, 0.45
    dU = -x - x * x
    dd = decompose_drift(m, (dU, v), (x, v))
    assert np.allclose(dd.a_c, (v, -dU))
    assert np.allclose(dd.a_assoc, (-v, -g * v + dU))
    assert np.allclose(dd.a_c + dd.a_d, m.drift(x, v))


def test_decompose_linear_and_rotational():
    x, y = 0.3, -0.9
    assert np.allclose(decompose_drift(builtin("linear_ou"), (x, y), (x, y)).a_c, 0.0)
    w = 1.4
    dd = decompose_drift(builtin("rotational_ou", omega=w), (x, y), (x, y))
    assert np.allclose(dd.a_c, (w * y, -w * x))
    assert np.allclose(dd.a_assoc, (-x - w * y, w * x - y))


@pytest.mark.parametrize("name, kw", MODELS)
def test_partials_match_finite_differences(name, kw):
    m = builtin(name, **kw)
    rng = np.random.default_rng(3)
    h = 1e-6
    for x, y in rng.uniform(-1, 1, size=(5, 2)):
        for nm in ("a", "b", "A", "B", "C", "rho", "kappa", "delta"):
            p = getattr(m, nm) if nm in "abABC" else m.d[nm]
            fdx = (p(x + h, y) - p(x - h, y)) / (2 * h)
            fdy = (p(x, y + h) - p(x, y - h)) / (2 * h)
            assert m.d[nm + "_x"](x, y) == pytest.approx(fdx, abs=1e-7)
            assert m.d[nm + "_y"](x, y) == pytest.approx(fdy, abs=1e-7)


def test_poly_algebra():
    p = Poly.from_terms([[2, 1, 0], [3, 0, 2], [1, 1, 0]])
    assert p(2.0, 1.0) == pytest.approx(9.0)
    assert p.deriv("y")(0.0, 2.0) == pytest.approx(12.0)
    assert (p * Poly.x())(1.0, 1.0) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        Poly.from_terms([[1, 0.5, 0]])


@pytest.mark.parametrize("doc", [
    "not json",
    {"drift_a": [], "domain_box": [-1, 1, -1, 1]},
    {"drift_a": [], "drift_b": [], "diff_A": [[-1, 0, 0]], "diff_B": [], "diff_C": [[1, 0, 0]],
     "domain_box": [-1, 1, -1, 1]},
    {"drift_a": [], "drift_b": [], "diff_A": [[1, 0, 0]], "diff_B": [], "diff_C": [[1, 0, 0]],
     "domain_box": [1, -1, -1, 1]},
    {"drift_a": [], "drift_b": [], "diff_A": [[1, 0, 0]], "diff_B": [], "diff_C": [[1, 0, 0]],
     "domain_box": [-1, 1, -1, 1], "rank_hint": "singular-y"},
    {"builtin": "nope"},
    {"builtin": "linear_ou", "params": {"omega": 1}},
])
def test_load_model_rejects(doc):
    with pytest.raises(ModelError):
        load_model(doc)


def test_point_outside_box():
    with pytest.raises(DomainError):
        contraction(builtin("linear_ou"), (10.0, 0.0))


def test_description_hash_stable():
    a = builtin("maier_stein", alpha=2.0)
    b = load_model(json.dumps(a.to_document()))
    assert a.description_hash() == b.description_hash()
    assert a.description_hash() != builtin("maier_stein", alpha=1.0).description_hash()
