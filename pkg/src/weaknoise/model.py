"""Planar SDE models and the drift decompositions built on a quasipotential.

The Fokker-Planck equation is assumed in the form

    w_t = div(-a w + eps * D grad w)

with a drift ``a = (a, b)`` and a symmetric diffusion matrix
``D = [[A, B], [B, C]]``.  All five entries are polynomials in ``(x, y)``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np

from .errors import DomainError, ModelError
from .polynomial import Poly

REGULAR = "regular"
SINGULAR_Y = "singular-y"
_RANK_HINTS = (REGULAR, SINGULAR_Y)
_ENTRIES = ("drift_a", "drift_b", "diff_A", "diff_B", "diff_C")


@dataclass(frozen=True, eq=False)
class SdeModel:
    name: str
    a: Poly
    b: Poly
    A: Poly
    B: Poly
    C: Poly
    rank_hint: str
    domain_box: tuple[float, float, float, float]
    params: Mapping[str, Any] = field(default_factory=dict)

    # -- evaluation --------------------------------------------------------
    def drift(self, x, y):
        return self.a(x, y), self.b(x, y)

    def diffusion(self, x, y):
        return self.A(x, y), self.B(x, y), self.C(x, y)

    @property
    def singular(self) -> bool:
        return self.rank_hint == SINGULAR_Y

    @cached_property
    def d(self) -> dict[str, Poly]:
        """Derived polynomials: partials, contraction rho, kappa = div(D N a), delta = det D."""
        a, b, A, B, C = self.a, self.b, self.A, self.B, self.C
        out: dict[str, Poly] = {}
        for nm, p in (("a", a), ("b", b), ("A", A), ("B", B), ("C", C)):
            out[nm + "_x"] = p.deriv("x")
            out[nm + "_y"] = p.deriv("y")
            out[nm + "_xx"] = out[nm + "_x"].deriv("x")
            out[nm + "_xy"] = out[nm + "_x"].deriv("y")
            out[nm + "_yy"] = out[nm + "_y"].deriv("y")
        rho = -(out["a_x"] + out["b_y"])
        # D N a = (A b - B a, B b - C a) with N = [[0, 1], [-1, 0]]
        kappa = (A * b - B * a).deriv("x") + (B * b - C * a).deriv("y")
        delta = A * C - B * B
        for nm, p in (("rho", rho), ("kappa", kappa), ("delta", delta)):
            out[nm] = p
            out[nm + "_x"] = p.deriv("x")
            out[nm + "_y"] = p.deriv("y")
        return out

    def jacobian(self, x: float, y: float) -> np.ndarray:
        d = self.d
        return np.array([[d["a_x"](x, y), d["a_y"](x, y)], [d["b_x"](x, y), d["b_y"](x, y)]])

    def diffusion_matrix(self, x: float, y: float) -> np.ndarray:
        A, B, C = self.diffusion(x, y)
        return np.array([[A, B], [B, C]], dtype=float)

    def in_box(self, x, y, pad: float = 0.0) -> bool:
        x0, x1, y0, y1 = self.domain_box
        return bool(np.all((x >= x0 - pad) & (x <= x1 + pad) & (y >= y0 - pad) & (y <= y1 + pad)))

    def check_point(self, point) -> tuple[float, float]:
        x, y = (float(v) for v in point)
        if not self.in_box(x, y):
            raise DomainError(f"point {(x, y)} outside domain box {self.domain_box}")
        return x, y

    # -- serialization -----------------------------------------------------
    def to_document(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "params": {k: v for k, v in self.params.items()},
            "drift_a": self.a.to_triples(),
            "drift_b": self.b.to_triples(),
            "diff_A": self.A.to_triples(),
            "diff_B": self.B.to_triples(),
            "diff_C": self.C.to_triples(),
            "rank_hint": self.rank_hint,
            "domain_box": list(self.domain_box),
        }

    def description_hash(self) -> str:
        text = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class DriftDecomposition:
    a_c: np.ndarray
    a_d: np.ndarray
    a_assoc: np.ndarray


# -- validation ---------------------------------------------------------------

def validate_model(model: SdeModel, n: int = 50) -> SdeModel:
    if model.rank_hint not in _RANK_HINTS:
        raise ModelError(f"rank_hint must be one of {_RANK_HINTS}, got {model.rank_hint!r}")
    x0, x1, y0, y1 = model.domain_box
    if not (x1 > x0 and y1 > y0):
        raise ModelError(f"degenerate domain_box {model.domain_box}")
    X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n))
    A, B, C = (np.broadcast_to(v, X.shape) for v in model.diffusion(X, Y))
    scale = max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(C))))
    tol = 1e-12 * scale
    det = A * C - B * B
    if np.any(A < -tol) or np.any(C < -tol) or np.any(det < -tol * scale):
        raise ModelError("diffusion matrix is not positive semidefinite inside domain_box")
    if model.rank_hint == REGULAR:
        if np.any(det <= 0.0):
            raise ModelError("rank_hint=regular but det D <= 0 somewhere in domain_box")
    else:
        if not (model.A.is_zero() and model.B.is_zero()):
            raise ModelError("rank_hint=singular-y requires A = B = 0")
        if not model.C.is_constant() or model.C(0.0, 0.0) <= 0.0:
            raise ModelError("rank_hint=singular-y requires a positive constant C")
    return model


# -- built-in models -----------------------------------------------------------

def _p(terms) -> Poly:
    return Poly.from_terms(terms)


def linear_ou(box=(-3.0, 3.0, -3.0, 3.0)) -> SdeModel:
    return SdeModel("linear_ou", _p([[-1, 1, 0]]), _p([[-1, 0, 1]]), Poly.constant(1.0),
                    Poly(), Poly.constant(1.0), REGULAR, tuple(box))


def rotational_ou(omega: float = 1.0, box=(-3.0, 3.0, -3.0, 3.0)) -> SdeModel:
    a = _p([[-1, 1, 0], [omega, 0, 1]])
    b = _p([[-omega, 1, 0], [-1, 0, 1]])
    return SdeModel("rotational_ou", a, b, Poly.constant(1.0), Poly(), Poly.constant(1.0),
                    REGULAR, tuple(box), {"omega": float(omega)})


def maier_stein(alpha: float = 1.0, box=(-2.0, 2.0, -2.0, 2.0)) -> SdeModel:
    a = _p([[1, 1, 0], [-1, 3, 0], [-alpha, 1, 2]])
    b = _p([[-1, 0, 1], [-1, 2, 1]])
    return SdeModel("maier_stein", a, b, Poly.constant(1.0), Poly(), Poly.constant(1.0),
                    REGULAR, tuple(box), {"alpha": float(alpha)})


def cubic_potential(omega: float = 1.0) -> Poly:
    """U(x) = -w^2 x^2/2 - w^2 x^3/3: threshold U(0) = 0, minimum at x = -1."""
    w2 = omega * omega
    return Poly({(2, 0): -w2 / 2.0, (3, 0): -w2 / 3.0})


def kramers(gamma: float, potential: Poly, box=(-2.5, 1.5, -2.5, 2.5),
            name: str = "kramers", extra_params: Mapping[str, Any] | None = None) -> SdeModel:
    """Langevin particle x' = v, v' = -gamma v - U'(x) + noise; y plays the role of v."""
    if any(j for (_, j) in potential.terms):
        raise ModelError("potential must depend on x only")
    dU = potential.deriv("x")
    a = Poly.y()
    b = Poly({(0, 1): -gamma}) - dU
    params = {"gamma": float(gamma), "potential": potential.to_triples()}
    params.update(extra_params or {})
    return SdeModel(name, a, b, Poly(), Poly(), Poly.constant(gamma), SINGULAR_Y, tuple(box), params)


def kramers_cubic(gamma: float = 1.0, omega: float = 1.0, box=(-2.5, 1.5, -2.5, 2.5)) -> SdeModel:
    return kramers(gamma, cubic_potential(omega), box, name="kramers_cubic",
                   extra_params={"omega": float(omega)})


BUILTINS = {
    "linear_ou": (linear_ou, ()),
    "rotational_ou": (rotational_ou, ("omega",)),
    "maier_stein": (maier_stein, ("alpha",)),
    "kramers_cubic": (kramers_cubic, ("gamma", "omega")),
    "kramers": (kramers, ("gamma", "potential")),
}


def builtin(name: str, **params) -> SdeModel:
    if name not in BUILTINS:
        raise ModelError(f"unknown built-in model {name!r}; choose from {sorted(BUILTINS)}")
    factory, allowed = BUILTINS[name]
    unknown = set(params) - set(allowed) - {"box"}
    if unknown:
        raise ModelError(f"built-in {name!r} takes parameters {allowed}, got {sorted(unknown)}")
    if name == "kramers":
        if "potential" not in params or "gamma" not in params:
            raise ModelError("built-in 'kramers' needs 'gamma' and 'potential' terms [[c, x_power], ...]")
        pot = params.pop("potential")
        if not isinstance(pot, Poly):
            pot = Poly.from_terms([[c, i, 0] for c, i in pot])
        params["potential"] = pot
    return validate_model(factory(**params))


def load_model(document: Mapping[str, Any] | str) -> SdeModel:
    """Build a validated model from a configuration document (dict or JSON text)."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model document is not valid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise ModelError("model document must be a JSON object")
    params = dict(document.get("params") or {})
    box = document.get("domain_box")
    if box is not None:
        if len(box) != 4:
            raise ModelError("domain_box must be [x_min, x_max, y_min, y_max]")
        params["box"] = tuple(float(v) for v in box)
    if "builtin" in document:
        return builtin(str(document["builtin"]), **params)
    missing = [k for k in _ENTRIES if k not in document]
    if missing:
        raise ModelError(f"model document lacks {missing} (or a 'builtin' key)")
    try:
        polys = [Poly.from_terms(document[k]) for k in _ENTRIES]
    except (TypeError, ValueError) as exc:
        raise ModelError(f"malformed polynomial terms: {exc}") from None
    if box is None:
        raise ModelError("explicit models need a domain_box")
    model = SdeModel(
        str(document.get("name", "custom")), *polys,
        rank_hint=str(document.get("rank_hint", REGULAR)),
        domain_box=params.pop("box"),
        params=params,
    )
    return validate_model(model)


# -- operations ------------------------------------------------------------------

def contraction(model: SdeModel, point) -> float:
    """rho = -div a."""
    x, y = model.check_point(point)
    return float(model.d["rho"](x, y))


def decompose_drift(model: SdeModel, gradphi, point) -> DriftDecomposition:
    x, y = model.check_point(point)
    g = np.asarray(gradphi, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradphi must be finite")
    a = np.array(model.drift(x, y), dtype=float)
    Dg = model.diffusion_matrix(x, y) @ g
    return DriftDecomposition(a_c=a + Dg, a_d=-Dg, a_assoc=-(a + 2.0 * Dg))
