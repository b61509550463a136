"""Exit quantities for rank-one diffusion D = [[0, 0], [0, C]].

Diffusion acts along y only, so the boundary layer of the exit function is
resolved along vertical lines through a boundary graph y(x).  Lines that do not
reach the attractor region carry an inner boundary value g(x) < 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .characteristics import _grad_phi
from .equilibrium import N_ROT, SADDLE, EquilibriumAnalysis, eigvec
from .errors import ChiUndeterminedError, ModelError, NotSaddleError, TangencyError, ValidationError
from .exit_regular import ExitReport, w0_prefactor
from .grid import as_chi_lookup
from .model import SdeModel

ABOVE, BELOW = "above", "below"


def _require_singular(model: SdeModel) -> float:
    if not model.singular:
        raise ModelError("singular exit analysis needs rank_hint = singular-y")
    return float(model.C(0.0, 0.0))


def _assoc(model: SdeModel, x, y, psi):
    px, py = _grad_phi(model, x, y, psi)
    a, b = model.drift(x, y)
    A, B, C = model.diffusion(x, y)
    return -(a + 2.0 * (A * px + B * py)), -(b + 2.0 * (B * px + C * py))


@dataclass
class SingularBoundaryCoefficients:
    x: np.ndarray
    y_boundary: np.ndarray
    mu: np.ndarray           # boundary slope dy/dx
    alpha: np.ndarray        # b_assoc - mu a_assoc on the boundary
    beta: np.ndarray         # its y-derivative
    C: float
    side: str                # where the domain lies relative to the graph
    g: Callable[[np.ndarray], np.ndarray]

    @property
    def g_values(self) -> np.ndarray:
        return np.asarray(self.g(self.x), dtype=float)

    def alpha_at(self, x):
        return np.interp(x, self.x, self.alpha)


def singular_boundary_coefficients(model: SdeModel, boundary_graph, phi_source, side: str = BELOW,
                                   g: Callable | None = None, h: float = 1e-5,
                                   slope=None) -> SingularBoundaryCoefficients:
    """alpha(x), beta(x) of the associated drift on a boundary y = y(x).

    ``boundary_graph`` is an (n, 2) array of (x, y) samples with increasing x;
    ``phi_source`` gives psi (grid, callable or constant).  ``slope`` may supply
    dy/dx exactly, otherwise it is differentiated numerically.  beta is a
    one-sided difference over ``h`` into the domain.  g defaults to 1.
    """
    C = _require_singular(model)
    if side not in (ABOVE, BELOW):
        raise ValidationError(f"side must be {ABOVE!r} or {BELOW!r}")
    G = np.asarray(boundary_graph, dtype=float)
    if G.ndim != 2 or G.shape[1] != 2 or G.shape[0] < 3:
        raise ValidationError("boundary graph must be (n, 2) samples, n >= 3")
    x, yb = G[:, 0], G[:, 1]
    if np.any(np.diff(x) <= 0.0):
        raise ValidationError("boundary is not a graph over x (x must increase)")
    mu = np.gradient(yb, x) if slope is None else np.asarray(slope(x), dtype=float)
    lookup = as_chi_lookup(phi_source)
    psi = lookup(G)
    at, bt = _assoc(model, x, yb, psi)
    alpha = bt - mu * at
    d = h if side == ABOVE else -h
    yi = yb + d
    ai, bi = _assoc(model, x, yi, lookup(np.column_stack([x, yi])))
    beta = ((bi - mu * ai) - alpha) / d
    gf = g if g is not None else (lambda s: np.ones_like(np.asarray(s, dtype=float)))
    return SingularBoundaryCoefficients(x, yb, mu, alpha, beta, C, side, gf)


def singular_exit_gradient(coeffs: SingularBoundaryCoefficients, x, epsilon: float):
    """q_y on the boundary: g alpha / (eps C) where the associated drift leaves the domain.

    With the domain below the boundary the exit side has alpha <= 0 (q grows
    downwards and q_y <= 0); with the domain above it has alpha >= 0.  Elsewhere 0.
    """
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    x = np.asarray(x, dtype=float)
    a = coeffs.alpha_at(x)
    g = np.asarray(coeffs.g(x), dtype=float)
    exits = a <= 0.0 if coeffs.side == BELOW else a >= 0.0
    return np.where(exits, g * a / (epsilon * coeffs.C), 0.0)


def boundary_flux_density(coeffs: SingularBoundaryCoefficients, x, epsilon: float, w0) -> np.ndarray:
    """Outward probability flux eps C w0 |q_y| per unit x; C drops out."""
    qy = singular_exit_gradient(coeffs, x, epsilon)
    return epsilon * coeffs.C * np.asarray(w0(np.asarray(x, dtype=float)), dtype=float) * np.abs(qy)


def saddle_alpha(analysis: EquilibriumAnalysis, x, C: float):
    """alpha(x) = x (-lambda_-) 2 rho / a_y along the boundary tangent at a saddle."""
    a_y = float(analysis.M[0, 1])
    if a_y == 0.0:
        raise TangencyError("a_y = 0: the separatrix is tangent to the y-axis")
    return np.asarray(x, dtype=float) * (-analysis.lambda_minus) * 2.0 * analysis.rho / a_y


@dataclass
class SingularAssociatedMatrix:
    psi: float
    K: np.ndarray
    M: np.ndarray
    M_assoc: np.ndarray
    e_plus: np.ndarray       # associated eigenvectors
    e_minus: np.ndarray
    lambda_plus: float
    lambda_minus: float


def associated_matrix_singular(analysis: EquilibriumAnalysis, C: float) -> SingularAssociatedMatrix:
    """K = -I + 2 psi D N with psi = rho / (C a_y), and M_assoc = K M at a saddle."""
    if analysis.kind != SADDLE:
        raise NotSaddleError(f"equilibrium at {analysis.location.tolist()} is a {analysis.kind}")
    M = analysis.M
    a_x, a_y = float(M[0, 0]), float(M[0, 1])
    if a_y == 0.0:
        raise TangencyError("a_y = 0: the separatrix is tangent to the y-axis")
    rho = -float(np.trace(M))
    if rho == 0.0:
        raise ChiUndeterminedError("rho = 0 at the saddle")
    psi = rho / (C * a_y)
    D = np.array([[0.0, 0.0], [0.0, C]])
    K = -np.eye(2) + 2.0 * psi * D @ N_ROT
    Mt = K @ M
    if a_x == 0.0:
        explicit = np.array([[0.0, -a_y], [-M[1, 0], M[1, 1]]])
        if not np.allclose(Mt, explicit, rtol=1e-12, atol=1e-12):
            raise ValidationError("associated matrix disagrees with its explicit a_x = 0 form")
    lp, lm = analysis.lambda_plus, analysis.lambda_minus
    if a_x == 0.0:
        at_y = float(Mt[0, 1])
        ep = np.array([at_y, lp]) / math.hypot(at_y, lp)
        em = np.array([at_y, lm]) / math.hypot(at_y, lm)
    else:
        ep, em = eigvec(Mt, lp), eigvec(Mt, lm)
    return SingularAssociatedMatrix(psi, K, M, Mt, ep, em, lp, lm)


def singular_exit(coeffs: SingularBoundaryCoefficients, phi_lookup, S_attractor, epsilon: float):
    """Exit rate and density along the boundary graph, parameterized by x.

    w0 = sqrt(det S_A)/(2 pi eps) exp(-phi/eps) as for regular diffusion; the
    flux per unit x is eps C w0 |q_y|.  Weights are relative to the boundary
    minimum of phi, whose stationary density is reported as ``w0``.
    """
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    pts = np.column_stack([coeffs.x, coeffs.y_boundary])
    phi = np.asarray(phi_lookup(pts), dtype=float)
    phi_min = float(phi.min())
    rel = np.exp(-(phi - phi_min) / epsilon)
    weight = boundary_flux_density(coeffs, coeffs.x, epsilon, lambda x: np.interp(x, coeffs.x, rel))
    w0 = w0_prefactor(S_attractor, phi_min, epsilon)
    mass = float(np.trapezoid(weight, coeffs.x))
    if mass <= 0.0:
        raise ValidationError("no exit flux through the boundary")
    info = {"side": coeffs.side, "C": coeffs.C, "phi_min": phi_min}
    return ExitReport("singular", w0 * mass, coeffs.x.copy(), weight, weight / mass, info, epsilon, w0)
