"""Weak-noise exit through a boundary for diffusion standardised to D = I.

Near the boundary the exit function solves a one-dimensional problem in the
inward normal coordinate r, with the normal component of the associated drift
expanded as alpha(s) + beta(s) r.  Its normal derivative c(s) on the boundary,
weighted with the stationary density, gives the exit rate and the exit-point
density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .characteristics import _grad_phi
from .equilibrium import SADDLE, EquilibriumAnalysis
from .errors import (ChiUndeterminedError, NotAttractedError, NotSaddleError, ValidationError)
from .grid import as_chi_lookup
from .model import SdeModel

ATTRACTED = "attracted"
SADDLE_BETA_POS = "saddle-beta>0"
SADDLE_BETA_ZERO = "saddle-beta=0"
SADDLE_BETA_NEG = "saddle-beta<0"
MIXED = "mixed"


def _require_identity_diffusion(model: SdeModel):
    if model.singular:
        raise ValidationError("regular-diffusion exit analysis needs rank_hint = regular")
    for nm, want in (("A", 1.0), ("B", 0.0), ("C", 1.0)):
        p = getattr(model, nm)
        if not p.is_constant() or abs(p(0.0, 0.0) - want) > 1e-12:
            raise ValidationError("exit analysis is implemented for D = I only")


def associated_drift(model: SdeModel, pts, chi_lookup) -> np.ndarray:
    """a_assoc = -(a + 2 D grad phi) at the points, with grad phi from chi."""
    P = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = P[:, 0], P[:, 1]
    c = chi_lookup(P)
    px, py = _grad_phi(model, x, y, c)
    a, b = model.drift(x, y)
    A, B, C = model.diffusion(x, y)
    return -np.column_stack([a + 2.0 * (A * px + B * py), b + 2.0 * (B * px + C * py)])


# -- boundary normal form ---------------------------------------------------------------

@dataclass
class BoundaryNormalForm:
    s: np.ndarray            # arclength, 0 at the reference point
    points: np.ndarray       # boundary samples (n, 2)
    normals: np.ndarray      # inward unit normals (n, 2)
    alpha: np.ndarray        # inward normal component of the associated drift
    beta: np.ndarray         # its inward normal derivative
    reference_index: int
    orientation: int         # +1 if s grows along the polyline, -1 otherwise

    def alpha_at(self, s):
        return np.interp(s, self.s, self.alpha)

    def beta_at(self, s):
        return np.interp(s, self.s, self.beta)


def _resample(poly: np.ndarray, spacing: float | None):
    seg = np.hypot(*np.diff(poly, axis=0).T)
    if np.any(seg == 0.0):
        raise ValidationError("boundary polyline has repeated vertices")
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if spacing is None:
        return poly, arc
    n = max(2, int(math.ceil(arc[-1] / spacing)) + 1)
    t = np.linspace(0.0, arc[-1], n)
    return np.column_stack([np.interp(t, arc, poly[:, 0]), np.interp(t, arc, poly[:, 1])]), t


def boundary_normal_form(model: SdeModel, boundary, phi_source, reference_point,
                         inside=None, h: float = 1e-4, spacing: float | None = None) -> BoundaryNormalForm:
    """alpha(s), beta(s) of the associated drift along a boundary polyline.

    ``inside`` is a point of the domain fixing the inward side; by default the
    centroid of the polyline (appropriate for closed boundaries).  s is measured
    from the vertex nearest to ``reference_point``; it is oriented so that alpha
    grows through zero there when alpha changes sign (a saddle), else along the
    polyline.  beta is a one-sided difference over the inward distance ``h``.
    """
    _require_identity_diffusion(model)
    poly = np.asarray(boundary, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
        raise ValidationError("boundary must be a polyline of at least three (x, y) vertices")
    pts, arc = _resample(poly, spacing)
    lookup = as_chi_lookup(phi_source)
    # tangents by central differences, normals by rotation
    tang = np.gradient(pts, arc, axis=0)
    tang /= np.linalg.norm(tang, axis=1)[:, None]
    nrm = np.column_stack([-tang[:, 1], tang[:, 0]])
    centre = pts.mean(axis=0) if inside is None else np.asarray(inside, dtype=float)
    side = np.sign(np.einsum("ij,ij->i", centre - pts, nrm))
    side[side == 0] = 1.0
    nrm *= side[:, None]
    ref = int(np.argmin(np.hypot(*(pts - np.asarray(reference_point, dtype=float)).T)))
    at = associated_drift(model, pts, lookup)
    alpha = np.einsum("ij,ij->i", at, nrm)
    inner = associated_drift(model, pts + h * nrm, lookup)
    beta = (np.einsum("ij,ij->i", inner, nrm) - alpha) / h
    s = arc - arc[ref]
    orient = 1
    lo, hi = max(ref - 1, 0), min(ref + 1, s.size - 1)
    if alpha[hi] < alpha[lo] and alpha[lo] * alpha[hi] <= 0.0:
        orient = -1
        s = -s
    order = np.argsort(s)
    return BoundaryNormalForm(s[order], pts[order], nrm[order], alpha[order], beta[order],
                              int(np.flatnonzero(order == ref)[0]), orient)


def attracted_exit_gradient(model: SdeModel, boundary_point, inward_normal, epsilon: float,
                            phi_source=None) -> float:
    """|grad q| = a_perp / eps at an attracted boundary point.

    When a chi source is given, it is checked that grad phi is available at the point.
    """
    _require_identity_diffusion(model)
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    p = np.asarray(boundary_point, dtype=float)
    n = np.asarray(inward_normal, dtype=float)
    n = n / np.linalg.norm(n)
    a = np.array(model.drift(*p), dtype=float)
    a_perp = float(a @ n)
    if a_perp <= 0.0:
        raise NotAttractedError(f"drift does not point into the domain at {p.tolist()} (a_perp = {a_perp:.3g})")
    if phi_source is not None:
        as_chi_lookup(phi_source)(p[None, :])
    return a_perp / epsilon


def exit_flux_coefficient(alpha: float, beta: float, epsilon: float) -> float:
    """Normal derivative c of the boundary-layer exit function.

    beta > 0: c = 1 / int_0^inf exp(-(alpha r + beta r^2/2) / eps) dr by quadrature;
    beta = 0: alpha/eps (0 for alpha <= 0); beta < 0: (alpha/eps) alpha^2 / (alpha^2 + eps|beta|)
    for alpha > 0, else 0.
    """
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    alpha, beta = float(alpha), float(beta)
    if beta > 0.0:
        if alpha == 0.0:
            return math.sqrt(2.0 * beta / (math.pi * epsilon))
        # integrate in units of the layer thickness
        L = min(epsilon / abs(alpha), math.sqrt(epsilon / beta))
        a, b = alpha * L / epsilon, beta * L * L / epsilon
        shift = 0.0
        if alpha < 0.0:
            # the exponent peaks at r = |alpha|/beta; factor out its maximum
            shift = a * a / (2.0 * b)
        f = lambda u: math.exp(-(a * u + 0.5 * b * u * u) - shift)
        peak = [max(-a / b, 0.0)] if alpha < 0.0 else None
        if peak:
            val = (integrate.quad(f, 0.0, peak[0], epsabs=0.0, epsrel=1e-12, limit=200)[0]
                   + integrate.quad(f, peak[0], math.inf, epsabs=0.0, epsrel=1e-12, limit=200)[0])
        else:
            val = integrate.quad(f, 0.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)[0]
        return math.exp(-shift) / (L * val)
    if alpha <= 0.0:
        return 0.0
    if beta == 0.0:
        return alpha / epsilon
    return alpha / epsilon * alpha * alpha / (alpha * alpha + epsilon * abs(beta))


def boundary_exit(model: SdeModel, form: BoundaryNormalForm, phi_lookup, S_attractor,
                  epsilon: float) -> ExitReport:
    """Exit rate and density along a sampled boundary from alpha(s), beta(s) and phi(s).

    The flux per unit length is eps w0(s) c(s) with w0 = sqrt(det S_A)/(2 pi eps) exp(-phi/eps).
    Weights are reported relative to the boundary minimum of phi; ``w0`` in the
    report is the stationary density there.  The regime is "attracted" when
    alpha > 0 at every sample and "mixed" otherwise.
    """
    _require_identity_diffusion(model)
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    phi = np.asarray(phi_lookup(form.points), dtype=float)
    phi_min = float(phi.min())
    c = np.array([exit_flux_coefficient(a, b, epsilon) for a, b in zip(form.alpha, form.beta)])
    weight = np.exp(-(phi - phi_min) / epsilon) * c
    w0 = w0_prefactor(S_attractor, phi_min, epsilon)
    mass = float(integrate.trapezoid(weight, form.s))
    if mass <= 0.0:
        raise ValidationError("no exit flux through the boundary")
    rate = epsilon * w0 * mass
    regime = ATTRACTED if bool(np.all(form.alpha > 0.0)) else MIXED
    coeffs = {"alpha0": float(form.alpha[form.reference_index]),
              "beta0": float(form.beta[form.reference_index]), "phi_min": phi_min}
    return ExitReport(regime, rate, form.s.copy(), weight, weight / mass, coeffs, epsilon, w0)


# -- exits through a saddle ------------------------------------------------------------------

@dataclass
class SaddleCoefficients:
    chi: float
    m: float
    beta: float
    k: float
    lambda_plus: float
    lambda_minus: float

    @property
    def regime(self) -> str:
        if abs(abs(self.chi) - 1.0) <= 1e-12:
            return SADDLE_BETA_ZERO
        return SADDLE_BETA_POS if abs(self.chi) < 1.0 else SADDLE_BETA_NEG

    @classmethod
    def from_eigen(cls, chi: float, lambda_plus: float, lambda_minus: float) -> "SaddleCoefficients":
        """alpha = m s, beta and the curvature k of phi along the boundary for D = I."""
        if not (lambda_plus > 0.0 > lambda_minus):
            raise NotSaddleError(f"eigenvalues {lambda_plus}, {lambda_minus} do not form a saddle")
        q = 1.0 + chi * chi
        m = -lambda_minus * 2.0 * abs(chi) / q
        beta = lambda_plus * (1.0 - chi * chi) / q
        if abs(abs(chi) - 1.0) <= 1e-12:
            beta = 0.0
        k = -lambda_minus / q
        return cls(float(chi), m, beta, k, float(lambda_plus), float(lambda_minus))


@dataclass
class ExitReport:
    regime: str
    rate: float
    s: np.ndarray
    weight: np.ndarray
    weight_normalized: np.ndarray
    coefficients: dict
    epsilon: float
    w0: float
    extra: dict = field(default_factory=dict)

    @property
    def s_scaled(self) -> np.ndarray:
        return self.s / math.sqrt(self.epsilon)

    def as_record(self) -> dict:
        return {"regime": self.regime, "rate": self.rate, "epsilon": self.epsilon, "w0": self.w0,
                "coefficients": dict(self.coefficients), **self.extra}


def w0_prefactor(S_attractor, phi_P: float, epsilon: float) -> float:
    """Gaussian-normalised stationary density at a boundary point P:
    w0(P) = sqrt(det S_A) / (2 pi eps) * exp(-phi_P / eps)."""
    det = float(np.linalg.det(np.asarray(S_attractor, dtype=float)))
    if det <= 0.0:
        raise ValidationError("S at the attractor must be positive definite")
    return math.sqrt(det) / (2.0 * math.pi * epsilon) * math.exp(-phi_P / epsilon)


def negative_beta_rate(co: SaddleCoefficients, epsilon: float, w0: float) -> float:
    """r_e = w0 eps m [1/k - |beta| int_0^inf (2 m^2 u + |beta|)^-1 exp(-k u) du]."""
    b = abs(co.beta)
    m2 = co.m * co.m
    if m2 == 0.0:
        return 0.0
    tail = integrate.quad(lambda u: math.exp(-co.k * u) / (2.0 * m2 * u + b), 0.0, math.inf,
                          epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return w0 * epsilon * co.m * (1.0 / co.k - b * tail)


def negative_beta_density(co: SaddleCoefficients, s_scaled):
    """Unnormalised exit density in s' = s / sqrt(eps) for beta <= 0; zero for s' < 0."""
    sp = np.asarray(s_scaled, dtype=float)
    ms = co.m * sp
    if co.beta == 0.0:
        corr = np.ones_like(sp)
    else:
        corr = 1.0 - 1.0 / (ms * ms / abs(co.beta) + 1.0)
    return np.where(sp > 0.0, np.exp(-0.5 * co.k * sp * sp) * ms * corr, 0.0)


def saddle_exit_from_coefficients(co: SaddleCoefficients, epsilon: float, w0: float,
                                  half_width: float = 10.0, per_sqrt_eps: int = 20) -> ExitReport:
    """Exit rate and exit-point density near a saddle P on the boundary.

    The density is sampled on |s| <= half_width * sqrt(eps / k) at spacing
    sqrt(eps) / per_sqrt_eps; the rate is eps w0 times the boundary integral of
    exp(-k s^2 / 2 eps) c(s), except for beta < 0 where the closed form is used.
    """
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    se = math.sqrt(epsilon)
    L = half_width * math.sqrt(epsilon / co.k)
    n = int(math.ceil(L / (se / per_sqrt_eps)))
    s = np.linspace(-L, L, 2 * n + 1)
    regime = co.regime
    gauss = np.exp(-co.k * s * s / (2.0 * epsilon))
    extra = {}
    if regime == SADDLE_BETA_POS:
        c = np.array([exit_flux_coefficient(co.m * si, co.beta, epsilon) for si in s])
        weight = gauss * c
        rate = epsilon * w0 * float(integrate.trapezoid(weight, s))
    elif regime == SADDLE_BETA_ZERO:
        weight = np.where(s > 0.0, gauss * co.m * s / epsilon, 0.0)
        rate = epsilon * w0 * float(integrate.trapezoid(weight, s))
        extra["rate_closed_form"] = w0 * epsilon * co.m / co.k
    else:
        weight = negative_beta_density(co, s / se)
        rate = negative_beta_rate(co, epsilon, w0)
        extra["rate_trapezoid"] = w0 * epsilon * float(integrate.trapezoid(
            np.array([exit_flux_coefficient(co.m * si, co.beta, epsilon) for si in s]) * gauss, s))
    mass = float(integrate.trapezoid(weight, s))
    norm = weight / mass if mass > 0.0 else np.zeros_like(weight)
    coeffs = {"chi": co.chi, "m": co.m, "beta": co.beta, "k": co.k,
              "lambda_plus": co.lambda_plus, "lambda_minus": co.lambda_minus}
    return ExitReport(regime, rate, s, weight, norm, coeffs, epsilon, w0, extra)


def saddle_exit_analysis(model: SdeModel, analysis: EquilibriumAnalysis, epsilon: float, w0: float,
                         phi_source=None, **kw) -> ExitReport:
    """Exit near a saddle on the boundary of the basin, with D = I.

    chi = curl a / div a at the saddle (the analysed chi where both vanish).
    If a chi source is given, phi along the
    boundary tangent (e_- of M) is checked to be minimal at the saddle.
    """
    _require_identity_diffusion(model)
    if analysis.kind != SADDLE:
        raise NotSaddleError(f"equilibrium at {analysis.location.tolist()} is a {analysis.kind}")
    M = analysis.M
    rho = -float(np.trace(M))
    if abs(rho) > 1e-12 * max(1.0, float(np.abs(M).max())):
        chi = (M[0, 1] - M[1, 0]) / rho
    elif abs(M[0, 1] - M[1, 0]) <= 1e-12 * max(1.0, float(np.abs(M).max())):
        # curl and div both vanish: use the value the analysis was given
        chi = analysis.chi
    else:
        raise ChiUndeterminedError("div a = 0 at the saddle: chi is undetermined")
    co = SaddleCoefficients.from_eigen(chi, analysis.lambda_plus, analysis.lambda_minus)
    if phi_source is not None:
        _check_phi_minimal(model, analysis, phi_source, epsilon)
    rep = saddle_exit_from_coefficients(co, epsilon, w0, **kw)
    e_minus = analysis.eig_vecs["e_minus"]
    rep.coefficients["k_from_S"] = float(e_minus @ analysis.S @ e_minus)
    return rep


def _check_phi_minimal(model, analysis, phi_source, epsilon):
    lookup = as_chi_lookup(phi_source)
    e = analysis.eig_vecs["e_minus"]
    P = analysis.location
    for sgn in (-1.0, 1.0):
        pts = P + sgn * np.outer(np.linspace(0.0, 3.0 * math.sqrt(epsilon), 31), e)
        g = np.column_stack(_grad_phi(model, pts[:, 0], pts[:, 1], lookup(pts)))
        # phi grows away from P when its derivative along the tangent is >= 0
        slope = sgn * g @ e
        if np.any(slope[1:] < -1e-8):
            raise ValidationError("phi is not minimal at the saddle along the boundary")
