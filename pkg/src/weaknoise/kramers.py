"""Exit from the potential well of a Langevin particle.

The model is x' = v, v' = -gamma v - U'(x) + noise with U(0) = 0 at the
barrier top (a saddle of the drift) and a well at x_A < 0.  The exit function
is built on the separatrix v_s(x) through the saddle, the action integral
I(x) = int_0^x v_s dz and the inner boundary function g(x) = erf(w|x|/sqrt(2 eps)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import CubicHermiteSpline

from .errors import ConvergenceError, DomainError, ModelError, ValidationError
from .model import SdeModel
from .polynomial import Poly

SADDLE_OFFSET = 1e-6
G_SNAP = 1e-9


@dataclass(frozen=True)
class KramersPotential:
    """U(x) with its barrier at x = 0 and the well at x_A < 0."""
    U: Poly
    gamma: float
    omega: float        # sqrt(-U''(0))
    x_A: float
    U_A: float
    omega_A: float      # sqrt(U''(x_A))

    def u(self, x):
        return self.U(x, 0.0 * np.asarray(x))

    def du(self, x):
        return self.U.deriv("x")(x, 0.0 * np.asarray(x))

    @property
    def lambdas(self) -> tuple[float, float]:
        """Roots of lambda^2 + gamma lambda - omega^2 = 0, larger first."""
        g, w2 = self.gamma, self.omega ** 2
        sq = math.sqrt(g * g + 4.0 * w2)
        lm = -(g + sq) / 2.0
        return -w2 / lm, lm


def kramers_potential(model: SdeModel) -> KramersPotential:
    """Recover U and gamma from a Langevin model and check the threshold geometry."""
    if not model.singular:
        raise ModelError("Kramers analysis needs a singular-y (Langevin) model")
    if "potential" not in model.params or "gamma" not in model.params:
        raise ModelError("model does not carry a Kramers potential")
    U = Poly.from_terms(model.params["potential"])
    return make_potential(U, float(model.params["gamma"]), model.domain_box[0])


def make_potential(U: Poly, gamma: float, x_search: float = -10.0) -> KramersPotential:
    """Potential data for friction ``gamma`` >= 0; the well is sought in [x_search, 0).

    Also serves gamma = 0, which has no diffusion and hence no SDE model.
    """
    if gamma < 0.0:
        raise ModelError(f"friction must be non-negative, got {gamma}")
    if any(j for (_, j) in U.terms):
        raise ModelError("potential must depend on x only")
    dU = U.deriv("x")
    d2U = dU.deriv("x")
    if abs(U(0.0, 0.0)) > 1e-12 or abs(dU(0.0, 0.0)) > 1e-12:
        raise ModelError("the barrier must sit at x = 0 with U(0) = U'(0) = 0")
    w2 = -float(d2U(0.0, 0.0))
    if w2 <= 0.0:
        raise ModelError("U''(0) must be negative (a smooth threshold)")
    # the well: the critical point of U closest to the barrier on the left
    xs = np.linspace(x_search, 0.0, 4001)[:-1]
    du = dU(xs, 0.0 * xs)
    x_A = None
    for k in range(xs.size - 2, -1, -1):
        if du[k] == 0.0 or du[k] * du[k + 1] < 0.0:
            x_A = optimize.brentq(lambda s: dU(s, 0.0), xs[k], xs[k + 1], xtol=1e-15)
            break
    if x_A is None or d2U(x_A, 0.0) <= 0.0:
        raise ModelError(f"no potential minimum in [{x_search}, 0)")
    return KramersPotential(U, float(gamma), math.sqrt(w2), float(x_A), float(U(x_A, 0.0)),
                            math.sqrt(float(d2U(x_A, 0.0))))


@dataclass
class SeparatrixTable:
    """Separatrix v_s(x) on x_1 <= x <= 0 with I(x) and the energy E_s(x).

    Nodes run from the turning point x_1 to the saddle.  v_s^2 and I are
    interpolated by cubic Hermite splines (both have finite slopes at x_1,
    unlike v_s itself).
    """
    x: np.ndarray
    v: np.ndarray
    I: np.ndarray
    E: np.ndarray
    x1: float
    lambda_minus: float
    gamma: float
    omega: float
    potential: KramersPotential = field(repr=False)

    def __post_init__(self):
        p = self.potential
        w2 = self.v ** 2
        dw2 = -2.0 * self.gamma * self.v - 2.0 * p.du(self.x)
        self._v2 = CubicHermiteSpline(self.x, w2, dw2)
        self._I = CubicHermiteSpline(self.x, self.I, self.v)

    @property
    def I1(self) -> float:
        return float(self.I[0])

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.x1 - 1e-12) or np.any(x > 1e-12):
            raise DomainError(f"x outside the separatrix range [{self.x1:.6g}, 0]")
        return np.clip(x, self.x1, 0.0)

    def v_s(self, x):
        x = self._check(x)
        return np.where((x == 0.0) | (x == self.x1), 0.0, np.sqrt(np.maximum(self._v2(x), 0.0)))

    def action(self, x):
        return self._I(self._check(x))

    def dv_s(self, x):
        """Slope v_s'(x) = -gamma - U'(x)/v_s; lambda_- at the saddle."""
        x = self._check(x)
        v = self.v_s(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -self.gamma - self.potential.du(x) / v
        return np.where(x >= -SADDLE_OFFSET, self.lambda_minus, out)

    def rows(self):
        return [(float(a), float(b), float(c), float(d))
                for a, b, c, d in zip(self.x, self.v, self.I, self.E)]


def compute_separatrix(model: SdeModel | KramersPotential, x_limit: float | None = None,
                       offset: float = SADDLE_OFFSET, nodes_per_step: int = 8) -> SeparatrixTable:
    """Follow the separatrix from the saddle leftwards to its turning point.

    The curve is traced with the time-reversed flow dx/ds = -v, dv/ds = gamma v + U'
    (I accumulated as dI/ds = -v^2), started on the line v = lambda_- x just left of
    the saddle and stopped where v returns to zero.  ``x_limit`` bounds the search
    (default -1e4).  The turning point may lie far outside the domain box of the
    model: it moves out like gamma^2 for strong friction.
    """
    pot = model if isinstance(model, KramersPotential) else kramers_potential(model)
    g = pot.gamma
    _, lm = pot.lambdas
    if x_limit is None:
        x_limit = -1e4
    if g == 0.0:
        return _separatrix_conservative(pot, x_limit)

    def rhs(s, z):
        x, v, _ = z
        return [-v, g * v + pot.du(x), -v * v]

    def turn(s, z):
        return z[1]
    turn.terminal, turn.direction = True, -1

    def limit(s, z):
        return z[0] - x_limit
    limit.terminal = True

    x0 = -offset
    z0 = [x0, lm * x0, 0.5 * lm * x0 * x0]
    sol = integrate.solve_ivp(rhs, (0.0, 1e6), z0, method="DOP853", rtol=1e-12, atol=1e-15,
                              events=(turn, limit), dense_output=True)
    if sol.status != 1 or sol.t_events[0].size == 0:
        raise DomainError(f"separatrix does not return to v = 0 for x >= {x_limit:.4g}")
    s_end = float(sol.t_events[0][0])
    ts = sol.t[sol.t < s_end]
    grid = [np.linspace(ts[k], ts[k + 1], nodes_per_step, endpoint=False) for k in range(ts.size - 1)]
    grid.append(np.linspace(ts[-1], s_end, nodes_per_step + 1))
    s_nodes = np.concatenate(grid)
    Z = sol.sol(s_nodes)
    x, v, I = Z[0][::-1], Z[1][::-1], Z[2][::-1]
    v[0] = 0.0
    # the stretch between the seed and the saddle is linear to O(offset^2)
    x = np.append(x, 0.0)
    v = np.append(v, 0.0)
    I = np.append(I, 0.0)
    x, v, I = _strictly_increasing(x, v, I)
    E = pot.u(x) + 0.5 * v * v
    return SeparatrixTable(x, v, I, E, float(x[0]), lm, g, pot.omega, pot)


def _separatrix_conservative(pot: KramersPotential, x_limit: float) -> SeparatrixTable:
    """gamma = 0: the separatrix is the zero-energy curve v_s = sqrt(-2U)."""
    _, lm = pot.lambdas
    # turning point: first zero of U left of the well
    step = abs(pot.x_A)
    lo, hi = pot.x_A, pot.x_A - step
    while pot.u(hi) < 0.0:
        lo, hi = hi, hi - step
        if hi < x_limit:
            raise DomainError(f"separatrix does not return to v = 0 for x >= {x_limit:.4g}")
    x1 = optimize.brentq(lambda s: float(pot.u(s)), hi, lo, xtol=1e-15, rtol=1e-15)
    th = np.linspace(0.0, np.pi, 2001)
    x = np.sort(x1 * 0.5 * (1.0 + np.cos(th)))
    x[0], x[-1] = x1, 0.0
    v = np.sqrt(np.maximum(-2.0 * pot.u(x), 0.0))
    I = np.zeros_like(x)
    vs = lambda s: math.sqrt(max(-2.0 * float(pot.u(s)), 0.0))
    for k in range(x.size - 2, -1, -1):
        I[k] = I[k + 1] - integrate.quad(vs, x[k], x[k + 1], epsabs=1e-15, epsrel=1e-13)[0]
    E = pot.u(x) + 0.5 * v * v
    return SeparatrixTable(x, v, I, E, float(x1), lm, 0.0, pot.omega, pot)


def _strictly_increasing(x, *cols):
    keep = np.concatenate([[True], np.diff(x) > 0.0])
    return (x[keep],) + tuple(c[keep] for c in cols)


# -- exit function ------------------------------------------------------------------

def g_function(x, epsilon: float, omega: float):
    """Inner boundary value g(x) = erf(omega |x| / sqrt(2 eps)); 0 at the saddle, 1 deep inside."""
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    return special.erf(omega * np.abs(np.asarray(x, dtype=float)) / math.sqrt(2.0 * epsilon))


def g_prime(x, epsilon: float, omega: float):
    """dg/dx for x <= 0 (negative); integrates to -1 over (-inf, 0]."""
    x = np.asarray(x, dtype=float)
    return -omega * math.sqrt(2.0 / (math.pi * epsilon)) * np.exp(-omega * omega * x * x / (2.0 * epsilon))


def q_approximation(sep: SeparatrixTable, x, v, epsilon: float):
    """Exit probability q = g(x) (1 - exp(2 v_s eta / eps)) with eta = v - v_s(x) <= 0."""
    x = np.asarray(x, dtype=float)
    vs = sep.v_s(x)
    eta = np.asarray(v, dtype=float) - vs
    if np.any(eta > 1e-12):
        raise DomainError("point lies above the separatrix (outside the domain)")
    eta = np.minimum(eta, 0.0)
    return g_function(x, epsilon, sep.omega) * -np.expm1(2.0 * vs * eta / epsilon)


@dataclass
class KramersExitResult:
    R: float
    Z: float
    g_x1: float
    rate: float
    regime: str
    R_exact: float
    kramers_rate: float           # classical transition rate (omega_A/2pi)(omega/|lambda_-|)exp(U_A/eps)
    low_friction_rate: float      # 2 N0 gamma |I_1| / eps * exp(U_A/eps)
    density_x: np.ndarray
    density_weight: np.ndarray
    prefactor_formula: float
    prefactor_quadrature: float
    epsilon: float
    gamma: float
    omega: float
    lambda_minus: float
    x1: float
    I1: float
    U_A: float
    omega_A: float

    @property
    def density_normalized(self) -> np.ndarray:
        return self.density_weight * self.prefactor_quadrature

    def as_record(self) -> dict:
        return {
            "R": self.R, "R_exact": self.R_exact, "Z": self.Z, "g_x1": self.g_x1,
            "rate": self.rate, "regime": self.regime, "kramers_rate": self.kramers_rate,
            "low_friction_rate": self.low_friction_rate,
            "normalizing_prefactor": self.prefactor_formula,
            "normalizing_prefactor_quadrature": self.prefactor_quadrature,
            "epsilon": self.epsilon, "gamma": self.gamma, "omega": self.omega,
            "lambda_minus": self.lambda_minus, "x1": self.x1, "I1": self.I1,
            "U_A": self.U_A, "omega_A": self.omega_A,
        }


def _x_cut(sep: SeparatrixTable, epsilon: float) -> float:
    """Left end of the stretch where g' is not negligible (exp(-ω²x²/2ε) > 1e-300)."""
    return max(sep.x1, -math.sqrt(2.0 * 700.0 * epsilon) / sep.omega)


def rate_factor(sep: SeparatrixTable, epsilon: float) -> float:
    """R = int_{x_1}^0 |g'(x)| exp(gamma I(x) / eps) dx by adaptive quadrature."""
    lo = _x_cut(sep, epsilon)
    w = sep.omega
    c = w * math.sqrt(2.0 / (math.pi * epsilon))

    def f(s):
        return c * math.exp(-w * w * s * s / (2.0 * epsilon) + sep.gamma * float(sep.action(s)) / epsilon)

    width = math.sqrt(epsilon) / w
    pts = [p for p in (-width, -3 * width, -10 * width) if p > lo]
    val, _ = integrate.quad(f, lo, 0.0, points=pts or None, epsabs=1e-14, epsrel=1e-12, limit=500)
    return float(val)


def exit_point_density(sep: SeparatrixTable, epsilon: float, n: int = 2001):
    """Unnormalised exit density w(x) = v_s g exp(gamma I / eps) on [x_1, 0].

    Returns (x, w, prefactor_formula, prefactor_quadrature); the nodes are dense
    over the O(sqrt eps) stretch next to the saddle and coarse beyond it.
    """
    lo = max(sep.x1, -12.0 * math.sqrt(2.0 * epsilon) / sep.omega)
    xs = np.unique(np.concatenate([np.linspace(sep.x1, 0.0, n), np.linspace(lo, 0.0, n)]))
    w = _density(sep, xs, epsilon)
    norm = _density_mass(sep, epsilon)
    Z = math.exp(sep.gamma * sep.I1 / epsilon) if sep.gamma > 0 else 1.0
    if sep.gamma > 0.0:
        bracket = sep.omega / abs(sep.lambda_minus) - Z
        pf = sep.gamma / epsilon / bracket if bracket > 0 else math.inf
    else:
        pf = math.inf
    return xs, w, pf, (1.0 / norm if norm > 0 else math.inf)


def _density(sep: SeparatrixTable, x, epsilon: float):
    return sep.v_s(x) * g_function(x, epsilon, sep.omega) * np.exp(sep.gamma * sep.action(x) / epsilon)


def _density_mass(sep: SeparatrixTable, epsilon: float) -> float:
    f = lambda s: float(_density(sep, s, epsilon))
    width = math.sqrt(epsilon) / sep.omega
    pts = [p for p in (-width, -3 * width, -10 * width) if p > sep.x1]
    val, _ = integrate.quad(f, sep.x1, 0.0, points=pts or None, epsabs=1e-15, epsrel=1e-11, limit=1000)
    return float(val)


def exit_rate(sep: SeparatrixTable, epsilon: float, n_density: int = 2001) -> KramersExitResult:
    """Exit rate r_e = 2 N0 (R - g(x_1) Z) exp(U_A / eps) with N0 = omega_A / (2 pi)."""
    if epsilon <= 0.0:
        raise ValidationError("epsilon must be positive")
    pot = sep.potential
    g = sep.gamma
    R = rate_factor(sep, epsilon)
    Z = math.exp(g * sep.I1 / epsilon) if g > 0.0 else 1.0
    gx1 = float(g_function(sep.x1, epsilon, sep.omega))
    if gx1 > 1.0 - G_SNAP:
        gx1 = 1.0
    N0 = pot.omega_A / (2.0 * math.pi)
    arr = math.exp(pot.U_A / epsilon)
    R_exact = sep.omega / abs(sep.lambda_minus)
    low = 2.0 * N0 * g * abs(sep.I1) / epsilon * arr
    if g == 0.0:
        rate, regime = 0.0, "no-friction"
    else:
        diff = R - gx1 * Z
        if diff > 0.0:
            rate, regime = 2.0 * N0 * diff * arr, "kramers"
        else:
            rate, regime = low, "low-friction"
    xs, w, pf, pq = exit_point_density(sep, epsilon, n_density)
    return KramersExitResult(
        R=R, Z=Z, g_x1=gx1, rate=rate, regime=regime, R_exact=R_exact,
        kramers_rate=N0 * R_exact * arr, low_friction_rate=low,
        density_x=xs, density_weight=w, prefactor_formula=pf, prefactor_quadrature=pq,
        epsilon=epsilon, gamma=g, omega=sep.omega, lambda_minus=sep.lambda_minus,
        x1=sep.x1, I1=sep.I1, U_A=pot.U_A, omega_A=pot.omega_A,
    )


# -- residual of the approximate exit function ----------------------------------------

def residual_theta(sep: SeparatrixTable, x, eta, epsilon: float):
    """Source term theta = -L+ q* left by the approximate exit function."""
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(eta > 0.0):
        raise DomainError("eta must be <= 0")
    vs = sep.v_s(x)
    dvs = sep.dv_s(x)
    g = g_function(x, epsilon, sep.omega)
    gp = g_prime(x, epsilon, sep.omega)
    e = np.exp(2.0 * vs * eta / epsilon)
    with np.errstate(invalid="ignore"):
        first = -2.0 * g / epsilon * e * (sep.gamma * vs * eta + dvs * eta * eta)
    # the slope of v_s is infinite at x_1, where eta = 0 must still give zero
    first = np.where((g == 0.0) | (eta == 0.0), 0.0, first)
    second = (vs + eta) * gp * -np.expm1(2.0 * vs * eta / epsilon)
    return first + second


@dataclass
class ResidualIntegral:
    value: float
    height: float
    error: float
    tail: float      # max |theta| on the lower edge of the strip


def _graded_panels(a: float, b: float, h0: float, n_uniform: int) -> np.ndarray:
    """Panel edges on [a, b] (a < b), geometric from b towards a starting at width h0."""
    edges = [b]
    h = h0
    while edges[-1] - h > a:
        edges.append(edges[-1] - h)
        h *= 1.5
    edges.append(a)
    coarse = np.array(edges[::-1])
    fine = [np.linspace(coarse[k], coarse[k + 1], n_uniform + 1)[:-1] for k in range(coarse.size - 1)]
    return np.append(np.concatenate(fine), b)


def _panel_nodes(edges: np.ndarray, order: int):
    t, w = np.polynomial.legendre.leggauss(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    wt = 0.5 * (hi - lo) * w
    return x.ravel(), wt.ravel()


def residual_integral(sep: SeparatrixTable, epsilon: float, height: float = 1.0,
                      rtol: float = 1e-5, max_level: int = 7) -> ResidualIntegral:
    """Integral of |theta| over the strip x_1 <= x <= 0, -height <= eta <= 0.

    Tensor Gauss-Legendre on panels graded towards the saddle (x) and towards
    the separatrix (eta), where theta varies on the scales sqrt(eps) and eps;
    the panels are halved until two successive totals agree to ``rtol``.
    """
    mid = 0.5 * sep.x1

    def total(level: int) -> float:
        n = 2 ** level
        # right half graded towards the saddle; on the left half x = x_1 + u^2
        # absorbs the (x - x_1)^(-1/2) growth of v_s' at the turning point
        xr, wr = _panel_nodes(_graded_panels(mid, 0.0, 0.05 * math.sqrt(epsilon) / sep.omega, n), 16)
        ul, wl = _panel_nodes(np.linspace(0.0, math.sqrt(mid - sep.x1), 4 * n + 1), 16)
        xs = np.concatenate([sep.x1 + ul * ul, xr])
        wx = np.concatenate([2.0 * ul * wl, wr])
        es, we = _panel_nodes(_graded_panels(-height, 0.0, 0.05 * epsilon, n), 16)
        acc = 0.0
        for k in range(0, xs.size, 256):
            X = xs[k:k + 256, None]
            th = np.abs(residual_theta(sep, np.broadcast_to(X, (X.shape[0], es.size)),
                                       np.broadcast_to(es, (X.shape[0], es.size)), epsilon))
            acc += float(wx[k:k + 256] @ (th @ we))
        return acc

    prev = total(0)
    err = math.inf
    for level in range(1, max_level + 1):
        cur = total(level)
        err = abs(cur - prev)
        prev = cur
        if err <= rtol * abs(cur):
            break
    else:
        raise ConvergenceError(f"residual quadrature did not settle (last change {err:.3g})")
    xs = np.linspace(sep.x1, 0.0, 2001)[1:]
    tail = float(np.max(np.abs(residual_theta(sep, xs, np.full_like(xs, -height), epsilon))))
    return ResidualIntegral(prev, height, err, tail)
