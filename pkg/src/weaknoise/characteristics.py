"""Quasipotential from the generating function chi along planar characteristics.

With a_c = chi N grad(phi) the eikonal equation becomes one quasilinear equation
for chi.  Its characteristics are the trajectories of the associated drift
a_assoc = a_d - a_c, along which chi and phi are carried as ODEs.  For rank-1
diffusion (det D = 0) the state carries psi = 1/chi instead.

State vector: (x, y, c, phi) with c = chi (regular) or psi (singular-y).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import integrate as ig
from .equilibrium import ATTRACTOR, SADDLE, EquilibriumAnalysis
from .errors import ChiUndeterminedError, ConvergenceError, DomainError, ValidationError
from .model import SdeModel

UPWARD = "upward-from-attractor"
DOWNWARD = "downward-from-saddle"


@dataclass
class CharacteristicTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    c: np.ndarray        # chi, or psi for singular diffusion
    phi: np.ndarray
    seed: dict
    direction: str
    termination: str
    mode: str = "chi"
    origin: tuple[float, float, float, float] | None = None   # (x, y, c, phi) of the seeding equilibrium

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.t, self.x, self.y, self.c, self.phi])

    @property
    def chi(self) -> np.ndarray:
        if self.mode == "chi":
            return self.c
        with np.errstate(divide="ignore"):
            return 1.0 / self.c

    def __len__(self):
        return self.t.size


# -- pointwise formulas ---------------------------------------------------------

def _grad_phi(model: SdeModel, x, y, c):
    a, b = model.drift(x, y)
    A, B, C = model.diffusion(x, y)
    if model.singular:
        px = c * ((-a * C + b * B) * c - b)
        py = c * ((a * B - b * A) * c + a)
        return px, py
    den = c * c + A * C - B * B
    px = (-a * C + b * (B - c)) / den
    py = (a * (B + c) - b * A) / den
    return px, py


def grad_phi_from_chi(model: SdeModel, point, chi: float) -> np.ndarray:
    """grad(phi) at ``point`` from the local chi (psi when the model is singular)."""
    x, y = (float(v) for v in point)
    if not model.singular:
        A, B, C = model.diffusion(x, y)
        if chi * chi + A * C - B * B == 0.0:
            raise ValidationError(f"chi^2 + delta = 0 at {(x, y)}")
    elif not math.isfinite(chi):
        raise ValidationError("psi must be finite")
    return np.array(_grad_phi(model, x, y, float(chi)), dtype=float)


def _rhs(model: SdeModel, Y: np.ndarray) -> np.ndarray:
    """Derivatives along the associated drift, row-wise on an (n, 4) state."""
    x, y, c = Y[:, 0], Y[:, 1], Y[:, 2]
    d = model.d
    a, b = model.drift(x, y)
    A, B, C = model.diffusion(x, y)
    rho = d["rho"](x, y)
    kap = d["kappa"](x, y)
    q = a * a * C - 2.0 * a * b * B + b * b * A
    out = np.empty_like(Y)
    if model.singular:
        out[:, 0] = -a - 2.0 * (a * B - b * A) * c
        out[:, 1] = -b - 2.0 * (a * C - b * B) * c
        out[:, 2] = -c * (rho + c * kap)
        out[:, 3] = -q * c * c
        return out
    den = c * c + A * C - B * B
    px = (-a * C + b * (B - c)) / den
    py = (a * (B + c) - b * A) / den
    out[:, 0] = a - 2.0 * c * py
    out[:, 1] = b + 2.0 * c * px
    out[:, 2] = rho * c + kap + d["delta_x"](x, y) * py - d["delta_y"](x, y) * px
    out[:, 3] = -q / den
    return out


def characteristic_rhs(model: SdeModel, state) -> np.ndarray:
    """(x', y', c', phi') for a state (x, y, c) with c = chi, or psi in singular mode."""
    x, y, c = (float(v) for v in state[:3])
    if not all(map(math.isfinite, (x, y, c))):
        raise ValidationError(f"state {(x, y, c)} is not finite")
    if not model.singular:
        A, B, C = model.diffusion(x, y)
        if c * c + A * C - B * B == 0.0:
            raise ValidationError(f"chi^2 + delta = 0 at {(x, y)}")
    r = _rhs(model, np.array([[x, y, c, 0.0]]))[0]
    return r


# -- integration -------------------------------------------------------------------

def default_controls(model: SdeModel) -> ig.Controls:
    x0, x1, y0, y1 = model.domain_box
    return ig.Controls(max_ds=0.02 * max(x1 - x0, y1 - y0))


def _seed_state(analysis: EquilibriumAnalysis, z: np.ndarray) -> np.ndarray:
    if analysis.singular:
        c0 = analysis.psi + analysis.grad_psi @ z
    else:
        c0 = analysis.chi + analysis.grad_chi @ z
    x0 = analysis.location + z
    return np.array([x0[0], x0[1], c0, 0.5 * z @ analysis.S @ z])


def _status(model: SdeModel, targets):
    x0, x1, y0, y1 = model.domain_box

    def fn(t, Y):
        st = np.zeros(Y.shape[0], dtype=np.int64)
        inside = (Y[:, 0] >= x0) & (Y[:, 0] <= x1) & (Y[:, 1] >= y0) & (Y[:, 1] <= y1)
        st[~inside] = ig.LEFT_DOMAIN
        for p, r in targets:
            near = np.hypot(Y[:, 0] - p[0], Y[:, 1] - p[1]) <= r
            st[near & inside] = ig.REACHED_TARGET
        st[~np.all(np.isfinite(Y), axis=1)] = ig.STIFFNESS_ABORT
        return st
    return fn


def _run(model, analysis, Z, direction, controls, targets, seeds_meta, phi_ref=0.0):
    Y0 = np.array([_seed_state(analysis, z) for z in Z])
    Y0[:, 3] += phi_ref
    sign = -1.0 if direction == UPWARD else 1.0
    res = ig.integrate_batch(lambda t, Y: _rhs(model, Y), Y0, controls, sign=sign,
                             status_fn=_status(model, targets))
    mode = "psi" if model.singular else "chi"
    c_eq = analysis.psi if analysis.singular else analysis.chi
    origin = (float(analysis.location[0]), float(analysis.location[1]), float(c_eq), float(phi_ref))
    out = []
    for i in range(len(Z)):
        Yi = res.y[i]
        out.append(CharacteristicTrajectory(
            t=res.t[i], x=Yi[:, 0], y=Yi[:, 1], c=Yi[:, 2], phi=Yi[:, 3],
            seed=seeds_meta[i], direction=direction, termination=res.termination(i),
            mode=mode, origin=origin))
    return out


def integrate_characteristic(model: SdeModel, analysis: EquilibriumAnalysis, eigendirection,
                             offset: float = 1e-3, controls: ig.Controls | None = None,
                             targets=(), phi_ref: float = 0.0) -> CharacteristicTrajectory:
    """One characteristic seeded next to an equilibrium.

    Attractor: integrates upward (reversed time) from ``location + offset * dir``
    where ``eigendirection`` is a direction vector or an angle.  Saddle:
    ``eigendirection`` is ``+1`` or ``-1`` and the trajectory runs down the
    associated flow along that side of the unstable associated eigenvector.
    ``targets`` are ``(point, radius)`` neighbourhoods that end the run.
    """
    controls = controls or default_controls(model)
    if not offset > 0.0:
        raise ValidationError("offset must be positive")
    if analysis.kind == ATTRACTOR:
        if np.ndim(eigendirection) == 0:
            th = float(eigendirection)
            u = np.array([math.cos(th), math.sin(th)])
        else:
            u = np.asarray(eigendirection, dtype=float)
            u = u / np.linalg.norm(u)
        meta = {"equilibrium": analysis.location.tolist(), "eigendirection": u.tolist(),
                "offset": offset}
        return _run(model, analysis, [offset * u], UPWARD, controls, targets, [meta], phi_ref)[0]
    if analysis.kind == SADDLE:
        if eigendirection not in (1, -1, "+", "-"):
            raise ValidationError("saddle seeds take eigendirection +1 or -1 (side of e~+)")
        s = 1.0 if eigendirection in (1, "+") else -1.0
        u = s * analysis.eig_vecs["ea_plus"]
        meta = {"equilibrium": analysis.location.tolist(), "eigendirection": u.tolist(),
                "offset": offset}
        return _run(model, analysis, [offset * u], DOWNWARD, controls, targets, [meta], phi_ref)[0]
    raise ValidationError(f"cannot seed characteristics at a {analysis.kind}")


def ellipse_seeds(S: np.ndarray, n: int, phi0: float = 1e-6) -> np.ndarray:
    """n points equally spaced in angle on z^T S z = 2 phi0."""
    th = 2.0 * np.pi * np.arange(n) / n
    u = np.column_stack([np.cos(th), np.sin(th)])
    q = np.einsum("ij,jk,ik->i", u, S, u)
    if np.any(q <= 0):
        raise ValidationError("S is not positive definite; upward fans need an attractor")
    return u * np.sqrt(2.0 * phi0 / q)[:, None]


def upward_fan(model: SdeModel, analysis: EquilibriumAnalysis, n: int = 64, phi0: float = 1e-6,
               controls: ig.Controls | None = None, targets=()) -> list[CharacteristicTrajectory]:
    if analysis.kind != ATTRACTOR:
        raise ValidationError("upward fans start at attractors")
    controls = controls or default_controls(model)
    Z = ellipse_seeds(analysis.S, n, phi0)
    meta = [{"equilibrium": analysis.location.tolist(), "angle": 2.0 * math.pi * k / n,
             "offset": float(np.linalg.norm(Z[k])), "trajectory_id": k} for k in range(n)]
    return _run(model, analysis, Z, UPWARD, controls, targets, meta)


# -- barriers ------------------------------------------------------------------------

@dataclass
class BarrierResult:
    delta_phi: float
    trajectory: CharacteristicTrajectory
    miss_distance: float
    detail: dict = field(default_factory=dict)


def downward_barrier(model: SdeModel, saddle: EquilibriumAnalysis, attractor: EquilibriumAnalysis,
                     offset: float = 1e-4, radius: float = 1e-3,
                     controls: ig.Controls | None = None) -> BarrierResult:
    """phi(saddle) - phi(attractor) from the associated flow leaving the saddle.

    Both sides of e~+ are tried; the one that enters the attractor's
    neighbourhood is used.
    """
    target = [(attractor.location, radius)]
    best = None
    for side in (1, -1):
        tr = integrate_characteristic(model, saddle, side, offset, controls, targets=target)
        if tr.termination == "reached-target":
            z = np.array([tr.x[-1], tr.y[-1]]) - attractor.location
            phi_a = tr.phi[-1] - 0.5 * z @ attractor.S @ z
            best = BarrierResult(-phi_a, tr, float(np.linalg.norm(z)), {"side": side})
            break
    if best is None:
        raise ConvergenceError("no associated trajectory from the saddle reached the attractor")
    return best


def _eig_coords(saddle: EquilibriumAnalysis, p: np.ndarray) -> np.ndarray:
    E = np.column_stack([saddle.eig_vecs["ea_plus"], saddle.eig_vecs["ea_minus"]])
    return np.linalg.solve(E, p - saddle.location)


def upward_barrier(model: SdeModel, attractor: EquilibriumAnalysis, saddle: EquilibriumAnalysis,
                   phi0: float = 1e-6, n_scan: int = 64, tol: float = 1e-13,
                   controls: ig.Controls | None = None) -> BarrierResult:
    """phi(saddle) from the upward characteristic that runs into the saddle.

    Upward characteristics reach the saddle along e~+ and are expelled along
    +-e~-.  The seed angle is bracketed on a coarse scan by the side of
    expulsion and refined by bisection; phi at the saddle is the value at the
    closest approach minus the local quadratic part.
    """
    controls = controls or default_controls(model)

    def closest(tr):
        P = np.column_stack([tr.x, tr.y])
        dist = np.hypot(P[:, 0] - saddle.location[0], P[:, 1] - saddle.location[1])
        k = int(np.argmin(dist))
        side = math.copysign(1.0, _eig_coords(saddle, P[k])[1])
        return side, dist[k], k, tr

    def shoot_many(thetas):
        Z = [ellipse_seeds_angle(attractor.S, t, phi0) for t in thetas]
        trs = _run(model, attractor, Z, UPWARD, controls, (), [{"angle": t} for t in thetas])
        return [closest(tr) for tr in trs]

    ths = 2.0 * np.pi * np.arange(n_scan) / n_scan
    shots = shoot_many(ths)
    order = np.argsort([s[1] for s in shots])
    bracket = None
    for k in order:
        for j in ((k - 1) % n_scan, (k + 1) % n_scan):
            if shots[k][0] != shots[j][0]:
                lo, hi = (ths[k], ths[j]) if j == (k + 1) % n_scan else (ths[j], ths[k])
                if hi < lo:
                    hi += 2.0 * np.pi
                bracket = (lo, hi, shots[k][0] if lo == ths[k] else shots[j][0])
                break
        if bracket:
            break
    if bracket is None:
        raise ConvergenceError("upward fan does not bracket the saddle")
    lo, hi, s_lo = bracket
    best = min(shoot_many([lo, hi]), key=lambda s: s[1])
    while hi - lo > tol:
        # multisection: one batched run refines the bracket by a factor 9
        mids = lo + (hi - lo) * np.arange(1, 9) / 9.0
        shots_m = shoot_many(mids)
        for sh in shots_m:
            if sh[1] < best[1]:
                best = sh
        new_lo, new_hi = lo, hi
        for t, sh in zip(mids, shots_m):
            if sh[0] == s_lo:
                new_lo = t
            else:
                new_hi = t
                break
        if new_hi - new_lo >= hi - lo:
            break
        lo, hi = new_lo, new_hi
    _, dist, k, tr = best
    z = np.array([tr.x[k], tr.y[k]]) - saddle.location
    dphi = tr.phi[k] - 0.5 * z @ saddle.S @ z
    return BarrierResult(float(dphi), tr, float(dist), {"sample": k})


def ellipse_seeds_angle(S: np.ndarray, theta: float, phi0: float) -> np.ndarray:
    u = np.array([math.cos(theta), math.sin(theta)])
    return u * math.sqrt(2.0 * phi0 / float(u @ S @ u))


# -- path integrals and exact solutions -----------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def integrate_phi_along_path(model: SdeModel, chi_lookup, path, max_piece: float = 0.05) -> float:
    """Line integral of grad(phi) along a polyline with chi from ``chi_lookup``.

    ``chi_lookup`` maps an (n, 2) array of points to n values of chi (psi for
    singular models) and raises DomainError outside its support.
    """
    P = np.asarray(path, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2 or len(P) < 2:
        raise ValidationError("path must be a polyline with at least two vertices")
    total = 0.0
    for p, q in zip(P[:-1], P[1:]):
        L = float(np.hypot(*(q - p)))
        if L == 0.0:
            continue
        m = max(1, int(math.ceil(L / max_piece)))
        s0 = np.arange(m)[:, None] / m
        u = (s0 + (0.5 * (_GL_X + 1.0))[None, :] / m).ravel()
        w = np.tile(_GL_W / (2.0 * m), m)
        pts = p[None, :] + u[:, None] * (q - p)[None, :]
        c = np.asarray(chi_lookup(pts), dtype=float)
        px, py = _grad_phi(model, pts[:, 0], pts[:, 1], c)
        total += float(np.sum(w * (px * (q - p)[0] + py * (q - p)[1])))
    return total


@dataclass(frozen=True)
class ExactSolution:
    kind: str                 # none | constant_chi | constant_psi | indeterminate
    value: float | None = None
    spread: float | None = None


def detect_exact_solution(model: SdeModel, n: int = 41, rtol: float = 1e-8) -> ExactSolution:
    """Constant chi* = -kappa/rho over a lattice (psi* = -rho/kappa for singular models).

    With delta constant, a constant chi solves the characteristic equation
    identically, so the eikonal form holds for every noise strength.
    """
    x0, x1, y0, y1 = model.domain_box
    X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n))
    d = model.d
    delta = np.broadcast_to(d["delta"](X, Y), X.shape)
    if np.ptp(delta) > rtol * max(1.0, float(np.max(np.abs(delta)))):
        raise ValidationError("detect_exact_solution needs constant det D")
    rho = np.broadcast_to(d["rho"](X, Y), X.shape)
    kap = np.broadcast_to(d["kappa"](X, Y), X.shape)
    if model.singular:
        if np.any(kap == 0.0):
            return ExactSolution("indeterminate")
        vals = -rho / kap
        kind = "constant_psi"
    else:
        if np.any(rho == 0.0):
            return ExactSolution("indeterminate")
        vals = -kap / rho
        kind = "constant_chi"
    spread = float(np.ptp(vals))
    ref = float(np.median(vals))
    if spread <= rtol * max(1.0, abs(ref)):
        return ExactSolution(kind, ref, spread)
    return ExactSolution("none", None, spread)


def check_seed_near(model: SdeModel, analysis: EquilibriumAnalysis, point, radius: float = 0.1):
    p = np.asarray(point, dtype=float)
    if np.linalg.norm(p - analysis.location) > radius:
        raise DomainError(f"seed {p.tolist()} is not near the equilibrium {analysis.location.tolist()}")
