"""Independent checks: Hamiltonian shooting for phi and eikonal residuals on grids.

The Hamiltonian H = p.(a + D p) generates the same curves as the upward
characteristics (x' = a + 2 D p equals minus the associated drift), but it
carries the momentum p = grad(phi) instead of chi.  Agreement of the two at
matched times is the cross-oracle test for the chi formulation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import integrate as ig
from .characteristics import (_grad_phi, _rhs, _seed_state, _status, default_controls,
                              detect_exact_solution, ellipse_seeds)
from .equilibrium import ATTRACTOR, EquilibriumAnalysis
from .errors import ConvergenceError, ValidationError
from .grid import QuasipotentialGrid
from .model import SdeModel
from .montecarlo import AbsorbingBoundary, McExitStats, mc_simulate  # noqa: F401  (Monte Carlo oracle)


@dataclass
class HamiltonianTrajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    phi: np.ndarray
    H: np.ndarray
    seed: dict
    termination: str

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.t, self.x, self.y, self.p1, self.p2, self.phi])

    @property
    def H_drift(self) -> float:
        return float(np.max(np.abs(self.H - self.H[0])))


def hamiltonian(model: SdeModel, x, y, p1, p2):
    a, b = model.drift(x, y)
    A, B, C = model.diffusion(x, y)
    return p1 * (a + A * p1 + B * p2) + p2 * (b + B * p1 + C * p2)


def _ham_rhs(model: SdeModel, Z: np.ndarray) -> np.ndarray:
    x, y, p1, p2 = Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3]
    d = model.d
    a, b = model.drift(x, y)
    A, B, C = model.diffusion(x, y)
    out = np.empty_like(Z)
    out[:, 0] = a + 2.0 * (A * p1 + B * p2)
    out[:, 1] = b + 2.0 * (B * p1 + C * p2)
    for k, v in ((2, "x"), (3, "y")):
        da, db = d["a_" + v](x, y), d["b_" + v](x, y)
        dA, dB, dC = d["A_" + v](x, y), d["B_" + v](x, y), d["C_" + v](x, y)
        out[:, k] = -(p1 * da + p2 * db + dA * p1 * p1 + 2.0 * dB * p1 * p2 + dC * p2 * p2)
    out[:, 4] = p1 * out[:, 0] + p2 * out[:, 1]
    return out


def hamiltonian_controls(model: SdeModel) -> ig.Controls:
    """Tighter than the characteristic defaults: H is a difference of O(|p|^2) terms."""
    c = default_controls(model)
    return ig.Controls(**{**c.__dict__, "rtol": 1e-11, "atol": 1e-14})


def _shoot(model, Z0, t_max, t_eval, controls, h_tol, seeds_meta):
    controls = controls or hamiltonian_controls(model)
    controls = ig.Controls(**{**controls.__dict__, "t_max": t_max})
    x0, x1, y0, y1 = model.domain_box

    def status(t, Z):
        st = np.zeros(Z.shape[0], dtype=np.int64)
        inside = (Z[:, 0] >= x0) & (Z[:, 0] <= x1) & (Z[:, 1] >= y0) & (Z[:, 1] <= y1)
        st[~inside] = ig.LEFT_DOMAIN
        st[~np.all(np.isfinite(Z), axis=1)] = ig.STIFFNESS_ABORT
        return st

    res = ig.integrate_batch(lambda t, Z: _ham_rhs(model, Z), Z0, controls,
                             status_fn=status, t_eval=t_eval)
    out = []
    for i in range(len(Z0)):
        Z = res.y[i]
        H = hamiltonian(model, Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3])
        tr = HamiltonianTrajectory(res.t[i], Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3], Z[:, 4],
                                   np.asarray(H, dtype=float), seeds_meta[i], res.termination(i))
        if tr.H_drift > h_tol:
            raise ConvergenceError(f"Hamiltonian drift {tr.H_drift:.3g} exceeds {h_tol:g}")
        out.append(tr)
    return out


def hamiltonian_shoot(model: SdeModel, start, initial_p, t_max: float = 50.0, phi0: float = 0.0,
                      t_eval=None, controls: ig.Controls | None = None,
                      h_tol: float = 1e-6) -> HamiltonianTrajectory:
    """Integrate x' = a + 2Dp, p' = -grad_x H from (start, initial_p) with phi = int p.dx."""
    start = np.asarray(start, dtype=float)
    p = np.asarray(initial_p, dtype=float)
    model.check_point(start)
    Z0 = np.array([[start[0], start[1], p[0], p[1], phi0]])
    meta = {"point": start.tolist(), "initial_p": p.tolist()}
    return _shoot(model, Z0, t_max, t_eval, controls, h_tol, [meta])[0]


def hamiltonian_fan(model: SdeModel, analysis: EquilibriumAnalysis, n: int = 64, phi0: float = 1e-6,
                    t_max: float = 50.0, t_eval=None, controls: ig.Controls | None = None,
                    h_tol: float = 1e-6) -> list[HamiltonianTrajectory]:
    """Shots from the ellipse z^T S z = 2 phi0 around an attractor with p = S z."""
    if analysis.kind != ATTRACTOR:
        raise ValidationError("Hamiltonian fans start at attractors")
    Z = ellipse_seeds(analysis.S, n, phi0)
    Z0 = np.column_stack([analysis.location + Z, Z @ analysis.S.T, np.full(n, phi0)])
    meta = [{"point": (analysis.location + z).tolist(), "initial_p": (analysis.S @ z).tolist()} for z in Z]
    return _shoot(model, Z0, t_max, t_eval, controls, h_tol, meta)


@dataclass
class CrossOracleReport:
    n_matched: int
    max_rel_phi_gap: float
    max_position_gap: float
    max_velocity_gap: float
    max_H_drift: float
    max_abs_H: float

    def as_record(self) -> dict:
        return dict(self.__dict__)


def cross_oracle(model: SdeModel, analysis: EquilibriumAnalysis, n: int = 24, phi0: float = 1e-12,
                 t_eval=None, phi_min: float = 1e-3, rate_floor: float = 1e-8) -> CrossOracleReport:
    """Hamiltonian shooting against chi characteristics from the same seed points.

    Both are sampled at the common times ``t_eval`` (their time variables
    coincide).  The Hamiltonian seed p = S z is only first-order accurate, so
    phi0 is kept small.  A sample counts once phi >= ``phi_min``; matching
    stops where the growth rate p.Dp of phi collapses below ``rate_floor``,
    i.e. when a shot runs into a saddle and continues on the zero-action
    relaxation branch, which is not a quasipotential characteristic.
    """
    if t_eval is None:
        t_eval = np.linspace(0.0, 40.0, 401)
    if analysis.kind != ATTRACTOR:
        raise ValidationError("cross_oracle starts at an attractor")
    Zs = ellipse_seeds(analysis.S, n, phi0)
    phis = 0.5 * np.einsum("ij,jk,ik->i", Zs, analysis.S, Zs)
    Z0 = np.column_stack([analysis.location + Zs, Zs @ analysis.S.T, phis])
    ctrl = default_controls(model)
    ctrl = ig.Controls(**{**ctrl.__dict__, "t_max": float(t_eval[-1])})
    shots = _shoot(model, Z0, float(t_eval[-1]), t_eval, None, 1e-6, [{}] * n)
    Y0 = np.array([_seed_state(analysis, z) for z in Zs])
    res = ig.integrate_batch(lambda t, Y: _rhs(model, Y), Y0, ctrl, sign=-1.0,
                             status_fn=_status(model, ()), t_eval=t_eval)
    matched, rel, pos, vel = 0, 0.0, 0.0, 0.0
    for h, Yc in zip(shots, res.y):
        m = min(len(h.t), len(Yc))
        A, B, C = model.diffusion(h.x[:m], h.y[:m])
        rate = A * h.p1[:m] ** 2 + 2 * B * h.p1[:m] * h.p2[:m] + C * h.p2[:m] ** 2
        low = np.flatnonzero((rate < rate_floor) & (h.phi[:m] >= phi_min))
        if low.size:
            m = int(low[0])
        sel = np.flatnonzero(h.phi[:m] >= phi_min)
        if sel.size == 0:
            continue
        matched += sel.size
        Ys = Yc[sel]
        rel = max(rel, float(np.max(np.abs(Ys[:, 3] - h.phi[sel]) / h.phi[sel])))
        pos = max(pos, float(np.max(np.hypot(Ys[:, 0] - h.x[sel], Ys[:, 1] - h.y[sel]))))
        hv = _ham_rhs(model, np.column_stack([h.x[sel], h.y[sel], h.p1[sel], h.p2[sel], h.phi[sel]]))
        # minus the associated drift from chi, evaluated at the Hamiltonian state
        cv = -_rhs(model, np.column_stack([h.x[sel], h.y[sel], Ys[:, 2], Ys[:, 3]]))
        vel = max(vel, float(np.max(np.hypot(hv[:, 0] - cv[:, 0], hv[:, 1] - cv[:, 1]))))
    h_drift = max(h.H_drift for h in shots)
    h_abs = float(max(np.max(np.abs(h.H)) for h in shots))
    return CrossOracleReport(matched, rel, pos, vel, h_drift, h_abs)


def chi_from_momentum(model: SdeModel, x, y, p1, p2):
    """chi with a + D p = chi N p, read off by projecting on N p."""
    a, b = model.drift(x, y)
    A, B, C = model.diffusion(x, y)
    c1, c2 = a + A * p1 + B * p2, b + B * p1 + C * p2
    # N p = (p2, -p1)
    return (c1 * p2 - c2 * p1) / (p1 * p1 + p2 * p2)


def projection_gap(model: SdeModel, x, y, c) -> float:
    """max |x'_Hamilton(x, p) + a_assoc(x, chi)| with p = grad(phi) from chi.

    The associated drift is the negative spatial projection of the Hamiltonian
    vector field on the Lagrangian manifold p = grad(phi).
    """
    x, y, c = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, y, c))
    p1, p2 = _grad_phi(model, x, y, c)
    hv = _ham_rhs(model, np.column_stack([x, y, p1, p2, np.zeros_like(x)]))
    cv = -_rhs(model, np.column_stack([x, y, c, np.zeros_like(x)]))
    return float(np.max(np.hypot(hv[:, 0] - cv[:, 0], hv[:, 1] - cv[:, 1])))


# -- residuals on grids -------------------------------------------------------------------

def _central(f, h, axis):
    """Fourth-order central first differences; NaN within two nodes of the edge."""
    f = np.moveaxis(f, axis, 0)
    g = np.full(f.shape, np.nan)
    g[2:-2] = (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / (12.0 * h)
    return np.moveaxis(g, 0, axis)


@dataclass
class EikonalResidual:
    residual1: np.ndarray
    residual2: np.ndarray | None
    max_residual1: float
    max_residual2: float | None


def eikonal_residual(model: SdeModel, grid: QuasipotentialGrid, second: bool | None = None) -> EikonalResidual:
    """(a + D grad phi).grad phi and, for exact-solution models, rho - div(D grad phi).

    Derivatives are finite differences of the grid phi; cells whose stencil
    touches an unreached node are skipped (NaN).
    """
    x, y = grid.x_axis, grid.y_axis
    hx, hy = x[1] - x[0], y[1] - y[0]
    phi = np.where(grid.reached, grid.phi, np.nan)
    px = _central(phi, hx, 1)
    py = _central(phi, hy, 0)
    X, Y = np.meshgrid(x, y)
    a, b = model.drift(X, Y)
    A, B, C = (np.broadcast_to(v, X.shape) for v in model.diffusion(X, Y))
    r1 = (a + A * px + B * py) * px + (b + B * px + C * py) * py
    if second is None:
        try:
            second = detect_exact_solution(model).kind in ("constant_chi", "constant_psi")
        except ValidationError:
            second = False
    r2 = None
    if second:
        fx, fy = A * px + B * py, B * px + C * py
        div = _central(fx, hx, 1) + _central(fy, hy, 0)
        r2 = np.broadcast_to(model.d["rho"](X, Y), X.shape) - div
    m1 = float(np.nanmax(np.abs(r1))) if np.any(np.isfinite(r1)) else float("nan")
    m2 = None if r2 is None else (float(np.nanmax(np.abs(r2))) if np.any(np.isfinite(r2)) else float("nan"))
    return EikonalResidual(r1, r2, m1, m2)


def residual_from_chi(model: SdeModel, x, y, c) -> np.ndarray:
    """Eikonal residual with grad(phi) from chi; vanishes identically up to rounding."""
    px, py = _grad_phi(model, x, y, c)
    a, b = model.drift(x, y)
    A, B, C = model.diffusion(x, y)
    return (a + A * px + B * py) * px + (b + B * px + C * py) * py
