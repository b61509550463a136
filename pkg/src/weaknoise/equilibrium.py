"""Equilibria of the drift and the local expansion of the quasipotential there.

At an equilibrium the generating function chi (with a_c = chi N grad phi) is
fixed algebraically, and so are the Hessian S of phi, the linearised
associated drift M_assoc = K M, and the gradient of chi needed to start
characteristics next to the point.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChiUndeterminedError, ConvergenceError, NotSaddleError, ValidationError
from .model import SdeModel

log = logging.getLogger(__name__)

N_ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])
ATTRACTOR, SADDLE, REPELLOR = "attractor", "saddle", "repellor"


@dataclass
class EquilibriumAnalysis:
    location: np.ndarray
    kind: str
    M: np.ndarray
    chi: float
    psi: float | None
    S: np.ndarray
    M_assoc: np.ndarray
    K: np.ndarray
    grad_chi: np.ndarray
    grad_psi: np.ndarray | None
    eig_vals: tuple[complex, complex]
    eig_vecs: dict[str, np.ndarray] = field(default_factory=dict)
    rho: float = 0.0
    kappa: float = 0.0
    delta: float = 0.0
    singular: bool = False

    @property
    def lambda_plus(self) -> float:
        return float(np.real(self.eig_vals[0]))

    @property
    def lambda_minus(self) -> float:
        return float(np.real(self.eig_vals[1]))

    def as_record(self) -> dict:
        def c(v):
            v = complex(v)
            return [v.real, v.imag]
        return {
            "location": self.location.tolist(),
            "kind": self.kind,
            "M": self.M.tolist(),
            "chi": self.chi,
            "psi": self.psi,
            "S": self.S.tolist(),
            "M_assoc": self.M_assoc.tolist(),
            "K": self.K.tolist(),
            "grad_chi": self.grad_chi.tolist(),
            "grad_psi": None if self.grad_psi is None else self.grad_psi.tolist(),
            "eig_vals": [c(v) for v in self.eig_vals],
            "eig_vecs": {k: v.tolist() for k, v in self.eig_vecs.items()},
            "rho": self.rho,
            "kappa": self.kappa,
            "delta": self.delta,
        }


# -- root finding -------------------------------------------------------------

def newton_root(model: SdeModel, seed, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
    z = np.array(seed, dtype=float)
    model.check_point(z)

    def resid(p):
        return np.array(model.drift(p[0], p[1]), dtype=float)

    r = resid(z)
    for _ in range(max_iter):
        nr = float(np.linalg.norm(r))
        if nr <= tol:
            return z
        J = model.jacobian(*z)
        if abs(np.linalg.det(J)) < 1e-14 * max(1.0, np.abs(J).max() ** 2):
            raise ConvergenceError(f"singular Jacobian at non-root {z.tolist()} (|drift|={nr:.3g})")
        step = np.linalg.solve(J, -r)
        lam = 1.0
        while True:
            trial = z + lam * step
            rt = resid(trial)
            if np.linalg.norm(rt) < nr or lam < 1e-6:
                break
            lam *= 0.5
        z, r = trial, rt
    if np.linalg.norm(r) <= 1e-10:
        return z
    raise ConvergenceError(f"Newton did not converge from seed {list(seed)} in {max_iter} iterations")


def find_equilibria(model: SdeModel, seeds, failures: list | None = None,
                    min_separation: float = 1e-6) -> list[np.ndarray]:
    """Newton from every seed; converged roots deduplicated.

    Seeds that fail are logged and, if ``failures`` is given, appended to it as
    ``(seed, message)`` pairs.
    """
    roots: list[np.ndarray] = []
    for s in seeds:
        try:
            z = newton_root(model, s)
        except ConvergenceError as exc:
            log.info("seed %s: %s", list(s), exc)
            if failures is not None:
                failures.append((tuple(float(v) for v in s), str(exc)))
            continue
        if not model.in_box(*z):
            continue
        if all(np.linalg.norm(z - r) > min_separation for r in roots):
            roots.append(z)
    roots.sort(key=lambda p: (round(p[0], 9), round(p[1], 9)))
    return roots


def lattice_seeds(model: SdeModel, n: int = 7) -> list[tuple[float, float]]:
    x0, x1, y0, y1 = model.domain_box
    xs = np.linspace(x0, x1, n + 2)[1:-1]
    ys = np.linspace(y0, y1, n + 2)[1:-1]
    return [(float(x), float(y)) for x in xs for y in ys]


# -- linear algebra helpers ------------------------------------------------------

def eigen_pair(Mx: np.ndarray) -> tuple[complex, complex]:
    """Eigenvalues from lambda^2 - tr lambda + det = 0, larger real part first."""
    tr = float(np.trace(Mx))
    det = float(np.linalg.det(Mx))
    disc = tr * tr - 4.0 * det
    if disc >= 0.0:
        sq = math.sqrt(disc)
        # avoid cancellation
        q = -0.5 * (-tr + math.copysign(sq, -tr)) if tr != 0.0 else 0.5 * sq
        if q != 0.0:
            l1, l2 = q, det / q
        else:
            l1 = l2 = 0.0
        hi, lo = max(l1, l2), min(l1, l2)
        return complex(hi), complex(lo)
    sq = math.sqrt(-disc)
    return complex(tr / 2, sq / 2), complex(tr / 2, -sq / 2)


def eigvec(Mx: np.ndarray, lam: float) -> np.ndarray:
    """Unit null vector of Mx - lam I, oriented with a non-negative leading component."""
    r1 = np.array([Mx[0, 0] - lam, Mx[0, 1]])
    r2 = np.array([Mx[1, 0], Mx[1, 1] - lam])
    r = r1 if np.linalg.norm(r1) >= np.linalg.norm(r2) else r2
    if np.linalg.norm(r) == 0.0:
        v = np.array([1.0, 0.0])
    else:
        v = np.array([-r[1], r[0]])
    v = v / np.linalg.norm(v)
    lead = v[0] if abs(v[0]) > 1e-14 else v[1]
    return -v if lead < 0 else v


def assoc_K(chi: float, delta: float, D: np.ndarray) -> np.ndarray:
    return ((delta - chi * chi) * np.eye(2) + 2.0 * chi * D @ N_ROT) / (delta + chi * chi)


def singular_K(psi: float, D: np.ndarray) -> np.ndarray:
    """K for det D = 0 written with psi = 1/chi; finite as psi -> 0."""
    return -np.eye(2) + 2.0 * psi * D @ N_ROT


def classify(vals: tuple[complex, complex], tol: float = 1e-8) -> str:
    l1, l2 = vals
    if abs(l1.imag) > 0.0:
        if l1.real < -tol:
            return ATTRACTOR
        if l1.real > tol:
            return REPELLOR
        raise ValidationError("non-hyperbolic equilibrium (centre); not supported")
    a, b = l1.real, l2.real
    if a < -tol and b < -tol:
        return ATTRACTOR
    if a > tol and b > tol:
        return REPELLOR
    if a > tol and b < -tol:
        return SADDLE
    raise ValidationError(f"non-hyperbolic equilibrium, eigenvalues {a:.3g}, {b:.3g}")


# -- analysis ---------------------------------------------------------------------

def analyze_equilibrium(model: SdeModel, location,
                        chi_if_undetermined: float | None = None) -> EquilibriumAnalysis:
    """Local expansion at an equilibrium.

    At a point with rho = 0 the characteristic equation leaves chi free.  Such
    points are rejected unless ``chi_if_undetermined`` supplies the value (known
    e.g. from a symmetry of the model); kappa must vanish there as well.
    """
    x, y = model.check_point(location)
    d = model.d
    a, b = model.drift(x, y)
    if math.hypot(a, b) > 1e-10:
        raise ValidationError(f"{(x, y)} is not an equilibrium (|drift| = {math.hypot(a, b):.3g})")
    M = model.jacobian(x, y)
    D = model.diffusion_matrix(x, y)
    rho = float(d["rho"](x, y))
    kappa = float(d["kappa"](x, y))
    delta = float(d["delta"](x, y))
    scale = max(1.0, float(np.abs(M).max()))
    if abs(rho) <= 1e-12 * scale:
        if chi_if_undetermined is None:
            raise ChiUndeterminedError(f"rho = 0 at {(x, y)}: chi is undetermined")
        if abs(kappa) > 1e-12:
            raise ChiUndeterminedError(f"rho = 0 but kappa = {kappa:.3g} at {(x, y)}: no eikonal form")
        chi = float(chi_if_undetermined)
    else:
        chi = -kappa / rho
    psi = None
    if model.singular:
        C = D[1, 1]
        a_y = M[0, 1]
        if chi == 0.0:
            raise ChiUndeterminedError(
                f"chi = 0 with singular diffusion at {(x, y)} (a_y = {a_y}); S does not exist")
        psi = rho / (C * a_y)
        K = singular_K(psi, D)
    else:
        K = assoc_K(chi, delta, D)
    G = -D + chi * N_ROT
    S = np.linalg.solve(G, M)
    M_assoc = K @ M

    # gradient of chi from the x/y derivatives of the characteristic equation
    lhs = M_assoc.T - rho * np.eye(2)
    dx, dy = float(d["delta_x"](x, y)), float(d["delta_y"](x, y))
    rhs = np.array([
        d["rho_x"](x, y) * chi + d["kappa_x"](x, y) + dx * S[0, 1] - dy * S[0, 0],
        d["rho_y"](x, y) * chi + d["kappa_y"](x, y) + dx * S[1, 1] - dy * S[0, 1],
    ])
    if abs(np.linalg.det(lhs)) < 1e-14:
        # resonant case: accept the minimum-norm solution when the system is consistent
        grad_chi = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        if np.linalg.norm(lhs @ grad_chi - rhs) > 1e-10 * max(1.0, float(np.linalg.norm(rhs))):
            raise ChiUndeterminedError(f"gradient of chi undetermined at {(x, y)}")
    else:
        grad_chi = np.linalg.solve(lhs, rhs)
    grad_psi = None if psi is None else -psi * psi * grad_chi

    vals = eigen_pair(M)
    kind = classify(vals)
    vecs: dict[str, np.ndarray] = {}
    if vals[0].imag == 0.0:
        lp, lm = vals[0].real, vals[1].real
        vecs = {
            "e_plus": eigvec(M, lp), "e_minus": eigvec(M, lm),
            "ea_plus": eigvec(M_assoc, lp), "ea_minus": eigvec(M_assoc, lm),
        }
    return EquilibriumAnalysis(
        location=np.array([x, y]), kind=kind, M=M, chi=float(chi), psi=psi, S=S,
        M_assoc=M_assoc, K=K, grad_chi=grad_chi, grad_psi=grad_psi, eig_vals=vals,
        eig_vecs=vecs, rho=rho, kappa=kappa, delta=delta, singular=model.singular,
    )


def associated_eigvec_out(analysis: EquilibriumAnalysis) -> np.ndarray:
    """Unstable eigenvector of the associated matrix at a saddle."""
    if analysis.kind != SADDLE:
        raise NotSaddleError(f"equilibrium at {analysis.location.tolist()} is a {analysis.kind}")
    return analysis.eig_vecs["ea_plus"]


def analyze_all(model: SdeModel, seeds=None,
                chi_if_undetermined: float | None = None) -> list[EquilibriumAnalysis]:
    seeds = lattice_seeds(model) if seeds is None else seeds
    return [analyze_equilibrium(model, z, chi_if_undetermined)
            for z in find_equilibria(model, seeds)]
