"""Rectilinear quasipotential grids assembled from characteristic samples.

Two layers are kept.  ``sample_phi`` is the plain per-cell minimum over all
samples whose nearest node is that cell.  When the model is available the node
values themselves are computed by transport: the samples are triangulated and
each node takes the minimum, over the vertices of its triangle, of the vertex
phi plus the line integral of grad(phi) from the vertex to the node, with chi
interpolated linearly inside the triangle.  With a model, ``reached`` marks
the nodes covered this way.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .characteristics import CharacteristicTrajectory, _grad_phi
from .errors import DomainError, MaskError, ValidationError
from .model import SdeModel

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2 or not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValidationError(f"degenerate grid {self}")

    @property
    def x_axis(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y_axis(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)


@dataclass
class QuasipotentialGrid:
    """Arrays are indexed [j, i] with j along y and i along x."""
    x_axis: np.ndarray
    y_axis: np.ndarray
    phi: np.ndarray
    chi: np.ndarray
    reached: np.ndarray
    provenance: np.ndarray
    sample_phi: np.ndarray
    sample_reached: np.ndarray
    mode: str = "chi"

    @property
    def coverage(self) -> float:
        return float(self.reached.mean())

    def _cell(self, pts):
        # lower-left cell index and fractional offsets
        P = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = self.x_axis, self.y_axis
        hx, hy = x[1] - x[0], y[1] - y[0]
        fi = (P[:, 0] - x[0]) / hx
        fj = (P[:, 1] - y[0]) / hy
        eps = 1e-9
        if np.any((fi < -eps) | (fi > x.size - 1 + eps) | (fj < -eps) | (fj > y.size - 1 + eps)):
            raise DomainError("point outside the grid")
        i = np.clip(np.floor(fi).astype(int), 0, x.size - 2)
        j = np.clip(np.floor(fj).astype(int), 0, y.size - 2)
        return i, j, fi - i, fj - j

    def _bilinear(self, field, pts):
        i, j, u, v = self._cell(pts)
        # corners carrying no weight need not be reached (points on nodes or edges)
        tiny = 1e-12
        ok = ((self.reached[j, i] | ((1 - u) * (1 - v) < tiny))
              & (self.reached[j, i + 1] | (u * (1 - v) < tiny))
              & (self.reached[j + 1, i] | ((1 - u) * v < tiny))
              & (self.reached[j + 1, i + 1] | (u * v < tiny)))
        if not np.all(ok):
            raise MaskError("path leaves the reached part of the grid")
        f = np.nan_to_num(field)
        return ((1 - u) * (1 - v) * f[j, i] + u * (1 - v) * f[j, i + 1]
                + (1 - u) * v * f[j + 1, i] + u * v * f[j + 1, i + 1])

    def chi_lookup(self, pts) -> np.ndarray:
        """chi (psi for singular models) by bilinear interpolation on reached cells."""
        return self._bilinear(self.chi, pts)

    def phi_lookup(self, pts) -> np.ndarray:
        return self._bilinear(self.phi, pts)

    def rows(self):
        """(x, y, phi, chi, reached) per node, x fastest."""
        X, Y = np.meshgrid(self.x_axis, self.y_axis)
        return np.column_stack([X.ravel(), Y.ravel(), self.phi.ravel(), self.chi.ravel(),
                                self.reached.ravel().astype(int)])


def _collect(trajectories):
    xs, ys, cs, ps, tid, sid = [], [], [], [], [], []
    for k, tr in enumerate(trajectories):
        n = len(tr)
        xs.append(tr.x), ys.append(tr.y), cs.append(tr.c), ps.append(tr.phi)
        tid.append(np.full(n, k)), sid.append(np.arange(n))
        if tr.origin is not None:
            ox, oy, oc, ophi = tr.origin
            xs.append([ox]), ys.append([oy]), cs.append([oc]), ps.append([ophi])
            tid.append([k]), sid.append([-1])
    cat = lambda v, dt=float: np.concatenate([np.asarray(a, dtype=dt) for a in v])
    return cat(xs), cat(ys), cat(cs), cat(ps), cat(tid, int), cat(sid, int)


def build_grid(trajectories: list[CharacteristicTrajectory], grid_spec: GridSpec,
               model: SdeModel | None = None, max_edge: float | None = None) -> QuasipotentialGrid:
    if not trajectories:
        raise ValidationError("build_grid needs at least one trajectory")
    gs = grid_spec
    x, y, c, phi, tid, sid = _collect(trajectories)
    good = np.isfinite(x) & np.isfinite(y) & np.isfinite(c) & np.isfinite(phi)
    x, y, c, phi, tid, sid = x[good], y[good], c[good], phi[good], tid[good], sid[good]
    mode = trajectories[0].mode

    # per-cell minimum; ties broken by trajectory id then sample index, so
    # the result does not depend on the order of the trajectories
    i = np.rint((x - gs.x_min) / gs.hx).astype(np.int64)
    j = np.rint((y - gs.y_min) / gs.hy).astype(np.int64)
    inside = (i >= 0) & (i < gs.nx) & (j >= 0) & (j < gs.ny)
    flat = j[inside] * gs.nx + i[inside]
    order = np.lexsort((sid[inside], tid[inside], phi[inside], flat))
    fs = flat[order]
    first = np.ones(fs.size, dtype=bool)
    first[1:] = fs[1:] != fs[:-1]
    pick = order[first]
    cells = flat[pick]
    shape = (gs.ny, gs.nx)
    sample_phi = np.full(shape, np.nan)
    chi = np.full(shape, np.nan)
    prov = np.full(shape, -1, dtype=np.int64)
    sample_phi.flat[cells] = phi[inside][pick]
    chi.flat[cells] = c[inside][pick]
    prov.flat[cells] = tid[inside][pick]
    sample_reached = np.isfinite(sample_phi)
    if not sample_reached.any() and model is None:
        raise ValidationError("no trajectory sample falls inside the grid")

    if model is None:
        return QuasipotentialGrid(gs.x_axis, gs.y_axis, sample_phi.copy(), chi, sample_reached.copy(),
                                  prov, sample_phi, sample_reached, mode)

    node_phi, node_c, node_prov, filled = _transport(model, gs, x, y, c, phi, tid, max_edge)
    if not filled.any():
        raise ValidationError("no grid node is covered by the trajectories")
    return QuasipotentialGrid(gs.x_axis, gs.y_axis, node_phi, node_c, filled, node_prov,
                              sample_phi, sample_reached, mode)


class SampleCloud:
    """Triangulated characteristic samples; transports phi to arbitrary points."""

    def __init__(self, model: SdeModel, x, y, c, phi, tid, max_edge: float, window=None):
        P = np.column_stack([x, y])
        c, phi, tid = np.asarray(c, float), np.asarray(phi, float), np.asarray(tid, np.int64)
        if window is not None:
            x0, x1, y0, y1 = window
            keep = (P[:, 0] >= x0) & (P[:, 0] <= x1) & (P[:, 1] >= y0) & (P[:, 1] <= y1)
            P, c, phi, tid = P[keep], c[keep], phi[keep], tid[keep]
        # coincident samples: keep the smallest phi (deterministically)
        order = np.lexsort((tid, phi, P[:, 1], P[:, 0]))
        Ps = P[order]
        uniq = np.ones(len(Ps), dtype=bool)
        uniq[1:] = np.any(Ps[1:] != Ps[:-1], axis=1)
        sel = order[uniq]
        self.model = model
        self.P, self.c, self.phi, self.tid = P[sel], c[sel], phi[sel], tid[sel]
        self.max_edge = float(max_edge)
        self.tri = Delaunay(self.P) if len(self.P) >= 3 else None

    @classmethod
    def from_trajectories(cls, model, trajectories, max_edge, window=None):
        x, y, c, phi, tid, _ = _collect(trajectories)
        good = np.isfinite(x) & np.isfinite(y) & np.isfinite(c) & np.isfinite(phi)
        return cls(model, x[good], y[good], c[good], phi[good], tid[good], max_edge, window)

    def transport(self, Q):
        """(phi, c, provenance, covered) at the query points Q (m, 2)."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        m = len(Q)
        phi_q = np.full(m, np.nan)
        c_q = np.full(m, np.nan)
        prov = np.full(m, -1, dtype=np.int64)
        covered = np.zeros(m, dtype=bool)
        if self.tri is not None:
            self._fill_triangles(Q, phi_q, c_q, prov, covered)
        self._fill_coincident(Q, phi_q, c_q, prov, covered)
        return phi_q, c_q, prov, covered

    def _covered(self, Q):
        phi, c, _, ok = self.transport(Q)
        if not np.all(ok):
            raise MaskError("point outside the triangulated characteristic samples")
        return phi, c

    def phi_lookup(self, pts) -> np.ndarray:
        """phi transported from the samples; MaskError where not covered."""
        return self._covered(pts)[0]

    def chi_lookup(self, pts) -> np.ndarray:
        """chi (psi for singular models) interpolated linearly in the sample triangle."""
        return self._covered(pts)[1]

    def _fill_triangles(self, Q, phi_q, c_q, prov, covered):
        P, cv, pv, tv = self.P, self.c, self.phi, self.tid
        simp = self.tri.find_simplex(Q)
        idx = np.flatnonzero(simp >= 0)
        V = self.tri.simplices[simp[idx]]                       # (m, 3)
        verts = P[V]                                             # (m, 3, 2)
        edges = np.stack([np.hypot(*(verts[:, a] - verts[:, b]).T)
                          for a, b in ((0, 1), (1, 2), (2, 0))], 1)
        small = edges.max(axis=1) <= self.max_edge
        idx, V, verts = idx[small], V[small], verts[small]
        if idx.size == 0:
            return
        T = self.tri.transform[simp[idx]]
        b01 = np.einsum("mij,mj->mi", T[:, :2], Q[idx] - T[:, 2])
        bary = np.column_stack([b01, 1.0 - b01.sum(axis=1)])
        cn = np.sum(bary * cv[V], axis=1)
        q = Q[idx]
        best = np.full(idx.size, np.inf)
        best_t = np.full(idx.size, -1, dtype=np.int64)
        for k in range(3):
            p0 = verts[:, k]
            dl = q - p0
            acc = np.zeros(idx.size)
            for gx, gw in zip(_GL_X, _GL_W):
                s = 0.5 * (gx + 1.0)
                pts = p0 + s * dl
                cs = (1.0 - s) * cv[V[:, k]] + s * cn
                px, py = _grad_phi(self.model, pts[:, 0], pts[:, 1], cs)
                acc += 0.5 * gw * (px * dl[:, 0] + py * dl[:, 1])
            val = pv[V[:, k]] + acc
            cand = val < best
            best = np.where(cand, val, best)
            best_t = np.where(cand, tv[V[:, k]], best_t)
        good = np.isfinite(best)
        idx = idx[good]
        phi_q[idx], c_q[idx], prov[idx] = best[good], cn[good], best_t[good]
        covered[idx] = True

    def _fill_coincident(self, Q, phi_q, c_q, prov, covered):
        """Queries that coincide with a sample (e.g. an equilibrium) take its values."""
        if len(self.P) == 0:
            return
        dist, k = cKDTree(self.P).query(Q)
        for qi in np.flatnonzero(dist <= 1e-12 * max(1.0, float(np.abs(self.P).max()))):
            kk = k[qi]
            if not covered[qi] or self.phi[kk] < phi_q[qi]:
                phi_q[qi], c_q[qi], prov[qi] = self.phi[kk], self.c[kk], self.tid[kk]
                covered[qi] = True


def _transport(model, gs, x, y, c, phi, tid, max_edge):
    h = max(gs.hx, gs.hy)
    max_edge = 4.0 * h if max_edge is None else float(max_edge)
    pad = max_edge
    cloud = SampleCloud(model, x, y, c, phi, tid, max_edge,
                        (gs.x_min - pad, gs.x_max + pad, gs.y_min - pad, gs.y_max + pad))
    X, Y = np.meshgrid(gs.x_axis, gs.y_axis)
    vals = cloud.transport(np.column_stack([X.ravel(), Y.ravel()]))
    shape = (gs.ny, gs.nx)
    return tuple(v.reshape(shape) for v in vals)


def as_chi_lookup(source):
    """Normalise a chi source (grid, callable on (n, 2) points, or a constant) to a callable."""
    if isinstance(source, (QuasipotentialGrid, SampleCloud)):
        return source.chi_lookup
    if callable(source):
        return lambda pts: np.asarray(source(np.atleast_2d(np.asarray(pts, dtype=float))), dtype=float)
    value = float(source)
    return lambda pts: np.full(np.atleast_2d(np.asarray(pts, dtype=float)).shape[0], value)
