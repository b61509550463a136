"""Brute-force exit statistics by Euler-Maruyama simulation.

Trajectories of dx = a dt + sqrt(2 eps D) dW start at a given point and are
stopped on an absorbing boundary described by a signed function f (f < 0
inside).  The crossing time and location are linearly interpolated between
the last two steps.  Every trajectory owns a generator seeded from
(rng_seed, trajectory index), so results do not depend on the thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ValidationError
from .model import SdeModel

RNG_ALGORITHM = "PCG64 seeded per trajectory by SeedSequence((rng_seed, index)); ziggurat normals"

CIRCLE = 0
GRAPH = 1

EXITED, CENSORED = 0, 1


@dataclass
class AbsorbingBoundary:
    """Absorbing set, either outside a circle or above a graph y(x).

    For a graph the domain is {x_lo <= x <= x_hi, y < y(x)} together with
    x < x_lo (where the graph is not defined); x > x_hi is absorbing.
    The exit coordinate is the polar angle (circle) or x (graph).
    """
    kind: int
    params: np.ndarray
    nodes: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def circle(cls, center=(0.0, 0.0), radius: float = 1.0) -> "AbsorbingBoundary":
        if radius <= 0.0:
            raise ValidationError("radius must be positive")
        return cls(CIRCLE, np.array([center[0], center[1], radius], dtype=float))

    @classmethod
    def graph(cls, x, y, n: int = 4001) -> "AbsorbingBoundary":
        """Boundary y(x) from samples, resampled to a uniform grid for O(1) lookup."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(np.diff(x) <= 0.0):
            raise ValidationError("graph abscissae must increase")
        xu = np.linspace(x[0], x[-1], n)
        return cls(GRAPH, np.array([x[0], x[-1]], dtype=float), np.interp(xu, x, y))

    @classmethod
    def separatrix(cls, sep, n: int = 4001) -> "AbsorbingBoundary":
        xu = np.linspace(sep.x1, 0.0, n)
        return cls(GRAPH, np.array([sep.x1, 0.0]), np.asarray(sep.v_s(xu), dtype=float))

    def signed(self, x, y):
        return np.array([_signed(self.kind, self.params, self.nodes, float(a), float(b))
                         for a, b in zip(np.atleast_1d(x), np.atleast_1d(y))])


@numba.njit(cache=True)
def _signed(kind, params, nodes, x, y):
    if kind == CIRCLE:
        return math.hypot(x - params[0], y - params[1]) - params[2]
    lo, hi = params[0], params[1]
    if x > hi:
        return x - hi
    if x < lo:
        return -1.0
    u = (x - lo) / (hi - lo) * (nodes.size - 1)
    k = min(int(u), nodes.size - 2)
    w = u - k
    return y - ((1.0 - w) * nodes[k] + w * nodes[k + 1])


@numba.njit(cache=True)
def _ipow(x, p):
    r = 1.0
    for _ in range(p):
        r *= x
    return r


@numba.njit(cache=True)
def _poly(c, i, j, x, y):
    s = 0.0
    for k in range(c.size):
        s += c[k] * _ipow(x, i[k]) * _ipow(y, j[k])
    return s


@numba.njit(cache=True)
def _coordinate(kind, params, x, y):
    if kind == CIRCLE:
        return math.atan2(y - params[1], x - params[0])
    return x


@numba.njit(cache=True, nogil=True)
def _advance(pa, pb, pA, pB, pC, const_d, kind, params, nodes, sq, dt, noise, state, nmax):
    """Step one trajectory through a block of normals.

    state = [x, y, f, t, steps]; returns 1 on exit (state then holds the
    interpolated crossing point and time), 2 at the step cap, 0 when the block
    is used up.
    """
    x, y, f, t = state[0], state[1], state[2], state[3]
    steps = int(state[4])
    A = _poly(pA[0], pA[1], pA[2], x, y)
    B = _poly(pB[0], pB[1], pB[2], x, y)
    C = _poly(pC[0], pC[1], pC[2], x, y)
    two = A > 0.0
    per = 2 if two else 1
    m = noise.size // per
    for r in range(m):
        if steps >= nmax:
            state[0], state[1], state[2], state[3], state[4] = x, y, f, t, steps
            return 2
        if not const_d:
            A = _poly(pA[0], pA[1], pA[2], x, y)
            B = _poly(pB[0], pB[1], pB[2], x, y)
            C = _poly(pC[0], pC[1], pC[2], x, y)
        if two:
            # Cholesky factor of D
            l11 = math.sqrt(A)
            l21 = B / l11
            l22 = math.sqrt(max(C - l21 * l21, 0.0))
            z1 = noise[2 * r]
            z2 = noise[2 * r + 1]
            dx = l11 * z1
            dy = l21 * z1 + l22 * z2
        else:
            dx = 0.0
            dy = math.sqrt(max(C, 0.0)) * noise[r]
        a = _poly(pa[0], pa[1], pa[2], x, y)
        b = _poly(pb[0], pb[1], pb[2], x, y)
        xn = x + a * dt + sq * dx
        yn = y + b * dt + sq * dy
        fn = _signed(kind, params, nodes, xn, yn)
        steps += 1
        if fn >= 0.0:
            w = f / (f - fn) if f != fn else 1.0
            state[0] = x + w * (xn - x)
            state[1] = y + w * (yn - y)
            state[2] = 0.0
            state[3] = t + w * dt
            state[4] = steps
            return 1
        x, y, f, t = xn, yn, fn, t + dt
    state[0], state[1], state[2], state[3], state[4] = x, y, f, t, steps
    return 0


@dataclass
class McExitStats:
    n_trajectories: int
    n_exited: int
    n_censored: int
    mean_exit_time: float
    std_error: float
    exit_times: np.ndarray
    exit_positions: np.ndarray
    hist_edges: np.ndarray
    hist_mass: np.ndarray
    epsilon: float
    time_step: float
    rng_seed: int
    time_cap: float
    rng_algorithm: str = RNG_ALGORITHM

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n_trajectories

    @property
    def valid(self) -> bool:
        return self.censored_fraction < 0.01

    @property
    def histogram_mode(self) -> float:
        k = int(np.argmax(self.hist_mass))
        return 0.5 * (self.hist_edges[k] + self.hist_edges[k + 1])

    def mass_where(self, predicate) -> float:
        pos = self.exit_positions
        return float(np.count_nonzero(predicate(pos))) / max(pos.size, 1)

    def as_record(self) -> dict:
        return {
            "n_trajectories": self.n_trajectories, "n_exited": self.n_exited,
            "n_censored": self.n_censored, "censored_fraction": self.censored_fraction,
            "valid": self.valid, "mean_exit_time": self.mean_exit_time, "std_error": self.std_error,
            "epsilon": self.epsilon, "time_step": self.time_step, "rng_seed": self.rng_seed,
            "rng_algorithm": self.rng_algorithm, "time_cap": self.time_cap,
            "histogram_mode": self.histogram_mode if self.n_exited else None,
        }


def _run_one(args, k):
    (polys, const_d, two, x0, y0, f0, kind, params, nodes, sq, dt, nmax, seed, block) = args
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, k))))
    noise = np.empty(block * (2 if two else 1))
    state = np.array([x0, y0, f0, 0.0, 0.0])
    while True:
        rng.standard_normal(out=noise)
        code = _advance(*polys, const_d, kind, params, nodes, sq, dt, noise, state, nmax)
        if code == 1:
            return state[3], _coordinate(kind, params, state[0], state[1]), EXITED
        if code == 2:
            return state[3], math.nan, CENSORED


def thread_count() -> int:
    """Worker threads for simulation, from WEAKNOISE_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("WEAKNOISE_THREADS", "1")))
    except ValueError:
        raise ValidationError("WEAKNOISE_THREADS must be an integer") from None


def mc_simulate(model: SdeModel, start, boundary: AbsorbingBoundary, epsilon: float, dt: float,
                n: int, rng_seed: int, t_cap: float, bins: int = 60,
                threads: int | None = None) -> McExitStats:
    """Exit times and positions of ``n`` trajectories from ``start``.

    Trajectories still inside at ``t_cap`` are censored and excluded from the
    statistics; a run is valid when fewer than 1% are censored.
    """
    if epsilon <= 0.0 or dt <= 0.0 or n <= 0 or t_cap <= 0.0:
        raise ValidationError("epsilon, dt, n and t_cap must be positive")
    x0, y0 = model.check_point(start)
    f0 = float(boundary.signed(x0, y0)[0])
    if f0 >= 0.0:
        raise ValidationError("start point is not inside the absorbing boundary")
    polys = tuple(getattr(model, nm).as_arrays() for nm in ("a", "b", "A", "B", "C"))
    const_d = all(getattr(model, nm).is_constant() for nm in ("A", "B", "C"))
    two = bool(model.A(x0, y0) > 0.0)
    args = (polys, const_d, two, x0, y0, f0, boundary.kind, boundary.params, boundary.nodes,
            math.sqrt(2.0 * epsilon * dt), float(dt), int(math.ceil(t_cap / dt)), int(rng_seed), 1 << 16)
    threads = thread_count() if threads is None else max(1, int(threads))
    if threads == 1:
        res = [_run_one(args, k) for k in range(n)]
    else:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(lambda k: _run_one(args, k), range(n)))
    out_t = np.array([r[0] for r in res])
    out_pos = np.array([r[1] for r in res])
    out_flag = np.array([r[2] for r in res])
    ok = out_flag == EXITED
    times = out_t[ok]
    pos = out_pos[ok]
    m = int(ok.sum())
    mean = float(times.mean()) if m else math.nan
    se = float(times.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    if m:
        lo, hi = float(pos.min()), float(pos.max())
        if boundary.kind == GRAPH:
            lo, hi = min(lo, boundary.params[0]), max(hi, boundary.params[1])
        counts, edges = np.histogram(pos, bins=bins, range=(lo, hi if hi > lo else lo + 1.0))
        mass = counts / m
    else:
        edges, mass = np.zeros(bins + 1), np.zeros(bins)
    return McExitStats(n, m, n - m, mean, se, times, pos, edges, mass, float(epsilon), float(dt),
                       int(rng_seed), float(t_cap))
