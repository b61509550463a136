"""Batched Dormand-Prince 5(4) integrator.

Every row of the state matrix is an independent trajectory with its own step
size, clock and termination status, so a whole fan of characteristics is
advanced with one vectorised right-hand side call per stage.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# termination codes
RUNNING = 0
REACHED_TARGET = 1
LEFT_DOMAIN = 2
STEP_LIMIT = 3
STIFFNESS_ABORT = 4
END_TIME = 5
TERMINATION_NAMES = {
    RUNNING: "running",
    REACHED_TARGET: "reached-target",
    LEFT_DOMAIN: "left-domain",
    STEP_LIMIT: "step-limit",
    STIFFNESS_ABORT: "stiffness-abort",
    END_TIME: "end-time",
}

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@dataclass
class Controls:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = np.inf
    max_ds: float | None = None     # cap on the spatial displacement per step
    max_steps: int = 20000
    h_min: float = 1e-12
    t_max: float = 1e4


@dataclass
class BatchResult:
    t: list[np.ndarray]
    y: list[np.ndarray]
    status: np.ndarray

    def termination(self, i: int) -> str:
        return TERMINATION_NAMES[int(self.status[i])]


def integrate_batch(
    fun: Callable[[np.ndarray, np.ndarray], np.ndarray],
    y0: np.ndarray,
    controls: Controls = Controls(),
    *,
    sign: float = 1.0,
    status_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    t_eval: np.ndarray | None = None,
    ds_cols: slice = slice(0, 2),
) -> BatchResult:
    """Integrate ``dy/dt = sign * fun(t, y)`` for every row of ``y0`` from t = 0.

    ``fun`` maps (t[n], y[n, d]) to (n, d).  ``status_fn`` returns a code per row
    (0 keeps going).  With ``t_eval`` (increasing, >= 0) samples are recorded
    exactly at those times and integration stops after the last one; otherwise
    every accepted step is recorded.
    """
    Y = np.array(y0, dtype=float, ndmin=2)
    n, dim = Y.shape

    def f(t, y):
        return sign * fun(t, y)

    t = np.zeros(n)
    F = f(t, Y)
    status = np.zeros(n, dtype=np.int64)
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        k_next = np.zeros(n, dtype=np.int64)
        ts: list[list[float]] = [[] for _ in range(n)]
        ys: list[list[np.ndarray]] = [[] for _ in range(n)]
        if t_eval[0] == 0.0:
            for i in range(n):
                ts[i].append(0.0)
                ys[i].append(Y[i].copy())
            k_next[:] = 1
    else:
        ts = [[0.0] for _ in range(n)]
        ys = [[Y[i].copy()] for i in range(n)]

    scale0 = controls.atol + controls.rtol * np.abs(Y)
    d0 = np.sqrt(np.mean((Y / scale0) ** 2, axis=1))
    d1 = np.sqrt(np.mean((F / scale0) ** 2, axis=1))
    h = np.where((d0 > 1e-5) & (d1 > 1e-5), 0.01 * d0 / np.maximum(d1, 1e-300), 1e-6)
    h = np.minimum(h, controls.max_step)
    steps = np.zeros(n, dtype=np.int64)

    if status_fn is not None:
        status[:] = status_fn(t, Y)
    active = np.flatnonzero(status == RUNNING)
    K = np.empty((7, n, dim))
    while active.size:
        ya, ta, Fa = Y[active], t[active], F[active]
        ha = h[active]
        if controls.max_ds is not None:
            speed = np.linalg.norm(Fa[:, ds_cols], axis=1)
            ha = np.minimum(ha, controls.max_ds / np.maximum(speed, 1e-300))
        ha = np.minimum(ha, controls.t_max - ta)
        if t_eval is not None:
            ha = np.minimum(ha, t_eval[k_next[active]] - ta)
        Ka = K[:, : active.size]
        Ka[0] = Fa
        for s in range(1, 7):
            ys_ = ya + ha[:, None] * sum(_A[s][j] * Ka[j] for j in range(s) if _A[s][j] != 0.0)
            Ka[s] = f(ta + _C[s] * ha, ys_)
        y_new = ys_  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err = ha[:, None] * np.tensordot(_E, Ka, axes=(0, 0))
        sc = controls.atol + controls.rtol * np.maximum(np.abs(ya), np.abs(y_new))
        en = np.sqrt(np.mean((err / sc) ** 2, axis=1))
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(en)
        accept = finite & (en <= 1.0)
        fac = np.where(en > 0, 0.9 * np.power(np.maximum(en, 1e-300), -0.2), 10.0)
        fac = np.clip(fac, 0.2, 10.0)
        fac = np.where(accept, fac, np.minimum(fac, 1.0))
        fac = np.where(finite, fac, 0.25)
        h_next = ha * fac

        acc = active[accept]
        if acc.size:
            t_acc = ta[accept] + ha[accept]
            t[acc] = t_acc
            Y[acc] = y_new[accept]
            F[acc] = Ka[6][accept]
            steps[acc] += 1
            if t_eval is not None:
                for i in acc:
                    k = k_next[i]
                    if abs(t[i] - t_eval[k]) <= 1e-12 * max(1.0, abs(t_eval[k])):
                        t[i] = t_eval[k]
                        ts[i].append(float(t[i]))
                        ys[i].append(Y[i].copy())
                        k_next[i] = k + 1
                        if k + 1 >= t_eval.size:
                            status[i] = END_TIME
            else:
                for i in acc:
                    ts[i].append(float(t[i]))
                    ys[i].append(Y[i].copy())
            if status_fn is not None:
                st = status_fn(t[acc], Y[acc])
                upd = (status[acc] == RUNNING) & (st != RUNNING)
                status[acc[upd]] = st[upd]
            over = (steps[acc] >= controls.max_steps) & (status[acc] == RUNNING)
            status[acc[over]] = STEP_LIMIT
            done = (t[acc] >= controls.t_max) & (status[acc] == RUNNING)
            status[acc[done]] = END_TIME
        # a rejected step is retried with the reduced size; steps that
        # collapse below h_min are aborted
        h[active] = np.maximum(h_next, 0.0)
        tiny = (~accept) & (h_next < controls.h_min)
        status[active[tiny & (status[active] == RUNNING)]] = STIFFNESS_ABORT
        h[active] = np.where(accept, np.maximum(h_next, controls.h_min), h_next)
        active = np.flatnonzero(status == RUNNING)

    return BatchResult(
        t=[np.array(v) for v in ts],
        y=[np.array(v).reshape(-1, dim) for v in ys],
        status=status,
    )
