"""Bivariate polynomials stored as term lists.

A polynomial is a mapping ``(x_power, y_power) -> coefficient``.  Keeping the
drift and diffusion entries in this form makes every partial derivative exact,
which the equilibrium expansions rely on.
"""
from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np


class Poly:
    __slots__ = ("_terms", "_flat")

    def __init__(self, terms: Mapping[tuple[int, int], float] | None = None):
        clean: dict[tuple[int, int], float] = {}
        for (i, j), c in (terms or {}).items():
            if i < 0 or j < 0 or int(i) != i or int(j) != j:
                raise ValueError(f"powers must be non-negative integers, got {(i, j)}")
            c = float(c)
            if c != 0.0:
                key = (int(i), int(j))
                clean[key] = clean.get(key, 0.0) + c
        self._terms = {k: v for k, v in sorted(clean.items()) if v != 0.0}
        self._flat = tuple((c, i, j) for (i, j), c in self._terms.items())

    @classmethod
    def from_terms(cls, triples: Iterable[Sequence[float]]) -> "Poly":
        """Build from ``[coefficient, x_power, y_power]`` triples (repeats add up)."""
        acc: dict[tuple[int, int], float] = {}
        for t in triples:
            if len(t) != 3:
                raise ValueError(f"term must be [coefficient, x_power, y_power], got {t!r}")
            c, i, j = t
            if float(i) != int(i) or float(j) != int(j):
                raise ValueError(f"powers must be integers, got {t!r}")
            key = (int(i), int(j))
            acc[key] = acc.get(key, 0.0) + float(c)
        return cls(acc)

    @classmethod
    def constant(cls, c: float) -> "Poly":
        return cls({(0, 0): c})

    @classmethod
    def x(cls) -> "Poly":
        return cls({(1, 0): 1.0})

    @classmethod
    def y(cls) -> "Poly":
        return cls({(0, 1): 1.0})

    @property
    def terms(self) -> dict[tuple[int, int], float]:
        return dict(self._terms)

    def to_triples(self) -> list[list[float]]:
        return [[c, i, j] for c, i, j in self._flat]

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(k == (0, 0) for k in self._terms)

    @property
    def degree(self) -> int:
        return max((i + j for i, j in self._terms), default=0)

    def __call__(self, x, y):
        if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            out = np.zeros(np.broadcast(x, y).shape)
        else:
            out = 0.0
        for c, i, j in self._flat:
            term = c
            if i:
                term = term * (x if i == 1 else x**i)
            if j:
                term = term * (y if j == 1 else y**j)
            out = out + term
        return out

    def deriv(self, var: str) -> "Poly":
        out: dict[tuple[int, int], float] = {}
        for (i, j), c in self._terms.items():
            if var == "x" and i:
                out[(i - 1, j)] = c * i
            elif var == "y" and j:
                out[(i, j - 1)] = c * j
            elif var not in ("x", "y"):
                raise ValueError(var)
        return Poly(out)

    def __add__(self, other):
        other = _as_poly(other)
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0.0) + c
        return Poly(acc)

    __radd__ = __add__

    def __neg__(self):
        return Poly({k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        other = _as_poly(other)
        acc: dict[tuple[int, int], float] = {}
        for (i1, j1), c1 in self._terms.items():
            for (i2, j2), c2 in other._terms.items():
                k = (i1 + i2, j1 + j2)
                acc[k] = acc.get(k, 0.0) + c1 * c2
        return Poly(acc)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(self._flat)

    def __repr__(self):
        if not self._terms:
            return "Poly(0)"
        parts = []
        for c, i, j in self._flat:
            mono = "".join(
                s for s in (
                    "" if i == 0 else ("x" if i == 1 else f"x^{i}"),
                    "" if j == 0 else ("y" if j == 1 else f"y^{j}"),
                )
            )
            parts.append(f"{c:g}{'*' + mono if mono else ''}")
        return "Poly(" + " + ".join(parts) + ")"

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coefficient and power arrays, for compiled evaluators."""
        if not self._flat:
            return np.zeros(1), np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64)
        c, i, j = zip(*self._flat)
        return np.array(c, dtype=float), np.array(i, dtype=np.int64), np.array(j, dtype=np.int64)


def _as_poly(value) -> Poly:
    if isinstance(value, Poly):
        return value
    return Poly.constant(float(value))
