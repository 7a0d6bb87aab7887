"""Uniform interior mesh on (a, b) and node-valued functions extended by zero."""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, GridMismatchError


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (self.a < self.b):
            raise DomainError("need a < b")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("need n >= 1")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.a + self.h * np.arange(1, self.n + 1)
        x.flags.writeable = False
        return x

    @property
    def length(self) -> float:
        return self.b - self.a


def build_grid(a: float, b: float, n: int) -> Grid1D:
    return Grid1D(float(a), float(b), int(n))


@dataclass(frozen=True, eq=False)
class GridFn:
    """Interior node values; zero at the endpoints and on the exterior."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape[0] != self.grid.n:
            raise DomainError(f"expected {self.grid.n} values, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise DomainError("values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __neg__(self):
        return GridFn(self.grid, -self.values)

    def __mul__(self, t: float):
        return GridFn(self.grid, float(t) * self.values)

    __rmul__ = __mul__

    def __add__(self, other: GridFn):
        check_same_grid(self.grid, other.grid)
        return GridFn(self.grid, self.values + other.values)

    def __sub__(self, other: GridFn):
        check_same_grid(self.grid, other.grid)
        return GridFn(self.grid, self.values - other.values)

    @classmethod
    def from_callable(cls, grid: Grid1D, func) -> GridFn:
        return cls(grid, np.asarray(func(grid.nodes), dtype=float) * np.ones(grid.n))

    @classmethod
    def constant(cls, grid: Grid1D, c: float) -> GridFn:
        return cls(grid, np.full(grid.n, float(c)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,value\n")
        for x, v in zip(self.grid.nodes, self.values):
            buf.write(f"{x:.17g},{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, grid: Grid1D | None = None) -> GridFn:
        rows = [ln for ln in text.strip().splitlines() if ln.strip()]
        if rows and rows[0].strip().lower().startswith("x"):
            rows = rows[1:]
        data = np.array([[float(c) for c in r.split(",")] for r in rows], dtype=float)
        if grid is None:
            x = data[:, 0]
            n = len(x)
            h = (x[-1] - x[0]) / (n - 1) if n > 1 else None
            if h is None:
                raise DomainError("cannot infer a grid from a single node; pass grid=")
            grid = build_grid(x[0] - h, x[-1] + h, n)
        elif not np.allclose(data[:, 0], grid.nodes, rtol=0, atol=1e-9 * grid.length):
            raise GridMismatchError("CSV nodes do not match the grid")
        return cls(grid, data[:, 1])


def check_same_grid(g1: Grid1D, g2: Grid1D) -> None:
    if g1 is g2:
        return
    if g1 != g2:
        raise GridMismatchError("functions live on different grids")


def lp_norm(u: GridFn, p: float) -> float:
    """Rectangle-rule L^p(Omega) norm."""
    if p < 1:
        raise DomainError("p must be >= 1")
    return float((u.grid.h * np.sum(np.abs(u.values) ** p)) ** (1.0 / p))


def sign_split(u: GridFn):
    """Return (u_+, u_-, |Omega_+|, |Omega_-|) with measures by node counting."""
    v = u.values
    h = u.grid.h
    plus = GridFn(u.grid, np.maximum(v, 0.0))
    minus = GridFn(u.grid, np.maximum(-v, 0.0))
    return plus, minus, h * int(np.count_nonzero(v > 0)), h * int(np.count_nonzero(v < 0))
