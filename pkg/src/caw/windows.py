"""Windows: products of rectangles with an entry/exit structure.

An (m1, m2) window is the image of the normalized cube [0,1]^m1 x [0,1]^m2
under an affine parametrization.  The first factor carries the exit
directions and the second the entry directions, so

    exit set  = chi(boundary[0,1]^m1 x [0,1]^m2)
    entry set = chi([0,1]^m1 x boundary[0,1]^m2)

The parametrization is assembled from two rectangles living in chart
coordinates (exit block first, then entry block) followed by an affine chart
into ambient coordinates.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

__all__ = [
    "Tolerances",
    "Rectangle",
    "AffineChart",
    "Window",
    "Region",
    "WindowError",
    "make_window",
    "box_window",
    "product_window",
    "membership",
    "window_to_json",
    "window_from_json",
]

AXIS_ROLES = ("s", "u", "q", "p", "theta", "xi", "x")  # x: generic, unlabeled
_ROLE_ALIASES = {"θ": "theta", "ξ": "xi"}


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    boundary: float = 1e-12
    roundtrip: float = 1e-10
    composition: float = 1e-12


DEFAULT_TOL = Tolerances()


def _as_vec(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Rectangle:
    lower: np.ndarray
    edge: np.ndarray

    def __post_init__(self):
        lo = _as_vec(self.lower, "lower")
        ed = _as_vec(self.edge, "edge")
        if lo.shape != ed.shape:
            raise WindowError("dimension mismatch between lower corner and edges")
        if not np.all(np.isfinite(lo)):
            raise WindowError("non-finite lower corner")
        if not np.all(np.isfinite(ed)) or np.any(ed <= 0.0):
            raise WindowError("degenerate rectangle")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "edge", ed)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.edge

    @property
    def center(self) -> np.ndarray:
        return self.lower + 0.5 * self.edge

    @classmethod
    def centered(cls, center, edge) -> "Rectangle":
        c = np.asarray(center, dtype=float).reshape(-1)
        e = np.asarray(edge, dtype=float).reshape(-1)
        if e.size == 1 and c.size > 1:
            e = np.full(c.size, float(e[0]))
        return cls(c - 0.5 * e, e)

    @classmethod
    def empty(cls) -> "Rectangle":
        return cls(np.zeros(0), np.zeros(0))


@dataclass(frozen=True, eq=False)
class AffineChart:
    linear: np.ndarray
    offset: np.ndarray
    tol: float = DEFAULT_TOL.composition

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float)
        off = _as_vec(self.offset, "offset")
        d = off.size
        lin = lin.reshape(d, d) if lin.size == d * d else lin
        if lin.shape != (d, d):
            raise WindowError("chart linear part must be square and match the offset")
        if d and (not np.all(np.isfinite(lin)) or abs(np.linalg.det(lin)) == 0.0):
            raise WindowError("non-invertible chart")
        inv = np.linalg.inv(lin) if d else np.zeros((0, 0))
        lin.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "_inv", inv)
        if d:
            # inverse must undo the chart at the cube corners
            corners = _cube_corners(d, cap=64)
            back = (corners @ lin.T) @ inv.T
            if np.max(np.abs(back - corners)) > self.tol:
                raise WindowError("non-invertible chart")

    @property
    def dim(self) -> int:
        return int(self.offset.size)

    @property
    def inverse_linear(self) -> np.ndarray:
        return self._inv

    def forward(self, r: np.ndarray) -> np.ndarray:
        return np.asarray(r, dtype=float) @ self.linear.T + self.offset

    def backward(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.offset) @ self._inv.T

    @classmethod
    def identity(cls, d: int) -> "AffineChart":
        return cls(np.eye(d), np.zeros(d))


def _cube_corners(d: int, cap: int | None = None) -> np.ndarray:
    if cap is not None and 2**d > cap:
        rng = np.random.default_rng(d)
        return rng.integers(0, 2, size=(cap, d)).astype(float)
    return np.array(list(itertools.product((0.0, 1.0), repeat=d)), dtype=float).reshape(-1, d)


class Region(str, Enum):
    INTERIOR = "interior"
    ENTRY = "entry"
    EXIT = "exit"
    OUTSIDE = "outside"


def _role(label: str) -> str:
    base = _ROLE_ALIASES.get(label, label)
    for alias, name in _ROLE_ALIASES.items():
        if base.startswith(alias):
            base = name + base[len(alias):]
    for role in sorted(AXIS_ROLES, key=len, reverse=True):
        if base.startswith(role) and (base[len(role):] == "" or base[len(role):].isdigit()):
            return role
    raise WindowError(f"unknown axis label {label!r}")


@dataclass(frozen=True, eq=False)
class Window:
    """An (m1, m2) window.

    Normalized coordinates are ordered (exit block, entry block).  The map to
    ambient coordinates is ``chart(lower + edge * x)``.  Internally most
    computations use centered coordinates ``y = x - 1/2`` so that points very
    close to the window centre keep full relative precision.
    """

    exit_block: Rectangle
    entry_block: Rectangle
    chart: AffineChart
    axis_labels: tuple = field(default=())

    def __post_init__(self):
        d = self.exit_block.dim + self.entry_block.dim
        if self.chart.dim != d:
            raise WindowError("dimension mismatch between blocks and chart")
        labels = tuple(self.axis_labels) if self.axis_labels else tuple(f"x{i}" for i in range(d))
        if len(labels) != d:
            raise WindowError("dimension mismatch between axis labels and chart")
        if self.axis_labels:
            for lab in labels:
                _role(lab)
        if len(set(labels)) != len(labels):
            raise WindowError("duplicate axis labels")
        object.__setattr__(self, "axis_labels", labels)
        edge = np.concatenate([self.exit_block.edge, self.entry_block.edge])
        mid = np.concatenate([self.exit_block.center, self.entry_block.center])
        lin = self.chart.linear * edge[None, :] if d else np.zeros((0, 0))
        center = self.chart.forward(mid) if d else np.zeros(0)
        inv = np.linalg.inv(lin) if d else np.zeros((0, 0))
        for a in (lin, center, inv):
            a.setflags(write=False)
        object.__setattr__(self, "_lin", lin)
        object.__setattr__(self, "_center", center)
        object.__setattr__(self, "_inv", inv)

    @property
    def m1(self) -> int:
        return self.exit_block.dim

    @property
    def m2(self) -> int:
        return self.entry_block.dim

    @property
    def dim(self) -> int:
        return self.m1 + self.m2

    @property
    def param_linear(self) -> np.ndarray:
        """Linear part of the full parametrization cube -> ambient."""
        return self._lin

    @property
    def param_inverse(self) -> np.ndarray:
        return self._inv

    def center(self) -> np.ndarray:
        return self._center.copy()

    def from_centered(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self._center + y @ self._lin.T

    def to_centered(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - self._center) @ self._inv.T

    def from_unit(self, x) -> np.ndarray:
        return self.from_centered(np.asarray(x, dtype=float) - 0.5)

    def to_unit(self, x) -> np.ndarray:
        return self.to_centered(x) + 0.5

    def ambient_axes(self, role: str) -> list[int]:
        return [i for i, lab in enumerate(self.axis_labels) if _role(lab) == role]

    def exit_ambient_axes(self) -> list[int]:
        """Ambient axes driven by exit directions (for axis-aligned charts)."""
        cols = np.abs(self.chart.linear[:, : self.m1]) > 0
        return sorted(set(np.nonzero(cols)[0].tolist()))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Ambient bounding box."""
        spread = 0.5 * np.abs(self._lin).sum(axis=1)
        return self._center - spread, self._center + spread


def make_window(exit_block: Rectangle, entry_block: Rectangle, chart: AffineChart,
                axis_labels: Sequence[str] = ()) -> Window:
    return Window(exit_block, entry_block, chart, tuple(axis_labels))


def box_window(center, sizes, exit_axes: Sequence[int], labels: Sequence[str]) -> Window:
    """Axis-aligned window centred at ``center`` with full edge lengths ``sizes``.

    ``exit_axes`` lists the ambient axes that form the exit block.  The chart
    offset is the centre itself, so the centre is reproduced exactly.
    """
    c = np.asarray(center, dtype=float).reshape(-1)
    s = np.asarray(sizes, dtype=float).reshape(-1)
    d = c.size
    exit_axes = list(exit_axes)
    entry_axes = [i for i in range(d) if i not in exit_axes]
    order = exit_axes + entry_axes
    perm = np.zeros((d, d))
    for col, ax in enumerate(order):
        perm[ax, col] = 1.0
    ex = s[exit_axes]
    en = s[entry_axes]
    return Window(Rectangle(-0.5 * ex, ex), Rectangle(-0.5 * en, en), AffineChart(perm, c), tuple(labels))


def product_window(w1: Window, w2: Window) -> Window:
    """W1 x W2 with exit (W1- x W2) u (W1 x W2-) and entry analogously."""
    if set(w1.axis_labels) & set(w2.axis_labels):
        raise WindowError("overlapping coordinate blocks")
    d1, d2 = w1.dim, w2.dim
    lin = np.zeros((d1 + d2, d1 + d2))
    # chart coordinates of the product are (exit1, exit2, entry1, entry2)
    cols1 = list(range(w1.m1)) + list(range(w1.m1 + w2.m1, w1.m1 + w2.m1 + w1.m2))
    cols2 = list(range(w1.m1, w1.m1 + w2.m1)) + list(range(w1.m1 + w2.m1 + w1.m2, d1 + d2))
    lin[np.ix_(range(d1), cols1)] = w1.chart.linear
    lin[np.ix_(range(d1, d1 + d2), cols2)] = w2.chart.linear
    exit_block = Rectangle(np.concatenate([w1.exit_block.lower, w2.exit_block.lower]),
                           np.concatenate([w1.exit_block.edge, w2.exit_block.edge]))
    entry_block = Rectangle(np.concatenate([w1.entry_block.lower, w2.entry_block.lower]),
                            np.concatenate([w1.entry_block.edge, w2.entry_block.edge]))
    chart = AffineChart(lin, np.concatenate([w1.chart.offset, w2.chart.offset]))
    return Window(exit_block, entry_block, chart, w1.axis_labels + w2.axis_labels)


def classify_unit(w: Window, xn: np.ndarray, tol: float = DEFAULT_TOL.boundary) -> np.ndarray:
    """Vectorized classification of normalized points; returns Region values."""
    xn = np.atleast_2d(xn)
    out = np.full(xn.shape[0], Region.INTERIOR.value, dtype=object)
    lo = xn < -tol
    hi = xn > 1.0 + tol
    outside = np.any(lo | hi, axis=1)
    on_bd = (np.abs(xn) <= tol) | (np.abs(xn - 1.0) <= tol)
    on_exit = np.any(on_bd[:, : w.m1], axis=1)
    on_entry = np.any(on_bd[:, w.m1:], axis=1)
    out[on_entry] = Region.ENTRY.value
    out[on_exit] = Region.EXIT.value  # corners report exit
    out[outside] = Region.OUTSIDE.value
    return out


def membership(w: Window, x, tol: float = DEFAULT_TOL.boundary) -> Region:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != w.dim:
        raise WindowError("point dimension mismatch")
    return Region(classify_unit(w, w.to_unit(x)[None, :], tol)[0])


def window_to_json(w: Window) -> dict:
    return {
        "exit_lower": [float(v) for v in w.exit_block.lower],
        "exit_edge": [float(v) for v in w.exit_block.edge],
        "entry_lower": [float(v) for v in w.entry_block.lower],
        "entry_edge": [float(v) for v in w.entry_block.edge],
        "chart_linear": [float(v) for v in w.chart.linear.reshape(-1)],
        "chart_offset": [float(v) for v in w.chart.offset],
        "axis_labels": list(w.axis_labels),
    }


def window_from_json(obj) -> Window:
    if isinstance(obj, str):
        obj = json.loads(obj)
    d = len(obj["chart_offset"])
    lin = np.array(obj["chart_linear"], dtype=float).reshape(d, d)
    return Window(
        Rectangle(obj["exit_lower"], obj["exit_edge"]),
        Rectangle(obj["entry_lower"], obj["entry_edge"]),
        AffineChart(lin, obj["chart_offset"]),
        tuple(obj.get("axis_labels", ())),
    )
