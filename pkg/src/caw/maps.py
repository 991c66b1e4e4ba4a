"""Vectorized differentiable maps used by the alignment engine and extractor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = ["DiffMap", "affine_map", "compose", "identity_map", "MapEvaluationError"]


class MapEvaluationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiffMap:
    """A map R^d -> R^d acting on rows.

    ``f(X)`` takes an (P, d) array and returns (P, d).  ``jac(X)`` returns the
    (P, d, d) Jacobians.  ``lip`` is an optional (d, d) array of global
    entrywise bounds ``|df_i/dx_j| <= lip[i, j]``; when present the alignment
    engine uses it instead of sampled Jacobians.  ``trajectory`` optionally
    returns every intermediate state of an iterated map.
    """

    f: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lip: Optional[np.ndarray] = None
    dim: Optional[int] = None
    name: str = "map"
    steps: int = 1
    trajectory: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        Y = self.f(np.atleast_2d(X))
        return Y[0] if single else Y

    def jacobian(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        if self.jac is not None:
            J = self.jac(X2)
        else:
            J = _fd_jacobian(self.f, X2)
        return J[0] if single else J

    def evaluate_with_jacobian(self, X):
        return self(X), self.jacobian(X)


def _fd_jacobian(f, X: np.ndarray, h: float = 1e-7) -> np.ndarray:
    P, d = X.shape
    J = np.empty((P, d, d))
    for j in range(d):
        step = h * np.maximum(1.0, np.abs(X[:, j]))
        Xp = X.copy()
        Xm = X.copy()
        Xp[:, j] += step
        Xm[:, j] -= step
        J[:, :, j] = (f(Xp) - f(Xm)) / (2.0 * step[:, None])
    return J


def affine_map(B, c, name: str = "affine") -> DiffMap:
    B = np.array(B, dtype=float)
    c = np.array(c, dtype=float).reshape(-1)
    d = c.size
    B = B.reshape(d, d)

    def f(X):
        return X @ B.T + c

    def jac(X):
        return np.broadcast_to(B, (X.shape[0], d, d)).copy()

    return DiffMap(f, jac, np.abs(B), d, name)


def identity_map(d: int) -> DiffMap:
    return affine_map(np.eye(d), np.zeros(d), "identity")


def compose(*maps: DiffMap, name: str = "composite") -> DiffMap:
    """compose(f, g) is f after g."""
    seq = list(reversed(maps))

    def f(X):
        for m in seq:
            X = m(X)
        return X

    def jac(X):
        J = None
        for m in seq:
            Jm = m.jacobian(X)
            J = Jm if J is None else Jm @ J
            X = m(X)
        return J

    lip = None
    if all(m.lip is not None for m in maps):
        lip = None
        for m in seq:
            lip = m.lip if lip is None else m.lip @ lip
    return DiffMap(f, jac, lip, maps[0].dim, name, sum(m.steps for m in maps))
