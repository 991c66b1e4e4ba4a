"""Near-integrable twist map on the annulus and its shearing bounds.

The inner map is

    q' = q + g(p) + e_q(q, p),    p' = p + e_p(q, p)

with g(p) = omega + eps^tau (p + a sin(2 pi p) / (2 pi)) componentwise and
errors e_q = C eps^k sin(2 pi q_1) (1, ..., 1), e_p = C eps^k cos(2 pi q_1) (1, ..., 1).
q lives on the universal cover, so no mod-1 reduction is ever applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .windows import Rectangle

__all__ = [
    "TwistMap",
    "TwistError",
    "ShearBounds",
    "ShearMeasurement",
    "apply_twist",
    "shear_bounds",
    "measure_shear",
    "GOLDEN",
]

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
INVERSE_TOL = 1e-12
INVERSE_MAXITER = 200


class TwistError(ValueError):
    pass


def default_omega(n: int) -> np.ndarray:
    return np.mod(GOLDEN * np.arange(1, n + 1), 1.0)


@dataclass(frozen=True)
class TwistMap:
    n: int = 1
    epsilon: float = 0.1
    tau: float = 0.0
    k: float = 7.0
    C: float = 1.0
    amplitude: float = 0.0
    omega: Optional[tuple] = None
    T_minus: Optional[float] = None
    T_plus: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise TwistError("dimension must be positive")
        if not 0.0 <= abs(self.amplitude) < 1.0:
            raise TwistError("amplitude must lie in [0, 1)")
        if self.epsilon <= 0.0 or self.C < 0.0:
            raise TwistError("epsilon must be positive and C nonnegative")
        om = default_omega(self.n) if self.omega is None else np.asarray(self.omega, dtype=float).reshape(-1)
        if om.size != self.n:
            raise TwistError("omega dimension mismatch")
        object.__setattr__(self, "omega", tuple(float(v) for v in om))
        tm, tp = 1.0 - abs(self.amplitude), self.twist_scale * (1.0 + abs(self.amplitude))
        if self.T_minus is None:
            object.__setattr__(self, "T_minus", tm)
        if self.T_plus is None:
            # T_+ is taken independent of eps
            object.__setattr__(self, "T_plus", 1.0 + abs(self.amplitude))
        # the sandwich eps^tau T_- |v| <= |Dg v| <= T_+ |v| must hold for the configured values
        if self.T_minus > tm * (1 + 1e-12) or self.T_plus < tp * (1 - 1e-12) or self.T_minus <= 0:
            raise TwistError("configured twist parameters violate the twist sandwich")

    @property
    def twist_scale(self) -> float:
        return float(self.epsilon ** self.tau)

    @property
    def error_size(self) -> float:
        return float(self.C * self.epsilon ** self.k)

    @property
    def R(self) -> float:
        """Quadratic remainder constant of g: |g(p) - g(p0) - Dg(p0)(p - p0)| <= R |p - p0|^2."""
        return float(self.twist_scale * abs(self.amplitude) * np.pi)

    @property
    def shear_constant(self) -> float:
        """Constant multiplying |N|^2 eps^k in the shearing bounds.

        Over N steps the q-error accumulates to N e + T_+ e N(N-1)/2 per orbit
        (e = C eps^k); two orbits double that, giving C (2 + T_+) N^2 eps^k.
        """
        return float(self.C * (2.0 + self.T_plus))

    def g(self, p: np.ndarray) -> np.ndarray:
        a = self.amplitude
        return np.asarray(self.omega) + self.twist_scale * (p + a * np.sin(2 * np.pi * p) / (2 * np.pi))

    def dg(self, p: np.ndarray) -> np.ndarray:
        """Diagonal of Dg(p), shape like p."""
        return self.twist_scale * (1.0 + self.amplitude * np.cos(2 * np.pi * p))

    def errors(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        e = self.error_size
        t = 2 * np.pi * q[:, :1]
        ones = np.ones((1, self.n))
        return e * np.sin(t) * ones, e * np.cos(t) * ones

    def step(self, q: np.ndarray, p: np.ndarray, omega: Optional[np.ndarray] = None):
        eq, ep = self.errors(q)
        gq = self.g(p) if omega is None else self.g(p) - np.asarray(self.omega) + omega
        return q + gq + eq, p + ep

    def step_jacobian(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Per-point Jacobian of one step, shape (P, 2n, 2n), ordering (q, p)."""
        P, n = q.shape
        e = self.error_size
        t = 2 * np.pi * q[:, 0]
        J = np.zeros((P, 2 * n, 2 * n))
        idx = np.arange(n)
        J[:, idx, idx] = 1.0
        J[:, n + idx, n + idx] = 1.0
        J[:, idx, n + idx] = self.dg(p)
        J[:, :n, 0] += (e * 2 * np.pi * np.cos(t))[:, None]
        J[:, n:, 0] += (-e * 2 * np.pi * np.sin(t))[:, None]
        return J

    def inverse_step(self, q1: np.ndarray, p1: np.ndarray, omega: Optional[np.ndarray] = None):
        shift = 0.0 if omega is None else omega - np.asarray(self.omega)
        q, p = q1 - self.g(p1) - shift, p1.copy()
        for _ in range(INVERSE_MAXITER):
            eq, ep = self.errors(q)
            p_new = p1 - ep
            q_new = q1 - self.g(p_new) - shift - eq
            err = max(np.max(np.abs(q_new - q), initial=0.0), np.max(np.abs(p_new - p), initial=0.0))
            q, p = q_new, p_new
            if err <= INVERSE_TOL * max(1.0, np.max(np.abs(q1), initial=0.0)):
                return q, p
        raise TwistError("inverse solve did not converge")


def _rows(x, n):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, n), x.ndim <= 1


def apply_twist(tmap: TwistMap, q, p, steps: int, check: bool = True):
    """N-fold composition of the twist map (negative N iterates the inverse)."""
    n = tmap.n
    Q, single = _rows(q, n)
    Pm, _ = _rows(p, n)
    Q, Pm = Q.copy(), Pm.copy()
    step = tmap.step if steps >= 0 else tmap.inverse_step
    for _ in range(abs(int(steps))):
        Q, Pm = step(Q, Pm)
        if check and (np.any(Pm < 0.0) or np.any(Pm > 1.0)):
            raise TwistError("p left [0,1]^n")
    if single:
        return Q[0], Pm[0]
    return Q, Pm


@dataclass(frozen=True)
class ShearBounds:
    delta_lower: float
    omega_upper: float


def shear_bounds(tmap: TwistMap, gamma: float, delta: float, N: int, R: Optional[float] = None,
                 C: Optional[float] = None) -> ShearBounds:
    eps, tau = tmap.epsilon, tmap.tau
    R = tmap.R if R is None else R
    C = tmap.shear_constant if C is None else C
    n = abs(int(N))
    err = C * n * n * eps ** tmap.k
    lower = eps ** tau * n * tmap.T_minus * delta - n * R * delta ** 2 - gamma - err
    upper = gamma + n * tmap.T_plus * delta + err
    return ShearBounds(float(lower), float(upper))


@dataclass
class ShearMeasurement:
    delta: np.ndarray          # per axis j
    omega: float
    degenerate: bool = False
    raw_delta: Optional[float] = None
    extras: dict = field(default_factory=dict)


def _axis_grid(lo: np.ndarray, hi: np.ndarray, grid: int) -> list[np.ndarray]:
    return [np.linspace(a, b, grid) for a, b in zip(lo, hi)]


def _mesh(axes: list[np.ndarray]) -> np.ndarray:
    if not axes:
        return np.zeros((1, 0))
    m = np.meshgrid(*axes, indexing="ij")
    return np.stack([x.reshape(-1) for x in m], axis=1)


def measure_shear(tmap: TwistMap, window_Q: Rectangle, window_P: Rectangle, N: int,
                  grid: int = 50) -> ShearMeasurement:
    """Empirical Delta_j^N (min over opposite p-faces) and Omega^N (max over the window)."""
    if grid < 2:
        raise TwistError("grid must be at least 2 per axis")
    n = tmap.n
    if window_Q.dim != n or window_P.dim != n:
        raise TwistError("window dimension mismatch")
    qa = _axis_grid(window_Q.lower, window_Q.upper, grid)
    pa = _axis_grid(window_P.lower, window_P.upper, grid)

    def images(q_axes, p_axes):
        pts = _mesh(q_axes + p_axes)
        Q, _ = apply_twist(tmap, pts[:, :n], pts[:, n:], N, check=False)
        return np.atleast_2d(Q)

    deltas = np.empty(n)
    for j in range(n):
        lo_axes = list(pa)
        hi_axes = list(pa)
        lo_axes[j] = np.array([window_P.lower[j]])
        hi_axes[j] = np.array([window_P.upper[j]])
        A0 = images(qa, lo_axes)
        A1 = images(qa, hi_axes)
        dist, _ = cKDTree(A0).query(A1, k=1, p=np.inf)
        deltas[j] = float(np.min(dist))
    full = images(qa, pa)
    omega = float(np.max(full.max(axis=0) - full.min(axis=0)))
    if int(N) == 0:
        gamma = float(np.max(window_Q.edge))
        return ShearMeasurement(np.maximum(deltas, 0.0), omega, True, -gamma)
    return ShearMeasurement(deltas, omega)
