"""Benchmark system in normal-form coordinates (s, u, q, p).

    s' = (lambda0 + delta_s c(u)) s,     c(u) = clip(u_1, -1, 1)
    u' = (mu0 + delta_u c(s)) u,         c(s) = clip(s_1, -1, 1)
    (q', p') = twist map f(q, p)

with lambda0 = (lambda_- + lambda_+)/2, delta_s = (lambda_+ - lambda_-)/2 and
likewise for mu.  The nonlinear terms saturate, so the normal form is globally
defined and the rate sandwich holds everywhere.  The homoclinic jump is an
explicit affine map plus a quadratic remainder, assembled from the block
matrices A1..A4, B1..B4.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from .maps import DiffMap
from .twist import TwistMap

__all__ = [
    "ModelParams",
    "ModelError",
    "HyperbolicBlock",
    "NormalFormSystem",
    "HomoclinicJump",
    "ExtendedSystem",
    "jump_constants",
    "transit_maps",
]

INVERSE_TOL = 1e-12
INVERSE_MAXITER = 200


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """All scalar orders and constants of the benchmark.

    ``C`` bounds the inner-map error terms (sup-norm C eps^k).  ``R`` is the
    quadratic remainder constant of g; a positive value switches on the
    nonlinear twist g(p) = eps^tau (p + a sin(2 pi p)/2 pi) with a = R/(pi eps^tau).
    """

    epsilon: float = 0.1
    sigma: float = 0.0
    tau: float = 0.0
    upsilon: float = 0.0
    k: float = 1.0
    n: int = 1
    m: int = 1
    lambda_minus: float = 0.49
    lambda_plus: float = 0.51
    mu_minus: float = 1.96
    mu_plus: float = 2.04
    T_minus: float = 1.0
    T_plus: float = 1.0
    C: float = 1.0
    R: float = 0.0
    R_prime: float = 1.0
    delta_s: float = 0.01
    delta_u: float = 0.04
    N_plus: int = 1
    N_minus: int = 1
    nu: float = 0.2
    nu_prime: float = 0.2
    omega_prime: float = 0.1
    seed: int = 0
    # optional jump blocks: scalars (multiples of the identity) or square matrices
    A1: object = 1.0
    A2: object = 0.1
    A3: object = 0.1
    A4: object = 1.0
    B1: object = 1.0
    B2: object = 1.0
    B3: object = 1.0
    B4: object = 1.0
    jump_radius: float = 1.0
    omega: Optional[tuple] = None
    # extended system
    L: Optional[int] = None
    ell1: int = 0
    ell2: int = 0
    xi_star: Optional[tuple] = None
    C_ext: Optional[float] = None
    theta_speed: float = 0.1

    def __post_init__(self):
        for key in ("sigma", "tau", "upsilon", "k"):
            if getattr(self, key) < 0:
                raise ModelError(f"order parameter {key} must be nonnegative")
        if not 0.0 < self.epsilon <= 0.5:
            raise ModelError("epsilon must lie in (0, 0.5]")
        if not 0.0 < self.lambda_minus < self.lambda_plus < 1.0 < self.mu_minus < self.mu_plus:
            raise ModelError("rates must satisfy 0 < lambda_- < lambda_+ < 1 < mu_- < mu_+")
        if self.n < 1 or self.m < 1:
            raise ModelError("dimensions must be positive")
        if self.C < 0 or self.R < 0 or self.R_prime <= 0:
            raise ModelError("C and R must be nonnegative, R_prime positive")
        if self.R > 0 and self.twist_amplitude >= 1.0:
            raise ModelError("R too large for the nonlinear twist (amplitude must stay below 1)")

    # derived quantities -------------------------------------------------
    @property
    def kappa(self) -> float:
        return max(self.sigma, self.upsilon)

    @property
    def twist_amplitude(self) -> float:
        return self.R / (np.pi * self.epsilon ** self.tau) if self.R > 0 else 0.0

    @property
    def lambda0(self) -> float:
        return 0.5 * (self.lambda_minus + self.lambda_plus)

    @property
    def mu0(self) -> float:
        return 0.5 * (self.mu_minus + self.mu_plus)

    @property
    def extended(self) -> bool:
        return self.L is not None and (self.ell1 > 0 or self.ell2 > 0)

    def twist(self) -> TwistMap:
        return TwistMap(n=self.n, epsilon=self.epsilon, tau=self.tau, k=self.k, C=self.C,
                        amplitude=self.twist_amplitude, omega=self.omega,
                        T_minus=self.T_minus, T_plus=self.T_plus)

    def with_epsilon(self, eps: float) -> "ModelParams":
        return replace(self, epsilon=float(eps))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def _block(v, d: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(d)
    if a.shape != (d, d):
        raise ModelError(f"{name} must be a scalar or a {d}x{d} matrix")
    return a.copy()


def _maxnorm(M: np.ndarray) -> float:
    return float(np.abs(M).sum(axis=1).max())


def _coercivity(M: np.ndarray, name: str) -> float:
    """Largest c with |M v| >= c |v| in the max norm."""
    if abs(np.linalg.det(M)) < 1e-300:
        raise ModelError(f"{name} must be invertible")
    return 1.0 / _maxnorm(np.linalg.inv(M))


@dataclass(frozen=True)
class HyperbolicBlock:
    m: int
    lambda_minus: float
    lambda_plus: float
    mu_minus: float
    mu_plus: float

    @property
    def lambda0(self):
        return 0.5 * (self.lambda_minus + self.lambda_plus)

    @property
    def mu0(self):
        return 0.5 * (self.mu_minus + self.mu_plus)

    @property
    def delta_s(self):
        return 0.5 * (self.lambda_plus - self.lambda_minus)

    @property
    def delta_u(self):
        return 0.5 * (self.mu_plus - self.mu_minus)

    def factors(self, s, u):
        cu = np.clip(u[:, 0], -1.0, 1.0)
        cs = np.clip(s[:, 0], -1.0, 1.0)
        return self.lambda0 + self.delta_s * cu, self.mu0 + self.delta_u * cs

    def step(self, s, u):
        a, b = self.factors(s, u)
        return s * a[:, None], u * b[:, None]

    def step_jacobian(self, s, u) -> np.ndarray:
        P, m = s.shape
        a, b = self.factors(s, u)
        J = np.zeros((P, 2 * m, 2 * m))
        idx = np.arange(m)
        J[:, idx, idx] = a[:, None]
        J[:, m + idx, m + idx] = b[:, None]
        du = np.where(np.abs(u[:, 0]) < 1.0, self.delta_s, 0.0)
        ds = np.where(np.abs(s[:, 0]) < 1.0, self.delta_u, 0.0)
        J[:, :m, m] += s * du[:, None]
        J[:, m:, 0] += u * ds[:, None]
        return J

    def inverse_step(self, s1, u1):
        s, u = s1 / self.lambda0, u1 / self.mu0
        for _ in range(INVERSE_MAXITER):
            a, b = self.factors(s, u)
            s_new, u_new = s1 / a[:, None], u1 / b[:, None]
            err = max(np.max(np.abs(s_new - s), initial=0.0), np.max(np.abs(u_new - u), initial=0.0))
            scale = max(1.0, np.max(np.abs(s_new), initial=0.0), np.max(np.abs(u_new), initial=0.0))
            s, u = s_new, u_new
            if err <= INVERSE_TOL * scale:
                return s, u
        raise ModelError("inverse of the hyperbolic block did not converge")


class NormalFormSystem:
    """The map Phi on states (s, u, q, p), rows of length 2m + 2n."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.m, self.n = params.m, params.n
        self.hyp = HyperbolicBlock(params.m, params.lambda_minus, params.lambda_plus,
                                   params.mu_minus, params.mu_plus)
        self.twist = params.twist()

    @property
    def dim(self) -> int:
        return 2 * (self.m + self.n)

    def split(self, X):
        m, n = self.m, self.n
        return X[:, :m], X[:, m:2 * m], X[:, 2 * m:2 * m + n], X[:, 2 * m + n:]

    def _step(self, X, omega=None):
        s, u, q, p = self.split(X)
        s1, u1 = self.hyp.step(s, u)
        q1, p1 = self.twist.step(q, p, omega)
        return np.concatenate([s1, u1, q1, p1], axis=1)

    def _inverse(self, X, omega=None):
        s, u, q, p = self.split(X)
        s0, u0 = self.hyp.inverse_step(s, u)
        q0, p0 = self.twist.inverse_step(q, p, omega)
        return np.concatenate([s0, u0, q0, p0], axis=1)

    def _step_jac(self, X):
        s, u, q, p = self.split(X)
        m = self.m
        P = X.shape[0]
        J = np.zeros((P, self.dim, self.dim))
        J[:, :2 * m, :2 * m] = self.hyp.step_jacobian(s, u)
        J[:, 2 * m:, 2 * m:] = self.twist.step_jacobian(q, p)
        return J

    def check_box(self, X):
        s, u, _, _ = self.split(X)
        if np.any(np.abs(s) > 1.0) or np.any(np.abs(u) > 1.0):
            raise ModelError("state left the normal-form box |s|,|u| <= 1")

    def apply_phi(self, X, steps: int = 1, strict: bool = False, with_jac: bool = False,
                  record: bool = False):
        """Iterate Phi ``steps`` times (negative iterates the inverse).

        Returns the final states, plus the accumulated Jacobian when
        ``with_jac`` and the full trajectory (steps+1, P, d) when ``record``.
        """
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X).copy()
        if strict:
            self.check_box(X)
        J = np.broadcast_to(np.eye(self.dim), (X.shape[0], self.dim, self.dim)).copy() if with_jac else None
        traj = [X.copy()] if record else None
        fwd = steps >= 0
        for _ in range(abs(int(steps))):
            if with_jac and fwd:
                J = self._step_jac(X) @ J
            X = self._step(X) if fwd else self._inverse(X)
            if with_jac and not fwd:
                J = np.linalg.inv(self._step_jac(X)) @ J
            if strict:
                self.check_box(X)
            if record:
                traj.append(X.copy())
        out = [X[0] if single else X]
        if with_jac:
            out.append(J[0] if single else J)
        if record:
            out.append(np.stack(traj))
        return out[0] if len(out) == 1 else tuple(out)

    def iterate_map(self, steps: int, name: Optional[str] = None) -> DiffMap:
        sysm = self

        def f(X):
            return sysm.apply_phi(X, steps)

        def jac(X):
            return sysm.apply_phi(X, steps, with_jac=True)[1]

        def traj(X):
            return sysm.apply_phi(X, steps, record=True)[1]

        return DiffMap(f, jac, None, self.dim, name or f"Phi^{steps}", abs(int(steps)), traj)


def jump_constants(A: Sequence[np.ndarray], B: Sequence[np.ndarray]) -> dict:
    A1, A2, A3, A4 = A
    B1, B2, B3, B4 = B
    return {
        "C1": _maxnorm(A1), "C2": _maxnorm(A2), "C3": _maxnorm(A3), "C4": _coercivity(A4, "A4"),
        "C5": _maxnorm(B1), "C6": _maxnorm(B2), "C7": _coercivity(B3, "B3"), "C8": _maxnorm(B4),
    }


@dataclass
class HomoclinicJump:
    """phi(x) = x_plus + Dphi (x - x_c) + R'_*(x - x_c) between minus and plus charts."""

    A: tuple
    B: tuple
    sigma: float
    upsilon: float
    epsilon: float
    R_prime: float
    center: np.ndarray
    center_plus: np.ndarray
    N_plus: int = 1
    N_minus: int = 1
    omega_prime: float = 0.0
    nu: float = 0.0
    nu_prime: float = 0.0
    radius: float = 1.0
    coeffs: Optional[np.ndarray] = None
    constants: dict = field(init=False)

    def __post_init__(self):
        m = self.A[0].shape[0]
        n = self.B[0].shape[0]
        self.m, self.n = m, n
        _coercivity(self.A[0], "A1")
        _coercivity(self.B[1], "B2")
        self.constants = jump_constants(self.A, self.B)
        self.center = np.asarray(self.center, dtype=float)
        self.center_plus = np.asarray(self.center_plus, dtype=float)
        d = 2 * (m + n)
        if self.coeffs is None:
            self.coeffs = np.cos(np.arange(1, d + 1))  # fixed, |c_i| <= 1
        self.perm = (np.arange(d) + 1) % d

    @property
    def dim(self) -> int:
        return 2 * (self.m + self.n)

    def linear_part(self) -> np.ndarray:
        A1, A2, A3, A4 = self.A
        B1, B2, B3, B4 = self.B
        es, eu = self.epsilon ** self.sigma, self.epsilon ** self.upsilon
        Am = np.block([[es * A1, A2], [A3, es * A4]])
        Bm = np.block([[B1, eu * B2], [eu * B3, B4]])
        D = np.zeros((self.dim, self.dim))
        h = 2 * self.m
        D[:h, :h] = Am
        D[h:, h:] = Bm
        return D

    def remainder(self, dX: np.ndarray) -> np.ndarray:
        return self.R_prime * self.coeffs * dX[:, self.perm] ** 2

    def apply_jump(self, X, strict: bool = True):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        dX = X - self.center
        if strict and np.any(np.abs(dX).max(axis=1) > self.radius):
            raise ModelError("state outside the jump neighbourhood")
        Y = self.center_plus + dX @ self.linear_part().T + self.remainder(dX)
        return Y[0] if single else Y

    def jacobian(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        dX = X - self.center
        D = self.linear_part()
        J = np.broadcast_to(D, (X.shape[0],) + D.shape).copy()
        rows = np.arange(self.dim)
        J[:, rows, self.perm] += 2 * self.R_prime * self.coeffs * dX[:, self.perm]
        return J

    def as_map(self, extra_dims: int = 0) -> DiffMap:
        """The jump as a DiffMap; trailing ``extra_dims`` coordinates pass through."""
        d = self.dim

        def f(X):
            Y = X.copy()
            Y[:, :d] = self.apply_jump(X[:, :d], strict=False)
            return Y

        def jac(X):
            J = np.broadcast_to(np.eye(d + extra_dims), (X.shape[0], d + extra_dims, d + extra_dims)).copy()
            J[:, :d, :d] = self.jacobian(X[:, :d])
            return J

        def traj(X):
            return np.stack([X, f(X)])

        return DiffMap(f, jac, None, d + extra_dims, "jump", 0, traj)


def make_jump(params: ModelParams, center, center_plus) -> HomoclinicJump:
    m, n = params.m, params.n
    A = tuple(_block(getattr(params, k), m, k) for k in ("A1", "A2", "A3", "A4"))
    B = tuple(_block(getattr(params, k), n, k) for k in ("B1", "B2", "B3", "B4"))
    return HomoclinicJump(A, B, params.sigma, params.upsilon, params.epsilon, params.R_prime,
                          np.asarray(center, float), np.asarray(center_plus, float),
                          params.N_plus, params.N_minus, params.omega_prime, params.nu,
                          params.nu_prime, params.jump_radius)


def transit_maps(jump: HomoclinicJump, system: NormalFormSystem):
    """Chart-transit maps (Phi^{N_+}, Phi^{N_-}) and the full homoclinic excursion.

    The excursion of a base-chart point near the unstable leaf is
    Phi^{N_+} o phi o Phi^{N_-}: carried out along W^u to the minus chart,
    jumped across the channel, and carried in along W^s.
    """
    plus = system.iterate_map(jump.N_plus, "transit+")
    minus = system.iterate_map(jump.N_minus, "transit-")

    def excursion(X):
        return plus(jump.apply_jump(minus(X), strict=False))

    return plus, minus, excursion


class ExtendedSystem:
    """Skew product Psi on (s, u, q, p, theta, xi).

        z'     = G~(z; xi) + C_ext eps^L cos(2 pi theta_1) e_q
        theta' = theta + omega_theta + theta_speed * p_1
        xi'    = xi + C_ext eps^L sin(2 pi theta_1)

    G~(.; xi) is the base normal form with rotation omega + 0.1 (xi_1 - xi*_1).
    """

    def __init__(self, params: ModelParams):
        if params.L is None:
            raise ModelError("extended system needs L")
        self.params = params
        self.base = NormalFormSystem(params)
        self.ell1, self.ell2 = max(params.ell1, 0), max(params.ell2, 0)
        xs = params.xi_star if params.xi_star is not None else (0.5,) * self.ell2
        self.xi_star = np.asarray(xs, dtype=float).reshape(-1)
        if self.xi_star.size != self.ell2:
            raise ModelError("xi_star dimension mismatch")
        self.C_ext = 1.0 if params.C_ext is None else float(params.C_ext)
        self.coupling = self.C_ext * params.epsilon ** params.L
        self.omega_theta = np.mod(np.sqrt(2.0) * np.arange(1, self.ell1 + 1), 1.0)

    @property
    def dim(self) -> int:
        return self.base.dim + self.ell1 + self.ell2

    def _omega(self, xi):
        om = np.asarray(self.base.twist.omega)
        if self.ell2 == 0:
            return np.broadcast_to(om, (xi.shape[0], om.size))
        return om + 0.1 * (xi[:, :1] - self.xi_star[0])

    def _step(self, X):
        d = self.base.dim
        z, th, xi = X[:, :d], X[:, d:d + self.ell1], X[:, d + self.ell1:]
        s, u, q, p = self.base.split(z)
        s1, u1 = self.base.hyp.step(s, u)
        q1, p1 = self.base.twist.step(q, p, self._omega(xi))
        c = np.cos(2 * np.pi * th[:, :1]) if self.ell1 else np.ones((X.shape[0], 1))
        sn = np.sin(2 * np.pi * th[:, :1]) if self.ell1 else np.zeros((X.shape[0], 1))
        q1 = q1 + self.coupling * c
        th1 = th + self.omega_theta + self.params.theta_speed * p[:, :1]
        xi1 = xi + self.coupling * sn
        return np.concatenate([s1, u1, q1, p1, th1, xi1], axis=1)

    def _step_jac(self, X):
        d = self.base.dim
        m, n = self.base.m, self.base.n
        D = self.dim
        z, th = X[:, :d], X[:, d:d + self.ell1]
        J = np.zeros((X.shape[0], D, D))
        J[:, :d, :d] = self.base._step_jac(z)
        iq = slice(2 * m, 2 * m + n)
        ip = 2 * m + n
        if self.ell2:
            J[:, iq, d + self.ell1] += 0.1  # d q' / d xi_1 through omega(xi)
        ith = np.arange(d, d + self.ell1)
        J[:, ith, ith] = 1.0
        if self.ell1:
            J[:, ith, ip] += self.params.theta_speed
            t = 2 * np.pi * th[:, 0]
            J[:, iq, d] += (-self.coupling * 2 * np.pi * np.sin(t))[:, None]
        ixi = np.arange(d + self.ell1, D)
        J[:, ixi, ixi] = 1.0
        if self.ell1 and self.ell2:
            J[:, ixi, d] += (self.coupling * 2 * np.pi * np.cos(2 * np.pi * th[:, 0]))[:, None]
        return J

    def apply_psi(self, X, steps: int = 1, check: bool = True, with_jac: bool = False,
                  record: bool = False):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X).copy()
        if steps < 0:
            raise ModelError("the extended map is iterated forward only")
        J = np.broadcast_to(np.eye(self.dim), (X.shape[0], self.dim, self.dim)).copy() if with_jac else None
        traj = [X.copy()] if record else None
        d0 = self.base.dim + self.ell1
        for _ in range(int(steps)):
            if with_jac:
                J = self._step_jac(X) @ J
            X = self._step(X)
            if check and self.ell2 and (np.any(X[:, d0:] < 0.0) or np.any(X[:, d0:] > 1.0)):
                raise ModelError("xi left [0,1]^ell2")
            if record:
                traj.append(X.copy())
        out = [X[0] if single else X]
        if with_jac:
            out.append(J[0] if single else J)
        if record:
            out.append(np.stack(traj))
        return out[0] if len(out) == 1 else tuple(out)

    def iterate_map(self, steps: int, name: Optional[str] = None) -> DiffMap:
        ext = self

        def f(X):
            return ext.apply_psi(X, steps, check=False)

        def jac(X):
            return ext.apply_psi(X, steps, check=False, with_jac=True)[1]

        def traj(X):
            return ext.apply_psi(X, steps, check=False, record=True)[1]

        return DiffMap(f, jac, None, self.dim, name or f"Psi^{steps}", int(steps), traj)
