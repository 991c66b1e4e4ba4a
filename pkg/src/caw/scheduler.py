"""Aspect-ratio schedule for chains of windows.

Each link i carries four windows (plain, tilde, hat, prime) and three iterate
counts (N, K, M).  Ratios are assigned in closed form in the order of the
construction: prime stage from the order prescription, plain stage by gluing,
then Step 1 (choose N, tilde), Step 3 bounds (choose M), Step 2 (choose K,
hat).  Every choice sits strictly inside its feasible interval with slack at
least ``slack_floor`` times the dominant term of the inequality.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .normal_form import ModelParams, jump_constants, make_jump

__all__ = [
    "OrderParams",
    "compute_orders",
    "LinkConstants",
    "StageRatios",
    "LinkSchedule",
    "ChainSchedule",
    "ScheduleInfeasible",
    "prime_stage",
    "glue_links",
    "solve_link",
    "build_chain",
    "extend_chain",
    "leaves_for_drift",
    "minimal_L",
]

log = logging.getLogger(__name__)

STAGES = ("plain", "tilde", "hat", "prime")
EXP_LIMIT = 700.0


class ScheduleInfeasible(RuntimeError):
    def __init__(self, witness: dict):
        super().__init__(witness.get("check", "infeasible"))
        self.witness = witness


@dataclass(frozen=True)
class OrderParams:
    sigma: float
    tau: float
    upsilon: float
    k: float
    kappa: float
    rho: float
    admissible: bool
    linear_twist: bool = False

    @property
    def rho_eff(self) -> float:
        """Order of the tilde p-size.  With a linear twist (R = 0) only rho >= 2 kappa is needed."""
        return max(2 * self.sigma, 2 * self.upsilon) if self.linear_twist else self.rho

    @property
    def k_required(self) -> float:
        return 2 * (self.rho_eff + self.tau) + 1


def compute_orders(sigma: float, tau: float, upsilon: float, k: float,
                   linear_twist: bool = False) -> OrderParams:
    if min(sigma, tau, upsilon, k) < 0:
        raise ValueError("orders must be nonnegative")
    kappa = max(sigma, upsilon)
    rho = max(2 * sigma, 2 * upsilon, tau)
    rho_used = max(2 * sigma, 2 * upsilon) if linear_twist else rho
    admissible = k >= 2 * (rho_used + tau) + 1
    return OrderParams(float(sigma), float(tau), float(upsilon), float(k), float(kappa), float(rho),
                       bool(admissible), bool(linear_twist))


@dataclass(frozen=True)
class LinkConstants:
    epsilon: float
    lambda_minus: float
    lambda_plus: float
    mu_minus: float
    mu_plus: float
    T_minus: float
    T_plus: float
    C: float            # constant of the C |N|^2 eps^k terms
    R: float
    R_prime: float
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    C7: float
    C8: float
    nu: float
    nu_prime: float
    omega_prime: float
    N_min: int = 1
    M_min: int = 1
    M_max: int = 10_000
    alpha_tilde_cap: float = 0.5
    beta_hat_cap: float = 1.0
    gamma_hat_floor: float = 0.5
    headroom: float = 1.5   # factor above a one-sided lower bound, leaves room for sampled certificates

    @classmethod
    def from_model(cls, p: ModelParams, **kw) -> "LinkConstants":
        jump = make_jump(p, np.zeros(2 * (p.m + p.n)), np.zeros(2 * (p.m + p.n)))
        c = jump.constants
        tw = p.twist()
        base = dict(epsilon=p.epsilon, lambda_minus=p.lambda_minus, lambda_plus=p.lambda_plus,
                    mu_minus=p.mu_minus, mu_plus=p.mu_plus, T_minus=tw.T_minus, T_plus=tw.T_plus,
                    C=tw.shear_constant, R=tw.R, R_prime=p.R_prime, nu=p.nu, nu_prime=p.nu_prime,
                    omega_prime=p.omega_prime, N_min=max(1, p.N_plus), M_min=max(1, p.N_minus), **c)
        base.update(kw)
        return cls(**base)


@dataclass
class StageRatios:
    alpha: float
    beta: float
    gamma: float
    delta: float

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma, self.delta)


@dataclass
class LinkSchedule:
    N: int
    K: int
    M: int
    plain: StageRatios
    tilde: StageRatios
    hat: StageRatios
    prime: StageRatios
    next_plain: StageRatios
    slack: dict = field(default_factory=dict)
    c_K: float = 0.0
    omega_prime: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.N + self.K + self.M

    def stage(self, name: str) -> StageRatios:
        return getattr(self, name)

    def to_json(self) -> dict:
        d = {"N": self.N, "K": self.K, "M": self.M, "c_K": self.c_K, "omega_prime": self.omega_prime}
        for s in STAGES + ("next_plain",):
            d[s] = asdict(getattr(self, s))
        d["slack"] = {k: float(v) for k, v in self.slack.items()}
        d["notes"] = list(self.notes)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "LinkSchedule":
        st = {s: StageRatios(**d[s]) for s in STAGES + ("next_plain",)}
        return cls(int(d["N"]), int(d["K"]), int(d["M"]), st["plain"], st["tilde"], st["hat"],
                   st["prime"], st["next_plain"], dict(d.get("slack", {})), float(d.get("c_K", 0.0)),
                   float(d.get("omega_prime", 0.0)), list(d.get("notes", [])))


@dataclass
class ChainSchedule:
    params: OrderParams
    constants: LinkConstants
    links: list
    leaf_ps: list
    eta: float
    slack_floor: float = 0.05
    extended: Optional[dict] = None

    @property
    def predicted_time(self) -> int:
        return int(sum(l.steps for l in self.links))

    def predicted_order(self, drift: float = 1.0) -> float:
        p = self.params
        return drift * self.constants.epsilon ** (-(p.rho_eff + p.tau + p.upsilon))

    def to_json(self) -> dict:
        return {
            "params": asdict(self.params) | {"rho_eff": self.params.rho_eff},
            "constants": asdict(self.constants),
            "eta": self.eta,
            "slack_floor": self.slack_floor,
            "leaf_ps": [list(map(float, np.atleast_1d(p))) for p in self.leaf_ps],
            "links": [l.to_json() for l in self.links],
            "predicted_time": self.predicted_time,
            "predicted_order": self.predicted_order(),
            "extended": self.extended,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ChainSchedule":
        pd = dict(d["params"])
        pd.pop("rho_eff", None)
        return cls(OrderParams(**pd), LinkConstants(**d["constants"]),
                   [LinkSchedule.from_json(l) for l in d["links"]],
                   [np.asarray(p, dtype=float) for p in d["leaf_ps"]], float(d["eta"]),
                   float(d.get("slack_floor", 0.05)), d.get("extended"))


# --------------------------------------------------------------------------
# interval helpers

def _pow(base: float, e: float) -> float:
    """base**e without overflow; saturates at exp(700)."""
    if base <= 0:
        return 0.0
    x = e * math.log(base)
    return math.exp(min(x, EXP_LIMIT))


def _lo_point(lo: float, D: float, f: float) -> float:
    """Smallest admissible value above ``lo`` with slack f * max(D, x)."""
    return max(lo + f * D, lo / (1.0 - f)) if lo > 0 else lo + f * D


def _hi_point(hi: float, D: float, f: float) -> float:
    return min(hi - f * D, hi / (1.0 + f))


def _between(name: str, lo: float, hi: float, f: float, Dlo: float = 0.0, Dhi: float = 0.0,
             pick: float = 0.5) -> float:
    a, b = _lo_point(lo, Dlo, f), _hi_point(hi, Dhi, f)
    if not a < b:
        raise ScheduleInfeasible({"check": name, "reason": "empty feasible interval",
                                  "lower": float(lo), "upper": float(hi)})
    return a + pick * (b - a)


# --------------------------------------------------------------------------
# prime stage and gluing

def _check_glue_constants(c: LinkConstants):
    if not (c.C4 > 0 and c.C7 > 0):
        raise ScheduleInfeasible({"check": "invertibility",
                                  "reason": "A_4 and B_3 must be invertible (C4, C7 > 0)",
                                  "C4": c.C4, "C7": c.C7})


def star_ranges(c: LinkConstants, zeta_star: float) -> dict:
    """Feasible open ranges of zeta_*, alpha_*, delta_* from the prescription."""
    _check_glue_constants(c)
    z_hi = min(c.C4, c.C7) / c.R_prime
    a_hi = zeta_star if c.C3 == 0 else min(zeta_star, c.C4 / c.C3 * zeta_star * (1 - c.R_prime * zeta_star / c.C4))
    d_hi = zeta_star if c.C8 == 0 else min(zeta_star, c.C7 / c.C8 * zeta_star * (1 - c.R_prime * zeta_star / c.C7))
    return {"zeta": (0.0, z_hi), "alpha": (0.0, a_hi), "delta": (0.0, d_hi)}


def prime_stage(params: OrderParams, c: LinkConstants, eta: float, slack_floor: float = 0.05,
                zeta_star: Optional[float] = None, alpha_star: Optional[float] = None,
                delta_star: Optional[float] = None) -> tuple[StageRatios, dict]:
    """alpha' = eps^{2k} alpha_*, beta' = gamma' = eps^k zeta_*, delta' = eps^{2k} delta_*."""
    _check_glue_constants(c)
    eps, kap, f = c.epsilon, params.kappa, slack_floor
    e1, e2 = eps ** kap, eps ** (2 * kap)
    z_hi = min(c.C4, c.C7) / c.R_prime
    if zeta_star is None:
        # keep the glued alpha below eta: (C1 eps^sigma e2 + C2 e1) z + R' e2 z^2 < eta (1-f)^2 / 2
        a = c.R_prime * e2
        b = c.C1 * eps ** params.sigma * e2 + c.C2 * e1
        cc = 0.5 * eta * (1 - f) ** 2
        z_eta = (-b + math.sqrt(b * b + 4 * a * cc)) / (2 * a) if a > 0 else cc / b
        # leave room for gamma_hat < 1 in Step 3
        z_gam = max(1.0 - 2 * c.omega_prime, 0.0) / (4.0 * e1)
        zeta_star = 0.5 * min(z_hi, z_eta, z_gam)
    if not 0.0 < zeta_star < z_hi:
        raise ScheduleInfeasible({"check": "zeta_star", "reason": "zeta_* outside (0, min(C4,C7)/R')",
                                  "value": zeta_star, "upper": z_hi})
    rng = star_ranges(c, zeta_star)
    if alpha_star is None:
        alpha_star = 0.5 * rng["alpha"][1]
    if delta_star is None:
        delta_star = 0.5 * rng["delta"][1]
    for key, val in (("alpha", alpha_star), ("delta", delta_star)):
        lo, hi = rng[key]
        if not lo < val < hi:
            raise ScheduleInfeasible({"check": f"{key}_star", "reason": "outside feasible range",
                                      "value": val, "lower": lo, "upper": hi})
    pr = StageRatios(e2 * alpha_star, e1 * zeta_star, e1 * zeta_star, e2 * delta_star)
    return pr, {"zeta_star": zeta_star, "alpha_star": alpha_star, "delta_star": delta_star}


def glue_terms(pr: StageRatios, params: OrderParams, c: LinkConstants) -> dict:
    eps = c.epsilon
    es, eu = eps ** params.sigma, eps ** params.upsilon
    a, b, g, d = pr.as_tuple()
    z2 = c.R_prime * max(a, b, g, d) ** 2
    return {
        "alpha": (c.C1 * es * a, c.C2 * b, z2),
        "beta": (-c.C3 * a, c.C4 * es * b, -z2),
        "gamma": (c.C5 * g, c.C6 * eu * d, z2),
        "delta": (c.C7 * eu * g, -c.C8 * d, -z2),
    }


def glue_links(prev_prime: StageRatios, params: OrderParams, c: LinkConstants, eta: float,
               slack_floor: float = 0.05) -> StageRatios:
    """Plain-stage ratios of the next link from the prime stage of the previous one."""
    _check_glue_constants(c)
    f = slack_floor
    t = glue_terms(prev_prime, params, c)
    D = {k: max(abs(x) for x in v) for k, v in t.items()}
    lo_a, hi_b, lo_g, hi_d = sum(t["alpha"]), sum(t["beta"]), sum(t["gamma"]), sum(t["delta"])
    for name, hi in (("glue.beta", hi_b), ("glue.delta", hi_d)):
        if not hi > 0:
            raise ScheduleInfeasible({"check": name, "reason": "right-hand side not positive", "value": hi})
    alpha = _between("glue.alpha", lo_a, eta, f, D["alpha"], eta)
    beta = _between("glue.beta", 0.0, min(_hi_point(hi_b, D["beta"], f), eta), f, 0.0, 0.0)
    gamma = _lo_point(lo_g, D["gamma"], f) * c.headroom
    delta = _between("glue.delta", 0.0, min(_hi_point(hi_d, D["delta"], f), eta), f, 0.0, 0.0)
    return StageRatios(alpha, beta, gamma, delta)


# --------------------------------------------------------------------------
# one link

def _shear_terms(K: int, tilde: StageRatios, params: OrderParams, c: LinkConstants):
    eps = c.epsilon
    return (eps ** params.tau * K * c.T_minus * tilde.delta, -K * c.R * tilde.delta ** 2,
            -tilde.gamma, -c.C * K * K * eps ** params.k)


def solve_link(params: OrderParams, c: LinkConstants, plain: StageRatios, prime: StageRatios,
               eta: float, slack_floor: float = 0.05, next_plain: Optional[StageRatios] = None) -> LinkSchedule:
    if not params.admissible:
        raise ScheduleInfeasible({"check": "k-admissibility", "k": params.k,
                                  "required": params.k_required})
    f = slack_floor
    eps, k = c.epsilon, params.k
    lp, lm, mm = c.lambda_plus, c.lambda_minus, c.mu_minus
    notes = []
    omega_p = c.omega_prime
    if omega_p >= 0.5:
        omega_p = 0.5 - eta / 4
        notes.append(f"omega_prime shifted to {omega_p:.6g} (< 1/2)")
        log.info("omega_prime >= 1/2 shifted to %g", omega_p)
    al, be, ga, de = plain.as_tuple()

    # Step 1 ---------------------------------------------------------------
    N = max(1, c.N_min)
    while _lo_point((al + 2 * c.nu) * lp ** N, 0.0, f) * c.headroom > c.alpha_tilde_cap:
        N += 1
        if N > 10_000:
            raise ScheduleInfeasible({"check": "step1.alpha", "reason": "no N brings the s-size below cap"})
    lo = (al + 2 * c.nu) * lp ** N
    a_t = _lo_point(lo, max(al * lp ** N, 2 * c.nu * lp ** N), f) * c.headroom
    hi = be * _pow(mm, N)
    b_t = _between("step1.beta", 0.0, hi, f, 0.0, hi)
    g_terms = (ga, N * c.T_plus * de, c.C * N * N * eps ** k)
    g_t = _lo_point(sum(g_terms), max(g_terms), f) * c.headroom
    hi_d = de - c.C * N * eps ** k
    if not hi_d > 0:
        raise ScheduleInfeasible({"check": "step1.delta", "reason": "delta - C N eps^k not positive",
                                  "lhs": de, "rhs": c.C * N * eps ** k})
    d_cap = _hi_point(hi_d, max(de, c.C * N * eps ** k), f)
    d_order = eps ** (params.rho_eff - 2 * params.kappa) * d_cap
    d_twist = eps ** params.tau * c.T_minus / (2 * c.R) if c.R > 0 else math.inf
    d_t = 0.5 * min(d_cap, d_order, d_twist)
    tilde = StageRatios(a_t, b_t, g_t, d_t)

    # Step 3 lower/upper bounds on hat given prime ---------------------------
    ap, bp, gp, dp = prime.as_tuple()
    M = max(1, c.M_min)
    while _lo_point((bp + 2 * c.nu_prime) * mm ** (-M), 0.0, f) > 0.5 * c.beta_hat_cap:
        M += 1
        if M > c.M_max:
            M -= 1
            lhs = (bp + 2 * c.nu_prime) * mm ** (-M)
            raise ScheduleInfeasible({"check": "step3.beta",
                                      "reason": "(beta' + 2 nu') mu_-^-M < beta_hat cannot hold",
                                      "lhs": lhs, "rhs": c.beta_hat_cap, "M": M})
    g3 = (gp, M * c.T_plus * dp, c.C * M * M * eps ** k, 2 * omega_p)
    g_hat = max(c.gamma_hat_floor, _lo_point(sum(g3), max(g3), f))
    if not g_hat < 1.0:
        raise ScheduleInfeasible({"check": "step3.gamma", "reason": "gamma_hat must stay below 1",
                                  "lhs": sum(g3), "rhs": 1.0})

    # Step 2: K ----------------------------------------------------------------
    def gamma_ok(K):
        terms = _shear_terms(K, tilde, params, c)
        hi = sum(terms)
        D = max(max(abs(x) for x in terms), g_hat)
        return hi - g_hat >= f * D and g_hat <= hi / (1 + f), hi

    K = 1
    prev = -math.inf
    while True:
        ok, val = gamma_ok(K)
        if ok:
            break
        if val <= prev or K > 2 ** 40:
            raise ScheduleInfeasible({"check": "step2.gamma",
                                      "reason": "shear never dominates gamma_hat (k too small?)",
                                      "lhs": g_hat, "rhs": val, "K": K})
        prev = val
        K *= 2
    lo_k, hi_k = K // 2, K
    while hi_k - lo_k > 1:
        mid = (lo_k + hi_k) // 2
        if gamma_ok(mid)[0]:
            hi_k = mid
        else:
            lo_k = mid
    K = hi_k if not gamma_ok(lo_k)[0] or lo_k < 1 else lo_k

    def hat_intervals(K):
        out = {}
        out["alpha"] = (a_t * lp ** K, ap * _pow(lp, -M))
        out["beta"] = ((bp + 2 * c.nu_prime) * mm ** (-M), min(b_t * _pow(mm, K), c.beta_hat_cap))
        out["delta"] = (d_t + c.C * K * eps ** k, dp - c.C * M * eps ** k)
        return out

    def hats_ok(K):
        for lo_, hi_ in hat_intervals(K).values():
            if not _lo_point(lo_, lo_, f) < _hi_point(hi_, hi_, f):
                return False
        return True

    tries = 0
    while not hats_ok(K):
        K += max(1, K // 16)
        tries += 1
        if tries > 400 or not gamma_ok(K)[0]:
            iv = hat_intervals(K)
            bad = next(n for n, (a, b) in iv.items()
                       if not _lo_point(a, a, f) < _hi_point(b, b, f))
            raise ScheduleInfeasible({"check": f"step2.{bad}", "reason": "hat interval empty",
                                      "lower": iv[bad][0], "upper": iv[bad][1], "K": K})
    iv = hat_intervals(K)
    hat = StageRatios(
        _between("hat.alpha", *iv["alpha"], f, iv["alpha"][0], iv["alpha"][1]),
        _between("hat.beta", *iv["beta"], f, iv["beta"][0], iv["beta"][1]),
        g_hat,
        _between("hat.delta", *iv["delta"], f, max(d_t, c.C * K * eps ** k), max(dp, c.C * M * eps ** k)),
    )
    if next_plain is None:
        next_plain = glue_links(prime, params, c, eta, f)
    link = LinkSchedule(N, K, M, plain, tilde, hat, prime, next_plain, {},
                        K * eps ** (params.rho_eff + params.tau), omega_p, notes)
    from .checker import check_link  # local import keeps the checker an independent module
    res = check_link(link, params, c, f)
    link.slack = {r.name: r.slack for r in res}
    bad = [r for r in res if not r.ok]
    if bad:
        r = bad[0]
        raise ScheduleInfeasible({"check": r.name, "reason": "inequality violated after assignment",
                                  "lhs": r.lhs, "rhs": r.rhs})
    return link


# --------------------------------------------------------------------------
# chains

def leaves_for_drift(drift: float, epsilon: float, upsilon: float, c_star: float = 1.0) -> int:
    """Number of leaf-to-leaf moves of size c_* eps^upsilon needed for a total p-drift."""
    step = c_star * epsilon ** upsilon
    return int(math.ceil(drift / step - 1e-9))


def build_chain(params: OrderParams, c: LinkConstants, leaf_ps: Sequence, eta: float,
                slack_floor: float = 0.05, **prime_kw) -> ChainSchedule:
    if not params.admissible:
        raise ScheduleInfeasible({"check": "k-admissibility", "k": params.k,
                                  "required": params.k_required})
    if len(leaf_ps) < 1:
        raise ValueError("need at least one leaf")
    leaf_ps = [np.atleast_1d(np.asarray(p, dtype=float)) for p in leaf_ps]
    spacing = [float(np.max(np.abs(b - a))) for a, b in zip(leaf_ps, leaf_ps[1:])]
    scale = c.epsilon ** params.upsilon
    for sp in spacing:
        if not 0.01 * scale <= sp <= 100 * scale:
            log.warning("leaf spacing %g is not of order eps^upsilon = %g", sp, scale)
    prime, _ = prime_stage(params, c, eta, slack_floor, **prime_kw)
    plain = glue_links(prime, params, c, eta, slack_floor)
    links = []
    for i in range(len(leaf_ps)):
        try:
            link = solve_link(params, c, plain, prime, eta, slack_floor)
        except ScheduleInfeasible as e:
            e.witness.setdefault("link", i)
            raise
        links.append(link)
        plain = link.next_plain
    return ChainSchedule(params, c, links, leaf_ps, eta, slack_floor)


def minimal_L(omegas: Sequence[float], epsilon: float, a_star: float, C_j: float, L_max: int = 200) -> int:
    top = max(omegas) if len(omegas) else 0.0
    for L in range(1, L_max + 1):
        if C_j * top * epsilon ** L <= a_star * (1 + 1e-12):  # equality counts despite rounding
            return L
    return -1


def theta_velocity(omega_theta: np.ndarray, speed: float) -> tuple[float, float]:
    """Per-step theta advance lies in [v_min, v_max] for p in [0, 1]."""
    if omega_theta.size == 0:
        return 0.0, 0.0
    return float(np.min(omega_theta)), float(np.max(omega_theta) + speed)


def grow_theta(interval, n: int, v: tuple[float, float], margin: float = 0.05, rel: float = 0.0):
    lo, hi = interval
    pad = margin + rel * (hi - lo)
    return (lo + n * v[0] - pad, hi + n * v[1] + pad)


def extend_chain(chain: ChainSchedule, L: int, C_ext: float, xi_star, a_star: float, K_cap: float,
                 omega_theta=(), theta_speed: float = 0.1, theta0=(0.0, 1.0),
                 C_factor: Optional[float] = None) -> ChainSchedule:
    """Attach Theta_j / Xi_j tubes for the skew-product extension."""
    eps = chain.constants.epsilon
    xi_star = np.atleast_1d(np.asarray(xi_star, dtype=float))
    if np.any(xi_star - a_star <= 0.0) or np.any(xi_star + a_star >= 1.0):
        raise ScheduleInfeasible({"check": "xi-star", "reason": "Xi* must lie in the interior of [0,1]^ell2"})
    nlinks = len(chain.links)
    if nlinks > eps ** (-K_cap):
        raise ScheduleInfeasible({"check": "chain-length", "reason": "N > eps^-K",
                                  "N": nlinks, "cap": eps ** (-K_cap)})
    Cj = C_ext * (1 + chain.slack_floor) if C_factor is None else C_factor
    steps = [l.steps for l in chain.links]
    omegas = [float(sum(steps[:j])) for j in range(nlinks + 1)]  # Omega_1 = 0, ..., Omega_{N+1}
    half = [Cj * om * eps ** L for om in omegas]
    v = theta_velocity(np.asarray(omega_theta, dtype=float), theta_speed)
    thetas = [tuple(theta0)]
    for n in steps:
        thetas.append(grow_theta(thetas[-1], n, v))
    Lmin = minimal_L(omegas, eps, a_star, Cj)
    ext = {"L": int(L), "C_ext": float(C_ext), "C_j": float(Cj), "xi_star": xi_star.tolist(),
           "a_star": float(a_star), "K_cap": float(K_cap), "Omega": omegas, "Xi_half_width": half,
           "Theta": [list(t) for t in thetas], "minimal_L": Lmin,
           "omega_theta": list(map(float, omega_theta)), "theta_speed": float(theta_speed)}
    for j, h in enumerate(half):
        if h > a_star:
            raise ScheduleInfeasible({"check": "xi-escape", "reason": "Xi_j leaves Xi*", "j": j + 1,
                                      "half_width": h, "a_star": a_star, "minimal_L": Lmin})
    chain.extended = ext
    return chain
