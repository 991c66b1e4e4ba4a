"""Independent evaluation of the sixteen link inequalities.

This module does not share code with the solver beyond the data classes, so a
schedule can be re-verified from its JSON form alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["InequalityResult", "check_link", "check_chain", "INEQUALITY_NAMES"]

INEQUALITY_NAMES = tuple(f"{g}.{v}" for g in ("step1", "step2", "step3", "glue")
                         for v in ("alpha", "beta", "gamma", "delta"))


@dataclass
class InequalityResult:
    name: str
    lhs: float
    rhs: float
    relation: str       # ">" or "<"
    slack: float        # signed gap divided by the dominant term
    ok: bool

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "relation": self.relation,
                "slack": self.slack, "ok": self.ok}


def _safe_pow(b: float, e: float) -> float:
    if b <= 0:
        return 0.0
    return math.exp(min(e * math.log(b), 700.0))


def _result(name, lhs_terms, rhs_terms, rel) -> InequalityResult:
    lhs, rhs = float(sum(lhs_terms)), float(sum(rhs_terms))
    D = max([abs(t) for t in lhs_terms] + [abs(t) for t in rhs_terms] + [1e-300])
    gap = lhs - rhs if rel == ">" else rhs - lhs
    slack = gap / D if math.isfinite(D) else (math.inf if gap > 0 else -math.inf)
    return InequalityResult(name, lhs, rhs, rel, float(slack), bool(gap > 0))


def check_link(link, params, c, slack_floor: float = 0.05) -> list:
    """Evaluate every displayed inequality of one link; returns 16 results in fixed order."""
    eps, k, tau, sig, ups = c.epsilon, params.k, params.tau, params.sigma, params.upsilon
    N, K, M = link.N, link.K, link.M
    a, b, g, d = link.plain.alpha, link.plain.beta, link.plain.gamma, link.plain.delta
    at, bt, gt, dt = link.tilde.alpha, link.tilde.beta, link.tilde.gamma, link.tilde.delta
    ah, bh, gh, dh = link.hat.alpha, link.hat.beta, link.hat.gamma, link.hat.delta
    ap, bp, gp, dp = link.prime.alpha, link.prime.beta, link.prime.gamma, link.prime.delta
    nx = link.next_plain
    ek = eps ** k
    lp, mm = c.lambda_plus, c.mu_minus
    om = link.omega_prime if link.omega_prime else c.omega_prime
    out = [
        _result("step1.alpha", [at], [a * lp ** N, 2 * c.nu * lp ** N], ">"),
        _result("step1.beta", [bt], [b * _safe_pow(mm, N)], "<"),
        _result("step1.gamma", [gt], [g, N * c.T_plus * d, c.C * N * N * ek], ">"),
        _result("step1.delta", [dt], [d, -c.C * N * ek], "<"),
        _result("step2.alpha", [ah], [at * lp ** K], ">"),
        _result("step2.beta", [bh], [bt * _safe_pow(mm, K)], "<"),
        _result("step2.gamma", [gh], [eps ** tau * K * c.T_minus * dt, -K * c.R * dt * dt, -gt,
                                      -c.C * K * K * ek], "<"),
        _result("step2.delta", [dh], [dt, c.C * K * ek], ">"),
        _result("step3.alpha", [ap * _safe_pow(lp, -M)], [ah], ">"),
        _result("step3.beta", [bp * mm ** (-M), 2 * c.nu_prime * mm ** (-M)], [bh], "<"),
        _result("step3.gamma", [gp, M * c.T_plus * dp, c.C * M * M * ek, 2 * om], [gh], "<"),
        _result("step3.delta", [dp, -c.C * M * ek], [dh], ">"),
    ]
    z2 = c.R_prime * max(ap, bp, gp, dp) ** 2
    es, eu = eps ** sig, eps ** ups
    out += [
        _result("glue.alpha", [nx.alpha], [c.C1 * es * ap, c.C2 * bp, z2], ">"),
        _result("glue.beta", [nx.beta], [-c.C3 * ap, c.C4 * es * bp, -z2], "<"),
        _result("glue.gamma", [nx.gamma], [c.C5 * gp, c.C6 * eu * dp, z2], ">"),
        _result("glue.delta", [nx.delta], [c.C7 * eu * gp, -c.C8 * dp, -z2], "<"),
    ]
    return out


def check_chain(chain) -> dict:
    """Check every link plus the eta caps on plain stages; summary dict with per-link results."""
    links = []
    ok = True
    min_slack = math.inf
    for i, link in enumerate(chain.links):
        res = check_link(link, chain.params, chain.constants, chain.slack_floor)
        caps = [("plain.cap", max(link.plain.alpha, link.plain.beta, link.plain.delta) < chain.eta)]
        good = all(r.ok for r in res) and all(v for _, v in caps)
        ok &= good
        min_slack = min(min_slack, min(r.slack for r in res))
        links.append({"link": i, "ok": good, "results": [r.to_json() for r in res],
                      "caps": dict(caps)})
    return {"ok": bool(ok), "min_slack": float(min_slack), "links": links}
