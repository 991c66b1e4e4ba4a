import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caw.checker import INEQUALITY_NAMES, check_chain, check_link
from caw.normal_form import ModelParams
from caw.scheduler import (ChainSchedule, LinkConstants, ScheduleInfeasible, StageRatios, build_chain,
                           compute_orders, extend_chain, glue_links, glue_terms, leaves_for_drift,
                           minimal_L, prime_stage, star_ranges)


def chain_for(tup, eps, C=1e-5, leaves=((0.5,),), eta=0.3, **model):
    s, t, u, k = tup
    p = ModelParams(epsilon=eps, sigma=s, tau=t, upsilon=u, k=k, **model)
    o = compute_orders(s, t, u, k, linear_twist=True)
    c = LinkConstants.from_model(p, C=C)
    return build_chain(o, c, [list(x) for x in leaves], eta), o, c


def test_order_examples():
    o = compute_orders(1, 1, 1, 7)
    assert (o.kappa, o.rho, o.admissible) == (1, 2, True)
    o = compute_orders(0, 0, 0, 1)
    assert (o.kappa, o.rho, o.admissible) == (0, 0, True)
    o = compute_orders(1, 3, 0, 10)
    assert o.rho == 3 and not o.admissible and o.k_required == 13


def test_uniform_link_feasible_and_rechecked():
    p = ModelParams(epsilon=0.1, k=7)
    o = compute_orders(0, 0, 0, 7, linear_twist=True)
    c = LinkConstants.from_model(p)
    ch = build_chain(o, c, [[0.5], [0.6]], 0.3)
    assert len(ch.links) == 2
    for link in ch.links:
        res = check_link(link, o, c)
        assert [r.name for r in res] == list(INEQUALITY_NAMES)
        assert all(r.ok and r.slack > 0 for r in res)
    # K is O(1) in the uniform regime
    Ks = [chain_for((0, 0, 0, 7), e, C=1.0)[0].links[0].K for e in (0.1, 0.05, 0.025)]
    assert max(Ks) / min(Ks) < 1.5


def test_huge_nu_prime_fails_step3_beta():
    p = ModelParams(epsilon=0.1, k=7, nu_prime=1e3)
    o = compute_orders(0, 0, 0, 7, linear_twist=True)
    c = LinkConstants.from_model(p, M_max=1)
    with pytest.raises(ScheduleInfeasible) as e:
        build_chain(o, c, [[0.5]], 0.3)
    assert e.value.witness["check"] == "step3.beta"


def test_nonuniform_example_order():
    vals = {}
    for eps in (0.1, 0.05, 0.025):
        ch, o, c = chain_for((1, 1, 1, 7), eps)
        link = ch.links[0]
        assert link.hat.gamma >= 0.5
        vals[eps] = link.K * eps ** 3
    assert max(vals.values()) / min(vals.values()) < 4


def test_glue_star_ranges_and_beta_rhs():
    p = ModelParams(epsilon=0.1, sigma=1, upsilon=1, k=7, R_prime=1.0)
    c = LinkConstants.from_model(p)
    assert (c.C4, c.C7, c.C3) == (1.0, 1.0, 0.1)
    r = star_ranges(c, 0.5)
    assert r["zeta"] == (0.0, 1.0)
    o = compute_orders(1, 0, 1, 7, linear_twist=True)
    pr, stars = prime_stage(o, c, 0.3, zeta_star=0.5)
    t = glue_terms(pr, o, c)
    assert sum(t["beta"]) > 0 and sum(t["delta"]) > 0


def test_glue_requires_invertible_blocks():
    p = ModelParams(epsilon=0.1, k=7)
    c = LinkConstants.from_model(p, C4=0.0)
    o = compute_orders(0, 0, 0, 7, linear_twist=True)
    with pytest.raises(ScheduleInfeasible) as e:
        glue_links(StageRatios(0.01, 0.01, 0.01, 0.01), o, c, 0.3)
    assert e.value.witness["check"] == "invertibility"


def test_leaves_for_drift():
    assert leaves_for_drift(1.0, 0.1, 1) == 10


def test_k_gate_before_links():
    o = compute_orders(1, 1, 0, 1)
    p = ModelParams(epsilon=0.1, sigma=1, tau=1, k=1)
    with pytest.raises(ScheduleInfeasible) as e:
        build_chain(o, LinkConstants.from_model(p), [[0.5]], 0.3)
    assert e.value.witness["check"] == "k-admissibility" and "link" not in e.value.witness


def test_extend_chain_admissible_and_escape():
    assert minimal_L([0, 1e4], 0.1, 1e-2, 1.0) == 6
    ch, o, c = chain_for((0, 0, 0, 7), 0.1, C=0.01, leaves=[(0.05 + 0.1 * j,) for j in range(10)], eta=0.02,
                         mu_minus=1.08, mu_plus=1.12, delta_u=0.02)
    extend_chain(ch, 10, 1.0, [0.5], 1e-2, 2, [0.4142], 0.1)
    ext = ch.extended
    assert max(ext["Xi_half_width"]) < 1e-2
    with pytest.raises(ScheduleInfeasible) as e:
        extend_chain(ch, 3, 1.0, [0.5], 1e-2, 2, [0.4142], 0.1)
    w = e.value.witness
    assert w["check"] == "xi-escape" and w["minimal_L"] > 3


def test_extend_decoupled_limit():
    ch, *_ = chain_for((0, 0, 0, 7), 0.1, C=1.0, leaves=[(0.5,), (0.6,)])
    extend_chain(ch, 10, 0.0, [0.5], 1e-2, 2)
    assert all(h == 0.0 for h in ch.extended["Xi_half_width"])


def test_chain_length_cap():
    ch, *_ = chain_for((0, 0, 0, 7), 0.5, C=1e-5, leaves=[(0.1 * j + 0.1,) for j in range(5)])
    with pytest.raises(ScheduleInfeasible) as e:
        extend_chain(ch, 10, 1.0, [0.5], 1e-2, 2)
    assert e.value.witness["check"] == "chain-length"


def test_json_round_trip():
    ch, o, c = chain_for((1, 0, 1, 5), 0.1, leaves=[(0.5,), (0.6,)])
    d = json.loads(json.dumps(ch.to_json()))
    ch2 = ChainSchedule.from_json(d)
    assert json.dumps(ch2.to_json(), sort_keys=True) == json.dumps(ch.to_json(), sort_keys=True)
    assert check_chain(ch2)["ok"]


@settings(max_examples=20)
@given(st.sampled_from([2.0 ** -e for e in range(3, 8)]), st.sampled_from([(0, 0, 0, 1), (1, 1, 1, 7), (1, 0, 1, 5)]))
def test_every_emitted_link_rechecks(eps, tup):
    ch, o, c = chain_for(tup, eps, leaves=[(0.5,), (0.5 + eps ** tup[2],)])
    rep = check_chain(ch)
    assert rep["ok"] and rep["min_slack"] > 0


@settings(max_examples=15)
@given(st.integers(7, 14), st.integers(1, 4))
def test_monotone_slack_in_k(k, dk):
    """Raising k with the link fixed strictly increases slack of every eps^k-bearing inequality."""
    ch, o, c = chain_for((0, 0, 0, 7), 0.1, C=1.0)
    link = ch.links[0]
    bearing = ["step1.gamma", "step1.delta", "step2.gamma", "step2.delta", "step3.gamma", "step3.delta"]
    lo = {r.name: r.slack for r in check_link(link, compute_orders(0, 0, 0, k, True), c)}
    hi = {r.name: r.slack for r in check_link(link, compute_orders(0, 0, 0, k + dk, True), c)}
    assert min(hi[n] for n in bearing) > min(lo[n] for n in bearing)


@settings(max_examples=60)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.sampled_from([0, 1, 2]),
       st.floats(0.01, 0.3))
def test_gluing_positivity(zf, af, df, kap, eps):
    p = ModelParams(epsilon=eps, sigma=kap, upsilon=kap, k=7)
    c = LinkConstants.from_model(p)
    o = compute_orders(kap, 0, kap, 4 * kap + 1, linear_twist=True)
    z_hi = min(c.C4, c.C7) / c.R_prime
    zeta = zf * z_hi
    r = star_ranges(c, zeta)
    pr, _ = prime_stage(o, c, 0.3, zeta_star=zeta, alpha_star=af * r["alpha"][1], delta_star=df * r["delta"][1])
    t = glue_terms(pr, o, c)
    assert sum(t["beta"]) > 0 and sum(t["delta"]) > 0


@settings(max_examples=20)
@given(st.integers(2, 10), st.integers(8, 14))
def test_extended_invariant(nlinks, L):
    ch, *_ = chain_for((0, 0, 0, 7), 0.1, C=1.0, leaves=[(0.05 + 0.09 * j,) for j in range(nlinks)])
    extend_chain(ch, L, 1.0, [0.5], 1e-2, 2)
    half, om = ch.extended["Xi_half_width"], ch.extended["Omega"]
    assert all(a <= b for a, b in zip(half, half[1:])) and half[-1] <= 1e-2
    assert all(a < b for a, b in zip(om, om[1:]))
