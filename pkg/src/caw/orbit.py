"""Orbits through chains of correctly aligned windows.

Given windows W_0..W_n and maps f_i with f_i(W_i) aligned with W_{i+1}, the
extractor finds z_i in W_i with f_i(z_i) = z_{i+1}.  Unknowns are the
centered window coordinates y_i = (a_i, b_i) (exit, entry).  The free data
are fixed as b_0 = 0 and a_n = 0.  A forward-backward sweep alternates

    backward: solve exit(F_i(a_i, b_i)) = a_{i+1} for a_i   (i = n-1 .. 0)
    forward:  b_{i+1} = entry(F_i(a_i, b_i))               (i = 0 .. n-1)

where F_i is f_i in normalized coordinates.  Exit directions expand forward
and entry directions contract, so both passes are well conditioned.  Each
exit solve starts with Newton from the best cell of a beam bisection over the
exit cube and falls back to refining the beam when Newton fails.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .alignment import check_block_alignment
from .maps import DiffMap
from .normal_form import ExtendedSystem, ModelParams, NormalFormSystem, make_jump
from .scheduler import ChainSchedule, grow_theta
from .windows import Region, Window, box_window, membership

__all__ = ["OrbitRecord", "OrbitError", "AlignmentFailure", "extract_orbit", "run_diffusion",
           "build_diffusion_chain", "DiffusionChain"]

log = logging.getLogger(__name__)
CONTAIN_TOL = 1e-9
XI_FLOOR = 1e-9
TUBE_REL = 0.08   # relative growth of theta/xi stage windows per side and transition
THETA_PAD = 0.01  # absolute theta pad and p-range pad for the theta velocity band
TUBE_SAMPLES = 17  # denser certificate grid for the near-identity tube blocks


class OrbitError(RuntimeError):
    """No candidate survived: signals a false alignment certificate."""


class AlignmentFailure(RuntimeError):
    def __init__(self, witness: dict):
        super().__init__(f"alignment failed at link {witness.get('link')} stage {witness.get('stage')}")
        self.witness = witness


@dataclass
class OrbitRecord:
    points: np.ndarray
    residuals: np.ndarray
    leaf_distances: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterate_counts: list = field(default_factory=list)
    total_steps: int = 0
    p_drift: float = 0.0
    labels: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)
    alignment: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# generic extractor

def _normalized(w1: Window, w2: Window, fmap: DiffMap):
    def F(Y):
        return w2.to_centered(fmap(w1.from_centered(Y)))

    def JF(Y):
        return w2.param_inverse @ fmap.jacobian(w1.from_centered(Y)) @ w1.param_linear

    return F, JF


def _newton(G, JG, a0, accept: float = 0.0, iters: int = 40, J0=None, soft: float = 0.0):
    """Chord-Newton on G(a) = 0 from a0.

    Returns (a, |G|, floor, J): the best iterate inside the cube, its residual,
    whether iteration stalled with steps at rounding level (the floating-point
    floor), and the last Jacobian for reuse.  The Jacobian is refreshed only
    when the residual stops dropping fast.
    """
    a = a0.copy()
    best_a, best_r = None, np.inf
    stall = 0
    J = J0
    prev = np.inf
    floor = False
    for _ in range(iters):
        g = G(a[None, :])[0]
        r = float(np.max(np.abs(g), initial=0.0))
        if not np.isfinite(r):
            break
        inside = np.all(np.abs(a) <= 0.5 + CONTAIN_TOL)
        if inside and r < best_r:
            best_a, best_r, stall = a.copy(), r, 0
        else:
            stall += 1
        if r <= accept or stall >= 3:
            break
        if r <= soft and r > 0.1 * prev:
            floor = True  # progress stalled at rounding level
            break
        if J is None or r > 0.1 * prev:
            J = JG(a[None, :])[0]
        prev = r
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            break
        if np.all(np.abs(step) <= 1e-13 * np.maximum(np.abs(a), 1e-300)):
            floor = True
            break
        a = a - step
    return best_a, best_r, floor or stall >= 3, J


def _children(lo: np.ndarray, hi: np.ndarray) -> list:
    m = lo.size
    mid = 0.5 * (lo + hi)
    out = []
    for bits in range(2 ** m):
        sel = np.array([(bits >> k) & 1 for k in range(m)], dtype=bool)
        out.append((np.where(sel, mid, lo), np.where(sel, hi, mid)))
    return out


def _solve_exit(F, JF, b: np.ndarray, target: np.ndarray, m1: int, beam: int, depth: int,
                a0: Optional[np.ndarray], accept: float, soft: float = 1e-9, J0=None):
    """Find a in the exit cube with exit(F(a, b)) = target.

    Newton stops at ``accept``; a stalled result below ``soft``, or below the rounding
    floor implied by the Jacobian, is accepted.  Otherwise the beam bisection supplies new starts.
    """
    def G(A):
        Y = np.concatenate([A, np.broadcast_to(b, (A.shape[0], b.size))], axis=1)
        return F(Y)[:, :m1] - target

    def JG(A):
        Y = np.concatenate([A, np.broadcast_to(b, (A.shape[0], b.size))], axis=1)
        return JF(Y)[:, :m1, :m1]

    def floor_tol(J):
        # rounding floor of G grows with the expansion of the exit map
        return soft if J is None else max(soft, 64 * np.finfo(float).eps * float(np.linalg.norm(J, np.inf)))

    if a0 is not None:
        a, r, floor, J = _newton(G, JG, a0, accept, J0=J0, soft=soft)
        if a is not None and (r <= accept or (floor and r <= floor_tol(J))):
            return a, r, J
        log.debug("warm Newton stalled at %.3e (floor=%s); falling back to bisection", r, floor)
    cells = [(-0.5 * np.ones(m1), 0.5 * np.ones(m1))]
    best = (None, np.inf, None)
    tried = set()
    for level in range(depth + 1):
        lo, hi = cells[0]
        start = 0.5 * (lo + hi)
        key = tuple(np.round(start, 15))
        if key not in tried:
            tried.add(key)
            a, r, floor, J = _newton(G, JG, start, accept, soft=soft)
            if a is not None and r < best[1]:
                best = (a, r, J)
            if best[1] <= accept or (floor and best[1] <= floor_tol(best[2])):
                return best
        kids = [c for cell in cells for c in _children(*cell)]
        centers = np.array([0.5 * (lo + hi) for lo, hi in kids])
        with np.errstate(over="ignore", invalid="ignore"):
            score = np.max(np.abs(G(centers)), axis=1)
        score = np.where(np.isfinite(score), score, np.inf)
        order = np.lexsort((np.arange(len(kids)), score))  # deterministic tie-break by index
        cells = [kids[i] for i in order[:beam]]
    return best


def extract_orbit(windows: Sequence[Window], maps: Sequence[DiffMap], depth: int = 60,
                  tol: float = 1e-9, beam: int = 4, max_sweeps: int = 60,
                  record: bool = False) -> OrbitRecord:
    """Orbit z_0..z_n with z_i in W_i and maps[i](z_i) = z_{i+1}, residuals in ambient sup-norm."""
    n = len(maps)
    if len(windows) != n + 1:
        raise ValueError("need one more window than maps")
    if n == 0:
        w = windows[0]
        return OrbitRecord(w.center()[None, :], np.zeros(0))
    m1 = windows[0].m1
    if any(w.m1 != m1 for w in windows):
        raise ValueError("exit dimensions differ along the chain")
    normalized = [_normalized(windows[i], windows[i + 1], maps[i]) for i in range(n)]
    Y = [np.zeros(w.dim) for w in windows]
    residuals = np.full(n, np.inf)
    history = []
    jacs = [None] * n
    for sweep in range(max_sweeps):
        accept = 1e-12
        for i in range(n - 1, -1, -1):
            F, JF = normalized[i]
            a0 = Y[i][:m1] if sweep > 0 else np.zeros(m1)
            a, r, jacs[i] = _solve_exit(F, JF, Y[i][m1:], Y[i + 1][:m1], m1, beam,
                                        depth if sweep == 0 else 8, a0, accept, J0=jacs[i])
            if a is None:
                raise OrbitError(f"no candidate cell survives at window {i} (sweep {sweep})")
            Y[i][:m1] = a
        images = []
        for i in range(n):
            img = maps[i](windows[i].from_centered(Y[i][None, :]))
            images.append(img[0])
            Y[i + 1][m1:] = windows[i + 1].to_centered(img)[0][m1:]
        Z = [w.from_centered(y[None, :])[0] for w, y in zip(windows, Y)]
        residuals = np.array([np.max(np.abs(images[i] - Z[i + 1])) for i in range(n)])
        history.append(float(residuals.max()))
        log.debug("sweep %d max residual %.3e", sweep, history[-1])
        if history[-1] <= tol:
            break
        if sweep >= 4 and history[-1] >= 0.999 * history[-5]:
            break  # stagnated at the floating-point floor
    for i, y in enumerate(Y):
        if np.max(np.abs(y)) > 0.5 + CONTAIN_TOL:
            raise OrbitError(f"orbit point {i} left its window")
    points = np.array([w.from_centered(y[None, :])[0] for w, y in zip(windows, Y)])
    trajs = []
    if record:
        for i in range(n):
            if maps[i].trajectory is not None:
                trajs.append(maps[i].trajectory(points[i][None, :])[:, 0, :])
            else:
                trajs.append(np.stack([points[i], maps[i](points[i][None, :])[0]]))
    regions = [membership(w, z, tol=CONTAIN_TOL).value for w, z in zip(windows, points)]
    return OrbitRecord(points, residuals, trajectories=trajs,
                       diagnostics={"sweeps": len(history), "history": history, "regions": regions,
                                    "converged": bool(residuals.max() <= tol)})


# --------------------------------------------------------------------------
# benchmark diffusion

STAGE_EXIT = {"plain": ("u", "p"), "tilde": ("u", "p"), "hat": ("u", "q"), "prime": ("u", "q")}


@dataclass
class DiffusionChain:
    windows: list            # full ambient windows
    block_windows: list      # per window: list of block windows in ambient order
    maps: list
    labels: list             # (link, stage)
    leaf_ps: list
    steps: list              # iterates consumed by each map
    stage_xi: list = field(default_factory=list)


def _axes(m: int, n: int):
    s = list(range(m))
    u = list(range(m, 2 * m))
    q = list(range(2 * m, 2 * m + n))
    p = list(range(2 * m + n, 2 * m + 2 * n))
    return {"s": s, "u": u, "q": q, "p": p}


def _labels(m, n, l1, l2):
    return ([f"s{i}" for i in range(m)] + [f"u{i}" for i in range(m)] + [f"q{i}" for i in range(n)]
            + [f"p{i}" for i in range(n)] + [f"theta{i}" for i in range(l1)] + [f"xi{i}" for i in range(l2)])


def _stage_windows(center, ratios, stage, m, n, ext_c=None, ext_sizes=None, l1=0, l2=0):
    ax = _axes(m, n)
    sizes = np.concatenate([np.full(m, ratios.alpha), np.full(m, ratios.beta),
                            np.full(n, ratios.gamma), np.full(n, ratios.delta)])
    labels = _labels(m, n, l1, l2)
    ex = [i for r in STAGE_EXIT[stage] for i in ax[r]]
    d0 = 2 * (m + n)
    hyp = box_window(center[:2 * m], sizes[:2 * m], [i for i in ex if i < 2 * m], labels[:2 * m])
    cen = box_window(center[2 * m:d0], sizes[2 * m:d0], [i - 2 * m for i in ex if i >= 2 * m], labels[2 * m:d0])
    blocks = [hyp, cen]
    if ext_c is not None:
        full_c = np.concatenate([center, ext_c])
        full_s = np.concatenate([sizes, ext_sizes])
        blocks.append(box_window(ext_c, ext_sizes, [], labels[d0:]))
    else:
        full_c, full_s = center, sizes
    return box_window(full_c, full_s, sorted(ex), labels), blocks


def build_diffusion_chain(system, schedule: ChainSchedule, params: ModelParams, q0: float = 0.0) -> DiffusionChain:
    ext = isinstance(system, ExtendedSystem)
    base = system.base if ext else system
    m, n = base.m, base.n
    d0 = base.dim
    l1 = system.ell1 if ext else 0
    l2 = system.ell2 if ext else 0
    info = schedule.extended or {}
    theta = (0.0, 1.0)
    if ext:
        eps = params.epsilon
        theta = tuple(info.get("Theta", [[0.0, 1.0]])[0])
        xi_star = system.xi_star

    windows, blocks, maps, labels, steps, xis = [], [], [], [], [], []
    half = XI_FLOOR

    def ext_box(th):
        if not ext:
            return None, None
        c = np.concatenate([np.full(l1, 0.5 * (th[0] + th[1])), xi_star])
        s = np.concatenate([np.full(l1, th[1] - th[0]), np.full(l2, 2 * half)])
        xis.append(half)
        return c, s

    leaf_ps = [np.atleast_1d(np.asarray(p, dtype=float)) for p in schedule.leaf_ps]
    nu = np.full(m, params.nu)
    nu_p = np.full(m, params.nu_prime)
    q_start = np.full(n, q0)
    zeros = np.zeros(m)
    for j, link in enumerate(schedule.links):
        pstar = leaf_ps[j]
        plain_c = np.concatenate([nu, zeros, q_start, pstar])
        ys = np.concatenate([zeros, zeros, q_start, pstar])
        tilde_c = base.apply_phi(ys, link.N)
        hat_c = base.apply_phi(tilde_c, link.K)
        shifted = hat_c.copy()
        shifted[2 * m:2 * m + n] += link.omega_prime
        prime_c = base.apply_phi(shifted, link.M)
        prime_c[:m] = 0.0
        prime_c[m:2 * m] = nu_p
        for stage, c, it in (("plain", plain_c, link.N), ("tilde", tilde_c, link.K),
                             ("hat", hat_c, link.M), ("prime", prime_c, 0)):
            if ext and steps:
                # theta speed is bounded using the p-range of the source window; strict
                # relative growth leaves room for the sampled certificate of these blocks
                lo_p, hi_p = windows[-1].bounds()
                pl, ph = lo_p[2 * m + n] - THETA_PAD, hi_p[2 * m + n] + THETA_PAD
                om = system.omega_theta
                v = (float(om.min() + params.theta_speed * pl), float(om.max() + params.theta_speed * ph))
                theta = grow_theta(theta, steps[-1], v, margin=THETA_PAD, rel=TUBE_REL)
                half = (half + system.C_ext * steps[-1] * eps ** params.L) * (1 + 2 * TUBE_REL) + XI_FLOOR
            ec, es = ext_box(theta)
            w, bl = _stage_windows(c, link.stage(stage), stage, m, n, ec, es, l1, l2)
            windows.append(w)
            blocks.append(bl)
            labels.append((j, stage))
            if stage != "prime":
                maps.append(system.iterate_map(it, f"{stage}->{j}"))
                steps.append(it)
        if j + 1 < len(schedule.links):
            nxt = np.concatenate([nu, zeros, prime_c[2 * m:2 * m + n], leaf_ps[j + 1]])
            jump = make_jump(params, prime_c, nxt)
            maps.append(jump.as_map(l1 + l2))
            steps.append(0)
            q_start = prime_c[2 * m:2 * m + n].copy()
    return DiffusionChain(windows, blocks, maps, labels, leaf_ps, steps, xis)


def verify_chain(chain: DiffusionChain, samples: int = 9, cross_samples: int = 3) -> list:
    out = []
    for i, fmap in enumerate(chain.maps):
        rep = check_block_alignment(chain.block_windows[i], chain.block_windows[i + 1], fmap,
                                    samples=samples, cross_samples=cross_samples)
        link, stage = chain.labels[i]
        out.append({"link": link, "stage": stage, "aligned": bool(rep.aligned),
                    "margin": float(rep.margin), "witness": rep.witness})
        if not rep.aligned:
            raise AlignmentFailure({"link": link, "stage": stage, "witness": rep.witness})
    return out


def run_diffusion(system, schedule: ChainSchedule, params: ModelParams, tol: float = 1e-9,
                  verify: bool = True, samples: int = 9, beam: int = 4, depth: int = 60,
                  q0: float = 0.0, record: bool = True) -> OrbitRecord:
    chain = build_diffusion_chain(system, schedule, params, q0)
    if isinstance(system, ExtendedSystem):
        samples = max(samples, TUBE_SAMPLES)
    checks = verify_chain(chain, samples) if verify else []
    rec = extract_orbit(chain.windows, chain.maps, depth=depth, tol=tol, beam=beam, record=True)
    base = system.base if isinstance(system, ExtendedSystem) else system
    ax = _axes(base.m, base.n)
    sel = ax["s"] + ax["u"]
    pax = ax["p"]
    # leaf distance per link: closest approach of the link's trajectory to L_j
    dists = []
    for j in range(len(schedule.links)):
        idx = [i for i, (lk, st) in enumerate(chain.labels[:-1]) if lk == j and i < len(chain.maps)
               and chain.steps[i] > 0]
        traj = np.concatenate([rec.trajectories[i] for i in idx], axis=0)
        d = np.maximum(np.max(np.abs(traj[:, sel]), axis=1),
                       np.max(np.abs(traj[:, pax] - chain.leaf_ps[j]), axis=1))
        dists.append(float(d.min()))
    rec.leaf_distances = np.array(dists)
    rec.iterate_counts = [(l.N, l.K, l.M) for l in schedule.links]
    rec.total_steps = int(sum(chain.steps))
    rec.p_drift = float(np.max(np.abs(rec.points[-1][pax] - rec.points[0][pax])))
    rec.labels = chain.labels
    rec.alignment = checks
    rec.diagnostics["stage_xi_half_width"] = chain.stage_xi
    if not record:
        rec.trajectories = []
    return rec
