"""Run orchestration shared by the CLI and the tests."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Optional

import numpy as np

from .config import RunConfig
from .normal_form import ExtendedSystem, ModelParams, NormalFormSystem
from .orbit import OrbitRecord, _axes, _labels, run_diffusion
from .scheduler import ChainSchedule, LinkConstants, build_chain, compute_orders, extend_chain
from .twist import measure_shear, shear_bounds
from .windows import Rectangle

log = logging.getLogger(__name__)

__all__ = ["make_system", "make_schedule", "diffuse", "orbit_table", "scaling_point", "scaling_sweep",
           "fit_slope", "shear_audit", "SHEAR_HEADER", "SCALING_HEADER"]

SHEAR_HEADER = ["axis_j", "N", "delta_lower", "delta_measured", "omega_upper", "omega_measured"]
SCALING_HEADER = ["epsilon", "total_steps", "p_drift", "fitted_slope"]


def make_system(params: ModelParams):
    return ExtendedSystem(params) if params.extended else NormalFormSystem(params)


def make_schedule(cfg: RunConfig, epsilon: Optional[float] = None, leaves: Optional[int] = None) -> ChainSchedule:
    """Schedule for the configured leaves; attaches the extended block when configured."""
    p = cfg.model if epsilon is None else cfg.model.with_epsilon(epsilon)
    orders = compute_orders(p.sigma, p.tau, p.upsilon, p.k, linear_twist=cfg.linear_twist)
    c = LinkConstants.from_model(p, **cfg.schedule.constants)
    chain = build_chain(orders, c, cfg.leaf_positions(p.epsilon, leaves), cfg.schedule.eta,
                        cfg.schedule.slack_floor)
    if p.extended:
        sysm = ExtendedSystem(p)
        extend_chain(chain, p.L, sysm.C_ext, sysm.xi_star, cfg.extended.a_star, cfg.extended.K_cap,
                     sysm.omega_theta, p.theta_speed)
    return chain


def diffuse(cfg: RunConfig, schedule: ChainSchedule, epsilon: Optional[float] = None) -> OrbitRecord:
    p = cfg.model if epsilon is None else cfg.model.with_epsilon(epsilon)
    sc = cfg.schedule
    return run_diffusion(make_system(p), schedule, p, tol=sc.tol, verify=sc.verify, samples=sc.samples,
                         beam=sc.beam_width, depth=sc.depth, q0=sc.q0)


def orbit_table(rec: OrbitRecord, params: ModelParams, leaf_ps) -> tuple[list, list]:
    """Header and rows for orbit.csv: every recorded iterate, tagged with link and stage."""
    m, n = params.m, params.n
    l1, l2 = (params.ell1, params.ell2) if params.extended else (0, 0)
    coords = _labels(m, n, l1, l2)
    header = ["link", "stage", "step"] + coords + ["residual", "leaf_distance"]
    ax = _axes(m, n)
    su = ax["s"] + ax["u"]
    pax = ax["p"]
    rows = []
    step = 0

    def row(link, stage, x, res):
        d = max(float(np.max(np.abs(x[su]))), float(np.max(np.abs(x[pax] - leaf_ps[link]))))
        return [link, stage, step] + [float(v) for v in x] + [float(res), d]

    for i, traj in enumerate(rec.trajectories):
        link, stage = rec.labels[i]
        for t in range(len(traj) - 1):
            rows.append(row(link, stage, traj[t], rec.residuals[i]))
            if stage != "prime":   # the jump out of a prime window costs no iterate
                step += 1
    link, stage = rec.labels[-1]
    rows.append(row(link, stage, rec.points[-1], 0.0))
    return header, rows


def fit_slope(eps, values) -> float:
    x, y = np.log(np.asarray(eps, dtype=float)), np.log(np.asarray(values, dtype=float))
    if len(x) < 2:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


def scaling_point(cfg: RunConfig, epsilon: float) -> dict:
    sched = make_schedule(cfg, epsilon, cfg.sweep.drift_leaves)
    rec = diffuse(cfg, sched, epsilon)
    return {"epsilon": float(epsilon), "total_steps": int(rec.total_steps), "p_drift": float(rec.p_drift),
            "max_residual": float(rec.residuals.max()) if rec.residuals.size else 0.0,
            "predicted_time": sched.predicted_time}


def _scaling_job(args):
    cfg, eps = args
    return scaling_point(cfg, eps)


def scaling_sweep(cfg: RunConfig, jobs: int = 1) -> tuple[list, float]:
    """One diffusion run per epsilon; slope of total steps per unit p-drift against epsilon."""
    eps_list = [float(e) for e in cfg.sweep.epsilon_list]
    if jobs > 1 and len(eps_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            points = list(ex.map(_scaling_job, [(cfg, e) for e in eps_list]))
    else:
        points = [scaling_point(cfg, e) for e in eps_list]
    per_drift = [pt["total_steps"] / pt["p_drift"] for pt in points]
    slope = fit_slope(eps_list, per_drift)
    return points, slope


def shear_audit(params: ModelParams, grid: int = 50, N_list=(1, 10, 100), gamma: float = 0.1,
                delta: float = 0.01, p0: float = 0.5) -> tuple[list, bool]:
    """Measured shear against the analytic bounds on Q = [0, gamma]^n, P = p0 + [-delta/2, delta/2]^n."""
    tmap = params.twist()
    n = params.n
    Q = Rectangle(np.zeros(n), np.full(n, gamma))
    P = Rectangle.centered(np.full(n, p0), np.full(n, delta))
    rows, ok = [], True
    for N in N_list:
        b = shear_bounds(tmap, gamma, delta, N)
        meas = measure_shear(tmap, Q, P, N, grid)
        for j in range(n):
            dm = float(meas.raw_delta if meas.degenerate else meas.delta[j])
            if b.delta_lower > 0 and dm < b.delta_lower:
                ok = False
            if meas.omega > b.omega_upper:
                ok = False
            rows.append([j, int(N), b.delta_lower, dm, b.omega_upper, meas.omega])
    return rows, ok


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, model=replace(cfg.model, seed=seed), seed=seed)
