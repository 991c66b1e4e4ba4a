"""``caw`` command line: check-align, shear-audit, schedule, diffuse, scaling.

Exit codes: 0 success, 1 usage error, 2 infeasible or failed verification
(the witness is written to the manifest next to the output).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .alignment import AlignmentError, check_linear_alignment
from .config import ConfigError, load_config
from .io import dumps_json, write_csv, write_json, write_manifest
from .maps import affine_map, identity_map
from .normal_form import ModelError, ModelParams, NormalFormSystem, make_jump
from .orbit import AlignmentFailure, OrbitError
from .pipeline import (SCALING_HEADER, SHEAR_HEADER, diffuse, make_schedule, orbit_table, scaling_sweep,
                       shear_audit)
from .checker import check_chain
from .scheduler import ChainSchedule, ScheduleInfeasible
from .windows import WindowError, window_from_json

log = logging.getLogger("caw")

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def setup_logging():
    level = os.environ.get("CAW_LOG", "warn").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"CAW_LOG must be one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


class Failure(Exception):
    def __init__(self, witness: dict):
        super().__init__(witness.get("check", "failure"))
        self.witness = witness


# --------------------------------------------------------------------------
# builtin maps for check-align

def parse_map(spec: str, dim: int):
    name, _, arg = spec.partition(":")
    try:
        opts = json.loads(arg) if arg else {}
    except json.JSONDecodeError as e:
        raise UsageError(f"map parameters must be JSON: {e}") from e
    if name == "identity":
        return identity_map(dim)
    if name == "affine":
        return affine_map(np.array(opts["B"], dtype=float), np.array(opts.get("c", np.zeros(dim)), dtype=float))
    if name == "scale":
        f = np.broadcast_to(np.asarray(opts["factors"], dtype=float), (dim,))
        return affine_map(np.diag(f), np.asarray(opts.get("c", np.zeros(dim)), dtype=float), "scale")
    if name == "phi":
        steps = int(opts.pop("steps", 1))
        return NormalFormSystem(ModelParams(**opts)).iterate_map(steps)
    if name == "jump":
        c0, c1 = opts.pop("center"), opts.pop("center_plus")
        return make_jump(ModelParams(**opts), np.asarray(c0, float), np.asarray(c1, float)).as_map()
    raise UsageError(f"unknown map {name!r}; builtins: identity, affine, scale, phi, jump")


# --------------------------------------------------------------------------
# subcommands; each returns (status, artifacts, config hash, extra)

def cmd_check_align(a):
    w1 = window_from_json(Path(a.w1).read_text())
    w2 = window_from_json(Path(a.w2).read_text())
    fmap = parse_map(a.map, w1.dim)
    rep = check_linear_alignment(w1, w2, fmap, samples=a.samples)
    body = rep.to_json()
    if a.out:
        write_json(a.out, body)
    else:
        sys.stdout.write(dumps_json(body))
    if not rep.aligned:
        raise Failure(rep.witness or {"check": "alignment"})
    return [a.out] if a.out else [], None, {"margin": rep.margin}


def cmd_shear_audit(a):
    cfg = load_config(a.config)
    rows, ok = shear_audit(cfg.model, a.grid, a.N, a.gamma, a.delta, a.p0)
    write_csv(a.out, SHEAR_HEADER, rows)
    if not ok:
        bad = [r for r in rows if (r[2] > 0 and r[3] < r[2]) or r[5] > r[4]]
        raise Failure({"check": "shear-bounds", "rows": bad, "artifacts": [a.out]})
    return [a.out], cfg.config_hash(), None


def cmd_schedule(a):
    cfg = load_config(a.config)
    if a.leaves is not None:
        cfg.schedule.leaves = a.leaves
    chain = make_schedule(cfg)
    cert = check_chain(chain)
    body = chain.to_json() | {"model": cfg.model.to_dict(), "config_hash": cfg.config_hash(),
                              "certificate": {"ok": cert["ok"], "min_slack": cert["min_slack"]}}
    write_json(a.out, body)
    if not cert["ok"]:
        bad = [r for lk in cert["links"] for r in lk["results"] if not r["ok"]]
        raise Failure({"check": "inequalities", "failed": bad[:5]})
    return [a.out], cfg.config_hash(), {"predicted_time": chain.predicted_time}


def cmd_diffuse(a):
    cfg = load_config(a.config)
    sched_path = Path(a.schedule)
    if not sched_path.is_file():
        raise UsageError(f"schedule file not found: {sched_path}")
    raw = json.loads(sched_path.read_text())
    chain = ChainSchedule.from_json(raw)
    if abs(chain.constants.epsilon - cfg.model.epsilon) > 0:
        raise UsageError("schedule epsilon does not match the config")
    cert = check_chain(chain)
    if not cert["ok"]:
        raise Failure({"check": "inequalities", "reason": "schedule fails re-verification"})
    rec = diffuse(cfg, chain)
    header, rows = orbit_table(rec, cfg.model, chain.leaf_ps)
    write_csv(a.out, header, rows)
    summary = {"max_residual": float(rec.residuals.max()) if rec.residuals.size else 0.0,
               "leaf_distances": rec.leaf_distances.tolist(), "p_drift": rec.p_drift,
               "total_steps": rec.total_steps, "sweeps": rec.diagnostics.get("sweeps")}
    if summary["max_residual"] > cfg.schedule.tol:
        raise Failure({"check": "residual", "value": summary["max_residual"], "tol": cfg.schedule.tol,
                       "artifacts": [a.out]})
    return [a.out], cfg.config_hash(), summary


def cmd_scaling(a):
    cfg = load_config(a.config)
    if not cfg.sweep.epsilon_list:
        raise UsageError("sweep.epsilon_list is empty")
    points, slope = scaling_sweep(cfg, a.jobs)
    rows = [[p["epsilon"], p["total_steps"], p["p_drift"], slope] for p in points]
    write_csv(a.out, SCALING_HEADER, rows)
    bad = [p for p in points if p["max_residual"] > cfg.schedule.tol]
    if bad:
        raise Failure({"check": "residual", "tol": cfg.schedule.tol, "points": bad, "artifacts": [a.out]})
    return [a.out], cfg.config_hash(), {"fitted_slope": slope, "points": points}


COMMANDS = {"check-align": cmd_check_align, "shear-audit": cmd_shear_audit, "schedule": cmd_schedule,
            "diffuse": cmd_diffuse, "scaling": cmd_scaling}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="caw", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("check-align", help="decide linear correct alignment of two windows")
    s.add_argument("--w1", required=True)
    s.add_argument("--w2", required=True)
    s.add_argument("--map", required=True, help="builtin[:JSON], e.g. 'affine:{\"B\": [[2,0],[0,0.5]]}'")
    s.add_argument("--samples", type=int, default=9)
    s.add_argument("--out")
    s = sub.add_parser("shear-audit", help="measured shear against the analytic bounds")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", type=int, default=50)
    s.add_argument("--N", type=int, nargs="+", default=[1, 10, 100])
    s.add_argument("--gamma", type=float, default=0.1)
    s.add_argument("--delta", type=float, default=0.01)
    s.add_argument("--p0", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s = sub.add_parser("schedule", help="solve and certify a chain of links")
    s.add_argument("--config", required=True)
    s.add_argument("--leaves", type=int)
    s.add_argument("--out", required=True)
    s = sub.add_parser("diffuse", help="extract the shadowing orbit of a schedule")
    s.add_argument("--config", required=True)
    s.add_argument("--schedule", required=True)
    s.add_argument("--out", required=True)
    s = sub.add_parser("scaling", help="diffusion-time sweep over epsilon")
    s.add_argument("--config", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    t0 = time.perf_counter()
    out = getattr(a, "out", None)
    cfg_hash = None
    try:
        setup_logging()
        if getattr(a, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        artifacts, cfg_hash, extra = COMMANDS[a.command](a)
        status, witness, code = "ok", None, EXIT_OK
    except (UsageError, ConfigError, FileNotFoundError, KeyError, TypeError, ModelError, WindowError,
            AlignmentError) as e:
        print(f"caw {a.command}: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ScheduleInfeasible as e:
        status, witness, code, artifacts, extra = "infeasible", e.witness, EXIT_FAIL, [], None
    except AlignmentFailure as e:
        status, witness, code, artifacts, extra = "verification-failed", {"check": "alignment", **e.witness}, EXIT_FAIL, [], None
    except OrbitError as e:
        status, witness, code, artifacts, extra = "verification-failed", {"check": "orbit", "reason": str(e)}, EXIT_FAIL, [], None
    except Failure as e:
        status, witness, code = "verification-failed", e.witness, EXIT_FAIL
        artifacts, extra = e.witness.pop("artifacts", []), None
    if cfg_hash is None and getattr(a, "config", None):
        try:
            cfg_hash = load_config(a.config).config_hash()
        except ConfigError:
            pass
    if code != EXIT_OK:
        print(f"caw {a.command}: {status}: {json.dumps(witness, sort_keys=True, default=str)}", file=sys.stderr)
    if out:
        write_manifest(out, a.command, cfg_hash, status, time.perf_counter() - t0, artifacts, witness, extra)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
