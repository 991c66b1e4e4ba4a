"""Correct alignment of windows under maps.

All checks run in centered normalized coordinates: the source window is
parametrized by y in [-1/2, 1/2]^d and the image is expressed in the target
window's centered coordinates, so the target is the cube [-1/2, 1/2]^d with
the exit block first.

Alignment is certified through the linear route.  The homotopy joins the map
to h1(y) = (A y_exit, 0), where A is the exit block of the Jacobian at the
source centre.  Along the straight-line homotopy a point stays away from a set
whenever both endpoints sit strictly beyond the same face of the target cube
(or both have entry coordinates strictly inside), so the check reduces to
pointwise conditions on f and h1.  Sampling is turned into a certificate by
subtracting a Lipschitz excess: a face passes only if its clearance exceeds
Lipschitz constant times grid-cell radius.
"""

from __future__ import annotations

import itertools
import json
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .maps import DiffMap
from .windows import Window, WindowError

__all__ = [
    "AlignmentReport",
    "AlignmentError",
    "check_linear_alignment",
    "check_product_alignment",
    "check_block_alignment",
    "alignment_margin_stability",
    "reverify",
]

LIP_SAFETY = 1.5
MAX_GRID_POINTS = 60_000


class AlignmentError(ValueError):
    pass


@dataclass
class AlignmentReport:
    aligned: bool
    mode: str
    margin: float
    witness: Optional[dict] = None
    linearization: Optional[list] = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"aligned": bool(self.aligned), "mode": self.mode, "margin": float(self.margin),
                "witness": self.witness}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


_REPORTS: "OrderedDict[tuple, tuple]" = OrderedDict()


def _remember(w1, w2, fmap, report):
    key = (id(w1), id(w2), id(fmap))
    _REPORTS[key] = (w1, w2, fmap, report)
    _REPORTS.move_to_end(key)
    while len(_REPORTS) > 256:
        _REPORTS.popitem(last=False)


def _grid(k: int, n: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0))
    axis = np.linspace(-0.5, 0.5, n) if n > 1 else np.zeros(1)
    mesh = np.meshgrid(*([axis] * k), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _radius(n: int) -> float:
    return 0.5 if n <= 1 else 0.5 / (n - 1)


def _cap_samples(n: int, k: int, budget: int = MAX_GRID_POINTS) -> int:
    while k > 0 and n > 2 and n**k > budget:
        n -= 1
    return n


@dataclass
class _Block:
    """One component of an alignment problem in normalized coordinates."""

    fhat: callable          # (P, d) centered source coords -> (P, d) centered target coords
    jhat: callable          # Jacobians (P, d, d)
    m1: int
    d: int
    row_scale: np.ndarray   # ambient sup-norm -> normalized coordinate conversion per row
    lhat: Optional[np.ndarray]
    extra_excess: np.ndarray


def _norm_exc(lhat: np.ndarray, cols, r: float) -> np.ndarray:
    if r == 0.0 or len(cols) == 0:
        return np.zeros(lhat.shape[0])
    return r * lhat[:, cols].sum(axis=1)


def _nan_fail(x):
    return np.where(np.isnan(x), -np.inf, x)


def _run_block(b: _Block, samples: int, A: Optional[np.ndarray], cross_points: np.ndarray,
               cross_embed) -> tuple[float, Optional[dict], np.ndarray]:
    """Check one block over all cross samples.  Returns (margin, witness, A)."""
    m1, d = b.m1, b.d
    if A is None and m1 > 0:
        J0 = b.jhat(cross_embed(np.zeros((1, d)), cross_points[:1]))[0]
        A = J0[:m1, :m1]
    deg_witness = None
    if m1 > 0:
        if abs(np.linalg.det(A)) == 0.0:
            deg_witness = {"check": "degree", "reason": "singular linearization"}
        else:
            inv_norm = np.abs(np.linalg.inv(A)).sum(axis=1).max()
            deg_margin = 0.5 / inv_norm - 0.5
            if not deg_margin > 0.0:
                deg_witness = {"check": "degree", "reason": "linearization does not expand the exit block",
                               "value": float(deg_margin)}
    lhat = b.lhat
    best = np.inf
    witness = None
    rs = b.row_scale

    # exit faces
    nf = _cap_samples(samples, d - 1) if d > 1 else 1
    rf = _radius(nf) if d > 1 else 0.0
    for j in range(m1):
        others = [c for c in range(d) if c != j]
        exc_f = _norm_exc(lhat, others, rf) + b.extra_excess
        exc_h = _norm_exc(np.abs(A), [c for c in others if c < m1], rf)
        base = _grid(d - 1, nf)
        for sg in (-0.5, 0.5):
            Y = np.empty((base.shape[0], d))
            Y[:, others] = base
            Y[:, j] = sg
            Yc = cross_embed(Y, cross_points)
            F = b.fhat(Yc)
            H = np.tile(Y[:, :m1] @ A.T, (cross_points.shape[0], 1))
            score = np.full(F.shape[0], -np.inf)
            raw = np.full(F.shape[0], -np.inf)
            for i in range(m1):
                for side in (-1.0, 1.0):
                    with np.errstate(invalid="ignore", over="ignore"):
                        cf = _nan_fail(side * F[:, i] - 0.5 - exc_f[i])
                        ch = _nan_fail(side * H[:, i] - 0.5 - exc_h[i])
                    if deg_witness is not None:
                        ch = np.full_like(cf, np.inf)  # report the map's own failure first
                    opt = np.minimum(cf / rs[i], np.where(ch > 0, np.inf, ch))
                    score = np.maximum(score, opt)
                    raw = np.maximum(raw, np.minimum(cf, ch))
            k = int(np.argmin(score))
            if score[k] < best:
                best = float(score[k])
                if not best > 0.0:
                    witness = {"check": "exit", "reason": "exit boundary image inside target",
                               "face": [j, "lower" if sg < 0 else "upper"],
                               "point": [float(v) for v in Yc[k]], "value": float(raw[k])}
    if witness is not None:
        return 0.0, witness, A
    if deg_witness is not None:
        return 0.0, deg_witness, A

    # whole window against the target entry set
    if d - m1 > 0:
        nv = _cap_samples(samples, d)
        rv = _radius(nv)
        exc_v = _norm_exc(lhat, list(range(d)), rv) + b.extra_excess
        Y = _grid(d, nv)
        Yc = cross_embed(Y, cross_points)
        F = b.fhat(Yc)
        with np.errstate(invalid="ignore", over="ignore"):
            inner = np.min((0.5 - np.abs(F[:, m1:]) - exc_v[m1:]) / rs[m1:], axis=1)
        score = _nan_fail(inner)
        if m1 > 0:
            H = np.tile(Y[:, :m1] @ A.T, (cross_points.shape[0], 1))
            exc_h = _norm_exc(np.abs(A), list(range(m1)), rv)
            for i in range(m1):
                for side in (-1.0, 1.0):
                    with np.errstate(invalid="ignore", over="ignore"):
                        cf = _nan_fail(side * F[:, i] - 0.5 - exc_v[i])
                        ch = _nan_fail(side * H[:, i] - 0.5 - exc_h[i])
                    score = np.maximum(score, np.minimum(cf / rs[i], np.where(ch > 0, np.inf, ch)))
        k = int(np.argmin(score))
        if score[k] < best:
            best = float(score[k])
        if not score[k] > 0.0:
            reason = "image meets target entry set" if m1 > 0 else "image not inside target interior"
            witness = {"check": "entry", "reason": reason,
                       "point": [float(v) for v in Yc[k]], "value": float(score[k])}
            return 0.0, witness, A
    if not np.isfinite(best):
        best = np.inf
    return best, None, A


def _lipschitz_hat(fmap: DiffMap, jhat, sample_fn, lin_in, inv_out, rows, cols) -> tuple[np.ndarray, str]:
    if fmap.lip is not None:
        L = np.abs(inv_out) @ np.asarray(fmap.lip, dtype=float)[np.ix_(rows, cols)] @ np.abs(lin_in)
        return L, "analytic"
    if fmap.jac is None:
        raise AlignmentError("Lipschitz bound unavailable")
    J = np.abs(jhat(sample_fn()))
    return LIP_SAFETY * J.max(axis=0), "sampled"


def _check_inputs(w1: Window, w2: Window):
    if w1.m1 != w2.m1:
        raise AlignmentError("exit dimension mismatch")
    if w1.dim != w2.dim:
        raise AlignmentError("window dimension mismatch")


def check_linear_alignment(w1: Window, w2: Window, fmap: DiffMap, samples: int = 9,
                           reference: Optional[AlignmentReport] = None) -> AlignmentReport:
    """Decide linear correct alignment of ``w1`` with ``w2`` under ``fmap``.

    ``reference`` reuses the linearization of an earlier report, which is how
    perturbed maps are re-verified against the same homotopy.
    """
    _check_inputs(w1, w2)
    if samples < 1:
        raise AlignmentError("samples must be positive")
    d, m1 = w1.dim, w1.m1
    L1, I2 = w1.param_linear, w2.param_inverse

    def fhat(Y):
        X = w1.from_centered(Y)
        with np.errstate(over="ignore", invalid="ignore"):
            out = fmap(X)
        if out.shape != X.shape:
            raise AlignmentError("map evaluation failure")
        return w2.to_centered(out)

    def jhat(Y):
        return I2 @ fmap.jacobian(w1.from_centered(Y)) @ L1

    lhat, src = _lipschitz_hat(fmap, jhat, lambda: _grid(d, _cap_samples(3, d, 729)), L1, I2,
                               list(range(d)), list(range(d)))
    block = _Block(fhat, jhat, m1, d, np.abs(I2).sum(axis=1), lhat, np.zeros(d))
    A = None if reference is None or reference.linearization is None else np.array(reference.linearization)
    margin, witness, A = _run_block(block, samples, A, np.zeros((1, 0)), lambda Y, C: Y)
    aligned = witness is None and margin > 0.0
    if not aligned and witness is None:
        witness = {"check": "margin", "reason": "non-positive clearance", "value": float(margin)}
    report = AlignmentReport(aligned, "linear", float(margin) if aligned else 0.0, witness,
                             None if A is None else np.atleast_2d(A).tolist(),
                             {"samples": samples, "lipschitz": src})
    _remember(w1, w2, fmap, report)
    return report


def check_block_alignment(sources: Sequence[Window], targets: Sequence[Window], fmap: DiffMap,
                          samples: int = 9, cross_samples: int = 3,
                          references: Optional[Sequence] = None) -> AlignmentReport:
    """Block-product alignment check over any number of coordinate blocks.

    The ambient coordinates of ``fmap`` are the concatenation of the source
    blocks' coordinates.  Each block must be linearly aligned with its target
    uniformly over the other blocks, which are sampled on a grid of
    ``cross_samples`` points per axis with a Lipschitz excess for the cell
    radius.
    """
    if len(sources) != len(targets):
        raise AlignmentError("block count mismatch")
    for a, b in zip(sources, targets):
        _check_inputs(a, b)
    dims = [w.dim for w in sources]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    D = int(offs[-1])
    margins, linears = [], []
    lip_src = set()
    for k, (wa, wt) in enumerate(zip(sources, targets)):
        rows = list(range(offs[k], offs[k + 1]))
        others = [i for i in range(D) if i not in rows]
        o_windows = [w for i, w in enumerate(sources) if i != k]
        o_dims = sum(w.dim for w in o_windows)
        cs = _cap_samples(cross_samples, o_dims, 729)
        cross_pts = _grid(o_dims, cs)
        r_cross = _radius(cs) if o_dims else 0.0

        def embed_other(C, o_windows=o_windows):
            parts, j = [], 0
            for w in o_windows:
                parts.append(w.from_centered(C[:, j:j + w.dim]))
                j += w.dim
            return np.concatenate(parts, axis=1) if parts else np.zeros((C.shape[0], 0))

        cross_amb = embed_other(cross_pts)

        def full_state(Y, C_amb, wa=wa, rows=rows, others=others):
            X = np.empty((Y.shape[0], D))
            X[:, rows] = wa.from_centered(Y)
            X[:, others] = C_amb
            return X

        def embed(Y, Cpts, cross_amb=cross_amb):
            # all block points for every cross sample, stacked cross-major
            P, Q = Y.shape[0], Cpts.shape[0]
            Yr = np.tile(Y, (Q, 1))
            Cr = np.repeat(cross_amb[:Q], P, axis=0)
            return np.concatenate([Yr, Cr], axis=1)

        dk = wa.dim

        def fhat(Z, wt=wt, rows=rows, dk=dk):
            X = full_state(Z[:, :dk], Z[:, dk:])
            with np.errstate(over="ignore", invalid="ignore"):
                out = fmap(X)
            return wt.to_centered(out[:, rows])

        def jfull(Z, dk=dk):
            return fmap.jacobian(full_state(Z[:, :dk], Z[:, dk:]))

        def jhat(Z, wt=wt, wa=wa, rows=rows):
            return wt.param_inverse @ jfull(Z)[:, rows][:, :, rows] @ wa.param_linear

        # Lipschitz bounds within the block and across the other blocks
        lin_o = np.zeros((o_dims, o_dims))
        j = 0
        for w in o_windows:
            lin_o[j:j + w.dim, j:j + w.dim] = w.param_linear
            j += w.dim
        if fmap.lip is None and fmap.jac is None:
            raise AlignmentError("Lipschitz bound unavailable")
        if fmap.lip is not None:
            lip = np.asarray(fmap.lip, dtype=float)
            lhat = np.abs(wt.param_inverse) @ lip[np.ix_(rows, rows)] @ np.abs(wa.param_linear)
            lcross = np.abs(wt.param_inverse) @ lip[np.ix_(rows, others)] @ np.abs(lin_o) if o_dims else np.zeros((dk, 0))
            lip_src.add("analytic")
        else:
            Zs = embed(_grid(dk, _cap_samples(3, dk, 81)), cross_pts)
            Jf = fmap.jacobian(full_state(Zs[:, :dk], Zs[:, dk:]))
            Jaa = wt.param_inverse @ Jf[:, rows][:, :, rows] @ wa.param_linear
            lhat = LIP_SAFETY * np.abs(Jaa).max(axis=0)
            if o_dims:
                Jab = wt.param_inverse @ Jf[:, rows][:, :, others] @ lin_o
                lcross = LIP_SAFETY * np.abs(Jab).max(axis=0)
            else:
                lcross = np.zeros((dk, 0))
            lip_src.add("sampled")
        extra = r_cross * lcross.sum(axis=1) if o_dims else np.zeros(dk)

        def fhat_block(Z, fhat=fhat):
            return fhat(Z)

        block = _Block(fhat_block, jhat, wa.m1, dk, np.abs(wt.param_inverse).sum(axis=1), lhat, extra)
        if references is not None and references[k] is not None:
            A = np.array(references[k])
        elif wa.m1 > 0:
            # linearization at the block centre with the other blocks at their centres
            centre_other = embed_other(np.zeros((1, o_dims)))
            Z0 = np.concatenate([np.zeros((1, dk)), centre_other], axis=1)
            A = jhat(Z0)[0][: wa.m1, : wa.m1]
        else:
            A = None
        margin, witness, A = _run_block(block, samples, A, cross_pts, embed)
        linears.append(None if A is None else np.atleast_2d(A).tolist())
        if witness is not None or not margin > 0.0:
            witness = dict(witness or {"check": "margin", "value": float(margin)})
            witness["block"] = k
            return AlignmentReport(False, "degree", 0.0, witness, None,
                                   {"block_linearizations": linears, "lipschitz": sorted(lip_src)})
        margins.append(margin)
    return AlignmentReport(True, "degree", float(min(margins)), None, None,
                           {"block_linearizations": linears, "block_margins": margins,
                            "lipschitz": sorted(lip_src)})


def check_product_alignment(w1a: Window, w1b: Window, w2a: Window, w2b: Window, fmap: DiffMap,
                            samples: int = 9, cross_samples: int = 3) -> AlignmentReport:
    """Alignment of W1a x W1b with W2a x W2b via componentwise linear alignment."""
    rep = check_block_alignment([w1a, w1b], [w2a, w2b], fmap, samples, cross_samples)
    return rep


def alignment_margin_stability(w1: Window, w2: Window, fmap: DiffMap, perturbation_bound: float,
                               report: Optional[AlignmentReport] = None) -> bool:
    """True iff ``perturbation_bound`` is strictly below the certified margin.

    Any map within that sup-distance of ``fmap`` on ``w1`` keeps the windows
    correctly aligned.
    """
    if report is None:
        entry = _REPORTS.get((id(w1), id(w2), id(fmap)))
        if entry is None:
            raise LookupError("no prior alignment report for these windows and map")
        report = entry[3]
    if not report.aligned:
        return False
    return bool(perturbation_bound < report.margin)


def reverify(w1: Window, w2: Window, fmap: DiffMap, report: AlignmentReport) -> AlignmentReport:
    """Re-check a (perturbed) map against an earlier report's linearization on a refined grid.

    The sampled certificate charges Lipschitz constant times cell radius, and a
    perturbation raises the Lipschitz constant; halving the radius absorbs that.
    """
    samples = 2 * int(report.details.get("samples", 9)) - 1
    return check_linear_alignment(w1, w2, fmap, samples=samples, reference=report)
