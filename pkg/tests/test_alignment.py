import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caw.alignment import (AlignmentError, alignment_margin_stability, check_block_alignment,
                           check_linear_alignment, check_product_alignment, reverify)
from caw.maps import DiffMap, affine_map
from caw.windows import Rectangle, box_window, make_window, AffineChart
from oracles import brute_force_correctly_aligned, perturbation, perturbed, random_instance


def interval(exit_block: bool):
    if exit_block:
        return make_window(Rectangle([0.0], [1.0]), Rectangle.empty(), AffineChart.identity(1), ("u0",))
    return make_window(Rectangle.empty(), Rectangle([0.0], [1.0]), AffineChart.identity(1), ("p0",))


def test_expansion_aligned_margin_one():
    w = interval(True)
    rep = check_linear_alignment(w, w, affine_map([[3.0]], [-1.0]))
    assert rep.aligned and rep.margin == pytest.approx(1.0)
    assert rep.to_json()["mode"] == "linear"


def test_entry_only_contraction_inside_interior():
    w = interval(False)
    rep = check_linear_alignment(w, w, affine_map([[1 / 3]], [1 / 3]))
    assert rep.aligned


def test_contraction_on_exit_axis_fails_with_witness():
    w = interval(True)
    rep = check_linear_alignment(w, w, affine_map([[0.5]], [0.25]))
    assert not rep.aligned
    assert rep.witness["check"] in ("exit", "degree")


def test_margin_stability_strict():
    w = interval(True)
    f = affine_map([[3.0]], [-1.0])
    check_linear_alignment(w, w, f)
    assert alignment_margin_stability(w, w, f, 0.5)
    assert not alignment_margin_stability(w, w, f, 1.0)


def test_sine_perturbation_of_expansion():
    w = interval(True)
    f = DiffMap(lambda X: 3 * X - 1 + 0.3 * np.sin(7 * X), lambda X: (3 + 2.1 * np.cos(7 * X))[:, :, None],
                None, 1, "pert")
    base = check_linear_alignment(w, w, affine_map([[3.0]], [-1.0]))
    assert base.margin >= 0.7
    assert reverify(w, w, f, base).aligned


def test_dimension_mismatch():
    with pytest.raises(AlignmentError):
        check_linear_alignment(interval(True), interval(False), affine_map([[1.0]], [0.0]))


def _hyp_center(mu, target_u=1.0):
    src_a = box_window([0.0, 0.0], [1.0, 1.0], [1], ("s0", "u0"))
    tgt_a = box_window([0.0, 0.0], [1.0, target_u], [1], ("s0", "u0"))
    src_b = box_window([0.0, 0.0], [1.0, 1.0], [], ("q0", "p0"))
    tgt_b = box_window([0.0, 0.0], [2.0, 2.0], [], ("q0", "p0"))
    B = np.diag([0.5, mu, 1.0, 1.0])
    # ambient order is (s, u, q, p)
    return src_a, src_b, tgt_a, tgt_b, affine_map(B, np.zeros(4))


def test_product_decoupled_aligned():
    a1, b1, a2, b2, f = _hyp_center(2.0)
    assert check_product_alignment(a1, b1, a2, b2, f).aligned


def test_product_weak_expansion_fails_on_hyperbolic_block():
    a1, b1, a2, b2, f = _hyp_center(1.01, target_u=1.5)
    rep = check_product_alignment(a1, b1, a2, b2, f)
    assert not rep.aligned
    assert rep.witness.get("block", 0) == 0


def test_product_agrees_with_full_check():
    a1, b1, a2, b2, f = _hyp_center(2.0)
    full_src = box_window(np.zeros(4), [1, 1, 1, 1], [1], ("s0", "u0", "q0", "p0"))
    full_tgt = box_window(np.zeros(4), [1, 1, 2, 2], [1], ("s0", "u0", "q0", "p0"))
    assert check_linear_alignment(full_src, full_tgt, f).aligned == check_product_alignment(a1, b1, a2, b2, f).aligned


@settings(max_examples=40)
@given(st.integers(0, 2**31 - 1))
def test_soundness_against_brute_force(seed):
    w1, w2, f, _ = random_instance(np.random.default_rng(seed))
    rep = check_linear_alignment(w1, w2, f)
    if rep.aligned:
        assert brute_force_correctly_aligned(w1, w2, f, density=60)


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1), st.floats(0.5, 0.95))
def test_monotone_in_target_blocks(seed, shrink):
    # a smaller target in exit directions and a larger one in entry directions keeps alignment
    rng = np.random.default_rng(seed)
    w1, w2, f, _ = random_instance(rng, "aligned")
    rep = check_linear_alignment(w1, w2, f)
    if not rep.aligned:
        return
    lo, hi = w2.bounds()
    c, e = w2.center(), hi - lo
    m1 = w2.m1
    e2 = e.copy()
    e2[:m1] *= shrink          # shrink exit edges
    e2[m1:] /= shrink          # enlarge entry edges
    w3 = box_window(c, e2, list(range(m1)), w2.axis_labels)
    assert check_linear_alignment(w1, w3, f).aligned


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1))
def test_stability_under_small_perturbations(seed):
    rng = np.random.default_rng(seed)
    w1, w2, f, _ = random_instance(rng, "aligned")
    rep = check_linear_alignment(w1, w2, f)
    if not rep.aligned:
        return
    for _ in range(10):
        g, jg = perturbation(rng, w1, rep.margin)
        assert reverify(w1, w2, perturbed(f, g, jg), rep).aligned


def test_block_alignment_reports_block_index():
    a1, b1, a2, b2, f = _hyp_center(2.0)
    rep = check_block_alignment([a1, b1], [a2, b2], f)
    assert rep.aligned and rep.margin > 0
