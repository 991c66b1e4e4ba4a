import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from caw.windows import (AffineChart, Rectangle, Region, Window, WindowError, box_window, classify_unit,
                         make_window, membership, product_window, window_from_json, window_to_json)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
edges = st.floats(1e-6, 1e3, allow_nan=False)


def unit_square(exit_dims=1):
    return make_window(Rectangle([0.0] * exit_dims, [1.0] * exit_dims),
                       Rectangle([0.0] * (2 - exit_dims), [1.0] * (2 - exit_dims)),
                       AffineChart.identity(2))


def test_unit_square_classification():
    w = unit_square()
    assert membership(w, [0.5, 0.5]) is Region.INTERIOR
    assert membership(w, [0.0, 0.5]) is Region.EXIT
    assert membership(w, [0.5, 1.0]) is Region.ENTRY
    assert membership(w, [0.0, 0.0]) is Region.EXIT   # corner precedence
    assert membership(w, [1.5, 0.5]) is Region.OUTSIDE


def test_degenerate_rectangle_rejected():
    with pytest.raises(WindowError, match="degenerate rectangle"):
        Rectangle([0.0], [0.0])


def test_table_size_substitution():
    eps, kappa = 0.1, 1
    a = eps ** (2 * kappa) * 0.5
    w = make_window(Rectangle([0.0], [a]), Rectangle([0.0], [1.0]), AffineChart.identity(2))
    assert w.exit_block.edge[0] == pytest.approx(0.005)


def test_singular_chart_rejected():
    with pytest.raises(WindowError):
        AffineChart(np.array([[1.0, 1.0], [1.0, 1.0]]), [0.0, 0.0])


def test_product_of_unit_squares_exit_set():
    w1, w2 = unit_square(), unit_square()
    w2 = Window(w2.exit_block, w2.entry_block, w2.chart, ("u1", "p1"))
    w1 = Window(w1.exit_block, w1.entry_block, w1.chart, ("u0", "p0"))
    w = product_window(w1, w2)
    grid = [0.0, 0.5, 1.0]
    for pt in itertools.product(grid, repeat=4):
        x = np.array(pt)
        # ambient order is (u0, p0, u1, p1)
        on_bd = [v in (0.0, 1.0) for v in x]
        if not any(on_bd):
            expect = Region.INTERIOR
        elif on_bd[0] or on_bd[2]:
            expect = Region.EXIT
        else:
            expect = Region.ENTRY
        assert membership(w, x) is expect, pt


def test_product_with_entry_only_factor():
    w1 = box_window([0.0, 0.0], [1.0, 1.0], [0], ("u0", "p0"))
    w2 = box_window([0.0], [1.0], [], ("q0",))
    w = product_window(w1, w2)
    assert w.m1 == 1
    assert membership(w, [0.5, 0.0, 0.0]) is Region.EXIT
    assert membership(w, [0.0, 0.0, 0.5]) is Region.ENTRY


def test_box_window_reproduces_center():
    c = np.array([0.2, -0.1, 3.0, 0.55])
    w = box_window(c, [0.1, 0.2, 0.3, 0.01], [1, 3], ("s0", "u0", "q0", "p0"))
    assert np.array_equal(w.center(), c)
    assert w.m1 == 2
    lo, hi = w.bounds()
    assert np.allclose(hi - lo, [0.1, 0.2, 0.3, 0.01])


@given(st.integers(1, 4), st.integers(0, 3), st.data())
def test_json_round_trip_bit_exact(d, m1, data):
    m1 = min(m1, d)
    lo = np.array(data.draw(st.lists(finite, min_size=d, max_size=d)))
    ed = np.array(data.draw(st.lists(edges, min_size=d, max_size=d)))
    off = np.array(data.draw(st.lists(finite, min_size=d, max_size=d)))
    perm = np.eye(d)[data.draw(st.permutations(range(d)))]
    lin = perm * np.array(data.draw(st.lists(st.floats(0.1, 10.0), min_size=d, max_size=d)))
    w = make_window(Rectangle(lo[:m1], ed[:m1]), Rectangle(lo[m1:], ed[m1:]), AffineChart(lin, off))
    obj = json.loads(json.dumps(window_to_json(w)))
    w2 = window_from_json(obj)
    assert window_to_json(w2) == window_to_json(w)
    for a, b in ((w.exit_block.lower, w2.exit_block.lower), (w.entry_block.edge, w2.entry_block.edge),
                 (w.chart.linear, w2.chart.linear), (w.chart.offset, w2.chart.offset)):
        assert np.array_equal(a, b)


@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2**31 - 1))
def test_boundary_is_entry_union_exit(d, m1, seed):
    m1 = min(m1, d)
    rng = np.random.default_rng(seed)
    w = box_window(rng.normal(size=d), rng.uniform(0.1, 2.0, d), list(range(m1)),
                   [f"q{i}" for i in range(d)])
    pts = rng.uniform(0, 1, size=(400, d))
    face = rng.integers(0, d, size=400)
    pts[np.arange(400), face] = rng.integers(0, 2, size=400).astype(float)
    regions = classify_unit(w, pts)
    assert set(regions) <= {Region.ENTRY.value, Region.EXIT.value}
    assert np.all((regions == Region.EXIT.value) == (face < m1) | np.any(np.isin(pts[:, :m1], (0.0, 1.0)), axis=1))


@given(st.integers(0, 2**31 - 1))
def test_product_associative(seed):
    rng = np.random.default_rng(seed)
    ws = [box_window(rng.normal(size=2), rng.uniform(0.5, 2, 2), [0], (f"u{i}", f"p{i}")) for i in range(3)]
    a = product_window(product_window(ws[0], ws[1]), ws[2])
    b = product_window(ws[0], product_window(ws[1], ws[2]))
    lo, hi = a.bounds()
    pts = rng.uniform(lo - 0.1, hi + 0.1, size=(200, 6))
    snap = rng.random(pts.shape) < 0.2
    pts = np.where(snap, np.where(rng.random(pts.shape) < 0.5, lo, hi), pts)
    for x in pts:
        assert membership(a, x) == membership(b, x)


@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_chart_round_trip(d, seed):
    rng = np.random.default_rng(seed)
    lin = rng.normal(size=(d, d)) + 3 * np.eye(d)
    ch = AffineChart(lin, rng.normal(size=d))
    r = rng.uniform(0, 1, size=(50, d))
    assert np.max(np.abs(ch.backward(ch.forward(r)) - r)) < 1e-10
