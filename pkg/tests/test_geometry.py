import numpy as np
import pytest
from hypothesis import given, strategies as st

from mftc.geometry import Kind, NodeClass, build_geometry, classification_map, classify


def test_periodic_16_counts_and_all_interior():
    g = build_geometry(Kind.PERIODIC, 16, 16, 1.0)
    assert g.n_nodes == 16**2 * 17
    assert g.nx == 16 and g.h == 1 / 16 and g.dt == 1 / 16
    assert all(c is NodeClass.INTERIOR for c in classification_map(g).ravel())


def test_box_obstacle_excluded_and_boundary_nodes():
    g = build_geometry("box", 10, 4, 1.0, [(0.4, 0.6, 0.4, 0.6)])
    X, Y = g.coords
    inside = (X > 0.4 + 1e-9) & (X < 0.6 - 1e-9) & (Y > 0.4 + 1e-9) & (Y < 0.6 - 1e-9)
    np.testing.assert_array_equal(~g.node_mask, inside)
    assert classify(g, 5, 5) is NodeClass.EXCLUDED
    # nodes on the obstacle sides see a closed edge towards it
    assert classify(g, 4, 5) is NodeClass.EDGE_RIGHT
    assert classify(g, 6, 5) is NodeClass.EDGE_LEFT
    assert classify(g, 5, 4) is NodeClass.EDGE_TOP
    assert classify(g, 5, 6) is NodeClass.EDGE_BOTTOM
    # obstacle corners keep all four edges
    assert classify(g, 4, 4) is NodeClass.INTERIOR


def test_thin_obstacle_closes_edges_without_excluding_nodes():
    g = build_geometry("box", 10, 2, obstacles=[(0.2, 0.3, 0.3, 0.7)])
    assert g.node_mask.all()
    # the x-edge from (2, 5) to (3, 5) crosses the obstacle interior
    assert not g.edge_x[2, 5]
    assert g.edge_x[2, 3] and g.edge_x[2, 7]  # edges along its top and bottom sides stay open
    assert classify(g, 2, 5) is NodeClass.EDGE_RIGHT
    assert classify(g, 3, 5) is NodeClass.EDGE_LEFT


@pytest.mark.parametrize(
    "args",
    [
        ("box", 10, 4, 1.0, [(0.35, 0.6, 0.4, 0.6)]),  # not grid aligned
        ("box", 10, 4, 1.0, [(0.0, 0.6, 0.4, 0.6)]),  # touches the outer boundary
        ("box", 10, 4, 1.0, [(0.4, 1.0, 0.4, 0.6)]),
        ("periodic", 10, 4, 1.0, [(0.4, 0.6, 0.4, 0.6)]),
        ("box", 10, 4, 1.0, [(0.4, 0.5, 0.4, 0.5)]),  # a single cell
        ("box", 10, 4, 1.0, [(0.6, 0.4, 0.4, 0.6)]),  # empty
        ("box", 1, 4, 1.0, []),
        ("box", 10, 1, 1.0, []),
        ("box", 10, 4, 0.0, []),
        ("torus", 10, 4, 1.0, []),
    ],
)
def test_invalid_geometries_rejected(args):
    with pytest.raises(ValueError):
        build_geometry(*args)


def test_classify_examples():
    g = build_geometry("box", 10, 2)
    assert classify(g, 0, 5) is NodeClass.EDGE_LEFT
    assert classify(g, 10, 5) is NodeClass.EDGE_RIGHT
    assert classify(g, 5, 0) is NodeClass.EDGE_BOTTOM
    assert classify(g, 5, 10) is NodeClass.EDGE_TOP
    assert classify(g, 0, 0) is NodeClass.CORNER_BOTTOM_LEFT
    assert classify(g, 10, 0) is NodeClass.CORNER_BOTTOM_RIGHT
    assert classify(g, 0, 10) is NodeClass.CORNER_TOP_LEFT
    assert classify(g, 10, 10) is NodeClass.CORNER_TOP_RIGHT
    assert classify(g, 5, 5) is NodeClass.INTERIOR
    with pytest.raises(IndexError):
        classify(g, 11, 0)


@given(st.integers(-100, 100), st.integers(-100, 100))
def test_periodic_classify_wraps_to_interior(i, j):
    g = build_geometry("periodic", 7, 2)
    assert classify(g, i, j) is NodeClass.INTERIOR


@given(st.integers(2, 20))
def test_box_class_counts(Nh):
    g = build_geometry("box", Nh, 2)
    classes = list(classification_map(g).ravel())
    corners = sum(c.name.startswith("CORNER") for c in classes)
    edges = sum(c.name.startswith("EDGE") for c in classes)
    interior = sum(c is NodeClass.INTERIOR for c in classes)
    assert (corners, edges, interior) == (4, 4 * (Nh - 1), (Nh - 1) ** 2)


@given(
    st.sampled_from([10, 20, 30]),
    st.integers(1, 4), st.integers(2, 4), st.integers(1, 4), st.integers(2, 4),
)
def test_channel_masks_consistent_and_classify_pure(Nh, a0, wa, b0, wb):
    k = Nh // 10
    rect = (a0 * k / Nh, (a0 + wa) * k / Nh, b0 * k / Nh, (b0 + wb) * k / Nh)
    g = build_geometry("box", Nh, 2, obstacles=[rect])
    cm = g.channel_mask
    # channel 1 at (i, j) is channel 0 at (i-1, j); channel 3 at (i, j) is channel 2 at (i, j-1)
    np.testing.assert_array_equal(cm[1, 1:, :], cm[0, :-1, :])
    np.testing.assert_array_equal(cm[3, :, 1:], cm[2, :, :-1])
    assert not cm[:, ~g.node_mask].any()
    assert classification_map(g).tolist() == classification_map(g).tolist()


def test_geometry_arrays_are_read_only():
    g = build_geometry("box", 4, 2)
    with pytest.raises(ValueError):
        g.node_mask[0, 0] = False


def test_shapes_and_times():
    g = build_geometry("box", 4, 5, 2.0)
    assert g.scalar_shape == (6, 5, 5)
    assert g.stacked_shape == (5, 5, 5, 5)
    np.testing.assert_allclose(g.times, np.linspace(0, 2, 6))
    assert g.zeros().shape == g.scalar_shape and g.zeros5().shape == g.stacked_shape
