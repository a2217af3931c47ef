"""Projection splitting for set intersection."""

import numpy as np
import pytest

from asyncfp import (
    ArrayView,
    SamplingDistribution,
    async_block_update,
    check_cocoercivity,
    km_step,
)
from asyncfp.operators import BoxProj, HalfspaceProj, PrsFeasibilityOp


def interval_op():
    # C1 = [0, 1] and C2 = [1, 2] on the line, intersection {1}
    return PrsFeasibilityOp([BoxProj(0.0, 1.0), BoxProj(1.0, 2.0)], dim=1)


def test_agreeing_copies_are_fixed():
    """z = (0, 2) has mean 1, the unique feasible point: both blocks rest."""
    op = interval_op()
    view = op.view_of(np.array([0.0, 2.0]))
    assert op.s_block(0, view) == 0.0
    assert op.s_block(1, view) == 0.0
    assert op.objective(view) == 0.0


def test_infeasible_mean_moves_one_copy():
    op = interval_op()
    view = op.view_of(np.array([0.0, 0.0]))
    # mean 0 lies in C1: its reflection projects to itself
    assert op.s_block(0, view) == 0.0
    # but not in C2 = [1, 2]: the copy gets pushed by -eta * (-2)
    np.testing.assert_allclose(op.s_block(1, view), [-2.0])


def test_halfspace_projection_values():
    proj = HalfspaceProj(np.array([3.0, 4.0]), 2.0)
    outside = np.array([3.0, 4.0])
    np.testing.assert_allclose(proj(outside), [0.24, 0.32], rtol=1e-15)
    assert proj.violation(outside) == pytest.approx(23.0)

    inside = np.array([0.1, 0.1])
    got = proj(inside)
    np.testing.assert_array_equal(got, inside)
    assert got is not inside
    assert proj.violation(inside) == 0.0

    with pytest.raises(ValueError):
        HalfspaceProj(np.zeros(2), 1.0)


def test_box_violation_is_sup_norm_excess():
    proj = BoxProj(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    assert proj.violation(np.array([-0.5, 3.0])) == pytest.approx(1.0)
    assert proj.violation(np.array([0.5, 1.0])) == 0.0


def test_zbar_cache_tracks_true_mean():
    rng = np.random.default_rng(14)
    sets = [
        HalfspaceProj(rng.normal(size=3), 1.0),
        HalfspaceProj(rng.normal(size=3), 0.5),
        BoxProj(-np.ones(3), np.ones(3)),
    ]
    op = PrsFeasibilityOp(sets, dim=3)
    dist = SamplingDistribution.uniform(3)
    z = rng.normal(size=9)
    zbar = op.init_caches(z)["zbar"]
    for _ in range(300):
        i = int(rng.integers(3))
        view = ArrayView(z, {"zbar": zbar})
        z_new = async_block_update(op, z, view, i, 0.4, dist)
        delta = z_new[op.layout.slice_of(i)] - z[op.layout.slice_of(i)]
        zbar = zbar + op.cache_deltas(i, view, delta)["zbar"]
        z = z_new
    np.testing.assert_allclose(zbar, z.reshape(3, 3).mean(axis=0), atol=1e-12)


def test_three_halfspaces_feasibility():
    sets = [
        HalfspaceProj(np.array([1.0, 0.0, 0.0]), 1.0),
        HalfspaceProj(np.array([0.0, 1.0, 0.0]), 1.0),
        HalfspaceProj(np.array([1.0, 1.0, 1.0]), 2.0),
    ]
    op = PrsFeasibilityOp(sets, dim=3)
    z = np.tile([5.0, 5.0, 5.0], 3)
    for _ in range(3000):
        z = km_step(z, 0.5, op)
    candidate = op.recover(op.view_of(z))
    assert op.max_violation(candidate) < 1e-8


def test_splitting_is_cocoercive():
    sets = [
        HalfspaceProj(np.array([1.0, -2.0]), 0.5),
        BoxProj(np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
    ]
    op = PrsFeasibilityOp(sets, dim=2)
    report = check_cocoercivity(op, samples=2000, rng=np.random.default_rng(6))
    assert report.passed
    assert report.violations == 0


def test_rejects_empty_projector_list():
    with pytest.raises(ValueError):
        PrsFeasibilityOp([], dim=2)
