import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netlod.coarse import GridError, PatchError, CoarseGrid, build_grid, build_patches, interpolate_basis
from netlod.network import BoundaryConditions, Network, boundary_nodes, generate_regular, perturb_random


def _all_boundary_fixed(net):
    b = boundary_nodes(net)
    fixed = (net.d * b[:, None] + np.arange(net.d)).ravel()
    return BoundaryConditions(fixed, np.zeros(fixed.size))


def test_full_boundary_fixation_fixes_coarse_boundary():
    net = generate_regular(16)
    grid = build_grid(4, net, _all_boundary_fixed(net))
    P = grid.node_positions()
    on_bnd = (P[:, 0] == 0) | (P[:, 0] == 1) | (P[:, 1] == 0) | (P[:, 1] == 1)
    expected = (2 * np.flatnonzero(on_bnd)[:, None] + np.arange(2)).ravel()
    assert np.array_equal(np.sort(grid.fixed), np.sort(expected))
    assert grid.free.size == 2 * 9


def test_no_fixed_dofs_means_no_fixed_coarse_dofs():
    grid = build_grid(4, generate_regular(8), BoundaryConditions.none())
    assert grid.fixed.size == 0 and grid.free.size == grid.m


def test_single_corner_fixation_scalar():
    net = generate_regular(8, d=1)
    grid = build_grid(4, net, BoundaryConditions([0], [0.0]))
    assert grid.fixed.tolist() == [0]


def test_fixation_respects_component():
    net = generate_regular(8)
    # y-dof of the node at (1/8, 0): inside the supports of coarse nodes 0 and 1
    grid = build_grid(4, net, BoundaryConditions([2 * 1 + 1], [0.0]))
    assert grid.fixed.tolist() == [1, 3]


def test_fixation_boundary_point_is_strict():
    # a node on a coarse grid line is outside the neighbouring supports
    net = generate_regular(8, d=1)
    node = 2 + 9 * 2   # (0.25, 0.25) = coarse node 1 + 5*1 for R=4
    grid = build_grid(4, net, BoundaryConditions([node], [0.0]))
    assert grid.fixed.tolist() == [6]


def test_empty_element_is_named():
    nodes = [[0.1, 0.1], [0.2, 0.1], [0.1, 0.2], [0.2, 0.2], [0.3, 0.3], [0.4, 0.4],
             [0.3, 0.1], [0.1, 0.3], [0.05, 0.05], [0.15, 0.05]]
    net = Network(nodes, [[0, 1]])
    with pytest.raises(GridError, match="element 1"):
        build_grid(2, net, BoundaryConditions.none())


def test_too_many_coarse_nodes():
    with pytest.raises(GridError, match="more nodes"):
        build_grid(4, generate_regular(2), BoundaryConditions.none())


def test_eval_bilinear_examples():
    grid = CoarseGrid(2, 1)
    centre = 4
    assert grid.eval_bilinear(centre, [0.5, 0.5]) == 1.0
    for other in grid.node_positions()[[0, 1, 2, 3, 5, 6, 7, 8]]:
        assert grid.eval_bilinear(centre, other) == 0.0
    assert grid.eval_bilinear(centre, [0.25, 0.25]) == 0.25


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.floats(0, 1), st.floats(0, 1))
def test_bilinear_partition_of_unity(R, x, y):
    grid = CoarseGrid(R, 1)
    vals = [grid.eval_bilinear(i, [x, y]) for i in range(grid.m)]
    assert min(vals) >= 0 and max(vals) <= 1
    assert np.isclose(sum(vals), 1.0)
    V = grid.nodal_values([[x, y]]).toarray().ravel()
    assert np.allclose(V, vals)


def test_interpolated_basis_properties():
    net = perturb_random(generate_regular(8), 0.3, 2)
    grid = build_grid(4, net, BoundaryConditions.none())
    ops = interpolate_basis(grid, net)
    lam = ops.lam.toarray()
    for c in range(2):
        total = lam[:, c::2].sum(axis=1)
        assert np.allclose(total[c::2], 1.0)
        assert not total[1 - c::2].any()
    # wrong-component entries vanish
    dof_comp = np.arange(net.n_dofs)[:, None] % 2
    coarse_comp = np.arange(grid.m)[None, :] % 2
    assert not lam[dof_comp != coarse_comp].any()
    # coincident network and coarse node
    reg = generate_regular(8)
    reg_lam = interpolate_basis(build_grid(4, reg, BoundaryConditions.none()), reg).lam
    node = 2 + 9 * 2
    assert reg_lam[2 * node, 2 * (1 + 5 * 1)] == 1.0
    assert reg_lam[2 * node + 1, 2 * (1 + 5 * 1) + 1] == 1.0


def test_prolongation_gram_is_spd_and_restriction_is_transpose():
    net = generate_regular(8)
    bc = BoundaryConditions.none()
    grid = build_grid(4, net, bc)
    ops = interpolate_basis(grid, net)
    G = (ops.CH @ ops.BH).toarray()
    assert np.linalg.eigvalsh(G).min() > 0
    assert abs(ops.CH - ops.BH.T).max() == 0


def test_rank_deficient_prolongation_raises():
    # all network nodes sit on one line: bilinear columns become dependent
    s = np.linspace(0, 1, 9)
    nodes = np.column_stack([s, s])
    nodes = np.vstack([nodes, [[1, 0], [0, 1]]])
    net = Network(nodes, [[k, k + 1] for k in range(8)], d=1)
    grid = CoarseGrid(2, 1)
    with pytest.raises(GridError, match="dependent"):
        interpolate_basis(grid, net)


def test_weighted_interpolant():
    net = generate_regular(4, d=1)
    grid = build_grid(2, net, BoundaryConditions.none())
    ops = interpolate_basis(grid, net)
    assert not ops.pi_H(np.zeros(net.n_dofs)).any()
    lam = ops.BH.toarray()
    k = 4
    expected = sum((lam[:, i] @ lam[:, k]) * lam[:, i] for i in range(lam.shape[1]))
    got = ops.pi_H(lam[:, k])
    assert np.allclose(got, expected)
    assert not np.allclose(got, lam[:, k])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_splitting_into_coarse_and_detail_parts(seed):
    rng = np.random.default_rng(seed)
    net = perturb_random(generate_regular(8), 0.4, seed)
    bc = _all_boundary_fixed(net)
    grid = build_grid(4, net, bc)
    ops = interpolate_basis(grid, net)
    v = rng.standard_normal(net.n_dofs)
    v[bc.fixed] = 0
    B, C = ops.BH.toarray(), ops.CH.toarray()
    a = np.linalg.solve(C @ B, C @ v)
    coarse = B @ a
    detail = v - coarse
    assert np.abs(C @ detail).max() <= 1e-10 * max(1, np.abs(v).max())
    assert np.allclose(coarse + detail, v)
    # detail is invisible to the interpolant
    assert np.abs(ops.pi_H(detail)).max() <= 1e-10


def test_patch_examples():
    net = generate_regular(20)
    bc = _all_boundary_fixed(net)
    grid = build_grid(4, net, bc)
    ops = interpolate_basis(grid, net)
    free = bc.free(net.n_dofs)

    full = build_patches(grid, net, bc, ops, np.sqrt(2) * grid.R)
    assert all(np.array_equal(f, free) for f in full.fine)

    # H = 0.25, rho = 1.5: element (1, 1) has centre (0.375, 0.375)
    patches = build_patches(grid, net, bc, ops, 1.5)
    e = 1 + 4 * 1
    assert np.allclose(grid.element_centers()[e], [0.375, 0.375])
    node = int(round(0.7 * 20)) + 21 * int(round(0.375 * 20))   # (0.7, 0.35)
    dist = np.hypot(0.7 - 0.375, 0.35 - 0.375)
    assert dist <= 0.375 and 2 * node in patches.fine[e]
    for f in patches.fine:
        assert not np.intersect1d(f, bc.fixed).size


def test_patch_coarse_constraints_are_free_dofs_touching_the_patch():
    net = generate_regular(16)
    bc = _all_boundary_fixed(net)
    grid = build_grid(4, net, bc)
    ops = interpolate_basis(grid, net)
    patches = build_patches(grid, net, bc, ops, 1.0)
    CH = ops.CH.toarray()
    for e in range(grid.n_elements):
        touched = np.flatnonzero(np.abs(CH[:, patches.fine[e]]).sum(axis=1) > 0)
        assert np.array_equal(patches.rows[e], touched)
        assert np.array_equal(patches.coarse[e], grid.free[touched])
        assert np.isin(patches.coarse[e], grid.free).all()


def test_patch_monotone_in_radius():
    net = perturb_random(generate_regular(16), 0.3, 1)
    bc = _all_boundary_fixed(net)
    grid = build_grid(4, net, bc)
    ops = interpolate_basis(grid, net)
    radii = [0.5, 1.0, 1.7, 3.0, np.inf]
    sets = [build_patches(grid, net, bc, ops, r).fine for r in radii]
    for small, big in zip(sets, sets[1:]):
        for a, b in zip(small, big):
            assert np.isin(a, b).all()


def test_patch_errors():
    net = generate_regular(16)
    bc = _all_boundary_fixed(net)
    grid = build_grid(4, net, bc)
    ops = interpolate_basis(grid, net)
    with pytest.raises(PatchError):
        build_patches(grid, net, bc, ops, 0.0)
    # element centres fall between the nodes of a 6x6 network
    net6 = generate_regular(6)
    bc6 = _all_boundary_fixed(net6)
    grid6 = build_grid(2, net6, bc6)
    with pytest.raises(PatchError, match="element 0"):
        build_patches(grid6, net6, bc6, interpolate_basis(grid6, net6), 0.1)


def test_owner_element_ties_go_to_smaller_index():
    grid = CoarseGrid(4, 2)
    assert grid.owner_element([[0.25, 0.1]]).tolist() == [0]
    assert grid.owner_element([[0.25, 0.25]]).tolist() == [0]
    assert grid.owner_element([[0.3, 0.1]]).tolist() == [1]
    assert grid.owner_element([[0.0, 0.0], [1.0, 1.0]]).tolist() == [0, 15]
