"""Coarse quadrilateral grid on the unit square and its transfer to the network.

Coarse node ``(a, b)`` sits at ``(a/R, b/R)`` and has index ``a + (R+1) b``;
element ``(ex, ey)`` has index ``ex + R ey``.  Coarse dofs are interleaved like
network dofs, ``d * node + component``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .sparse import NotPositiveDefiniteError, SingularMatrixError, SPDFactor, assemble_arrays


class GridError(ValueError):
    pass


class PatchError(ValueError):
    pass


def _hat(s):
    return np.maximum(0.0, 1.0 - np.abs(s))


@dataclass
class CoarseGrid:
    R: int
    d: int
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))   # M_D

    @property
    def H(self):
        return 1.0 / self.R

    @property
    def n_nodes(self):
        return (self.R + 1) ** 2

    @property
    def m(self):
        return self.d * self.n_nodes

    @property
    def n_elements(self):
        return self.R * self.R

    @property
    def free(self):
        mask = np.ones(self.m, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def node_positions(self):
        s = np.arange(self.R + 1) / self.R
        X, Y = np.meshgrid(s, s)
        return np.column_stack([X.ravel(), Y.ravel()])

    def dof_positions(self):
        return np.repeat(self.node_positions(), self.d, axis=0)

    def element_corners(self, e):
        ex, ey = e % self.R, e // self.R
        base = ex + (self.R + 1) * ey
        return np.array([base, base + 1, base + self.R + 2, base + self.R + 1])

    def element_centers(self):
        c = (np.arange(self.R) + 0.5) / self.R
        X, Y = np.meshgrid(c, c)
        return np.column_stack([X.ravel(), Y.ravel()])

    def owner_element(self, points):
        """Element containing each point; boundary ties go to the smaller index."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        ex = np.clip(np.ceil(pts[:, 0] * self.R).astype(np.int64) - 1, 0, self.R - 1)
        ey = np.clip(np.ceil(pts[:, 1] * self.R).astype(np.int64) - 1, 0, self.R - 1)
        return ex + self.R * ey

    def eval_bilinear(self, dof, p):
        """Value of the bilinear nodal function of coarse ``dof`` at point ``p``."""
        node = dof // self.d
        a, b = node % (self.R + 1), node // (self.R + 1)
        p = np.asarray(p, dtype=float)
        return _hat(p[..., 0] * self.R - a) * _hat(p[..., 1] * self.R - b)

    def nodal_values(self, points):
        """Sparse ``(len(points), n_nodes)`` matrix of bilinear values; exact zeros dropped.

        Coordinates are scaled to grid units before evaluation so that a point on
        a neighbouring grid line yields exactly zero.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        s, t = pts[:, 0] * self.R, pts[:, 1] * self.R
        a0 = np.clip(np.floor(s).astype(np.int64), 0, self.R - 1)
        b0 = np.clip(np.floor(t).astype(np.int64), 0, self.R - 1)
        rows, cols, vals = [], [], []
        idx = np.arange(len(pts))
        for da in (0, 1):
            for db in (0, 1):
                a, b = a0 + da, b0 + db
                v = _hat(s - a) * _hat(t - b)
                keep = v != 0
                rows.append(idx[keep])
                cols.append((a + (self.R + 1) * b)[keep])
                vals.append(v[keep])
        return assemble_arrays(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                               len(pts), self.n_nodes)


def build_grid(R, net, bc, d=None):
    """Coarse grid with fixed coarse dofs from the fixation condition.

    Coarse dof ``i`` is fixed when some fixed network dof ``j`` of the same
    component has its node strictly inside the support of ``i``'s basis function.
    """
    d = net.d if d is None else d
    if R < 1:
        raise GridError("coarse grid needs R >= 1")
    grid = CoarseGrid(R, d)
    if grid.n_nodes > net.n_nodes:
        raise GridError(f"coarse grid has more nodes ({grid.n_nodes}) than the network ({net.n_nodes})")
    p = net.nodes
    s, t = p[:, 0] * R, p[:, 1] * R
    inside = np.all((p >= 0) & (p <= 1), axis=1)
    counts = np.zeros(grid.n_elements, dtype=np.int64)
    # a node on a shared edge lies in every adjacent closed element
    for ex in (np.ceil(s) - 1, np.floor(s)):
        for ey in (np.ceil(t) - 1, np.floor(t)):
            ok = inside & (ex >= 0) & (ex < R) & (ey >= 0) & (ey < R)
            np.add.at(counts, (ex[ok] + R * ey[ok]).astype(np.int64), 1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        e = int(empty[0])
        raise GridError(f"coarse element {e} (ex={e % R}, ey={e // R}) contains no network node")

    if bc.fixed.size:
        nodes, comps = bc.fixed // d, bc.fixed % d
        vals = grid.nodal_values(p[nodes]).tocoo()
        fixed = d * vals.col + comps[vals.row]
        grid.fixed = np.unique(fixed).astype(np.int64)
    return grid


@dataclass
class CoarseOperators:
    grid: CoarseGrid
    lam: sp.csc_matrix     # (n, m): interpolated basis vectors for every coarse dof
    BH: sp.csc_matrix      # (n, m_H): columns lambda_i, i free
    CH: sp.csr_matrix      # (m_H, n) = BH^T

    @property
    def m_H(self):
        return self.BH.shape[1]

    def pi_H(self, v):
        """Weighted interpolant ``sum_i (lambda_i . v) lambda_i`` over free coarse dofs."""
        return self.BH @ (self.CH @ v)


def interpolate_basis(grid, net, check_rank=True):
    """Build ``lambda_i(j) = Lambda_i(p_j)`` when ``i = j (mod d)``, else 0, for all coarse dofs."""
    d = grid.d
    V = grid.nodal_values(net.nodes).tocoo()
    rows = (d * V.row[:, None] + np.arange(d)).ravel()
    cols = (d * V.col[:, None] + np.arange(d)).ravel()
    vals = np.repeat(V.data, d)
    lam = assemble_arrays(rows, cols, vals, net.n_dofs, grid.m).tocsc()
    BH = lam[:, grid.free].tocsc()
    ops = CoarseOperators(grid, lam, BH, BH.T.tocsr())
    if check_rank and ops.m_H:
        try:
            SPDFactor(ops.CH @ ops.BH, context="B_H^T B_H")
        except (NotPositiveDefiniteError, SingularMatrixError) as exc:
            raise GridError(f"prolongation columns are linearly dependent: {exc}") from exc
    return ops


@dataclass
class PatchIndex:
    rho: float
    fine: list        # per element: free network dofs in the patch (N_E)
    rows: list        # per element: rows of C_H constraining the patch
    coarse: list      # per element: the same constraints as global coarse dofs (M_E)


def build_patches(grid, net, bc, ops, rho):
    """Circular patches ``|p_i - c_E| <= rho H`` around each element centre.

    A free coarse dof enters the patch constraints whenever its basis vector is
    nonzero on a patch dof, which keeps every localized corrector in the null
    space of the restriction.  ``rho = inf`` gives the whole network.
    """
    if not rho > 0:
        raise PatchError("patch radius must be positive")
    n = net.n_dofs
    free_mask = np.zeros(n, dtype=bool)
    free_mask[bc.free(n)] = True
    pos = net.nodes
    radius = rho * grid.H
    CH = ops.CH.tocsc()
    fine, rows, coarse = [], [], []
    for e, c in enumerate(grid.element_centers()):
        if np.isinf(rho):
            node_in = np.ones(net.n_nodes, dtype=bool)
        else:
            node_in = np.hypot(pos[:, 0] - c[0], pos[:, 1] - c[1]) <= radius
        dof_in = np.repeat(node_in, net.d) & free_mask
        NE = np.flatnonzero(dof_in)
        if NE.size == 0:
            raise PatchError(f"patch of element {e} holds no free network dof (rho={rho})")
        touched = CH[:, NE]
        ME = np.flatnonzero(np.diff(touched.tocsr().indptr) > 0)
        fine.append(NE)
        rows.append(ME)
        coarse.append(grid.free[ME])
    return PatchIndex(rho, fine, rows, coarse)
