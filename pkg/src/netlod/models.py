"""Connectivity matrices for networks.

Every force law is linear in the displacements, so each edge or edge pair
contributes a small dense *force matrix* ``E`` with ``E @ u_local = f_local``.
The stiffness matrix follows the sign convention ``-K u + F = 0``::

    K = -(sum of extension matrices) - (sum of angular + Poisson matrices)

Element matrices are produced in vectorized batches (:class:`ElementBlock`)
so that the same batches feed the global assembly and the per-coarse-element
split used by the multiscale method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .network import Attributes, EdgeAttributes, PairAttributes
from .sparse import assemble_arrays


@dataclass
class ElementBlock:
    """A batch of element force matrices of one kind."""

    kind: str
    dofs: np.ndarray      # (ne, k) global dofs
    mats: np.ndarray      # (ne, k, k) force matrices, symmetric, negative semi-definite
    anchors: np.ndarray   # (ne, 2) point deciding coarse-element ownership

    def __len__(self):
        return len(self.dofs)

    def triplets(self, select=None):
        dofs, mats = self.dofs, self.mats
        if select is not None:
            dofs, mats = dofs[select], mats[select]
        k = dofs.shape[1]
        rows = np.repeat(dofs, k, axis=1).ravel()
        cols = np.tile(dofs, (1, k)).ravel()
        return rows, cols, -mats.ravel()


@dataclass(frozen=True)
class EdgeGeometry:
    direction: np.ndarray   # d_ij^i, unit vector from i towards j
    length: float

    def direction_from(self, end):
        """``d_ij^a`` for ``end`` 0 (node i) or 1 (node j)."""
        return self.direction if end == 0 else -self.direction

    @property
    def normal(self):
        return cross_z(self.direction)


@dataclass(frozen=True)
class LameField:
    lam: np.ndarray   # first Lamé parameter per node
    mu: np.ndarray    # shear modulus per node

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if np.any(lam <= 0) or np.any(mu <= 0):
            raise ValueError("Lamé parameters must be positive")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def uniform(cls, n_nodes, lam=1.0, mu=1.0):
        return cls(np.full(n_nodes, lam), np.full(n_nodes, mu))


def cross_z(v):
    """In-plane cross product with the out-of-plane unit vector: ``(x, y) x z = (y, -x)``."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def edge_geometry(net, edge):
    i, j = net.edges[edge] if np.isscalar(edge) else edge
    v = net.nodes[j] - net.nodes[i]
    L = float(np.hypot(v[0], v[1]))
    if L <= 0:
        raise ValueError(f"edge ({i}, {j}) has zero length")
    return EdgeGeometry(v / L, L)


def delta_length(geom, delta_i, delta_j):
    """Linearized length change ``(delta_j - delta_i) . d_ij^i``."""
    return float(np.dot(np.asarray(delta_j) - np.asarray(delta_i), geom.direction))


def _node_dofs(nodes, d):
    nodes = np.asarray(nodes, dtype=np.int64)
    return (d * nodes[..., None] + np.arange(d)).reshape(nodes.shape[0], -1)


def _symmetrize(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _unit(v):
    L = np.linalg.norm(v, axis=-1)
    if np.any(L <= 0):
        raise ValueError("degenerate edge in element")
    return v / L[..., None], L


def extension_block(net, attrs, select=None):
    """Force matrices of edge extension, ``F_a = k (w z / L) dL d^a``."""
    e = net.edges if select is None else net.edges[select]
    w = attrs.edges.width if select is None else attrs.edges.width[select]
    k = attrs.edges.modulus if select is None else attrs.edges.modulus[select]
    p = net.nodes
    d, L = _unit(p[e[:, 1]] - p[e[:, 0]])
    A = k * w * net.z / L
    g = np.concatenate([-d, d], axis=1)                       # dL = g . u
    mats = -A[:, None, None] * g[:, :, None] * g[:, None, :]
    return ElementBlock("extension", _node_dofs(e, 2), _symmetrize(mats), 0.5 * (p[e[:, 0]] + p[e[:, 1]]))


def _pair_frames(net, pairs):
    p = net.nodes
    i, j, l = pairs[:, 0], pairs[:, 1], pairs[:, 2]
    e1, L1 = _unit(p[i] - p[j])          # d_ji^j
    e2, L2 = _unit(p[l] - p[j])          # d_jl^j
    return e1, L1, e2, L2


def _pair_edge_ids(net, pairs):
    lookup = {tuple(e): k for k, e in enumerate(net.edges.tolist())}
    lo = np.minimum(pairs[:, 0], pairs[:, 1]), np.maximum(pairs[:, 0], pairs[:, 1])
    hi = np.minimum(pairs[:, 1], pairs[:, 2]), np.maximum(pairs[:, 1], pairs[:, 2])
    k1 = np.array([lookup[(a, b)] for a, b in zip(*lo)], dtype=np.int64)
    k2 = np.array([lookup[(a, b)] for a, b in zip(*hi)], dtype=np.int64)
    return k1, k2


def angular_block(net, attrs, select=None):
    """Force matrices of angular springs on edge pairs.

    ``dtheta = (d_i - d_j).n1/L1 + (d_l - d_j).n2/L2`` with ``n1 = d_ji x z`` and
    ``n2 = -(d_jl x z)``; outer forces ``-kV dtheta n_a / L_a``, central force
    balancing both.
    """
    pairs = net.pairs if select is None else net.pairs[select]
    kv = attrs.pairs.kappa_v if select is None else attrs.pairs.kappa_v[select]
    e1, L1, e2, L2 = _pair_frames(net, pairs)
    n1 = cross_z(e1)
    n2 = -cross_z(e2)
    a1, a2 = n1 / L1[:, None], n2 / L2[:, None]
    q = np.concatenate([a1, -a1 - a2, a2], axis=1)            # dtheta = q . u
    mats = -kv[:, None, None] * q[:, :, None] * q[:, None, :]
    return ElementBlock("angular", _node_dofs(pairs, 2), _symmetrize(mats), net.nodes[pairs[:, 1]])


def poisson_block(net, attrs, select=None):
    """Force matrices of the Poisson-type pair coupling.

    Outer node ``a`` (other outer node ``b``) feels
    ``-eta (w_a z / L_a) (dL_a + gamma (w_b / 2) (dL_b / L_b) |n_a . d_b|) d_a``.
    """
    pairs = net.pairs if select is None else net.pairs[select]
    pa = attrs.pairs
    eta = pa.eta if select is None else pa.eta[select]
    gamma = pa.gamma if select is None else pa.gamma[select]
    e1, L1, e2, L2 = _pair_frames(net, pairs)
    k1, k2 = _pair_edge_ids(net, pairs)
    w1, w2 = attrs.edges.width[k1], attrs.edges.width[k2]
    s = np.abs(np.sum(cross_z(e1) * e2, axis=1))               # |n_a . d_b|, symmetric in a, b
    z = net.z
    P1 = eta * w1 * z / L1
    P2 = eta * w2 * z / L2
    off = eta * gamma * z * w1 * w2 * s / (2.0 * L1 * L2)
    zero = np.zeros_like(e1)
    h1 = np.concatenate([e1, -e1, zero], axis=1)               # dL_ij = h1 . u
    h2 = np.concatenate([zero, -e2, e2], axis=1)               # dL_jl = h2 . u
    mats = -(P1[:, None, None] * h1[:, :, None] * h1[:, None, :]
             + P2[:, None, None] * h2[:, :, None] * h2[:, None, :]
             + off[:, None, None] * (h1[:, :, None] * h2[:, None, :] + h2[:, :, None] * h1[:, None, :]))
    return ElementBlock("poisson", _node_dofs(pairs, 2), _symmetrize(mats), net.nodes[pairs[:, 1]])


def _single(block):
    return block.dofs[0], block.mats[0]


def force_extension(net, attrs, edge):
    """``(dofs, K^I)`` for one edge: a 4x4 force matrix over the dofs of ``i, j``."""
    return _single(extension_block(net, attrs, [edge]))


def force_angular(net, attrs, pair):
    return _single(angular_block(net, attrs, [pair]))


def force_poisson(net, attrs, pair):
    return _single(poisson_block(net, attrs, [pair]))


def elasticity_blocks(net, attrs):
    if net.d != 2:
        raise ValueError("the fiber model needs two dofs per node")
    blocks = [extension_block(net, attrs)]
    if len(net.pairs):
        blocks += [angular_block(net, attrs), poisson_block(net, attrs)]
    return blocks


def laplacian_blocks(net, weights=None):
    if net.d != 1:
        raise ValueError("the graph Laplacian model needs one dof per node")
    e = net.edges
    w = np.ones(len(e)) if weights is None else np.asarray(weights, dtype=float)
    unit = np.array([[1.0, -1.0], [-1.0, 1.0]])
    mats = -w[:, None, None] * unit
    p = net.nodes
    return [ElementBlock("laplacian", e.copy(), mats, 0.5 * (p[e[:, 0]] + p[e[:, 1]]))]


def assemble_blocks(blocks, n, select=None):
    """Exactly symmetric sparse ``K = -sum(blocks)``.

    Only the upper triangle is summed and then mirrored, so ``K == K.T``
    holds bitwise regardless of summation order.
    """
    parts = [b.triplets(None if select is None else select[k]) for k, b in enumerate(blocks)]
    if parts:
        rows, cols, vals = (np.concatenate(x) for x in zip(*parts))
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    return assemble_symmetric(rows, cols, vals, n)


def assemble_symmetric(rows, cols, vals, n):
    """Sum the upper-triangle triplets and mirror them."""
    upper = rows <= cols
    U = assemble_arrays(rows[upper], cols[upper], vals[upper], n, n)
    strict = sp.triu(U, k=1)
    return (U + strict.T).tocsr()


def assemble_elasticity(net, attrs):
    return assemble_blocks(elasticity_blocks(net, attrs), net.n_dofs)


def assemble_laplacian(net, weights=None):
    return assemble_blocks(laplacian_blocks(net, weights), net.n_dofs)


def map_lame(net, field, c=0.5, width=1.0, volume=1.0):
    """Model parameters from nodal Lamé fields.

    ``k = (2 mu_e + l_e) / (5c)``, ``kappa = mu_e / (4 c^2)`` with edge means
    ``mu_e, l_e``; ``eta = (2 mu_j + l_j) / (5c)`` and
    ``gamma = 2 l_j / (4 eta c^2)`` at the central node ``j`` of a pair.
    A pair's angular coefficient is the mean ``kappa`` of its two edges times
    ``volume``.  ``width`` and ``volume`` may be scalars or arrays.
    """
    lam, mu = field.lam, field.mu
    e = net.edges
    mu_e = 0.5 * (mu[e[:, 0]] + mu[e[:, 1]])
    lam_e = 0.5 * (lam[e[:, 0]] + lam[e[:, 1]])
    k = (2 * mu_e + lam_e) / (5 * c)
    kappa = mu_e / (4 * c * c)
    width = np.broadcast_to(np.asarray(width, dtype=float), k.shape).copy()
    edges = EdgeAttributes(width, k)

    pairs = net.pairs
    if len(pairs):
        j = pairs[:, 1]
        eta = (2 * mu[j] + lam[j]) / (5 * c)
        gamma = 2 * lam[j] / (4 * eta * c * c)
        k1, k2 = _pair_edge_ids(net, pairs)
        kv = 0.5 * (kappa[k1] + kappa[k2]) * np.asarray(volume, dtype=float)
        kv = np.broadcast_to(kv, eta.shape).copy()
    else:
        eta = gamma = kv = np.zeros(0)
    return Attributes(edges, PairAttributes(kv, eta, gamma))
