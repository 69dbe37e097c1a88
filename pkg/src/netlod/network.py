"""Discrete networks: nodes, edges, edge pairs, attributes, boundary conditions.

Degrees of freedom are interleaved, ``dof = d * node + component``, which is
the 0-based form of the classical ``u(2i-1), u(2i)`` ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .sparse import index_set

PAIR_POLICIES = ("all-pairs", "non-collinear")


class NetworkFormatError(ValueError):
    """Malformed network file; carries the offending field."""

    def __init__(self, message, field=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class Network:
    nodes: np.ndarray                     # (N, 2) positions
    edges: np.ndarray                     # (E, 2), i < j
    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))  # (P, 3), (i, j, l), i < l
    d: int = 2
    z: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        object.__setattr__(self, "pairs", _canonical_pairs(self.pairs))
        if self.d not in (1, 2):
            raise ValueError("dofs per node must be 1 or 2")
        N = len(self.nodes)
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= N:
                raise ValueError("edge references a missing node")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ValueError("self-loop edge")
            if len(np.unique(self.edges, axis=0)) != len(self.edges):
                raise ValueError("duplicate edge")
            if np.any(self.edge_lengths() <= 0):
                raise ValueError("zero-length edge")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_dofs(self):
        return self.d * len(self.nodes)

    def edge_lengths(self):
        p = self.nodes
        return np.linalg.norm(p[self.edges[:, 1]] - p[self.edges[:, 0]], axis=1)

    def dof_positions(self):
        """Position of the node owning each dof, shape ``(n, 2)``."""
        return np.repeat(self.nodes, self.d, axis=0)

    def dof_index(self, node, component=0):
        return dof_index(node, component, self.d)

    def validate_pairs(self):
        if not self.pairs.size:
            return
        known = {tuple(e) for e in self.edges.tolist()}
        for i, j, l in self.pairs.tolist():
            if i == l or (min(i, j), max(i, j)) not in known or (min(j, l), max(j, l)) not in known:
                raise ValueError(f"pair {(i, j, l)} is not made of two distinct edges at node {j}")


def _canonical_edges(edges):
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return np.sort(e, axis=1)


def _canonical_pairs(pairs):
    p = np.asarray(pairs, dtype=np.int64).reshape(-1, 3).copy()
    swap = p[:, 0] > p[:, 2]
    p[swap] = p[swap][:, ::-1]
    return p


def dof_index(node, component=0, d=2):
    if not 0 <= component < d:
        raise ValueError(f"component {component} invalid for d={d}")
    return d * node + component


@dataclass(frozen=True)
class EdgeAttributes:
    width: np.ndarray       # w_ij
    modulus: np.ndarray     # k_ij

    def __post_init__(self):
        object.__setattr__(self, "width", np.asarray(self.width, dtype=float))
        object.__setattr__(self, "modulus", np.asarray(self.modulus, dtype=float))
        if np.any(self.width <= 0) or np.any(self.modulus <= 0):
            raise ValueError("edge width and modulus must be positive")


@dataclass(frozen=True)
class PairAttributes:
    kappa_v: np.ndarray     # angular stiffness times volume factor
    eta: np.ndarray         # Poisson modulus
    gamma: np.ndarray       # Poisson coupling

    def __post_init__(self):
        for name in ("kappa_v", "eta", "gamma"):
            a = np.asarray(getattr(self, name), dtype=float)
            if np.any(a < 0):
                raise ValueError(f"pair attribute {name} must be non-negative")
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class Attributes:
    edges: EdgeAttributes
    pairs: PairAttributes

    @classmethod
    def uniform(cls, net, width=1.0, modulus=1.0, kappa_v=1.0, eta=1.0, gamma=1.0):
        ne, npair = len(net.edges), len(net.pairs)
        return cls(EdgeAttributes(np.full(ne, width), np.full(ne, modulus)),
                   PairAttributes(np.full(npair, kappa_v), np.full(npair, eta), np.full(npair, gamma)))


@dataclass(frozen=True)
class BoundaryConditions:
    fixed: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        fixed = np.asarray(self.fixed, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if fixed.shape != values.shape:
            raise ValueError("one prescribed value per fixed dof is required")
        order = np.argsort(fixed, kind="stable")
        fixed, values = fixed[order], values[order]
        if fixed.size > 1 and np.any(np.diff(fixed) == 0):
            raise ValueError("duplicate fixed dof")
        object.__setattr__(self, "fixed", fixed)
        object.__setattr__(self, "values", values)

    @classmethod
    def none(cls):
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    def free(self, n):
        mask = np.ones(n, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def full_vector(self, n):
        g = np.zeros(n)
        g[self.fixed] = self.values
        return g

    @property
    def homogeneous(self):
        return not np.any(self.values)


def generate_regular(r, d=2, z=1.0):
    """Unit-square grid with ``(r+1)^2`` nodes at ``(a/r, b/r)``; node ``a + (r+1) b``."""
    if r < 2:
        raise ValueError("a regular network needs r >= 2")
    s = np.arange(r + 1) / r
    X, Y = np.meshgrid(s, s)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((r + 1) ** 2).reshape(r + 1, r + 1)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return Network(nodes, np.vstack([horiz, vert]), d=d, z=z)


def perturb_random(net, amplitude, seed, h=None):
    """Displace every node uniformly in ``[-a h, a h]^2``, keeping boundary nodes on the boundary."""
    if not 0 <= amplitude < 0.5:
        raise ValueError("perturbation amplitude must lie in [0, 0.5)")
    if h is None:
        h = float(np.min(net.edge_lengths()))
    rng = np.random.default_rng(seed)
    delta = rng.uniform(-amplitude * h, amplitude * h, size=net.nodes.shape)
    p = net.nodes
    delta[(p[:, 0] == 0) | (p[:, 0] == 1), 0] = 0.0
    delta[(p[:, 1] == 0) | (p[:, 1] == 1), 1] = 0.0
    return replace(net, nodes=p + delta)


def derive_pairs(net, policy="all-pairs", tol=1e-8):
    """Populate ``net.pairs`` with edge pairs sharing a central node.

    ``all-pairs`` takes every unordered pair of distinct incident edges;
    ``non-collinear`` drops pairs whose edges are parallel (``|sin| <= tol``).
    """
    if policy not in PAIR_POLICIES:
        raise ValueError(f"unknown pair policy {policy!r}; choose from {PAIR_POLICIES}")
    incident = [[] for _ in range(net.n_nodes)]
    for i, j in net.edges.tolist():
        incident[i].append(j)
        incident[j].append(i)
    out = []
    p = net.nodes
    for j, nbrs in enumerate(incident):
        nbrs = sorted(nbrs)
        for a in range(len(nbrs)):
            for b in range(a + 1, len(nbrs)):
                i, l = nbrs[a], nbrs[b]
                if policy == "non-collinear":
                    u, v = p[i] - p[j], p[l] - p[j]
                    s = abs(u[0] * v[1] - u[1] * v[0]) / (np.linalg.norm(u) * np.linalg.norm(v))
                    if s <= tol:
                        continue
                out.append((i, j, l))
    pairs = np.array(out, dtype=np.int64).reshape(-1, 3)
    if pairs.size:
        pairs = pairs[np.lexsort((pairs[:, 2], pairs[:, 0], pairs[:, 1]))]
    return replace(net, pairs=pairs)


def boundary_nodes(net, tol=0.0):
    p = net.nodes
    return np.flatnonzero((np.abs(p[:, 0]) <= tol) | (np.abs(p[:, 0] - 1) <= tol)
                          | (np.abs(p[:, 1]) <= tol) | (np.abs(p[:, 1] - 1) <= tol))


# -- serialization -----------------------------------------------------------

_FIELDS = ("nodes", "edges", "pairs", "edge_attrs", "pair_attrs", "fixed_dofs", "fixed_values", "d", "z")


def to_dict(net, attrs, bc):
    """JSON-ready document for a network with attributes and boundary conditions."""
    return {
        "nodes": net.nodes.tolist(),
        "edges": net.edges.tolist(),
        "pairs": net.pairs.tolist(),
        "edge_attrs": {"width": attrs.edges.width.tolist(), "modulus": attrs.edges.modulus.tolist()},
        "pair_attrs": {"kappa_v": attrs.pairs.kappa_v.tolist(), "eta": attrs.pairs.eta.tolist(),
                       "gamma": attrs.pairs.gamma.tolist()},
        "fixed_dofs": bc.fixed.tolist(),
        "fixed_values": bc.values.tolist(),
        "d": int(net.d),
        "z": float(net.z),
    }


def save(net, attrs, bc, path):
    """Write :func:`to_dict` as JSON; floats round-trip bit for bit."""
    with open(path, "w", newline="\n") as fh:
        json.dump(to_dict(net, attrs, bc), fh)
        fh.write("\n")


def load(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}: invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise NetworkFormatError(f"{path}: top level must be an object")
    for key in _FIELDS:
        if key not in doc:
            raise NetworkFormatError(f"{path}: missing field", field=key)

    def arr(key, value, shape_tail, dtype):
        try:
            a = np.asarray(value, dtype=dtype)
            if shape_tail is not None:
                a = a.reshape((-1,) + shape_tail) if a.size else np.zeros((0,) + shape_tail, dtype=dtype)
            return a
        except (TypeError, ValueError) as exc:
            raise NetworkFormatError(f"{path}: {exc}", field=key) from exc

    nodes = arr("nodes", doc["nodes"], (2,), float)
    edges = arr("edges", doc["edges"], (2,), np.int64)
    pairs = arr("pairs", doc["pairs"], (3,), np.int64)
    try:
        net = Network(nodes, edges, pairs, d=int(doc["d"]), z=float(doc["z"]))
        net.validate_pairs()
        ea, pa = doc["edge_attrs"], doc["pair_attrs"]
        attrs = Attributes(
            EdgeAttributes(arr("edge_attrs.width", ea["width"], None, float),
                           arr("edge_attrs.modulus", ea["modulus"], None, float)),
            PairAttributes(arr("pair_attrs.kappa_v", pa["kappa_v"], None, float),
                           arr("pair_attrs.eta", pa["eta"], None, float),
                           arr("pair_attrs.gamma", pa["gamma"], None, float)))
        bc = BoundaryConditions(arr("fixed_dofs", doc["fixed_dofs"], None, np.int64),
                                arr("fixed_values", doc["fixed_values"], None, float))
    except KeyError as exc:
        raise NetworkFormatError(f"{path}: missing field", field=exc.args[0]) from exc
    except ValueError as exc:
        if isinstance(exc, NetworkFormatError):
            raise
        raise NetworkFormatError(f"{path}: {exc}") from exc
    if len(attrs.edges.width) != len(net.edges) or len(attrs.edges.modulus) != len(net.edges):
        raise NetworkFormatError(f"{path}: one attribute per edge required", field="edge_attrs")
    if any(len(a) != len(net.pairs) for a in (attrs.pairs.kappa_v, attrs.pairs.eta, attrs.pairs.gamma)):
        raise NetworkFormatError(f"{path}: one attribute per pair required", field="pair_attrs")
    index_set(bc.fixed, net.n_dofs)
    return net, attrs, bc
