"""Localized orthogonal decomposition on networks.

Pipeline for a coarse grid and patch radius ``rho``:

1. :func:`split_elements` assigns every edge/pair element matrix to one
   coarse element, giving ``K = sum_E K_E``.
2. :func:`compute_correctors` solves, per coarse element ``E``, the patch
   saddle problem ``[[K^E, C^E^T], [C^E, 0]] [phi; eta] = [K_E(N_E, :) lambda_i; 0]``
   for every coarse dof ``i`` whose right-hand side is nonzero, reusing one
   factorization per element, and sums the pieces.
3. :func:`build_basis` forms ``lambda_i - phi_i`` for free coarse dofs.
4. :func:`solve_multiscale` does the Galerkin solve in that basis.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .coarse import build_patches
from .models import assemble_symmetric
from .sparse import SaddleFactor, SolverError, SPDFactor, extract, read_coo, write_coo

log = logging.getLogger(__name__)


# -- element split -------------------------------------------------------------

@dataclass
class ElementSplit:
    """Per coarse element: touched global dofs and the local matrix ``K_E`` on them."""

    n: int
    dofs: list
    local: list
    owners: list      # per block: owning coarse element of each element matrix

    def matrix(self, e):
        D = self.dofs[e]
        A = self.local[e].tocoo()
        return sp.csr_matrix((A.data, (D[A.row], D[A.col])), shape=(self.n, self.n))

    def total(self):
        out = sp.csr_matrix((self.n, self.n))
        for e in range(len(self.dofs)):
            out = out + self.matrix(e)
        return out


def split_elements(blocks, grid, n):
    """Assign each element matrix wholly to the coarse element containing its anchor.

    Anchors are edge midpoints and pair central nodes; ties on element
    boundaries go to the element with the smaller index.
    """
    owners = [grid.owner_element(b.anchors) for b in blocks]
    order = [np.argsort(o, kind="stable") for o in owners]
    starts = [np.searchsorted(o[idx], np.arange(grid.n_elements + 1)) for o, idx in zip(owners, order)]
    dofs, local = [], []
    for e in range(grid.n_elements):
        parts = []
        for b, idx, st in zip(blocks, order, starts):
            sel = idx[st[e]:st[e + 1]]
            if sel.size:
                parts.append(b.triplets(sel))
        if not parts:
            dofs.append(np.zeros(0, dtype=np.int64))
            local.append(sp.csr_matrix((0, 0)))
            continue
        rows, cols, vals = (np.concatenate(x) for x in zip(*parts))
        D, inv = np.unique(np.concatenate([rows, cols]), return_inverse=True)
        lr, lc = inv[: rows.size], inv[rows.size:]
        dofs.append(D)
        local.append(assemble_symmetric(lr, lc, vals, D.size))
    return ElementSplit(n, dofs, local, owners)


# -- correctors ----------------------------------------------------------------

def orthonormal_rows(C):
    """Orthonormal basis of the row space of ``C`` as a dense ``(rank, n)`` array.

    Nearly dependent constraint rows make the saddle system ill-conditioned
    without changing the constrained space; an SVD basis removes that.
    """
    C = C.toarray() if sp.issparse(C) else np.asarray(C, dtype=float)
    if C.shape[0] == 0:
        return C
    _, s, Vt = la.svd(C, full_matrices=False)
    tol = max(C.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    return Vt[: int(np.sum(s > tol))]


def compute_correctors(K, split, patches, ops, columns=None):
    """Localized correctors ``phi~_i = sum_E phi~_i^E`` as a sparse ``(n, m)`` matrix.

    ``columns`` selects coarse dofs (default: all ``m``, which the
    displaced-boundary correction needs).  Columns not requested stay zero.
    """
    K = sp.csr_matrix(K)
    n, m = ops.lam.shape
    lam = ops.lam.tocsr()
    want = np.zeros(m, dtype=bool)
    want[np.arange(m) if columns is None else np.asarray(columns, dtype=np.int64)] = True
    CH = ops.CH
    chunks, acc = [], sp.csc_matrix((n, m))
    pending = 0
    for e in range(len(split.dofs)):
        D = split.dofs[e]
        if D.size == 0:
            continue
        NE = patches.fine[e]
        # r_i^E = K_E(N_E, :) lambda_i, nonzero only where K_E's rows meet N_E
        KEl = split.local[e]
        rE = (KEl @ lam[D]).tocsc()
        hit = np.isin(D, NE, assume_unique=True)
        rE = rE[np.flatnonzero(hit)]
        cols = np.flatnonzero((np.diff(rE.indptr) > 0) & want)
        if cols.size == 0:
            continue
        R = np.zeros((NE.size, cols.size))
        R[np.searchsorted(NE, D[hit])] = rE[:, cols].toarray()
        keep = np.flatnonzero(np.any(R != 0, axis=0))
        if keep.size == 0:
            continue
        cols, R = cols[keep], R[:, keep]
        KE = extract(K, NE, NE)
        CE = orthonormal_rows(CH[patches.rows[e]][:, NE])
        try:
            fac = SaddleFactor(KE, CE, context=f"element {e}")
            phi, _ = fac.solve(R)
        except SolverError as exc:
            raise SolverError(f"corrector solve failed for element {e}, coarse dofs {cols.tolist()}: {exc}",
                              (e, cols.tolist())) from exc
        if fac.regularized:
            log.info("element %d used the regularized saddle system", e)
        rr = np.repeat(NE, cols.size)
        cc = np.tile(cols, NE.size)
        chunks.append((rr, cc, phi.ravel()))
        pending += rr.size
        if pending > 5_000_000:
            acc = acc + _flush(chunks, n, m)
            chunks, pending = [], 0
    if chunks:
        acc = acc + _flush(chunks, n, m)
    acc.eliminate_zeros()
    return acc.tocsc()


def _flush(chunks, n, m):
    rr, cc, vv = (np.concatenate(x) for x in zip(*chunks))
    nz = vv != 0
    return sp.csc_matrix((vv[nz], (rr[nz], cc[nz])), shape=(n, m))


def global_correctors(K, ops, bc, columns=None):
    """Unlocalized correctors ``phi_i`` from one saddle problem over all free dofs."""
    n, m = ops.lam.shape
    free = bc.free(n)
    cols = np.arange(m) if columns is None else np.asarray(columns, dtype=np.int64)
    Kf = extract(K, free, free)
    C = orthonormal_rows(ops.CH[:, free])
    rhs = (sp.csr_matrix(K)[free] @ ops.lam[:, cols]).toarray()
    phi, _ = SaddleFactor(Kf, C, context="global corrector").solve(rhs)
    full = sp.csc_matrix((phi.ravel(), (np.repeat(free, cols.size), np.tile(cols, free.size))), shape=(n, m))
    full.eliminate_zeros()
    return full


@dataclass
class MultiscaleBasis:
    phi: sp.csc_matrix      # (n, m) correctors, all coarse dofs
    B: sp.csc_matrix        # (n, m_H) columns lambda_i - phi_i, i free
    free: np.ndarray        # free coarse dofs, column order of B

    @property
    def m_H(self):
        return self.B.shape[1]


def build_basis(correctors, ops):
    phi = sp.csc_matrix(correctors)
    free = ops.grid.free
    B = (ops.lam[:, free] - phi[:, free]).tocsc()
    return MultiscaleBasis(phi, B, free)


def fem_basis(ops):
    """Unmodified coarse basis ``B_H``: the classical finite element baseline."""
    n, m = ops.lam.shape
    return MultiscaleBasis(sp.csc_matrix((n, m)), ops.BH.tocsc(), ops.grid.free)


def multiscale_basis(K, blocks, net, bc, grid, ops, rho, columns=None):
    """Split, patches, localized correctors and basis in one call."""
    split = split_elements(blocks, grid, net.n_dofs)
    patches = build_patches(grid, net, bc, ops, rho)
    return build_basis(compute_correctors(K, split, patches, ops, columns), ops)


def save_basis(path, basis):
    write_coo(path, basis.phi, header="netlod correctors")


def load_basis(path, ops):
    phi = read_coo(path)
    if phi.shape != ops.lam.shape:
        raise ValueError(f"corrector file shape {phi.shape} does not match {ops.lam.shape}")
    return build_basis(phi, ops)


# -- solves ----------------------------------------------------------------------

@dataclass
class Solution:
    u: np.ndarray
    U: np.ndarray | None = None
    g_H: np.ndarray | None = None


def solve_multiscale(K, F, basis):
    """Galerkin solve ``B^T K B U = B^T F``, ``u = B U``."""
    B = basis.B
    F = np.asarray(F, dtype=float)
    if basis.m_H == 0:
        return Solution(np.zeros(B.shape[0]), np.zeros(0))
    A = (B.T @ (sp.csr_matrix(K) @ B)).tocsc()
    A = 0.5 * (A + A.T)
    U = SPDFactor(A, context="multiscale system").solve(B.T @ F)
    return Solution(B @ U, U)


def solve_full(K, F, bc):
    """Reference solve on the free dofs with prescribed values reinserted."""
    n = K.shape[0]
    free = bc.free(n)
    g = bc.full_vector(n)
    K = sp.csr_matrix(K)
    rhs = np.asarray(F, dtype=float)[free] - K[free][:, bc.fixed] @ bc.values
    u = g.copy()
    u[free] = SPDFactor(extract(K, free, free), context="full system").solve(rhs)
    return Solution(u)


def coarse_boundary_coefficients(ops, net, bc, rtol=1e-12):
    """Coefficients ``alpha`` with ``g_H = lam @ alpha`` from prescribed nodal values.

    ``alpha_i`` for a fixed coarse dof is the value at the nearest fixed network
    dof of the same component inside its support; free coarse dofs get zero.
    """
    grid = ops.grid
    alpha = np.zeros(grid.m)
    if not grid.fixed.size:
        return alpha
    lam = ops.lam.tocsc()
    g = bc.full_vector(net.n_dofs)
    fixed_mask = np.zeros(net.n_dofs, dtype=bool)
    fixed_mask[bc.fixed] = True
    P = grid.dof_positions()
    pos = net.dof_positions()
    for i in grid.fixed:
        col = lam[:, i]
        rows = col.indices[fixed_mask[col.indices]]
        if rows.size == 0:
            continue
        dist = np.hypot(*(pos[rows] - P[i]).T)
        alpha[i] = g[rows[np.argmin(dist)]]
    g_H = lam @ alpha
    scale = max(np.max(np.abs(bc.values)) if bc.values.size else 0.0, 1e-300)
    mismatch = np.max(np.abs(g_H[bc.fixed] - bc.values)) if bc.fixed.size else 0.0
    if mismatch > rtol * scale:
        warnings.warn(f"prescribed values are not in the coarse span on the boundary "
                      f"(max mismatch {mismatch:.3e}); the error bound no longer applies",
                      RuntimeWarning, stacklevel=2)
    return alpha


def solve_displaced(K, bc, basis, ops, net, F=None):
    """Multiscale solve with nonzero prescribed values.

    ``u = u_0 + g_H - sum_i alpha_i phi_i`` where ``u_0`` is the multiscale
    solution for load ``F - K g_H``.
    """
    n = K.shape[0]
    F = np.zeros(n) if F is None else np.asarray(F, dtype=float)
    alpha = coarse_boundary_coefficients(ops, net, bc)
    g_H = ops.lam @ alpha
    free = bc.free(n)
    load = np.zeros(n)
    load[free] = (F - K @ g_H)[free]
    sol = solve_multiscale(K, load, basis)
    u = sol.u + g_H - basis.phi @ alpha
    return Solution(u, sol.U, g_H)


# -- norms and errors ------------------------------------------------------------

def energy_norm(K, v, tol=1e-12):
    v = np.asarray(v, dtype=float)
    e = float(v @ (K @ v))
    if e < 0:
        if e < -tol * max(1.0, float(v @ v)):
            raise ValueError(f"negative energy {e:.3e}: matrix is not positive semi-definite")
        e = 0.0
    return float(np.sqrt(e))


def l2_norm(v):
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(v @ v))


@dataclass
class Errors:
    abs_energy: float
    rel_energy: float
    abs_l2: float
    rel_l2: float


def errors(K, u_ref, u):
    diff = np.asarray(u_ref) - np.asarray(u)
    ref_e, ref_l = energy_norm(K, u_ref), l2_norm(u_ref)
    ae, al = energy_norm(K, diff), l2_norm(diff)
    return Errors(ae, ae / ref_e if ref_e else np.nan, al, al / ref_l if ref_l else np.nan)


def corrector_decay_error(K, blocks, net, bc, grid, ops, dof, rhos):
    """Relative energy error of the localized corrector of coarse ``dof`` per patch radius."""
    phi = global_correctors(K, ops, bc, [dof])[:, dof].toarray().ravel()
    ref = energy_norm(K, phi)
    split = split_elements(blocks, grid, net.n_dofs)
    out = []
    for rho in rhos:
        patches = build_patches(grid, net, bc, ops, rho)
        loc = compute_correctors(K, split, patches, ops, [dof])[:, dof].toarray().ravel()
        out.append(energy_norm(K, phi - loc) / ref)
    return out
