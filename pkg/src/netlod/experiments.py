"""Unit-square experiments: fixed- and displaced-boundary problems, decay and convergence studies."""

from __future__ import annotations

import csv
import logging
import math
import numbers
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .coarse import build_grid, interpolate_basis
from .lod import (
    corrector_decay_error,
    errors,
    fem_basis,
    multiscale_basis,
    solve_displaced,
    solve_full,
    solve_multiscale,
)
from .models import LameField, assemble_blocks, elasticity_blocks, map_lame
from .network import BoundaryConditions, derive_pairs, generate_regular, perturb_random

log = logging.getLogger(__name__)

PROBLEMS = ("fixed-boundary", "displaced-boundary")
SETUPS = ("basic", "random-coefficients", "random-structure")

LAME_RANGE = (0.1, 10.0)
PERTURBATION = 0.4
DISPLACEMENT = 0.1
SHAPE_C = 0.5


@dataclass
class ExperimentConfig:
    problem: str = "fixed-boundary"
    setup: str = "basic"
    r: int = 128
    R: list = field(default_factory=lambda: [2, 4, 8, 16, 32])
    C: float | None = None            # default 1 (fixed) or 1.5 (displaced)
    rho: float | None = None          # overrides the C log2(R) schedule
    rhos: list = field(default_factory=lambda: [1, 2, 3, 4, 5, math.inf])
    seed: int = 0
    pair_policy: str = "all-pairs"
    load_components: str = "both"
    out: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.setup not in SETUPS:
            raise ValueError(f"setup must be one of {SETUPS}")
        self.R = [int(x) for x in (self.R if isinstance(self.R, (list, tuple)) else [self.R])]
        if not _pow2(self.r) or any(not _pow2(x) for x in self.R):
            raise ValueError("r and every R must be powers of two")
        if self.R and self.r < 2 * max(self.R):
            raise ValueError("r must be at least twice the largest R")
        if self.C is None:
            self.C = 1.0 if self.problem == "fixed-boundary" else 1.5
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.load_components not in ("both", "x", "y"):
            raise ValueError("load_components must be 'both', 'x' or 'y'")

    def patch_radius(self, R):
        """``rho`` with ``rho H = C H log2(1/H)``, unless overridden."""
        return self.rho if self.rho is not None else self.C * math.log2(R)


def _pow2(x):
    return x >= 1 and (x & (x - 1)) == 0


@dataclass
class Problem:
    net: object
    attrs: object
    blocks: list
    K: object
    F: np.ndarray
    bc: BoundaryConditions
    h: float


def make_problem(config):
    """Network, parameters, stiffness matrix, load and boundary conditions for ``config``."""
    r = config.r
    h = 1.0 / r
    ss = np.random.SeedSequence(config.seed)
    coef_seed, struct_seed = ss.spawn(2)
    net = derive_pairs(generate_regular(r), config.pair_policy)
    if config.setup == "random-structure":
        net = perturb_random(net, PERTURBATION, np.random.default_rng(struct_seed), h=h)
    if config.setup == "random-coefficients":
        rng = np.random.default_rng(coef_seed)
        lo, hi = LAME_RANGE
        field_ = LameField(rng.uniform(lo, hi, net.n_nodes), rng.uniform(lo, hi, net.n_nodes))
    else:
        field_ = LameField.uniform(net.n_nodes)
    # edge width c*h and pair volume (c*h)^2 make the regular-grid model a
    # consistent discretization of Lamé elasticity
    attrs = map_lame(net, field_, c=SHAPE_C, width=SHAPE_C * h, volume=(SHAPE_C * h) ** 2)
    blocks = elasticity_blocks(net, attrs)
    K = assemble_blocks(blocks, net.n_dofs)

    p = net.nodes
    n = net.n_dofs
    if config.problem == "fixed-boundary":
        on_bnd = np.flatnonzero((p[:, 0] == 0) | (p[:, 0] == 1) | (p[:, 1] == 0) | (p[:, 1] == 1))
        fixed = np.concatenate([2 * on_bnd, 2 * on_bnd + 1])
        bc = BoundaryConditions(fixed, np.zeros(fixed.size))
        F = np.zeros(n)
        comps = {"both": [0, 1], "x": [0], "y": [1]}[config.load_components]
        for c in comps:
            F[c::2] = 1.0 / h ** 2
        F[bc.fixed] = 0.0
    else:
        left = np.flatnonzero(p[:, 0] == 0)
        right = np.flatnonzero(p[:, 0] == 1)
        fixed = np.concatenate([2 * left, 2 * left + 1, 2 * right])
        values = np.concatenate([np.zeros(2 * left.size), np.full(right.size, DISPLACEMENT)])
        bc = BoundaryConditions(fixed, values)
        F = np.zeros(n)
    return Problem(net, attrs, blocks, K, F, bc, h)


def central_dof(grid, component=0):
    a = grid.R // 2
    return grid.d * (a + (grid.R + 1) * a) + component


def run_decay(config, R=None):
    """Rows ``(rho, rel_energy_error)`` for the central coarse dof."""
    R = R if R is not None else config.R[0]
    prob = make_problem(config)
    grid = build_grid(R, prob.net, prob.bc)
    ops = interpolate_basis(grid, prob.net)
    dof = central_dof(grid)
    errs = corrector_decay_error(prob.K, prob.blocks, prob.net, prob.bc, grid, ops, dof, config.rhos)
    return list(zip(config.rhos, errs))


CONVERGENCE_FIELDS = (
    "R", "H", "rho",
    "lod_abs_energy", "lod_rel_energy", "lod_abs_l2", "lod_rel_l2",
    "fem_abs_energy", "fem_rel_energy", "fem_abs_l2", "fem_rel_l2",
    "status",
)


def solve_lod(prob, R, rho, basis=None):
    """LOD and FEM-baseline solutions on an ``R x R`` grid.

    Returns ``(u_lod, u_fem, basis)``; a precomputed ``basis`` is reused.
    """
    grid = build_grid(R, prob.net, prob.bc)
    ops = interpolate_basis(grid, prob.net)
    displaced = not prob.bc.homogeneous
    if basis is None:
        cols = None if displaced else grid.free
        basis = multiscale_basis(prob.K, prob.blocks, prob.net, prob.bc, grid, ops, rho, columns=cols)
    fem = fem_basis(ops)
    if displaced:
        u_lod = solve_displaced(prob.K, prob.bc, basis, ops, prob.net, prob.F).u
        u_fem = solve_displaced(prob.K, prob.bc, fem, ops, prob.net, prob.F).u
    else:
        u_lod = solve_multiscale(prob.K, prob.F, basis).u
        u_fem = solve_multiscale(prob.K, prob.F, fem).u
    return u_lod, u_fem, basis


def run_convergence(config, prob=None):
    """One row per ``R``: LOD and FEM errors against the full fine solve."""
    prob = make_problem(config) if prob is None else prob
    u_ref = solve_full(prob.K, prob.F, prob.bc).u
    rows = []
    for R in config.R:
        rho = config.patch_radius(R)
        row = {"R": R, "H": 1.0 / R, "rho": rho}
        t0 = time.perf_counter()
        try:
            u_lod, u_fem, _ = solve_lod(prob, R, rho)
            for tag, u in (("lod", u_lod), ("fem", u_fem)):
                err = errors(prob.K, u_ref, u)
                row.update({f"{tag}_{k}": v for k, v in asdict(err).items()})
            row["status"] = "ok"
        except Exception as exc:  # a failed R is recorded and the study goes on
            log.error("R=%d failed: %s", R, exc)
            for k in CONVERGENCE_FIELDS[3:-1]:
                row[k] = math.nan
            row["status"] = f"error: {type(exc).__name__}"
        log.info("R=%d rho=%.3g done in %.1fs", R, rho, time.perf_counter() - t0)
        rows.append(row)
    return rows


def fit_slope(H, err):
    """Least-squares slope of ``log2(err)`` against ``log2(H)``."""
    H, err = np.asarray(H, dtype=float), np.asarray(err, dtype=float)
    ok = np.isfinite(err) & (err > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log2(H[ok]), np.log2(err[ok]), 1)[0])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, numbers.Integral):
        return str(int(v))
    if isinstance(v, numbers.Real):
        v = float(v)
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def write_csv(fh, fields, rows):
    """Rows are dicts keyed by ``fields`` or sequences in ``fields`` order."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        values = [row[f] for f in fields] if isinstance(row, dict) else row
        w.writerow([_fmt(v) for v in values])
