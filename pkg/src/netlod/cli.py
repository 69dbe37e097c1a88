"""``netlod`` command line: problem generation, reference and multiscale solves, decay and convergence studies.

Every verb builds its problem from an :class:`ExperimentConfig`.  Values come
from ``--config FILE`` (JSON object with the flag names as keys, dashes or
underscores) and are overridden by flags given on the command line.  CSV goes
to ``--out DIR`` when set and to stdout otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import network
from .coarse import build_grid, interpolate_basis
from .experiments import (
    CONVERGENCE_FIELDS,
    PROBLEMS,
    SETUPS,
    ExperimentConfig,
    fit_slope,
    make_problem,
    run_convergence,
    run_decay,
    solve_lod,
    write_csv,
)
from .lod import errors, load_basis, save_basis, solve_full

log = logging.getLogger("netlod")

CONFIG_KEYS = ("problem", "setup", "r", "R", "C", "rho", "rhos", "seed", "out", "pair_policy", "load_components")


def _rho(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("patch radius must be positive")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", help="JSON file with default values for the flags below")
    g.add_argument("--problem", choices=PROBLEMS)
    g.add_argument("--setup", choices=SETUPS)
    g.add_argument("--r", type=int, help="network resolution: (r+1)^2 nodes")
    g.add_argument("--R", type=int, action="append", help="coarse resolution; repeat for several")
    g.add_argument("--C", type=float, help="patch schedule constant, rho = C log2(R)")
    g.add_argument("--rho", type=_rho, help="fixed patch radius in coarse cells (accepts inf)")
    g.add_argument("--decay-rho", dest="rhos", type=_rho, action="append",
                   help="patch radius for the decay study; repeat for several")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory (default: stdout)")
    g.add_argument("--pair-policy", choices=("all-pairs", "non-collinear"))
    g.add_argument("--load", dest="load_components", choices=("both", "x", "y"),
                   help="components carrying the 1/h^2 load in the fixed-boundary problem")
    g.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="netlod", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("generate", parents=[common], help="write the network, attributes and boundary conditions as JSON")
    sub.add_parser("solve-full", parents=[common], help="reference fine-scale solve")
    lod = sub.add_parser("solve-lod", parents=[common], help="localized multiscale solve on one coarse grid")
    lod.add_argument("--save-basis", metavar="FILE", help="write the correctors in coordinate format")
    lod.add_argument("--load-basis", metavar="FILE", help="reuse correctors written by --save-basis")
    lod.add_argument("--compare", action="store_true", help="also report errors against the reference solve")
    sub.add_parser("decay", parents=[common], help="corrector localization error against patch radius")
    sub.add_parser("convergence", parents=[common], help="LOD and FEM errors against coarse mesh size")
    return p


def load_config_file(path):
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    out = {}
    for key, value in doc.items():
        k = key.replace("-", "_")
        if k == "decay_rho":
            k = "rhos"
        if k == "load":
            k = "load_components"
        if k not in CONFIG_KEYS:
            raise ValueError(f"{path}: unknown config key {key!r}")
        out[k] = value
    return out


def config_from_args(args):
    values = load_config_file(args.config) if args.config else {}
    for k in CONFIG_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    for k in ("rho",):
        if isinstance(values.get(k), str):
            values[k] = float(values[k])
    if "rhos" in values:
        values["rhos"] = [float(x) for x in values["rhos"]]
    if args.verb == "decay":
        values.setdefault("r", 64)
        values.setdefault("R", [8])
    if "R" not in values:
        r = values.get("r", ExperimentConfig.r)
        values["R"] = [R for R in (2, 4, 8, 16, 32) if 2 * R <= r]
    if args.verb in ("solve-lod", "decay", "convergence") and not values["R"]:
        raise ValueError("no coarse resolution: pass --R")
    return ExperimentConfig(**values)


class _Output:
    """Write named CSV/JSON products into ``--out`` or to stdout."""

    def __init__(self, directory):
        self.directory = directory
        if directory:
            os.makedirs(directory, exist_ok=True)

    def open(self, name):
        if not self.directory:
            return _NoClose(sys.stdout)
        return open(os.path.join(self.directory, name), "w", newline="\n")


class _NoClose:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        self.fh.flush()


def _solution_rows(net, u):
    U = u.reshape(-1, net.d)
    return [[k, net.nodes[k, 0], net.nodes[k, 1], *U[k]] for k in range(net.n_nodes)]


SOLUTION_FIELDS = ("node", "x", "y", "ux", "uy")


def cmd_generate(cfg, args, out):
    prob = make_problem(cfg)
    with out.open("network.json") as fh:
        json.dump(network.to_dict(prob.net, prob.attrs, prob.bc), fh)
        fh.write("\n")
    log.info("network: %d nodes, %d edges, %d pairs", prob.net.n_nodes, len(prob.net.edges), len(prob.net.pairs))


def cmd_solve_full(cfg, args, out):
    prob = make_problem(cfg)
    u = solve_full(prob.K, prob.F, prob.bc).u
    with out.open("solution_full.csv") as fh:
        write_csv(fh, SOLUTION_FIELDS, _solution_rows(prob.net, u))


def cmd_solve_lod(cfg, args, out):
    prob = make_problem(cfg)
    R = cfg.R[0]
    rho = cfg.patch_radius(R)
    basis = None
    if args.load_basis:
        ops = interpolate_basis(build_grid(R, prob.net, prob.bc), prob.net)
        basis = load_basis(args.load_basis, ops)
    u_lod, u_fem, basis = solve_lod(prob, R, rho, basis)
    if args.save_basis:
        save_basis(args.save_basis, basis)
    with out.open("solution_lod.csv") as fh:
        write_csv(fh, SOLUTION_FIELDS, _solution_rows(prob.net, u_lod))
    if args.compare:
        u_ref = solve_full(prob.K, prob.F, prob.bc).u
        for tag, u in (("lod", u_lod), ("fem", u_fem)):
            e = errors(prob.K, u_ref, u)
            print(f"{tag}: rel_energy={e.rel_energy:.6e} rel_l2={e.rel_l2:.6e}", file=sys.stderr)


def cmd_decay(cfg, args, out):
    rows = run_decay(cfg)
    with out.open("decay.csv") as fh:
        write_csv(fh, ("rho", "rel_energy_error"), rows)


def cmd_convergence(cfg, args, out):
    rows = run_convergence(cfg)
    with out.open("convergence.csv") as fh:
        write_csv(fh, CONVERGENCE_FIELDS, rows)
    H = [row["H"] for row in rows]
    for tag in ("lod", "fem"):
        se = fit_slope(H, [row[f"{tag}_rel_energy"] for row in rows])
        sl = fit_slope(H, [row[f"{tag}_rel_l2"] for row in rows])
        print(f"{tag}: energy slope {se:.3f}, L2 slope {sl:.3f}", file=sys.stderr)
    if any(row["status"] != "ok" for row in rows):
        return 1
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "solve-full": cmd_solve_full,
    "solve-lod": cmd_solve_lod,
    "decay": cmd_decay,
    "convergence": cmd_convergence,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (OSError, ValueError, TypeError) as exc:
        parser.error(str(exc))
    try:
        rc = COMMANDS[args.verb](cfg, args, _Output(cfg.out))
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"netlod {args.verb}: error: {exc}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
