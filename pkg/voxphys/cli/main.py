"""
voxphys command line.

    python -m voxphys.cli build-rep --scene scene.json --object 1 --out rep.vxg
    python -m voxphys.cli loss --grid v.vxg --others o.vxg --json
    python -m voxphys.cli refine --grid v.vxg --occluded rep.vxg --out r.vxg --report r.json
    python -m voxphys.cli refine --grid v.vxg --occluded rep.vxg --preset stability_only --out s.vxg
    python -m voxphys.cli baseline --grid v.vxg --method extrude --out e.vxg
    python -m voxphys.cli mesh --grid r.vxg --out r.obj
    python -m voxphys.cli chamfer --mesh-a a.obj --mesh-b b.obj
    python -m voxphys.cli stability-check --grid r.vxg

Exit codes: 0 success, 2 malformed input, 3 semantic error.
"""
import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from voxphys import config
from voxphys.cli.utils import load_scene, read_voxel_grid, write_voxel_grid
from voxphys.errors import MalformedInput, VoxPhysError
from voxphys.grid.core import BinaryGrid, ProbGrid, binarize, require_same_frame
from voxphys.perception.frustum import build_representation
from voxphys.priors.connectivity import ConnectivityParams, connectivity_log_prob
from voxphys.priors.stability import StabilityParams, check_static_equilibrium, stability_log_prob
from voxphys.reconstruction.meshing import (
    chamfer_distance,
    marching_cubes,
    read_obj,
    surface_sample,
    write_obj,
)
from voxphys.reconstruction.baselines import carve_observed_empty, extrude_to_table
from voxphys.reconstruction.refine import PRESETS, RefineParams, refine

logger = logging.getLogger("voxphys.cli")


# ---------- helpers ----------
def _prob_grid(path: str) -> ProbGrid:
    vgf = read_voxel_grid(path)
    if vgf.header.channels != 1:
        raise MalformedInput(f"{path}: expected a single-channel probability grid, found {vgf.header.channels} channels")
    return vgf.prob_grid(0)


def _others(path: Optional[str], like: ProbGrid) -> ProbGrid:
    if path is None:
        return ProbGrid.zeros(like.frame)
    others = _prob_grid(path)
    require_same_frame(like, others)
    return others


def _occluded_mask(path: str) -> BinaryGrid:
    """Unobserved channel of a four-channel representation, or a plain mask file."""
    vgf = read_voxel_grid(path)
    if vgf.header.channels == 4:
        return vgf.mask(3)
    if vgf.header.channels == 1:
        return vgf.mask(0)
    raise MalformedInput(f"{path}: occluded mask needs 1 or 4 channels, found {vgf.header.channels}")


# -----------------------------
#  COMMANDS
# -----------------------------
def cmd_build_rep(args) -> int:
    cam, obs, z_manifest = load_scene(args.scene)
    z_table = args.z_table if args.z_table is not None else z_manifest
    rep = build_representation(obs, cam, args.object, k=args.k, d=args.dim, z_table=z_table)
    meta = {"k": rep.k, "object_id": args.object, "z_table": rep.z_table, "table_source": rep.table_source}
    write_voxel_grid(args.out, rep.frame, rep.stack(), meta=meta)
    logger.info("✓ Wrote representation of object %d to %s", args.object, args.out)
    return 0


def cmd_loss(args) -> int:
    V = _prob_grid(args.grid)
    others = _others(args.others, V)
    result = {"stability_logp": None, "connectivity_logp": None}
    if args.which in ("stability", "both"):
        result["stability_logp"] = stability_log_prob(V, others, StabilityParams(n_directions=args.n_directions))
    if args.which in ("connectivity", "both"):
        params = ConnectivityParams(coarsen_factor=args.coarsen_factor)
        result["connectivity_logp"] = connectivity_log_prob(V, params)

    if args.json:
        print(json.dumps(result))
    else:
        for key, value in result.items():
            if value is not None:
                print(f"{key}: {value:.17g}")
    return 0


def cmd_refine(args) -> int:
    V = _prob_grid(args.grid)
    occluded = _occluded_mask(args.occluded)
    others = _others(args.others, V)
    w_stability, w_connectivity = PRESETS[args.preset] if args.preset else (args.w_stability, args.w_connectivity)
    params = RefineParams(
        iterations=args.steps,
        step=args.step_size,
        w_stability=w_stability,
        w_connectivity=w_connectivity,
        stability=StabilityParams(n_directions=args.n_directions),
        connectivity=ConnectivityParams(coarsen_factor=args.coarsen_factor),
        progress=args.progress,
    )
    refined, report = refine(V, occluded, others, params)
    write_voxel_grid(args.out, refined.frame, refined.values, meta={"refine_iterations": report.iterations_run})
    if args.report:
        report.write(args.report)
    logger.info("✓ Refined %s in %d iterations (%s)", args.grid, report.iterations_run, report.stop_reason)
    return 0


def cmd_baseline(args) -> int:
    V = _prob_grid(args.grid)
    if args.method == "extrude":
        out = extrude_to_table(V)
    else:
        if args.rep is None:
            raise MalformedInput("carve needs --rep, a four-channel representation")
        vgf = read_voxel_grid(args.rep)
        if vgf.header.channels != 4:
            raise MalformedInput(f"{args.rep}: expected 4 channels, found {vgf.header.channels}")
        empty = vgf.mask(2)
        require_same_frame(V, empty)
        out = carve_observed_empty(V, empty)
    write_voxel_grid(args.out, out.frame, out.values, meta={"baseline": args.method})
    logger.info("✓ Wrote %s baseline of %s to %s", args.method, args.grid, args.out)
    return 0


def cmd_mesh(args) -> int:
    vgf = read_voxel_grid(args.grid)
    mesh = marching_cubes(vgf.prob_grid(args.channel), iso=args.iso)
    write_obj(args.out, mesh)
    return 0


def cmd_chamfer(args) -> int:
    a = surface_sample(read_obj(args.mesh_a), args.samples, seed=args.seed)
    b = surface_sample(read_obj(args.mesh_b), args.samples, seed=args.seed)
    print(f"{chamfer_distance(a, b):.9f}")
    return 0


def cmd_stability_check(args) -> int:
    V = _prob_grid(args.grid)
    others = _others(args.others, V)
    report = check_static_equilibrium(
        binarize(V, args.threshold),
        binarize(others, args.threshold),
        StabilityParams(n_directions=args.n_directions),
    )
    if args.json:
        print(json.dumps(report.to_dict()))
    elif report.stable:
        print("stable")
    else:
        print("unstable")
        print("failing directions: " + " ".join(str(j) for j in report.failing))
    return 0


# -----------------------------
#  PARSER
# -----------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxphys", description="Physical priors over voxel occupancy grids")
    p.add_argument("--log-level", default=config.LOG_LEVEL, help="Logging level (default from VOXPHYS_LOG_LEVEL)")
    p.add_argument("--progress", action="store_true", default=config.PROGRESS, help="Show progress bars")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("build-rep", help="Build the four-channel representation of one object")
    s.add_argument("--scene", required=True, help="Scene manifest (JSON)")
    s.add_argument("--object", type=int, required=True, help="Instance label of the object")
    s.add_argument("--dim", type=int, default=config.GRID_DIM, help="Voxels per axis")
    s.add_argument("--k", type=float, default=config.K_SCALE, help="Grid side as a multiple of the object extent")
    s.add_argument("--z-table", type=float, default=None, help="Table height; overrides the manifest")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build_rep)

    s = sub.add_parser("loss", help="Evaluate stability and connectivity log-probabilities")
    s.add_argument("--grid", required=True)
    s.add_argument("--others", default=None, help="Occupancy of surrounding objects")
    s.add_argument("--which", choices=["stability", "connectivity", "both"], default="both")
    s.add_argument("--json", action="store_true")
    s.add_argument("--n-directions", type=int, default=config.N_DIRECTIONS)
    s.add_argument("--coarsen-factor", type=int, default=config.COARSEN_FACTOR)
    s.set_defaults(func=cmd_loss)

    s = sub.add_parser("refine", help="Refine occluded voxels with both priors")
    s.add_argument("--grid", required=True)
    s.add_argument("--occluded", required=True, help="Four-channel representation or single-channel mask")
    s.add_argument("--others", default=None)
    s.add_argument("--steps", type=int, default=50)
    s.add_argument("--step-size", type=float, default=0.1)
    s.add_argument("--w-stability", type=float, default=1.0)
    s.add_argument("--w-connectivity", type=float, default=1.0)
    s.add_argument("--preset", choices=sorted(PRESETS), default=None, help="Named prior weights; overrides --w-*")
    s.add_argument("--n-directions", type=int, default=config.N_DIRECTIONS)
    s.add_argument("--coarsen-factor", type=int, default=config.COARSEN_FACTOR)
    s.add_argument("--out", required=True)
    s.add_argument("--report", default=None, help="JSON report, or CSV when the name ends in .csv")
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("baseline", help="Prior-free completion: extrude to the table or carve observed-empty voxels")
    s.add_argument("--grid", required=True)
    s.add_argument("--method", choices=["extrude", "carve"], required=True)
    s.add_argument("--rep", default=None, help="Four-channel representation (carve)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("mesh", help="Extract an iso-surface as OBJ")
    s.add_argument("--grid", required=True)
    s.add_argument("--iso", type=float, default=0.5)
    s.add_argument("--channel", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("chamfer", help="Chamfer distance between two meshes (meters)")
    s.add_argument("--mesh-a", required=True)
    s.add_argument("--mesh-b", required=True)
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_chamfer)

    s = sub.add_parser("stability-check", help="Binary static-equilibrium check")
    s.add_argument("--grid", required=True)
    s.add_argument("--others", default=None)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--n-directions", type=int, default=config.N_DIRECTIONS)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_stability_check)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=config.LOG_FORMAT, stream=sys.stderr)

    try:
        return args.func(args)
    except VoxPhysError as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except (ValidationError, OSError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
