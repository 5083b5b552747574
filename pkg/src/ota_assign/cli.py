"""Command-line entry point: ``ota-assign {assign,simulate,compare,dpg-demo,make-scene}``.

Exit codes: 0 success, 1 input or I/O error, 2 solver did not reach its
marginal tolerance (results are still written).
"""
import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .assignment import (
    ORACLE_LIMIT,
    EnumerationTooLarge,
    assign,
    assign_hungarian,
    assign_ota,
    exact_transport_oracle,
    harden,
)
from .config import ConfigError, load_config
from .dpg import (
    ExpertBank,
    FeaturePyramid,
    ShapeError,
    StaircaseParams,
    generate_dynamic_proposals,
    load_params,
    staircase_forward,
    weight_head_forward,
    weight_stats,
)
from .scenefile import SceneFile, SceneFormatError, load_scene
from .simulate import (
    aggregate,
    generate_scene,
    report_csv,
    report_json,
    run_iterative_assignment,
    simulate_stage_predictions,
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2
TAU_SWEEP = (1.0, 0.1, 0.01)


class CommandError(Exception):
    pass


def worker_count():
    raw = os.environ.get("OTA_ASSIGN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError as exc:
        raise CommandError(f"OTA_ASSIGN_THREADS: expected an integer, got {raw!r}") from exc
    if n < 0:
        raise CommandError("OTA_ASSIGN_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CommandError(f"cannot write {path}: {exc.strerror}") from exc


def cmd_assign(args):
    cfg = load_config(args.config)
    scene = load_scene(args.scene)
    gts, labels, preds, scores = scene.normalized()
    stage = args.stage if args.stage is not None else cfg.solver.stages
    result = assign(gts, labels, preds, scores, cfg.cost, stage, cfg.solver)
    out = {
        "matcher": cfg.solver.matcher,
        "stage": stage,
        "labels": result.assignment.to_json_labels(),
        "positives_per_gt": result.assignment.positives_per_gt.tolist(),
        "supplies": {
            "gt_units": list(result.supply.gt_units),
            "background_units": result.supply.background_units,
        },
        "k_estimate": list(result.k_estimate),
        "k_stage": list(result.k_stage),
        "marginal_error": result.plan.marginal_error,
        "total_cost": result.total_cost,
        "converged": result.plan.converged,
    }
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    if not result.plan.converged:
        print(
            f"warning: marginal error {result.plan.marginal_error:.3g} exceeds tol {cfg.solver.tol:.3g}",
            file=sys.stderr,
        )
        return EXIT_NONCONVERGED
    return EXIT_OK


def _report_paths(report):
    p = Path(report)
    stem = p.with_suffix("") if p.suffix in (".csv", ".json") else p
    return stem.with_name(stem.name + ".csv"), stem.with_name(stem.name + ".json")


def cmd_simulate(args):
    cfg = load_config(args.config)
    sim = cfg.simulate
    seeds = args.seeds if args.seeds is not None else sim.seeds
    if seeds < 1:
        raise CommandError("--seeds must be >= 1")

    def one(seed):
        scene = generate_scene(seed, sim.m, sim.K, sim.image_size)
        return run_iterative_assignment(scene, sim, cfg.solver, cfg.cost)

    workers = min(worker_count(), seeds)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, range(seeds)))
    else:
        runs = [one(s) for s in range(seeds)]
    rows = aggregate(runs)
    meta = {"seeds": seeds, "config": cfg.to_dict()}
    csv_path, json_path = _report_paths(args.report)
    _write(csv_path, report_csv(rows, args.timings))
    _write(json_path, report_json(rows, meta, args.timings))
    if not all(r.converged for r in rows):
        print("warning: some stages did not reach the marginal tolerance", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def compare_scene(scene: SceneFile, cfg, epsilon=0.01, anneal_halvings=3):
    """Hungarian, Sinkhorn and exact-oracle costs on one scene, same cost matrix."""
    gts, labels, preds, scores = scene.normalized()
    solver = dataclasses.replace(cfg.solver, epsilon=epsilon, anneal_halvings=anneal_halvings)
    rows = len(gts) + 1
    if rows ** len(preds) > ORACLE_LIMIT:
        raise EnumerationTooLarge(
            f"{rows}^{len(preds)} assignments exceed the enumeration guard of {ORACLE_LIMIT}"
        )
    ota = assign_ota(gts, labels, preds, scores, cfg.cost, solver.stages, solver)
    hung = assign_hungarian(gts, labels, preds, scores, cfg.cost)
    oracle = exact_transport_oracle(ota.cost, ota.supply)
    oracle_labels = harden(oracle).labels
    sink_labels = ota.assignment.labels
    return {
        "hungarian_cost": hung.total_cost,
        "sinkhorn_cost": ota.total_cost,
        "oracle_cost": oracle.cost(ota.cost),
        "label_agreement": float(np.mean(sink_labels == oracle_labels)),
        "marginal_error": ota.plan.marginal_error,
        "converged": ota.plan.converged,
    }


def cmd_compare(args):
    cfg = load_config(args.config)
    scene = load_scene(args.scene)
    res = compare_scene(scene, cfg, args.epsilon, args.anneal_halvings)
    cols = ("hungarian_cost", "sinkhorn_cost", "oracle_cost", "label_agreement")
    print("  ".join(f"{c:>16}" for c in cols))
    print("  ".join(f"{res[c]:>16.6f}" for c in cols))
    if args.json:
        _write(args.json, json.dumps(res, indent=2) + "\n")
    return EXIT_OK if res["converged"] else EXIT_NONCONVERGED


def cmd_dpg_demo(args):
    cfg = load_config(args.config)
    d = cfg.dpg
    if args.params:
        params, bank = load_params(args.params, channels=d.C, num_experts=d.N_e,
                                   num_proposals=d.N_p, size=d.S, hidden=d.D_h)
        params = params.with_tau(d.tau)
    else:
        params = StaircaseParams.random(d.C, d.N_e, d.N_p, d.S, d.D_h, d.tau, args.seed, d.weight_mode)
        bank = ExpertBank.random(d.N_e, d.N_p, d.C, args.seed + 1)
    pyramid = FeaturePyramid.random(d.C, d.H2, seed=args.seed + 2)
    boxes, feats, weights = generate_dynamic_proposals(pyramid, bank, params)
    flat = staircase_forward(pyramid, params)
    sweep = [
        {"tau": tau, **weight_stats(weight_head_forward(flat, params.with_tau(tau)))}
        for tau in TAU_SWEEP
    ]
    out = {
        "num_experts": params.num_experts,
        "num_proposals": params.num_proposals,
        "tau": params.tau,
        "boxes_cxcywh": boxes.tolist(),
        "features": feats.tolist(),
        "weight_stats": weight_stats(weights),
        "tau_sweep": sweep,
    }
    _write(args.out, json.dumps(out) + "\n")
    return EXIT_OK


def cmd_make_scene(args):
    scene = generate_scene(args.seed, args.m, args.classes)
    preds = simulate_stage_predictions(scene, args.stage, args.stages, args.n, args.sigma_max, args.per_gt)
    doc = SceneFile(scene.image_size, scene.gt_boxes, scene.gt_labels, preds.boxes, preds.scores).to_json()
    _write(args.out, json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="ota-assign", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assign", help="assign predictions of one scene file")
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--stage", type=int, help="stage t (default: last stage)")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("simulate", help="multi-stage simulation sweep over seeds")
    p.add_argument("--config")
    p.add_argument("--seeds", type=int)
    p.add_argument("--report", required=True, help="output stem; writes <stem>.csv and <stem>.json")
    p.add_argument("--timings", action="store_true", help="add a wall_time column (not reproducible)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="Hungarian vs Sinkhorn vs exact oracle on a small scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--anneal-halvings", type=int, default=3)
    p.add_argument("--json", help="also write the figures to this JSON file")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("dpg-demo", help="dynamic proposal generation on a random pyramid")
    p.add_argument("--config")
    p.add_argument("--params", help="JSON parameter file (random parameters if omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dpg_demo)

    p = sub.add_parser("make-scene", help="write a simulated scene file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--stage", type=int, default=6)
    p.add_argument("--stages", type=int, default=6)
    p.add_argument("--sigma-max", type=float, default=0.2)
    p.add_argument("--per-gt", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_scene)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CommandError, ConfigError, SceneFormatError, ShapeError, EnumerationTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
