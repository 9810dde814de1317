"""Command-line interface.

Subcommands: gen-dataset, train, topopt, encode, dehomogenize, evaluate,
pipeline, suite. Global flags --seed, --deterministic and --threads apply to
every subcommand.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _apply_globals(args) -> None:
    import torch
    torch.set_num_threads(args.threads)
    torch.manual_seed(args.seed)
    np.random.seed(args.seed)
    if args.deterministic:
        torch.use_deterministic_algorithms(True)


def _add_globals(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    p.add_argument("--deterministic", action="store_true",
                   help="force deterministic kernels and reductions")
    p.add_argument("--threads", type=int, default=1, help="CPU thread count")


def cmd_gen_dataset(args) -> int:
    from .synth import DatasetConfig, generate_dataset
    cfg = DatasetConfig(num_patches=args.count, rng_seed=args.seed)
    manifest = generate_dataset(cfg, args.out)
    print(f"wrote {args.count} patches, manifest {manifest}")
    return 0


def cmd_train(args) -> int:
    from .training import TrainConfig, train
    cfg = TrainConfig(epsilon_i=args.epsilon_i, seed=args.seed,
                      epochs_phase1=args.epochs_phase1,
                      epochs_phase2=args.epochs_phase2,
                      batch_size=args.batch_size)
    train(cfg, args.data, args.out, log_path=args.log)
    print(f"checkpoint written to {args.out}")
    return 0


def _build_problem(args):
    from .topopt import make_problem, problem_from_config
    if args.problem.endswith(".json"):
        return problem_from_config(args.problem)
    kwargs = dict(nx=args.nx, ny=args.ny, V_max=args.vmax, mu_min=args.mu_min)
    if args.theta_init:
        from .fields import read_field
        kwargs["theta_init"] = read_field(args.theta_init).values
    return make_problem(args.problem, **kwargs)


def _add_problem_args(p, require=True):
    p.add_argument("--problem", required=require,
                   help="michell | double_clamped | l_shape, or a JSON config path")
    p.add_argument("--nx", type=int, default=60)
    p.add_argument("--ny", type=int, default=30)
    p.add_argument("--vmax", type=float, default=0.25)
    p.add_argument("--mu-min", type=float, default=0.05)
    p.add_argument("--theta-init", default=None,
                   help="pre-combed orientation field file (l_shape)")


def cmd_topopt(args) -> int:
    from .topopt import OptimizerConfig, optimize, save_solution
    problem = _build_problem(args)
    cfg = OptimizerConfig(max_iter=args.max_iter)
    last = {"iter": 0}
    def cb(row):
        last.update(row)
        if row["iter"] % args.log_every == 0:
            print(f"iter {row['iter']:4d}  C={row['C']:.4f}  V={row['V']:.4f}  "
                  f"beta={row['beta']:g}  change={row['change']:.4f}")
    sol = optimize(problem, cfg, callback=cb)
    save_solution(sol, args.out)
    status = "converged" if sol.converged else "NOT converged (best iterate kept)"
    print(f"{status} after {sol.iterations} iterations: "
          f"C_ref={sol.C_ref:.4f} V_ref={sol.V_ref:.4f} -> {args.out}")
    return 0


def cmd_encode(args) -> int:
    from .encoding import EncoderConfig, encode_field
    from .fields import OrientationField, read_field, write_field
    fld = read_field(args.theta)
    if not isinstance(fld, OrientationField):
        fld = OrientationField(fld.grid, fld.values)
    cfg = EncoderConfig(num_channels=args.channels, pad_width=args.pad)
    write_field(encode_field(fld, cfg), args.out)
    print(f"encoded {args.theta} -> {args.out} ({args.channels} channels)")
    return 0


def cmd_dehomogenize(args) -> int:
    from .network import load_checkpoint
    from .postprocess import ProjectionConfig, dehomogenize
    from .topopt import load_solution
    from .fields import ScalarField, write_field
    from .pipeline import save_design_png, write_timings_csv
    import time
    lam = load_solution(args.lamination)
    net, meta = load_checkpoint(args.weights)
    proj_kwargs = dict(epsilon_i=float(meta.get("epsilon_i", 10.0)),
                       mu_min=args.mu_min, h_min=args.h_min,
                       m_up_override=args.m_up)
    if args.config:
        with open(args.config) as fh:
            proj_kwargs.update(json.load(fh))
    cfg = ProjectionConfig(**proj_kwargs)
    t0 = time.perf_counter()
    design, timings = dehomogenize(lam, net, cfg)
    total = time.perf_counter() - t0
    write_field(ScalarField(design.grid, design.rho), args.out,
                meta={"C_ref": lam.C_ref, "V_ref": lam.V_ref,
                      "volume_fraction": design.volume_fraction})
    if args.timings:
        write_timings_csv(timings, total, args.timings)
    if args.png:
        save_design_png(design, args.png)
    print(f"design {design.rho.shape[1]}x{design.rho.shape[0]} "
          f"V_f={design.volume_fraction:.4f} in {total:.2f}s -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluate import append_report, evaluate_design
    from .fields import Grid2D, read_field, read_meta, meta_path
    from .postprocess import DensityDesign
    fld = read_field(args.design)
    meta = read_meta(meta_path(args.design))
    design = DensityDesign.from_binary(fld.grid, fld.values > 0.5)
    problem = _build_problem(args)
    C_ref = args.c_ref if args.c_ref is not None else float(meta["C_ref"])
    V_ref = args.v_ref if args.v_ref is not None else float(meta["V_ref"])
    report = evaluate_design(design, problem, C_ref=C_ref, V_ref=V_ref)
    append_report(report, args.report)
    print(report.to_json())
    return 1 if report.disconnected else 0


def cmd_pipeline(args) -> int:
    from .pipeline import PipelineConfig, run_pipeline
    cfg = PipelineConfig(problem=args.problem, nx=args.nx, ny=args.ny,
                         V_max=args.vmax, mu_min=args.mu_min,
                         epsilon_i=args.epsilon_i, checkpoint=args.checkpoint,
                         outdir=args.outdir, m_up_override=args.m_up,
                         deterministic=args.deterministic,
                         theta_path=args.theta_init, seed=args.seed,
                         max_opt_iter=args.max_iter)
    report = run_pipeline(cfg)
    print(f"ratio={report.ratio:.4f} C_f={report.C_f:.4f} V_f={report.V_f:.4f} "
          f"(C_ref={report.C_ref:.4f} V_ref={report.V_ref:.4f})")
    return 1 if report.disconnected else 0


def cmd_suite(args) -> int:
    from .pipeline import benchmark_suite
    with open(args.config) as fh:
        cells = json.load(fh)
    if not isinstance(cells, list):
        raise SystemExit("suite config must be a JSON list of cell objects")
    summary = benchmark_suite(cells, checkpoint=args.checkpoint,
                              outdir=args.outdir,
                              deterministic=args.deterministic)
    print(json.dumps(summary, indent=2, default=str))
    return 1 if summary["failed"] else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dehomog",
                                description="Neural de-homogenization pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-dataset", help="generate a synthetic orientation dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=2000)
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", help="two-phase generator training")
    t.add_argument("--data", required=True, help="dataset manifest path")
    t.add_argument("--out", required=True, help="output checkpoint path")
    t.add_argument("--epsilon-i", type=float, default=10.0)
    t.add_argument("--epochs-phase1", type=int, default=10)
    t.add_argument("--epochs-phase2", type=int, default=5)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--log", default=None, help="CSV metrics log path")
    t.set_defaults(func=cmd_train)

    o = sub.add_parser("topopt", help="coarse homogenization-based optimization")
    _add_problem_args(o)
    o.add_argument("--out", required=True, help="lamination field output path")
    o.add_argument("--max-iter", type=int, default=420)
    o.add_argument("--log-every", type=int, default=20)
    o.set_defaults(func=cmd_topopt)

    e = sub.add_parser("encode", help="encode an orientation field")
    e.add_argument("--theta", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--channels", type=int, default=24)
    e.add_argument("--pad", type=int, default=2)
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("dehomogenize", help="project a lamination to a fine design")
    d.add_argument("--lamination", required=True)
    d.add_argument("--weights", required=True)
    d.add_argument("--config", default=None, help="JSON projection overrides")
    d.add_argument("--out", required=True)
    d.add_argument("--timings", default=None, help="per-stage timing CSV")
    d.add_argument("--png", default=None, help="grayscale design image path")
    d.add_argument("--mu-min", type=float, default=0.05)
    d.add_argument("--h-min", type=int, default=3)
    d.add_argument("--m-up", type=int, default=None)
    d.set_defaults(func=cmd_dehomogenize)

    v = sub.add_parser("evaluate", help="fine-mesh FEA of a design")
    v.add_argument("--design", required=True)
    _add_problem_args(v)
    v.add_argument("--report", required=True, help="JSON-lines report path")
    v.add_argument("--c-ref", type=float, default=None)
    v.add_argument("--v-ref", type=float, default=None)
    v.set_defaults(func=cmd_evaluate)

    pl = sub.add_parser("pipeline", help="full topopt -> dehomogenize -> evaluate run")
    _add_problem_args(pl)
    pl.add_argument("--epsilon-i", type=float, default=10.0)
    pl.add_argument("--checkpoint", required=True)
    pl.add_argument("--outdir", required=True)
    pl.add_argument("--m-up", type=int, default=None)
    pl.add_argument("--max-iter", type=int, default=420)
    pl.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("suite", help="benchmark suite over a JSON cell matrix")
    s.add_argument("--config", required=True, help="JSON list of pipeline cells")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_suite)

    for sp in sub.choices.values():
        _add_globals(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_globals(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
