"""Full pipeline orchestration: topopt -> encode/forward -> projection -> FEA.

Emits, per run: the lamination and design field files, a grayscale PNG of the
design (solid = black), a per-stage timing CSV, a JSON-lines evaluation
report, and a tab-separated ledger row with the columns
h_c, eps_i, mu_min, V_ref, C_ref, h_f, eps_f, V_f, C_f, ratio, t_f.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluate as evalmod
from . import topopt as topoptmod
from .encoding import EncoderConfig
from .network import load_checkpoint
from .postprocess import DensityDesign, ProjectionConfig, dehomogenize
from .fields import ScalarField, write_field, read_field, read_meta, meta_path

LEDGER_COLUMNS = ("problem", "resolution", "h_c", "eps_i", "mu_min", "V_ref",
                  "C_ref", "h_f", "eps_f", "V_f", "C_f", "ratio", "t_f")


@dataclass(frozen=True)
class PipelineConfig:
    problem: str
    nx: int
    ny: int
    V_max: float
    mu_min: float
    epsilon_i: float
    checkpoint: str
    outdir: str
    h: float = 1.0
    h_min: int = 3
    m_up_override: int | None = None
    deterministic: bool = False
    theta_path: str | None = None
    seed: int = 0
    max_opt_iter: int = 420
    eval_rtol: float = 1e-8
    reuse_lamination: bool = True

    def __post_init__(self):
        if self.problem not in ("michell", "double_clamped", "l_shape"):
            raise ValueError(f"unknown problem {self.problem!r}")


def save_design_png(design: DensityDesign, path) -> None:
    from PIL import Image
    img = ((1.0 - design.rho) * 255.0).astype(np.uint8)
    # row 0 is the bottom of the domain; image rows grow downward
    Image.fromarray(img[::-1], mode="L").save(path)


def write_timings_csv(timings: dict, total: float, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "seconds"])
        for name, sec in timings.items():
            w.writerow([name, f"{sec:.6f}"])
        w.writerow(["total", f"{total:.6f}"])


def append_ledger_row(path, row: dict) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, delimiter="\t")
        if new:
            w.writerow(LEDGER_COLUMNS)
        w.writerow([row[c] for c in LEDGER_COLUMNS])


def _load_net(cfg: PipelineConfig):
    net, meta = load_checkpoint(cfg.checkpoint)
    ckpt_eps = float(meta.get("epsilon_i", -1.0))
    if abs(ckpt_eps - cfg.epsilon_i) > 1e-9:
        raise ValueError(
            f"checkpoint trained for epsilon_i={ckpt_eps}, requested {cfg.epsilon_i}")
    return net, meta


def _make_problem(cfg: PipelineConfig) -> topoptmod.TopOptProblem:
    kwargs = dict(nx=cfg.nx, ny=cfg.ny, V_max=cfg.V_max, mu_min=cfg.mu_min, h=cfg.h)
    if cfg.problem == "l_shape" and cfg.theta_path is not None:
        kwargs["theta_init"] = read_field(cfg.theta_path).values
    return topoptmod.make_problem(cfg.problem, **kwargs)


def run_pipeline(cfg: PipelineConfig, callback=None) -> evalmod.EvalReport:
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tag = f"{cfg.problem}_{cfg.nx}x{cfg.ny}_V{cfg.V_max:g}_mu{cfg.mu_min:g}_eps{cfg.epsilon_i:g}"
    stage = "setup"
    try:
        problem = _make_problem(cfg)
        net, _ = _load_net(cfg)

        stage = "topopt"
        lam_path = outdir / f"{tag}_lamination.field"
        if cfg.reuse_lamination and lam_path.exists():
            lam = topoptmod.load_solution(lam_path)
        else:
            opt_cfg = topoptmod.OptimizerConfig(max_iter=cfg.max_opt_iter)
            lam = topoptmod.optimize(problem, opt_cfg, callback=callback)
            topoptmod.save_solution(lam, lam_path)

        stage = "dehomogenize"
        proj = ProjectionConfig(epsilon_i=cfg.epsilon_i, mu_min=cfg.mu_min,
                                h_min=cfg.h_min, m_up_override=cfg.m_up_override)
        t0 = time.perf_counter()
        design, timings = dehomogenize(lam, net, proj,
                                       load_elements=problem.load_elements)
        t_f = time.perf_counter() - t0
        write_field(ScalarField(design.grid, design.rho), outdir / f"{tag}_design.field",
                    meta={"C_ref": lam.C_ref, "V_ref": lam.V_ref,
                          "volume_fraction": design.volume_fraction})
        save_design_png(design, outdir / f"{tag}_design.png")
        write_timings_csv(timings, t_f, outdir / f"{tag}_timings.csv")

        stage = "evaluate"
        report = evalmod.evaluate_design(design, problem, C_ref=lam.C_ref,
                                         V_ref=lam.V_ref, rtol=cfg.eval_rtol)
        evalmod.append_report(report, outdir / f"{tag}_report.jsonl")

        m_up = proj.m_up
        row = {
            "problem": cfg.problem,
            "resolution": f"{cfg.nx}x{cfg.ny}",
            "h_c": cfg.h,
            "eps_i": cfg.epsilon_i,
            "mu_min": cfg.mu_min,
            "V_ref": f"{lam.V_ref:.4f}",
            "C_ref": f"{lam.C_ref:.4f}",
            "h_f": f"{cfg.h / (8 * m_up):.6g}",
            "eps_f": cfg.epsilon_i * m_up,
            "V_f": f"{report.V_f:.4f}",
            "C_f": f"{report.C_f:.4f}",
            "ratio": f"{report.ratio:.4f}",
            "t_f": f"{t_f:.2f}",
        }
        append_ledger_row(outdir / "results_ledger.tsv", row)
        return report
    except Exception as exc:
        raise RuntimeError(f"pipeline stage '{stage}' failed for {tag}: {exc}") from exc


def benchmark_suite(cells: list[dict], checkpoint: str, outdir: str,
                    deterministic: bool = False, callback=None) -> dict:
    """Run one pipeline per cell; per-cell failures are recorded, not raised.

    Each cell is a dict of PipelineConfig overrides (problem, nx, ny, V_max,
    mu_min, epsilon_i, ...). Returns a summary with mean ratio and mean
    volume overshoot over the successful cells.
    """
    results, failures = [], []
    for cell in cells:
        cfg = PipelineConfig(checkpoint=checkpoint, outdir=outdir,
                             deterministic=deterministic, **cell)
        try:
            report = run_pipeline(cfg, callback=callback)
            results.append((cell, report))
        except Exception as exc:  # noqa: BLE001 - suite must continue
            failures.append((cell, str(exc)))
    ratios = [r.ratio for _, r in results]
    overshoot = [(r.V_f - r.V_ref) / r.V_ref for _, r in results]
    summary = {
        "cells": len(cells),
        "succeeded": len(results),
        "failed": len(failures),
        "mean_ratio": float(np.mean(ratios)) if ratios else float("nan"),
        "mean_volume_overshoot": float(np.mean(overshoot)) if overshoot else float("nan"),
        "failures": failures,
    }
    with open(Path(outdir) / "suite_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=str)
    return summary
