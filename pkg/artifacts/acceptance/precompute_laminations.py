"""Precompute and cache the coarse lamination solutions used by the
acceptance suite, so later pipeline runs only do projection + FEA."""
import sys
from pathlib import Path

from dehomog import topopt

ACC = Path(__file__).parent

JOBS = [
    # (outpath, nx, ny, V_max, mu_min)
    (ACC / "michell_60x30_V0.25_mu0.05_lamination.field", 60, 30, 0.25, 0.05),
    (ACC / "pipeline/michell_60x30_V0.4_mu0.1_eps10_lamination.field", 60, 30, 0.40, 0.10),
    (ACC / "pipeline/michell_60x30_V0.25_mu0.1_eps10_lamination.field", 60, 30, 0.25, 0.10),
    (ACC / "pipeline/michell_60x30_V0.25_mu0.2_eps10_lamination.field", 60, 30, 0.25, 0.20),
    (ACC / "pipeline/michell_60x30_V0.4_mu0.2_eps10_lamination.field", 60, 30, 0.40, 0.20),
    (ACC / "pipeline/michell_80x40_V0.25_mu0.2_eps10_lamination.field", 80, 40, 0.25, 0.20),
    (ACC / "pipeline/michell_80x40_V0.4_mu0.2_eps10_lamination.field", 80, 40, 0.40, 0.20),
]

for path, nx, ny, V, mu in JOBS:
    if path.exists():
        print(f"skip {path.name}", flush=True)
        continue
    problem = topopt.michell_problem(nx, ny, V_max=V, mu_min=mu)
    sol = topopt.optimize(problem)
    topopt.save_solution(sol, path)
    print(f"{path.name}: C_ref={sol.C_ref:.4f} V_ref={sol.V_ref:.6f} "
          f"converged={sol.converged} iters={sol.iterations}", flush=True)
print("done", flush=True)
