"""Fine-mesh evaluation: BC/load mapping and the cross-solver compliance oracle."""

import json

import numpy as np
import pytest

from dehomog import evaluate, fem, topopt
from dehomog.fields import Grid2D
from dehomog.laminate import isotropic_tensor
from dehomog.postprocess import DensityDesign


def solid_design(problem, factor):
    nyf, nxf = problem.grid.ny * factor, problem.grid.nx * factor
    grid = Grid2D(nxf, nyf, problem.grid.h / factor)
    return DensityDesign.from_binary(grid, np.ones((nyf, nxf), bool))


class TestMapping:
    def test_fixed_dofs_factor_one_identity(self):
        p = topopt.michell_problem(16, 8)
        assert np.array_equal(evaluate.map_fixed_dofs(p, 1), np.unique(p.fixed_dofs))

    def test_fixed_dofs_cover_clamped_edge(self):
        p = topopt.michell_problem(16, 8)
        factor = 4
        fixed = evaluate.map_fixed_dofs(p, factor)
        nxf = 16 * factor
        # all fine nodes on the left edge, both components
        nodes = fixed // 2
        assert np.all(nodes % (nxf + 1) == 0)
        assert np.unique(nodes).size == 8 * factor + 1
        assert fixed.size == 2 * (8 * factor + 1)

    def test_load_total_force_preserved(self):
        p = topopt.michell_problem(20, 10)
        for factor in (1, 3, 8):
            f = evaluate.map_load(p, factor)
            assert f.sum() == pytest.approx(p.load.sum())
            assert f.size == 2 * (20 * factor + 1) * (10 * factor + 1)

    def test_load_lands_on_right_edge(self):
        p = topopt.michell_problem(16, 8)
        f = evaluate.map_load(p, 4)
        nxf = 64
        nodes = np.nonzero(f)[0] // 2
        assert np.all(nodes % (nxf + 1) == nxf)


class TestEvaluateDesign:
    def test_solid_design_matches_coarse_reference(self):
        # rank-2 at mu = 1 is isotropic, so a factor-1 solid fine solve must
        # reproduce the coarse solid compliance exactly
        p = topopt.michell_problem(16, 8)
        n = p.grid.nx * p.grid.ny
        _, C_solid, _ = topopt.assemble_and_solve(
            p, np.ones(n), np.ones(n), np.zeros(n))
        rep = evaluate.evaluate_design(solid_design(p, 1), p, C_ref=C_solid,
                                       V_ref=1.0, rtol=1e-10)
        assert rep.converged and not rep.disconnected
        assert rep.C_f == pytest.approx(C_solid, rel=1e-6)
        assert rep.V_f == 1.0
        assert rep.ratio == pytest.approx(1.0, rel=1e-6)

    def test_refined_solid_is_more_compliant_but_close(self):
        # mesh refinement monotonically softens a displacement FE model
        p = topopt.michell_problem(16, 8)
        r1 = evaluate.evaluate_design(solid_design(p, 1), p, 1.0, 1.0)
        r2 = evaluate.evaluate_design(solid_design(p, 2), p, 1.0, 1.0)
        assert r2.C_f > r1.C_f
        assert r2.C_f < 1.3 * r1.C_f

    def test_disconnected_design_flagged(self):
        p = topopt.michell_problem(16, 8)
        rho = np.ones((8, 16), bool)
        rho[:, 8] = False  # sever the load from the support
        grid = Grid2D(16, 8, 1.0)
        rep = evaluate.evaluate_design(DensityDesign.from_binary(grid, rho), p,
                                       C_ref=1.0, V_ref=1.0, max_iter=3000)
        assert rep.disconnected

    def test_rejects_non_multiple_grids(self):
        p = topopt.michell_problem(16, 8)
        grid = Grid2D(17, 8, 1.0)
        bad = DensityDesign.from_binary(grid, np.ones((8, 17), bool))
        with pytest.raises(ValueError):
            evaluate.evaluate_design(bad, p, 1.0, 1.0)

    def test_report_json_roundtrip(self, tmp_path):
        rep = evaluate.EvalReport(C_f=1.0, V_f=0.5, C_ref=0.9, V_ref=0.4,
                                  ratio=1.39, wall_time=0.1, iterations=10,
                                  residual=1e-9, converged=True,
                                  disconnected=False)
        path = tmp_path / "reports.jsonl"
        evaluate.append_report(rep, path)
        evaluate.append_report(rep, path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 2
        assert rows[0]["ratio"] == pytest.approx(1.39)
        assert rows[0]["converged"] is True
