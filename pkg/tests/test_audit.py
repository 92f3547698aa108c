import math

import numpy as np
import pytest

from plasthin import tensors as T
from plasthin.audit import check_Kh, check_Khom, hill_slack, kl_characterization_residuals, max_plastic_work_check
from plasthin.discretization import BoundaryDatum, PlateMesh
from plasthin.errors import PreconditionError
from plasthin.materials import MaterialLibrary, PhaseMaterial
from plasthin.microstructure import build_phase_map
from plasthin.solver import PlateProblem
from plasthin.twoscale import TwoScaleProblem

LAMINATE = build_phase_map("laminate", 8, fractions=(0.5, 0.5))
MATS = MaterialLibrary((PhaseMaterial(2.0, 1.0, 1.0), PhaseMaterial(4.0, 2.0, 0.5)))
IN_PLANE = (0, 1, 3)
OUT_OF_PLANE = (2, 4, 5)
TOL = 1e-8


def stretch(a):
    return BoundaryDatum(w1=lambda x1, x2: a * x1, w3=lambda x1, x2: 0.2 * a * x1 * x2,
                         profile=((0, 0), (1, 1)))


def constant(n, comp, c=0.3):
    s = np.zeros((n, 6))
    s[:, comp] = c
    return s


@pytest.fixture(scope="module")
def plate():
    mesh = PlateMesh((0.4, 0.4), (4, 4, 2))
    p = PlateProblem(mesh, MATS, LAMINATE, 0.1, 0.1, stretch(1.0))
    states, reports = p.evolve(np.linspace(0, 1, 5))
    return p, states, reports


@pytest.fixture(scope="module")
def hom():
    p = TwoScaleProblem((1.0, 1.0), (3, 3), 2, 2, 1.0, MATS, LAMINATE, stretch(1.0))
    states, reports = p.evolve(np.linspace(0, 1, 6))
    return p, states, reports


class TestKh:
    def check(self, p, sigma):
        return check_Kh(sigma, p.mesh, p.h, p.eps, p.materials, p.phase_map, model=p.model)

    def test_zero_stress(self, plate):
        p, _, _ = plate
        r = self.check(p, np.zeros((p.model.n_points, 6)))
        assert r.div_residual == 0 and r.boundary_residual == 0
        assert r.yield_violation < 0
        assert r.passed(TOL)

    @pytest.mark.parametrize("comp", IN_PLANE)
    def test_constant_in_plane_stress(self, plate, comp):
        p, _, _ = plate
        r = self.check(p, constant(p.model.n_points, comp))
        assert r.div_residual <= 1e-14
        assert r.boundary_residual <= 1e-14
        assert r.yield_violation < 0

    @pytest.mark.parametrize("comp", OUT_OF_PLANE)
    def test_constant_transverse_stress_loads_faces(self, plate, comp):
        p, _, _ = plate
        r = self.check(p, constant(p.model.n_points, comp, c=-0.3))
        assert r.div_residual <= 1e-14
        assert r.boundary_residual == pytest.approx(0.3, rel=1e-12)
        assert not r.passed(TOL)

    def test_yield_violation_flagged(self, plate):
        p, _, _ = plate
        r = self.check(p, constant(p.model.n_points, 3, c=5.0))
        assert r.yield_violation > 0
        assert r.relative()["yield_violation"] > 0.5

    def test_solver_stresses_admissible(self, plate):
        p, states, _ = plate
        for s in states:
            r = self.check(p, p.model.stress(s.e_scaled))
            assert r.passed(TOL), r.relative()

    def test_rejects_bad_input(self, plate):
        p, _, _ = plate
        s = np.zeros((p.model.n_points, 6))
        s[0, 0] = np.nan
        with pytest.raises(PreconditionError):
            self.check(p, s)

    def test_row_has_named_fields(self, plate):
        p, _, _ = plate
        row = self.check(p, np.zeros((p.model.n_points, 6))).as_row()
        for key in ("div_residual", "boundary_residual", "yield_violation", "membrane_residual"):
            assert key in row


class TestKhom:
    def test_zero_stress(self, hom):
        p, _, _ = hom
        r = check_Khom(np.zeros((p.model.n_points, 6)), p)
        assert all(v == 0 for v in r.relative().values())

    @pytest.mark.parametrize("comp", IN_PLANE)
    def test_constant_in_plane_stress(self, hom, comp):
        p, _, _ = hom
        r = check_Khom(constant(p.model.n_points, comp), p)
        assert max(r.relative().values()) <= 1e-12

    @pytest.mark.parametrize("comp", OUT_OF_PLANE)
    def test_constant_transverse_stress(self, hom, comp):
        p, _, _ = hom
        r = check_Khom(constant(p.model.n_points, comp), p)
        # the micro divergence, yield and moment items hold; traction and averages do not
        assert r.items["micro_div"] <= 1e-12
        assert r.items["membrane"] <= 1e-12 and r.items["bending"] <= 1e-12
        assert r.items["yield"] < 0
        assert r.items["face_traction"] == pytest.approx(0.3, rel=1e-9)
        assert r.items["i3_average"] == pytest.approx(0.3, rel=1e-12)

    def test_solver_stresses_admissible(self, hom):
        p, states, _ = hom
        for s in states:
            r = check_Khom(p.stress(s), p)
            assert r.passed(TOL), r.relative()


class TestPlasticWork:
    def test_hill_slack_on_yield_surface(self):
        n = T.dev(np.array([1.0, -0.5, 0.2, 0.3, 0.0, -0.1]))
        n = n / T.norm(n)
        r = 0.7
        assert hill_slack(r * n, 0.2 * n, r, 1.0) == pytest.approx(0.0, abs=1e-15)
        assert hill_slack(0.5 * r * n, 0.2 * n, r, 1.0) == pytest.approx(0.07, rel=1e-12)
        assert hill_slack(r * n, np.zeros(6), r, 1.0) == 0

    def test_hill_slack_random_admissible(self, rng):
        r = 1.3
        for _ in range(200):
            s = T.dev(rng.normal(size=6))
            s *= r * rng.uniform() / T.norm(s)
            dP = T.dev(rng.normal(size=6))
            assert hill_slack(s, dP, r, 1.0) >= 0

    def test_zero_increment(self, hom):
        p, states, _ = hom
        s = states[-1]
        z = np.zeros_like(s.P)
        slack = max_plastic_work_check(p.stress(s), z, z, np.zeros(p.model.n_dofs), p, tol=TOL)
        assert slack == pytest.approx(0.0, abs=1e-14)

    def test_converged_increments(self, hom):
        p, states, reports = hom
        scale = max(r.elastic_energy for r in reports)
        slacks = []
        for prev, cur in zip(states[:-1], states[1:]):
            slacks.append(max_plastic_work_check(
                p.stress(cur), cur.P - prev.P, cur.E - prev.E, p.lifting(cur.t) - p.lifting(prev.t), p, tol=TOL))
        assert min(slacks) >= -1e-8 * scale
        assert all(math.isfinite(v) for v in slacks)

    def test_inadmissible_stress_rejected(self, hom):
        p, states, _ = hom
        s = states[-1]
        bad = constant(p.model.n_points, 2)
        z = np.zeros_like(s.P)
        with pytest.raises(PreconditionError):
            max_plastic_work_check(bad, z, z, np.zeros(p.model.n_dofs), p)


def test_kl_characterization(hom):
    p, states, _ = hom
    for s in states[1:]:
        res = kl_characterization_residuals(p, s)
        assert res["membrane"] <= 1e-8
        assert res["bending"] <= 1e-8
        assert res["remainder"] <= 1e-8
