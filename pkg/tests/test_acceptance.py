"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the lines are written to the
terminal even when output capture is on.  Each test also asserts its
criterion, so a red line is a failing test.
"""

import math
import time

import numpy as np
import pytest
from oracles import interface_grid_search, one_cell_trajectory, sym3_to_matrix

from plasthin import tensors as T
from plasthin.audit import check_Kh, check_Khom, kl_characterization_residuals, max_plastic_work_check
from plasthin.config import ScenarioConfig, build_plate_problem, build_twoscale_problem, energy_scale
from plasthin.discretization import BoundaryDatum, PlateMesh
from plasthin.harness import converge
from plasthin.materials import MaterialLibrary, PhaseMaterial, dissipation, interface_dissipation, quadratic_energy
from plasthin.microstructure import build_phase_map
from plasthin.solver import PlateProblem, stability_audit
from plasthin.unfolding import from_two_scale, poincare_korn_ratios, two_scale_gap, unfold

# laminate 50/50, 8x8x4 mesh, 20 steps, h = 0.1, gamma = 1
REFERENCE = {"schema_version": 1}
CONVERGENCE = {"schema_version": 1, "omega": [1.0, 1.0], "h": [0.2, 0.1, 0.05], "jobs": 3}


def report(capsys, number, title, ok, detail):
    line = f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module")
def reference_h():
    cfg = ScenarioConfig.from_dict(REFERENCE)
    p = build_plate_problem(cfg)
    assert p.mesh.shape == (8, 8, 4)
    start = time.perf_counter()
    states, reports = p.evolve(cfg.time_grid())
    return p, states, reports, time.perf_counter() - start


@pytest.fixture(scope="module")
def reference_hom():
    cfg = ScenarioConfig.from_dict(REFERENCE)
    p = build_twoscale_problem(cfg)
    states, reports = p.evolve(cfg.time_grid())
    return p, states, reports


def test_01_energy_balance(capsys, reference_h):
    _, _, reports, wall = reference_h
    peak = energy_scale(reports)
    worst = max(abs(r.balance_residual) for r in reports) / peak
    corrected = max(abs(r.balance_residual - r.transition_term) for r in reports) / peak
    ok = worst <= 1e-7 and wall <= 60.0
    report(capsys, 1, "energy balance", ok,
           f"max|Q+D-Q0-W|/peak = {worst:.2e} (tol 1e-7), with the incremental transition term "
           f"{corrected:.2e}, runtime {wall:.1f} s")


def test_02_global_stability(capsys, reference_h):
    p, states, reports, _ = reference_h
    scale = energy_scale(reports)
    margins = [stability_audit(p, s, 1000, seed=(2, k)) for k, s in enumerate(states)]
    worst = min(margins) / scale
    report(capsys, 2, "global stability", worst >= -1e-8,
           f"min margin / scale = {worst:.2e} over 1000 competitors at {len(states)} states (tol -1e-8)")


def test_03_one_cell_oracle(capsys):
    mats = MaterialLibrary((PhaseMaterial(2.0, 1.0, 1.0),))
    bd = BoundaryDatum(w1=lambda x1, x2: x1, w2=lambda x1, x2: 0.5 * x1 - 0.3 * x2,
                       profile=[[0, 0], [0.6, 1.5], [1, 0.2]])
    pm = build_phase_map("laminate", 2, fractions=(1.0,))
    start = time.perf_counter()
    p = PlateProblem(PlateMesh((1.0, 1.0), (1, 1, 1)), mats, pm, 0.1, 0.1, bd)
    times = np.linspace(0, 1, 21)
    states, reports = p.evolve(times)
    wall = time.perf_counter() - start
    strains = np.array([sym3_to_matrix(p.model.strain(p.lifting(t))[0]) for t in times])
    ps, Qs = one_cell_trajectory(strains, 2.0, 1.0, 1.0)
    q = np.array([sym3_to_matrix(s.q[0]) for s in states])
    dstate = float(np.abs(q - ps).max())
    denergy = float(np.abs(np.array([r.elastic_energy for r in reports]) - Qs).max())
    plastic = states[-1].accumulated_dissipation > 0
    ok = dstate <= 1e-3 and denergy <= 1e-6 and wall < 5.0 and plastic
    report(capsys, 3, "one-cell oracle", ok,
           f"state {dstate:.1e} (tol 1e-3), energy {denergy:.1e} (tol 1e-6), solver {wall:.2f} s, "
           f"1e5 candidates per step")


PHASES = [
    PhaseMaterial(2.0, 1.0, 1.0),
    PhaseMaterial(4.0, 2.0, 0.5),
    PhaseMaterial(10.0, 0.1, 3.0),
    PhaseMaterial(c_dev=np.diag([0.5, 1.0, 2.0, 3.0, 7.0]), k=1.5, yield_radius=0.8),
]


def test_04_coercivity(capsys):
    rng = np.random.default_rng(4)
    lib = MaterialLibrary(tuple(PHASES))
    r_c, R_c = lib.coercivity()
    r_K, R_K = lib.dissipation_bounds()
    violations = 0
    for m in PHASES:
        xi = rng.standard_normal((10_000, 6)) * rng.exponential(size=(10_000, 1))
        n2 = T.norm(xi) ** 2
        Q = quadratic_energy(m, xi)
        violations += int(np.sum(Q < r_c * n2 * (1 - 1e-12)) + np.sum(Q > R_c * n2 * (1 + 1e-12)))
        q = T.dev(rng.standard_normal((10_000, 6)) * rng.exponential(size=(10_000, 1)))
        n1 = T.norm(q)
        H = dissipation(m, q)
        violations += int(np.sum(H < r_K * n1 * (1 - 1e-12)) + np.sum(H > R_K * n1 * (1 + 1e-12)))
    report(capsys, 4, "coercivity sandwiches", violations == 0,
           f"{violations} violations in 4 x 10^4 samples per phase, {len(PHASES)} phases")


def test_05_inf_convolution(capsys):
    rng = np.random.default_rng(5)
    worst_formula = worst_oracle = 0.0
    for _ in range(100):
        r_i, r_j = rng.uniform(0.2, 3.0, size=2)
        nu = rng.standard_normal(3)
        nu /= np.linalg.norm(nu)
        a = rng.standard_normal(3)
        a -= (a @ nu) * nu
        v = interface_dissipation(PhaseMaterial(yield_radius=r_i), PhaseMaterial(yield_radius=r_j), a, nu)
        exact = min(r_i, r_j) * np.linalg.norm(a) / math.sqrt(2)
        worst_formula = max(worst_formula, abs(v - exact))
        worst_oracle = max(worst_oracle, abs(v - interface_grid_search(r_i, r_j, a, nu)))
    ok = worst_formula <= 1e-4 and worst_oracle <= 1e-4
    report(capsys, 5, "inf-convolution oracle", ok,
           f"max deviation {worst_formula:.1e} from min(r)|a|/sqrt2, {worst_oracle:.1e} from grid search "
           f"(tol 1e-4, 100 vectors)")


def test_06_moment_algebra(capsys):
    rng = np.random.default_rng(6)
    worst_rec = worst_orth = 0.0
    for n3 in (2, 4, 8):
        for _ in range(20):
            f = rng.standard_normal((5, 4, n3, 3)) * rng.exponential()
            m = T.moments(f)
            worst_rec = max(worst_rec, float(np.abs(m.reconstruct() - f).max()) / np.abs(f).max())
            parts = [np.broadcast_to(m.zeroth[..., None, :], f.shape), m.x3[:, None] * m.first[..., None, :],
                     m.perp]
            scale = float(np.sum(f * f))
            for i in range(3):
                for j in range(i + 1, 3):
                    worst_orth = max(worst_orth, abs(float(np.sum(parts[i] * parts[j]))) / scale)
    ok = worst_rec <= 1e-12 and worst_orth <= 1e-12
    report(capsys, 6, "moment algebra", ok,
           f"reconstruction {worst_rec:.1e}, orthogonality {worst_orth:.1e} (tol 1e-12, layers 2/4/8)")


def test_07_kirchhoff_love(capsys, reference_hom):
    p, states, _ = reference_hom
    worst = max(max(kl_characterization_residuals(p, s).values()) for s in states[1:])
    report(capsys, 7, "Kirchhoff-Love characterization", worst <= 1e-8,
           f"max relative residual of items (i)-(iii) = {worst:.1e} (tol 1e-8)")


def test_08_stress_admissibility(capsys, reference_h, reference_hom):
    p, states, _, _ = reference_h
    worst_h = max(
        max(check_Kh(p.model.stress(s.e_scaled), p.mesh, p.h, p.eps, p.materials, p.phase_map,
                     model=p.model).relative().values())
        for s in states
    )
    ph, hstates, _ = reference_hom
    worst_hom = max(max(check_Khom(ph.stress(s), ph).relative().values()) for s in hstates)
    ok = worst_h <= 1e-6 and worst_hom <= 1e-6
    report(capsys, 8, "stress admissibility", ok,
           f"finite h {worst_h:.1e}, two-scale {worst_hom:.1e} (tol 1e-6)")


def test_09_max_plastic_work(capsys, reference_hom):
    p, states, reports = reference_hom
    scale = energy_scale(reports)
    slacks = [
        max_plastic_work_check(p.stress(cur), cur.P - prev.P, cur.E - prev.E,
                               p.lifting(cur.t) - p.lifting(prev.t), p, tol=1e-6)
        for prev, cur in zip(states[:-1], states[1:])
    ]
    worst = min(slacks) / scale
    report(capsys, 9, "maximum plastic work", worst >= -1e-8,
           f"min slack / scale = {worst:.1e} over {len(slacks)} increments (tol -1e-8)")


def test_10_convergence_trend(capsys):
    cfg = ScenarioConfig.from_dict(CONVERGENCE)
    start = time.perf_counter()
    rep = converge(cfg, jobs=cfg.raw["jobs"])
    wall = time.perf_counter() - start
    energy = [r["energy_gap"] for r in rep.rows]
    strain = [r["strain_gap"] for r in rep.rows]
    ok = energy[-1] <= energy[0] and all(b <= a for a, b in zip(strain, strain[1:])) and wall <= 600
    report(capsys, 10, "convergence trend", ok,
           "energy gaps " + ", ".join(f"{g:.2e}" for g in energy)
           + "; strain gaps " + ", ".join(f"{g:.2e}" for g in strain) + f" (h = 0.2, 0.1, 0.05); {wall:.0f} s")


def test_11_unfolding_consistency(capsys):
    n_y = 8
    gaps = []
    for eps in (1 / 4, 1 / 8, 1 / 16):
        n = int(round(n_y / eps))
        x = (np.arange(n) + 0.5) / n
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        phi = lambda a, b: np.exp(a) * np.cos(2 * b)
        psi = lambda y1, y2: (np.mod(y1, 1) < 0.5) + 0.5 * np.sin(2 * np.pi * y2)
        f = (phi(X1, X2) * psi(X1 / eps, X2 / eps))[..., None]
        u = unfold(f, (1.0, 1.0), eps, n_y)
        m = u.grid_shape[0]
        c = (np.arange(m) + 0.5) * eps
        yc = (np.arange(n_y) + 0.5) / n_y
        ref = phi(*np.meshgrid(c, c, indexing="ij"))[:, :, None, None] * psi(*np.meshgrid(yc, yc, indexing="ij"))
        gaps.append(two_scale_gap(u, from_two_scale(ref[..., None], eps)))
    ratios = [b / a for a, b in zip(gaps, gaps[1:])]
    ok = all(abs(r - 0.5) <= 0.15 for r in ratios)
    report(capsys, 11, "unfolding consistency", ok,
           "L1 gaps " + ", ".join(f"{g:.3e}" for g in gaps) + " ratios " + ", ".join(f"{r:.3f}" for r in ratios)
           + " (0.5 within 30%)")


def test_12_poincare_korn(capsys):
    worst = {}
    ok = True
    for gamma in (0.5, 1.0, 2.0):
        c = [float(poincare_korn_ratios(n, gamma, n_fields=100, seed=12).max()) for n in (8, 16, 32)]
        worst[gamma] = c
        ok = ok and all(np.isfinite(c)) and c[1] <= 1.2 * c[0] and c[2] <= 1.2 * c[1]
    detail = "; ".join(f"gamma {g}: " + "/".join(f"{v:.3f}" for v in c) for g, c in worst.items())
    report(capsys, 12, "empirical Poincare-Korn", ok, detail + " at resolutions 8/16/32 (growth <= 1.2)")
