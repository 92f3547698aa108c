"""Run orchestration: single-model runs, audits, convergence studies and outputs.

CSV schemas (all floats written with ``repr`` for bit-stable output):

reports.csv      step, t, Q, dD, W, balance_residual, stability_margin, iters
states.csv       step, t, Q, D, max_u, max_plastic, plastic_fraction, constraint_residual
audit.csv        step, t, div_residual, boundary_residual, yield_violation,
                 membrane_residual, bending_residual, stability_margin,
                 plastic_work_slack, passed
convergence.csv  h, Q_h, D_h, energy_gap, strain_gap, wall_ms
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensors as T
from .audit import check_Kh, check_Khom, max_plastic_work_check
from .config import ScenarioConfig, build_plate_problem, build_twoscale_problem, energy_scale
from .errors import ConfigurationError, PreconditionError
from .unfolding import from_two_scale, two_scale_gap, unfold

log = logging.getLogger(__name__)

REPORT_COLUMNS = ["step", "t", "Q", "dD", "W", "balance_residual", "stability_margin", "iters"]
STATE_COLUMNS = ["step", "t", "Q", "D", "max_u", "max_plastic", "plastic_fraction", "constraint_residual"]
AUDIT_COLUMNS = [
    "step", "t", "div_residual", "boundary_residual", "yield_violation", "membrane_residual",
    "bending_residual", "stability_margin", "plastic_work_slack", "passed",
]
CONVERGENCE_COLUMNS = ["h", "Q_h", "D_h", "energy_gap", "strain_gap", "wall_ms"]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report_rows(reports) -> list[dict]:
    return [
        {
            "step": k, "t": r.t, "Q": r.elastic_energy, "dD": r.increment_dissipation,
            "W": r.external_work_increment, "balance_residual": r.balance_residual,
            "stability_margin": r.stability_margin, "iters": r.inner_iterations,
        }
        for k, r in enumerate(reports)
    ]


# --------------------------------------------------------------------------
# Audits


@dataclass
class RunResult:
    kind: str
    problem: object
    states: list
    reports: list
    audit_rows: list = field(default_factory=list)
    wall_ms: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.audit_rows)


def audit_run(kind, problem, states, reports, cfg: ScenarioConfig) -> list[dict]:
    """Admissibility, stability and (two-scale) plastic-work audit of every step."""
    scfg = cfg.solver_config()
    tol = scfg.audit_tol
    scale = energy_scale(reports)
    rows = []
    for k, (st, rep) in enumerate(zip(states, reports)):
        if kind == "h":
            sigma = problem.model.stress(st.e_scaled)
            ar = check_Kh(sigma, problem.mesh, problem.h, problem.eps, problem.materials, problem.phase_map,
                          model=problem.model)
            slack = math.nan
        else:
            sigma = problem.stress(st)
            ar = check_Khom(sigma, problem)
            slack = math.nan
            if k > 0:
                prev = states[k - 1]
                try:
                    slack = max_plastic_work_check(
                        sigma, st.P - prev.P, st.E - prev.E,
                        problem.lifting(st.t) - problem.lifting(prev.t), problem, tol=tol,
                    )
                except PreconditionError:
                    slack = -math.inf
        rel = ar.relative()
        margin = rep.stability_margin
        ok = ar.passed(tol)
        if not math.isnan(margin):
            ok = ok and margin >= -scfg.stability_tol * scale
        if not math.isnan(slack):
            ok = ok and slack >= -scfg.stability_tol * scale
        rows.append({
            "step": k, "t": st.t, "div_residual": rel["div_residual"],
            "boundary_residual": rel["boundary_residual"], "yield_violation": rel["yield_violation"],
            "membrane_residual": rel["membrane_residual"], "bending_residual": rel["bending_residual"],
            "stability_margin": margin, "plastic_work_slack": slack, "passed": bool(ok),
        })
    return rows


def state_rows(kind, problem, states, reports) -> list[dict]:
    rows = []
    for k, (st, rep) in enumerate(zip(states, reports)):
        if kind == "h":
            q, u = st.q, st.u
            res = problem.constraint_residual(st)
        else:
            q, u = st.P.reshape(-1, 6), np.concatenate([st.ubar.ravel(), st.u3.ravel()])
            res = problem.compatibility_residual(st)
        nq = T.norm(q)
        rows.append({
            "step": k, "t": st.t, "Q": rep.elastic_energy, "D": st.accumulated_dissipation,
            "max_u": float(np.max(np.abs(u), initial=0.0)), "max_plastic": float(np.max(nq, initial=0.0)),
            "plastic_fraction": float(np.mean(nq > 0)), "constraint_residual": res,
        })
    return rows


# --------------------------------------------------------------------------
# Runs


def run_h(cfg: ScenarioConfig, h: float | None = None, audit: bool = True) -> RunResult:
    t0 = time.perf_counter()
    problem = build_plate_problem(cfg, h)
    states, reports = problem.evolve(cfg.time_grid())
    res = RunResult("h", problem, states, reports)
    if audit:
        res.audit_rows = audit_run("h", problem, states, reports, cfg)
    res.wall_ms = 1e3 * (time.perf_counter() - t0)
    return res


def run_hom(cfg: ScenarioConfig, audit: bool = True) -> RunResult:
    t0 = time.perf_counter()
    problem = build_twoscale_problem(cfg)
    states, reports = problem.evolve(cfg.time_grid())
    res = RunResult("hom", problem, states, reports)
    if audit:
        res.audit_rows = audit_run("hom", problem, states, reports, cfg)
    res.wall_ms = 1e3 * (time.perf_counter() - t0)
    return res


def save_states(result: RunResult, out_dir) -> None:
    """One ``.npz`` per step holding the state fields and the stress."""
    sdir = Path(out_dir) / "states"
    sdir.mkdir(parents=True, exist_ok=True)
    for k, st in enumerate(result.states):
        if result.kind == "h":
            arrays = {"u": st.u, "q": st.q, "e_scaled": st.e_scaled,
                      "stress": result.problem.model.stress(st.e_scaled)}
        else:
            arrays = {"ubar": st.ubar, "u3": st.u3, "mu": st.mu, "E": st.E, "P": st.P,
                      "stress": result.problem.stress(st)}
        np.savez(sdir / f"step_{k:04d}.npz", t=st.t, kind=result.kind,
                 accumulated_dissipation=st.accumulated_dissipation, **arrays)


def write_manifest(cfg: ScenarioConfig, out_dir, command: str, extra=None) -> None:
    from . import __version__

    data = {"command": command, "version": __version__, "config": cfg.to_dict()}
    if extra:
        data.update(extra)
    (Path(out_dir) / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True))


def write_run(result: RunResult, cfg: ScenarioConfig, out_dir, command: str) -> None:
    from .plotting import plot_energetics, write_gnuplot

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = report_rows(result.reports)
    write_csv(out / "reports.csv", REPORT_COLUMNS, rows)
    write_csv(out / "states.csv", STATE_COLUMNS, state_rows(result.kind, result.problem, result.states, result.reports))
    write_csv(out / "audit.csv", AUDIT_COLUMNS, result.audit_rows)
    save_states(result, out)
    extra = {"kind": result.kind}
    if result.kind == "h":
        extra["h"] = result.problem.h
    write_manifest(cfg, out, command, extra)
    plot_energetics(rows, out / "energetics.png")
    write_gnuplot(out, "run")


# --------------------------------------------------------------------------
# Offline audit of saved states


def audit_directory(run_dir, tol: float | None = None) -> list[dict]:
    """Re-run admissibility checks on the stresses stored in a run directory."""
    run_dir = Path(run_dir)
    manifest = run_dir / "manifest.json"
    files = sorted((run_dir / "states").glob("step_*.npz")) if (run_dir / "states").is_dir() else []
    if not manifest.is_file() or not files:
        raise ConfigurationError(f"{run_dir}: no manifest or state files found")
    meta = json.loads(manifest.read_text())
    cfg = ScenarioConfig.from_dict(meta["config"])
    tol = cfg.solver_config().audit_tol if tol is None else tol
    kind = meta.get("kind", "h")
    problem = build_plate_problem(cfg, meta.get("h")) if kind == "h" else build_twoscale_problem(cfg)
    rows = []
    for k, f in enumerate(files):
        with np.load(f) as z:
            sigma = z["stress"]
            t = float(z["t"])
        if kind == "h":
            ar = check_Kh(sigma, problem.mesh, problem.h, problem.eps, problem.materials, problem.phase_map,
                          model=problem.model)
        else:
            ar = check_Khom(sigma, problem)
        rel = ar.relative()
        rows.append({
            "step": k, "t": t, "div_residual": rel["div_residual"], "boundary_residual": rel["boundary_residual"],
            "yield_violation": rel["yield_violation"], "membrane_residual": rel["membrane_residual"],
            "bending_residual": rel["bending_residual"], "stability_margin": math.nan,
            "plastic_work_slack": math.nan, "passed": bool(ar.passed(tol)),
        })
    return rows


# --------------------------------------------------------------------------
# Convergence study


@dataclass
class ConvergenceReport:
    """Final-time comparison of every h-run against the two-scale run."""

    rows: list
    hom: dict
    trend_ok: bool

    def all_rows(self) -> list[dict]:
        return self.rows + [self.hom]


def sample_hom_on_periods(E, spacing, eps: float, n_periods) -> np.ndarray:
    """Two-scale strain ``E`` of the macro cell containing each period-cell centre."""
    d1, d2 = spacing
    m1, m2 = E.shape[:2]
    c1 = np.minimum(((np.arange(n_periods[0]) + 0.5) * eps / d1).astype(int), m1 - 1)
    c2 = np.minimum(((np.arange(n_periods[1]) + 0.5) * eps / d2).astype(int), m2 - 1)
    return E[c1][:, c2]


def _run_h_job(args):
    raw, h = args
    cfg = ScenarioConfig.from_dict(raw)
    res = run_h(cfg, h, audit=False)
    st = res.states[-1]
    mesh = res.problem.mesh
    return {
        "h": h, "Q": res.reports[-1].elastic_energy, "D": st.accumulated_dissipation,
        "e": st.e_scaled.reshape(mesh.shape + (6,)), "wall_ms": res.wall_ms,
    }


def _run_hom_job(raw):
    cfg = ScenarioConfig.from_dict(raw)
    res = run_hom(cfg, audit=False)
    st = res.states[-1]
    return {
        "Q": res.reports[-1].elastic_energy, "D": st.accumulated_dissipation, "E": st.E,
        "spacing": res.problem.spacing, "wall_ms": res.wall_ms,
    }


def converge(cfg: ScenarioConfig, jobs: int = 1) -> ConvergenceReport:
    """Run every h and the two-scale model; compare energies and unfolded strains."""
    hs = cfg.h_list
    if len(hs) < 3:
        raise ConfigurationError("a convergence study needs at least three h values")
    raw = cfg.to_dict()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            hom_future = pool.submit(_run_hom_job, raw)
            h_results = list(pool.map(_run_h_job, [(raw, h) for h in hs]))
            hom = hom_future.result()
    else:
        h_results = [_run_h_job((raw, h)) for h in hs]
        hom = _run_hom_job(raw)
    Q_hom = hom["Q"]
    rows = []
    for r in h_results:
        eps = cfg.eps(r["h"])
        uf = unfold(r["e"], cfg.extent, eps, cfg.cells_per_period)
        ref = from_two_scale(sample_hom_on_periods(hom["E"], hom["spacing"], eps, uf.grid_shape[:2]), eps)
        rows.append({
            "h": r["h"], "Q_h": r["Q"], "D_h": r["D"], "energy_gap": abs(r["Q"] - Q_hom),
            "strain_gap": two_scale_gap(uf, ref), "wall_ms": r["wall_ms"],
        })
    hom_row = {"h": "hom", "Q_h": Q_hom, "D_h": hom["D"], "energy_gap": 0.0,
               "strain_gap": 0.0, "wall_ms": hom["wall_ms"]}
    trend_ok = rows[-1]["energy_gap"] <= rows[0]["energy_gap"]
    return ConvergenceReport(rows, hom_row, trend_ok)


def write_convergence(report: ConvergenceReport, cfg: ScenarioConfig, out_dir) -> None:
    from .plotting import plot_convergence, write_gnuplot

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, report.all_rows())
    write_manifest(cfg, out, "converge", {"trend_ok": report.trend_ok})
    plot_convergence(report.all_rows(), out / "convergence.png")
    write_gnuplot(out, "convergence")
