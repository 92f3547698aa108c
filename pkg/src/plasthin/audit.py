"""Post-hoc admissibility and plastic-work audits of solver stresses.

All equilibrium residuals are weak: the internal force ``B^T (vol W sigma)``
is tested on individual dofs and divided by the assembly magnitude
``|B|^T (vol |W sigma|)``, so a value of 1 means "no cancellation at all".
Traction residuals are converted to stress units using the nodal face area.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensors as T
from .discretization import PlateMesh, QuadraticModel, plate_model
from .errors import PreconditionError
from .materials import MaterialLibrary
from .microstructure import PhaseMap

TINY = 1e-300


@dataclass(frozen=True)
class StressField:
    """Stress values per quadrature point with the phase id of each point."""

    values: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[-1] != 6 or not np.all(np.isfinite(v)):
            raise PreconditionError("stress field must hold finite Sym3 entries")


@dataclass(frozen=True)
class AdmissibilityReport:
    """Residuals of an admissibility check; never raises on violation.

    ``div_residual`` is relative (see module docstring); ``boundary_residual``
    and ``yield_violation`` are in stress units, ``stress_scale`` is the largest
    stress entry.  ``moment_residuals`` holds the relative membrane and
    bending residuals for two-scale stresses, ``items`` every named residual.
    """

    div_residual: float
    boundary_residual: float
    yield_violation: float
    moment_residuals: tuple[float, float] = (0.0, 0.0)
    work_inequality_slack: float = math.nan
    stress_scale: float = 0.0
    items: dict = field(default_factory=dict)

    def relative(self) -> dict:
        """Every residual on a dimensionless scale."""
        s = max(self.stress_scale, TINY)
        out = {
            "div_residual": self.div_residual,
            "boundary_residual": self.boundary_residual / s,
            "yield_violation": max(self.yield_violation, 0.0) / s,
            "membrane_residual": self.moment_residuals[0],
            "bending_residual": self.moment_residuals[1],
        }
        if "i3_average" in self.items:
            out["i3_average"] = self.items["i3_average"] / s
        return out

    def passed(self, tol: float) -> bool:
        return all(v <= tol for v in self.relative().values())

    def as_row(self) -> dict:
        row = asdict(self)
        row.pop("items")
        mr = row.pop("moment_residuals")
        row["membrane_residual"], row["bending_residual"] = mr
        row.update({k: v for k, v in self.items.items() if k not in row})
        return row


def _relative_rows(model: QuadraticModel, sigma, rows) -> float:
    if not np.any(rows):
        return 0.0
    g = model.internal_force(sigma)
    w = np.abs(sigma) * T.FROBENIUS_WEIGHTS * model.volumes[:, None]
    from .discretization import to_flat

    scale = float(np.max(abs(model.B).T @ to_flat(w), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(g[rows])) / scale)


def _yield_violation(model: QuadraticModel, sigma) -> float:
    return float(np.max(T.norm(T.dev(sigma)) - model.yield_radius, initial=-math.inf))


def check_Kh(sigma, mesh: PlateMesh, h: float, eps: float, materials: MaterialLibrary, phase_map: PhaseMap,
             model: QuadraticModel | None = None) -> AdmissibilityReport:
    """Admissibility of a finite-thickness stress ``sigma`` of shape ``(n_cells, 6)``.

    ``div_residual`` tests interior free nodes, ``boundary_residual`` is the
    largest traction on free top and bottom nodes.
    """
    if model is None:
        model = plate_model(mesh, materials, phase_map, h, eps)
    sigma = np.asarray(sigma, dtype=float).reshape(-1, 6)
    StressField(sigma, model.phase)
    face = np.repeat(mesh.face_nodes(), 3)
    interior = model.free & ~face
    div = _relative_rows(model, sigma, interior)
    g = model.internal_force(sigma).reshape(-1, 3)
    d1, d2, _ = mesh.spacing
    faces = model.free.reshape(-1, 3)[:, 0] & mesh.face_nodes()
    if np.any(faces):
        # one-point quadrature gives every free face node the area d1*d2
        t = g[faces] * np.array([h, h, h * h]) / (d1 * d2)
        boundary = float(np.max(np.abs(t)))
    else:
        boundary = 0.0
    return AdmissibilityReport(
        div_residual=div,
        boundary_residual=boundary,
        yield_violation=_yield_violation(model, sigma),
        stress_scale=float(np.max(np.abs(sigma), initial=0.0)),
    )


def check_Khom(sigma, problem) -> AdmissibilityReport:
    """Six residuals of two-scale admissibility for ``sigma`` on the two-scale grid.

    items: ``micro_div`` (i), ``face_traction`` (ii), yield (iii),
    ``i3_average`` (iv), ``membrane`` (v), ``bending`` (vi).
    """
    model = problem.model
    sigma = np.asarray(sigma, dtype=float).reshape(-1, 6)
    StressField(sigma, model.phase)
    o = problem.offsets
    ny, n3 = problem.n_y, problem.n_layers
    m1, m2 = problem.macro_cells
    n_cells = m1 * m2
    g = model.internal_force(sigma)

    # (i) and (ii): corrector rows, split into face nodes and the rest
    k_node = np.tile(np.arange(n3 + 1), ny * ny)
    face_local = np.repeat((k_node == 0) | (k_node == n3), 3)
    face = np.zeros(model.n_dofs, dtype=bool)
    face[o[2]:o[3]] = np.tile(face_local, n_cells)
    mu_rows = np.zeros(model.n_dofs, dtype=bool)
    mu_rows[o[2]:o[3]] = True
    micro_div = _relative_rows(model, sigma, mu_rows & ~face)
    area = problem.spacing[0] * problem.spacing[1] / (ny * ny)
    traction = float(np.max(np.abs(g[face]), initial=0.0)) * problem.gamma / area

    # (iv): Y-averaged through-thickness entries per macro cell and layer
    sig = sigma.reshape(problem.grid_shape + (6,))
    avg = sig.mean(axis=(2, 3))
    i3 = float(np.max(np.abs(avg[..., [2, 4, 5]]), initial=0.0))

    # (v), (vi): macro rows on free dofs
    free = model.free
    mem_rows = np.zeros(model.n_dofs, dtype=bool)
    mem_rows[o[0]:o[1]] = True
    bend_rows = np.zeros(model.n_dofs, dtype=bool)
    bend_rows[o[1]:o[2]] = True
    membrane = _relative_rows(model, sigma, mem_rows & free)
    bending = _relative_rows(model, sigma, bend_rows & free)

    yv = _yield_violation(model, sigma)
    items = {
        "micro_div": micro_div,
        "face_traction": traction,
        "yield": yv,
        "i3_average": i3,
        "membrane": membrane,
        "bending": bending,
    }
    return AdmissibilityReport(
        div_residual=micro_div,
        boundary_residual=traction,
        yield_violation=yv,
        moment_residuals=(membrane, bending),
        stress_scale=float(np.max(np.abs(sigma), initial=0.0)),
        items=items,
    )


def kl_characterization_residuals(problem, state) -> dict:
    """Discrete residuals of the three Kirchhoff-Love characterization items.

    With ``f`` the Y-average of the in-plane part of ``E + P``: (i) ``E ubar -
    f_bar``, (ii) ``D2 u3 + f_hat``, (iii) ``f_perp``, each as a largest entry
    divided by the largest entry of ``f``.
    """
    f = T.in_plane((state.E + state.P).mean(axis=(2, 3)))
    mom = T.moments(f)
    scale = max(float(np.max(np.abs(f), initial=0.0)), TINY)
    mem = problem.membrane_strain(state.ubar)
    curv = problem.curvature(state.u3)
    return {
        "membrane": float(np.max(np.abs(mem - mom.zeroth))) / scale,
        "bending": float(np.max(np.abs(curv + mom.first))) / scale,
        "remainder": float(np.max(np.abs(mom.perp))) / scale,
    }


def hill_slack(sigma, dP, yield_radius, volumes) -> float:
    """``sum vol (r |dP| - sigma : dP)``; non-negative whenever sigma_dev lies in K."""
    sigma = np.asarray(sigma, dtype=float)
    dP = np.asarray(dP, dtype=float)
    return float(np.sum(volumes * (yield_radius * T.norm(dP) - T.inner(sigma, dP))))


def max_plastic_work_check(sigma, dP, dE, d_datum, problem, tol: float = 1e-7) -> float:
    """Slack of the two-scale maximum plastic work inequality on an increment.

    Evaluates ``H(dP) - [-int Sigma:dE + int sigma_bar:E dw_bar - c int
    sigma_hat:D2 dw3]`` with ``c`` the discrete second moment of the layers;
    ``d_datum`` is the increment of the datum's unknown vector (see
    ``TwoScaleProblem.lifting``).
    """
    report = check_Khom(sigma, problem)
    if not report.passed(tol):
        raise PreconditionError(f"stress is not admissible at tolerance {tol}: {report.relative()}")
    model = problem.model
    sigma = np.asarray(sigma, dtype=float).reshape(-1, 6)
    dP = np.asarray(dP, dtype=float).reshape(-1, 6)
    dE = np.asarray(dE, dtype=float).reshape(-1, 6)
    vol = model.volumes
    H = model.dissipation(dP)
    bulk = -float(np.sum(vol * T.inner(sigma, dE)))
    ubar, u3, _ = problem.split(np.asarray(d_datum, dtype=float))
    mem = problem.membrane_strain(ubar)
    curv = problem.curvature(u3)
    s = T.in_plane(sigma.reshape(problem.grid_shape + (6,)).mean(axis=(2, 3)))
    mom = T.moments(s)
    area = problem.spacing[0] * problem.spacing[1]
    c = T.first_moment_normalizer(problem.n_layers)
    boundary = area * float(np.sum(T.inner(mom.zeroth, mem)) - c * np.sum(T.inner(mom.first, curv)))
    return H - (bulk + boundary)
