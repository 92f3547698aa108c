"""Incremental energetic solver shared by the finite-thickness and two-scale models.

Each time step minimizes

    J(x, q) = sum_p vol_p Q(B x - q)_p + sum_p vol_p r_p |q - q_prev|_p

over free displacement dofs ``x`` and deviatoric plastic strains ``q``.
Eliminating ``q`` by the cell-local prox gives a smooth reduced objective in
``x`` whose gradient step in the stiffness metric is exactly one
elastic-then-plastic sweep.  Two accelerations of that sweep are available:
``method="newton"`` replaces the elastic solve by a line-searched semismooth
Newton step (consistent tangent of the plastic update), and
``method="alternating"`` keeps the elastic solve and adds Nesterov momentum.
Both fall back to a plain sweep whenever the accelerated one fails to
decrease ``J``, so the objective is monotone across sweeps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import tensors as T
from .discretization import (
    BoundaryDatum,
    PlateMesh,
    QuadraticModel,
    nodal_datum,
    plate_model,
    to_points,
)
from .errors import ConvergenceError, InvalidParameterError, ShapeError
from .materials import MaterialLibrary
from .microstructure import PhaseMap

log = logging.getLogger(__name__)

ROUNDOFF = 1e-13


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and switches of the incremental minimization.

    energy_tol
        A sweep is final when it lowers the objective by at most
        ``energy_tol * (1 + |J|)``.
    residual_tol
        ...and the relative equilibrium residual on free dofs is below this.
    """

    energy_tol: float = 1e-10
    residual_tol: float = 1e-9
    max_outer: int = 200
    linear_solver: str = "direct"
    cg_tol: float = 1e-10
    method: str = "newton"
    accelerate: bool = True
    stability_samples: int = 0
    stability_tol: float = 1e-8
    balance_tol: float = 1e-7
    audit_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.max_outer < 1:
            raise InvalidParameterError("max_outer must be >= 1")
        if self.energy_tol < 0 or self.residual_tol < 0:
            raise InvalidParameterError("tolerances must be non-negative")
        if self.method not in ("newton", "alternating"):
            raise InvalidParameterError(f"unknown method {self.method!r}")
        if self.linear_solver not in ("direct", "cg"):
            raise InvalidParameterError(f"unknown linear solver {self.linear_solver!r}")


@dataclass(frozen=True)
class IncrementResult:
    x: np.ndarray
    q: np.ndarray
    objective: float
    iterations: int
    residual: float
    history: tuple[float, ...]


def equilibrium_residual(model: QuadraticModel, x, q) -> float:
    """Largest free-dof internal force relative to the assembly magnitude."""
    if not np.any(model.free):
        return 0.0
    sigma = model.stress(model.strain(x) - q)
    g = model.internal_force(sigma)[model.free]
    scale = float(np.max(model.force_scale(sigma), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(g)) / scale)


def minimize_increment(model: QuadraticModel, x_fixed, q_prev, cfg: SolverConfig) -> IncrementResult:
    """Solve one incremental problem; every sweep ends with a plastic update."""
    mats, phase = model.materials, model.phase

    def prox(x):
        return mats.plastic_update(phase, model.strain(x), q_prev)

    def objective(x, q):
        return model.energy(model.strain(x) - q) + model.dissipation(q - q_prev)

    x = model.solve(q_prev, x_fixed)
    q = prox(x)
    J = objective(x, q)
    history = [J]
    if not np.any(model.free):
        return IncrementResult(x, q, J, 1, 0.0, tuple(history))
    x_old, t = x, 1.0
    decrease = math.inf
    res = equilibrium_residual(model, x, q)
    it = 1
    while True:
        if decrease <= cfg.energy_tol * (1 + abs(J)) and res <= cfg.residual_tol:
            return IncrementResult(x, q, J, it, res, tuple(history))
        if it >= cfg.max_outer:
            raise ConvergenceError(
                f"incremental minimization did not converge in {cfg.max_outer} sweeps "
                f"(last decrease {decrease:.3e}, residual {res:.3e})",
                last_residual=float(res),
            )
        it += 1
        x_c = None
        if cfg.method == "newton":
            x_c = _newton_displacement(model, x, q_prev, J, objective, prox)
            if x_c is not None:
                q_c = prox(x_c)
                J_c = objective(x_c, q_c)
        else:
            t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
            beta = (t - 1) / t_new if cfg.accelerate else 0.0
            if beta > 0:
                v = x + beta * (x - x_old)
                x_c = model.solve(prox(v), x_fixed)
                q_c = prox(x_c)
                J_c = objective(x_c, q_c)
                # extrapolated sweeps are kept unless they raise J beyond round-off
                if J_c > J + ROUNDOFF * (1 + abs(J)):
                    x_c = None
            t = t_new if x_c is not None else 1.0
        if x_c is None:
            x_c = model.solve(q, x_fixed)
            q_c = prox(x_c)
            J_c = objective(x_c, q_c)
        # a plain sweep is a block coordinate descent step and cannot increase J
        assert J_c <= J + 10 * ROUNDOFF * (1 + abs(J)), (J_c, J)
        decrease = J - J_c
        x_old, x, q, J = x, x_c, q_c, J_c
        history.append(J)
        res = equilibrium_residual(model, x, q)


def algorithmic_tangent(model: QuadraticModel, x, q_prev):
    """Per-point action of the derivative of the stress after a plastic update.

    Returns a function mapping strain increments ``(n_points, 6)`` to stress
    increments.  Plastic isotropic points use the consistent von Mises
    tangent; anisotropic phases fall back to the elastic law.
    """
    mats = model.materials
    a = T.dev(model.strain(x) - q_prev)
    size = T.norm(a)
    mu2 = np.array([m.mu2 if m.isotropic else np.nan for m in mats.phases])[model.phase]
    iso = np.array([m.isotropic for m in mats.phases])[model.phase]
    r = model.yield_radius
    plastic = iso & (mu2 * size > r)
    k = np.array([m.k for m in mats.phases])[model.phase]
    ratio = np.where(plastic, r / np.where(plastic, size, 1.0), 0.0)
    n = np.where(plastic[:, None], a / np.where(plastic, size, 1.0)[:, None], 0.0)

    def apply(de):
        out = model.stress(de)
        if np.any(plastic):
            dd = T.dev(de[plastic])
            proj = dd - T.inner(n[plastic], dd)[:, None] * n[plastic]
            out[plastic] = ratio[plastic, None] * proj + (k[plastic] * T.trace(de[plastic]))[:, None] * T.IDENTITY
        return out

    return apply


def n_plastic(model: QuadraticModel, x, q_prev) -> int:
    """Number of points whose trial stress leaves the yield set."""
    a = T.dev(model.strain(x) - q_prev)
    mu2 = np.array([m.mu2 for m in model.materials.phases])[model.phase]
    return int(np.count_nonzero(mu2 * T.norm(a) > model.yield_radius))


def tangent_matrix(model: QuadraticModel, tangent) -> sp.csc_matrix:
    """Assembled free-dof matrix ``B^T (vol W C_t) B`` of a per-point tangent."""
    w = T.FROBENIUS_WEIGHTS * model.volumes[:, None]
    cols = []
    for j in range(6):
        unit = np.zeros((model.n_points, 6))
        unit[:, j] = 1.0
        cols.append(tangent(unit) * w)
    blocks = [[sp.diags(cols[b][:, a]) for b in range(6)] for a in range(6)]
    C = sp.bmat(blocks, format="csr")
    return (model.B_free.T @ C @ model.B_free).tocsc()


def _newton_displacement(model, x, q_prev, J, objective, prox):
    """Damped semismooth Newton step on the reduced objective, or ``None``."""
    import scipy.sparse.linalg as spla

    from .discretization import to_flat

    sigma = model.stress(model.strain(x) - prox(x))
    g = model.internal_force(sigma)[model.free]
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return None
    tangent = algorithmic_tangent(model, x, q_prev)
    Bf = model.B_free
    w = T.FROBENIUS_WEIGHTS * model.volumes[:, None]
    K_el = model.K_ff

    def matvec(d):
        de = to_points(Bf @ d, model.n_points)
        # a small elastic shift keeps the operator definite in fully plastic modes
        return Bf.T @ to_flat(tangent(de) * w) + 1e-10 * (K_el @ d)

    n = Bf.shape[1]
    A = spla.LinearOperator((n, n), matvec=matvec)
    if model.linear_solver == "direct":
        fac = None
        if n_plastic(model, x, q_prev):
            try:
                fac = model.factorize(tangent_matrix(model, tangent) + 1e-10 * K_el)
            except RuntimeError:
                fac = None
        if fac is None:
            fac = model._factorize()
        M = spla.LinearOperator((n, n), matvec=fac.solve)
    else:
        M = spla.LinearOperator((n, n), matvec=lambda v: v / K_el.diagonal())
    d, _ = spla.cg(A, -g, rtol=1e-6, atol=0.0, M=M, maxiter=200)
    slope = float(g @ d)
    if not np.isfinite(slope) or slope >= 0:
        return None
    alpha = 1.0
    for _ in range(30):
        x_new = x.copy()
        x_new[model.free] += alpha * d
        if objective(x_new, prox(x_new)) <= J + 1e-4 * alpha * slope:
            return x_new
        alpha *= 0.5
    return None


def stability_margin(model: QuadraticModel, x, q, n_samples: int, amplitudes=(1e-3, 1e-2, 1e-1, 1.0), seed=0) -> float:
    """Sampled global-stability margin ``min [Q(eta) + H(dq)] - Q(e)``.

    Random competitors perturb free dofs, plastic strains (deviatoric), or
    both, cycling through families and relative amplitudes.  In addition,
    the plastic half of one alternating sweep from the state is tried at
    each amplitude as a fraction of the full step; it is a descent direction
    whenever the state is not an incremental minimizer, and vanishes at one.
    """
    if n_samples <= 0:
        return math.nan
    rng = np.random.default_rng(seed)
    strain = model.strain(x)
    e = strain - q
    base = model.energy(e)
    x_scale = float(np.max(np.abs(x), initial=0.0)) + 1e-300
    q_scale = float(max(np.max(np.abs(e), initial=0.0), np.max(np.abs(q), initial=0.0))) + 1e-300
    Bf = model.B_free
    best = math.inf
    for s in range(n_samples):
        amp = amplitudes[s % len(amplitudes)]
        family = (s // len(amplitudes)) % 3
        eta = e.copy()
        dq = np.zeros_like(q)
        if family in (0, 2) and Bf.shape[1] > 0:
            dx = rng.standard_normal(Bf.shape[1]) * amp * x_scale
            eta += to_points(Bf @ dx, model.n_points)
        if family in (1, 2) or Bf.shape[1] == 0:
            dq = T.dev(rng.standard_normal(q.shape) * amp * q_scale)
            eta -= dq
        val = model.energy(eta) + model.dissipation(dq) - base
        best = min(best, val)
    sweep = model.materials.plastic_update(model.phase, strain, q) - q
    for amp in amplitudes:
        dq = amp * sweep
        best = min(best, model.energy(e - dq) + model.dissipation(dq) - base)
    return float(best)


# --------------------------------------------------------------------------
# Reports and generic evolution driver


@dataclass(frozen=True)
class IncrementReport:
    """Per-step energetics.

    ``balance_residual`` is the cumulative signed defect
    ``Q(t_k) + D(0, t_k) - Q(0) - W(0, t_k)`` with trapezoidal work.
    ``transition_term`` is the cumulative ``sum 1/2 (sigma_k - sigma_{k-1}) :
    dq_k``, which the incremental scheme adds to the balance exactly, so that
    ``balance_residual - transition_term`` only carries solver error.
    """

    t: float
    elastic_energy: float
    increment_dissipation: float
    external_work_increment: float
    balance_residual: float
    stability_margin: float
    inner_iterations: int
    transition_term: float = 0.0
    equilibrium_residual: float = 0.0


class IncrementalProblem:
    """Common driver: subclasses provide the quadratic model and the lifting."""

    model: QuadraticModel
    cfg: SolverConfig

    def lifting(self, t: float) -> np.ndarray:
        """Full unknown vector of the Dirichlet datum at time ``t``."""
        raise NotImplementedError

    def make_state(self, t, x, q, dissipation):
        raise NotImplementedError

    def vectors(self, state):
        """Unknown vector and plastic strain of a state."""
        raise NotImplementedError

    def initial_state(self, t0: float):
        """Elastic predictor at ``t0`` with zero plastic strain."""
        q0 = np.zeros((self.model.n_points, 6))
        x0 = self.model.solve(q0, self.lifting(t0)[self.model.fixed])
        return self.make_state(t0, x0, q0, 0.0)

    def step(self, state, t_next: float, step_index: int = 0):
        """One incremental minimization; returns the new state and its report.

        Balance fields of the report are per-step; :meth:`evolve` turns them
        into cumulative values.
        """
        if not t_next > state.t:
            raise InvalidParameterError(f"t_next={t_next} must exceed the current time {state.t}")
        model = self.model
        x_prev, q_prev = self.vectors(state)
        w_prev, w_next = self.lifting(state.t), self.lifting(t_next)
        res = minimize_increment(model, w_next[model.fixed], q_prev, self.cfg)
        sig_prev = model.stress(model.strain(x_prev) - q_prev)
        e_new = model.strain(res.x) - res.q
        sig_new = model.stress(e_new)
        dq = res.q - q_prev
        dD = model.dissipation(dq)
        dW_strain = model.strain(w_next - w_prev)
        vol = model.volumes
        work = float(0.5 * np.sum(vol * T.inner(sig_new + sig_prev, dW_strain)))
        transition = float(0.5 * np.sum(vol * T.inner(sig_new - sig_prev, dq)))
        margin = math.nan
        if self.cfg.stability_samples > 0:
            margin = stability_margin(
                model, res.x, res.q, self.cfg.stability_samples, seed=(self.cfg.seed, step_index)
            )
        new_state = self.make_state(t_next, res.x, res.q, state.accumulated_dissipation + dD)
        report = IncrementReport(
            t=float(t_next),
            elastic_energy=model.energy(e_new),
            increment_dissipation=dD,
            external_work_increment=work,
            balance_residual=0.0,
            stability_margin=margin,
            inner_iterations=res.iterations,
            transition_term=transition,
            equilibrium_residual=res.residual,
        )
        return new_state, report

    def evolve(self, times):
        """Run the scheme on the time grid; the first entry is the initial time."""
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 1 or np.any(np.diff(times) <= 0):
            raise InvalidParameterError("time grid must be strictly increasing")
        state = self.initial_state(float(times[0]))
        x0, q0 = self.vectors(state)
        Q0 = self.model.energy(self.model.strain(x0) - q0)
        margin0 = math.nan
        if self.cfg.stability_samples > 0:
            margin0 = stability_margin(self.model, x0, q0, self.cfg.stability_samples, seed=(self.cfg.seed, 0))
        states = [state]
        reports = [IncrementReport(float(times[0]), Q0, 0.0, 0.0, 0.0, margin0, 1)]
        D = W = trans = 0.0
        for k, t in enumerate(times[1:], start=1):
            state, rep = self.step(state, float(t), step_index=k)
            D += rep.increment_dissipation
            W += rep.external_work_increment
            trans += rep.transition_term
            balance = rep.elastic_energy + D - Q0 - W
            rep = replace(rep, balance_residual=balance, transition_term=trans)
            log.info("step %d t=%.4g Q=%.6g dD=%.3g balance=%.3e iters=%d", k, t, rep.elastic_energy,
                     rep.increment_dissipation, balance, rep.inner_iterations)
            states.append(state)
            reports.append(rep)
        return states, reports


# --------------------------------------------------------------------------
# Finite-thickness model


@dataclass(frozen=True)
class EvolutionState:
    """Time-stamped discrete triple of the finite-thickness problem.

    ``u`` is nodal, shape ``(n_nodes, 3)``; ``q = Lambda_h p`` and
    ``e_scaled = Lambda_h e`` are per cell, shape ``(n_cells, 6)``.
    """

    t: float
    u: np.ndarray
    q: np.ndarray
    e_scaled: np.ndarray
    accumulated_dissipation: float = 0.0

    def plastic_strain(self, h: float) -> np.ndarray:
        """Unscaled plastic strain ``p = Lambda_h^{-1} q``."""
        return T.lambda_h_inv(self.q, h)


@dataclass
class PlateProblem(IncrementalProblem):
    """Finite-thickness plate: mesh, materials, microstructure and datum."""

    mesh: PlateMesh
    materials: MaterialLibrary
    phase_map: PhaseMap
    h: float
    eps: float
    datum: BoundaryDatum
    cfg: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.model = plate_model(
            self.mesh, self.materials, self.phase_map, self.h, self.eps,
            linear_solver=self.cfg.linear_solver, cg_tol=self.cfg.cg_tol,
        )

    def lifting(self, t):
        return nodal_datum(self.datum, self.mesh, t).ravel()

    def make_state(self, t, x, q, dissipation):
        u = x.reshape(-1, 3).copy()
        e = self.model.strain(x) - q
        return EvolutionState(float(t), u, q.copy(), e, float(dissipation))

    def vectors(self, state):
        return state.u.ravel(), state.q

    def constraint_residual(self, state: EvolutionState) -> float:
        total = self.model.strain(state.u.ravel())
        return float(np.max(np.abs(total - state.e_scaled - state.q), initial=0.0))

    def stability_audit(self, state, n_samples, amplitudes=(1e-3, 1e-2, 1e-1, 1.0), seed=0) -> float:
        return stability_margin(self.model, state.u.ravel(), state.q, n_samples, amplitudes, seed)


def incremental_step_h(problem: PlateProblem, state: EvolutionState, t_next: float):
    """One time step of the finite-thickness scheme (see :class:`PlateProblem`)."""
    if state.u.shape != (problem.mesh.n_nodes, 3):
        raise ShapeError("state does not match the problem mesh")
    return problem.step(state, t_next)


def run_evolution_h(cfg, h=None):
    """Run the finite-thickness evolution described by a scenario config."""
    from .config import build_plate_problem

    problem = build_plate_problem(cfg, h)
    return problem.evolve(cfg.time_grid())


def stability_audit(problem: IncrementalProblem, state, n_samples: int, amplitudes=(1e-3, 1e-2, 1e-1, 1.0), seed=0) -> float:
    """Sampled (qs1) margin of a state of either model."""
    x, q = problem.vectors(state)
    return stability_margin(problem.model, x, q, n_samples, amplitudes, seed)
