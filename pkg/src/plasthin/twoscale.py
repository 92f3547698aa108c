"""Homogenized two-scale plate model at a fixed ratio gamma = h / eps.

Unknowns are the in-plane macro displacement ``ubar`` (nodal bilinear on a
macro grid of omega), the deflection ``u3`` (cell-centred, with one ring of
ghost cells outside omega; the ghosts and the first ring inside both carry
the datum, which fixes value and slope at the boundary through the stencil),
and a periodic corrector ``mu`` on ``I x Y`` attached to every macro cell.
Quadrature points are the triples (macro cell, Y-cell, layer); at each one
the total strain is the Kirchhoff-Love strain ``E ubar - x3 D2 u3`` (zero
i3 entries) plus the scaled corrector strain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import tensors as T
from .discretization import BoundaryDatum, QuadraticModel, centroid_gradients, strain_operator, to_points
from .errors import InvalidParameterError, ShapeError
from .materials import MaterialLibrary
from .microstructure import PhaseMap, phase_at
from .solver import IncrementalProblem, SolverConfig

IN_PLANE_SLOTS = (0, 1, 3)


# --------------------------------------------------------------------------
# Micro operator


def micro_gradients(n_y: int, n_layers: int):
    """Centroid derivatives on the periodic ``Y x I`` grid (nodes wrap in y)."""
    ny, n3 = n_y, n_layers

    def node_index(i, j, k):
        return ((i % ny) * ny + (j % ny)) * (n3 + 1) + k

    return centroid_gradients((ny, ny, n3), (1.0 / ny, 1.0 / ny, 1.0 / n3), node_index)


def micro_strain_operator(n_y: int, n_layers: int, gamma: float) -> sp.csr_matrix:
    """Sparse ``E~_gamma``: nodal corrector dofs to component-major cell strains."""
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    return strain_operator(micro_gradients(n_y, n_layers), derivative_scale=(1.0, 1.0, 1.0 / gamma))


def assemble_Etilde_gamma(mu, gamma: float) -> np.ndarray:
    """Scaled symmetric gradient of a periodic corrector.

    ``mu`` has shape ``(N_Y, N_Y, N3 + 1, 3)`` (nodes of the periodic Y grid
    times the thickness nodes).  Returns ``(N_Y, N_Y, N3, 6)`` cell values.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 4 or mu.shape[0] != mu.shape[1] or mu.shape[3] != 3 or mu.shape[2] < 2:
        raise ShapeError(f"corrector must have shape (N_Y, N_Y, N3 + 1, 3), got {mu.shape}")
    ny, n3 = mu.shape[0], mu.shape[2] - 1
    B = micro_strain_operator(ny, n3, gamma)
    return to_points(B @ mu.reshape(-1), ny * ny * n3).reshape(ny, ny, n3, 6)


def corrector_kernel(B_micro: sp.csr_matrix) -> np.ndarray:
    """Orthonormal basis of the kernel of the micro strain operator.

    The kernel holds the constants and the hourglass patterns of one-point
    quadrature.
    """
    return sla.null_space(B_micro.toarray())


def corrector_pins(B_micro: sp.csr_matrix, kernel=None) -> np.ndarray:
    """Dofs whose pinning removes the kernel of the micro strain operator.

    Pivoted QR on a kernel basis picks dofs on which the basis is invertible.
    """
    null = corrector_kernel(B_micro) if kernel is None else kernel
    if null.shape[1] == 0:
        return np.zeros(0, dtype=np.int64)
    _, _, piv = sla.qr(null.T, pivoting=True, mode="economic")
    return np.sort(piv[: null.shape[1]])


# --------------------------------------------------------------------------
# Macro operators


def _membrane_gradients(m1, m2, d1, d2):
    """2D centroid derivatives of bilinear nodal fields, ``(cells, nodes)``."""
    ci, cj = np.meshgrid(np.arange(m1), np.arange(m2), indexing="ij")
    cell = (ci * m2 + cj).ravel()
    rows, cols, g1, g2 = [], [], [], []
    for a in (0, 1):
        for b in (0, 1):
            rows.append(cell)
            cols.append(((ci + a) * (m2 + 1) + cj + b).ravel())
            g1.append(np.full(cell.size, (2 * a - 1) / (2 * d1)))
            g2.append(np.full(cell.size, (2 * b - 1) / (2 * d2)))
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    shape = (m1 * m2, (m1 + 1) * (m2 + 1))
    G1 = sp.csr_matrix((np.concatenate(g1), (rows, cols)), shape=shape)
    G2 = sp.csr_matrix((np.concatenate(g2), (rows, cols)), shape=shape)
    return G1, G2


def _bending_operators(m1, m2, d1, d2):
    """Cell-centred Hessian stencils ``(D11, D22, D12)`` on the ghosted grid."""
    ci, cj = np.meshgrid(np.arange(m1), np.arange(m2), indexing="ij")
    cell = (ci * m2 + cj).ravel()
    ext = m2 + 2

    def idx(di, dj):
        return ((ci + 1 + di) * ext + cj + 1 + dj).ravel()

    shape = (m1 * m2, (m1 + 2) * (m2 + 2))

    def build(entries):
        r = np.concatenate([cell] * len(entries))
        c = np.concatenate([idx(di, dj) for di, dj, _ in entries])
        v = np.concatenate([np.full(cell.size, w) for _, _, w in entries])
        return sp.csr_matrix((v, (r, c)), shape=shape)

    D11 = build([(-1, 0, 1 / d1**2), (0, 0, -2 / d1**2), (1, 0, 1 / d1**2)])
    D22 = build([(0, -1, 1 / d2**2), (0, 0, -2 / d2**2), (0, 1, 1 / d2**2)])
    w = 1 / (4 * d1 * d2)
    D12 = build([(1, 1, w), (1, -1, -w), (-1, 1, -w), (-1, -1, w)])
    return D11, D22, D12


# --------------------------------------------------------------------------
# State and problem


@dataclass(frozen=True)
class TwoScaleState:
    """Snapshot of the two-scale model.

    Shapes, with ``(M1, M2)`` macro cells, ``N_Y`` cells per period side and
    ``N3`` layers:

    ubar  ``(M1+1, M2+1, 2)`` nodal in-plane displacement
    u3    ``(M1+2, M2+2)`` cell-centred deflection including the ghost ring
    mu    ``(M1, M2, N_Y, N_Y, N3+1, 3)`` corrector, mean-free per macro cell
    E, P  ``(M1, M2, N_Y, N_Y, N3, 6)`` effective and plastic strain
    """

    t: float
    ubar: np.ndarray
    u3: np.ndarray
    mu: np.ndarray
    E: np.ndarray
    P: np.ndarray
    accumulated_dissipation: float = 0.0


@dataclass
class TwoScaleProblem(IncrementalProblem):
    """Homogenized plate on ``[0, L1] x [0, L2]`` with a periodic cell problem."""

    extent: tuple[float, float]
    macro_cells: tuple[int, int]
    n_y: int
    n_layers: int
    gamma: float
    materials: MaterialLibrary
    phase_map: PhaseMap
    datum: BoundaryDatum
    cfg: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        m1, m2 = (int(v) for v in self.macro_cells)
        if min(m1, m2) < 2:
            raise InvalidParameterError(f"need at least 2x2 macro cells, got {self.macro_cells}")
        if self.n_y < 2 or self.n_layers < 1:
            raise InvalidParameterError("micro grid needs n_y >= 2 and n_layers >= 1")
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma}")
        self.macro_cells = (m1, m2)
        L1, L2 = self.extent
        self.spacing = (L1 / m1, L2 / m2)
        d1, d2 = self.spacing
        ny, n3 = self.n_y, self.n_layers
        n_cells = m1 * m2
        self.n_micro_cells = ny * ny * n3
        self.n_micro_nodes = ny * ny * (n3 + 1)
        n_pts = n_cells * self.n_micro_cells
        n_nodes = (m1 + 1) * (m2 + 1)
        n_ext = (m1 + 2) * (m2 + 2)
        n_mu = 3 * self.n_micro_nodes
        self.offsets = (0, 2 * n_nodes, 2 * n_nodes + n_ext, 2 * n_nodes + n_ext + n_cells * n_mu)

        # point -> macro cell expansion and point thickness coordinate
        R = sp.kron(sp.eye(n_cells), np.ones((self.n_micro_cells, 1)), format="csr")
        x3_local = np.tile(T.layer_midpoints(n3), ny * ny)
        X = sp.diags(np.tile(x3_local, n_cells))
        self.x3_points = np.tile(x3_local, n_cells)

        G1, G2 = _membrane_gradients(m1, m2, d1, d2)

        def vec2(G, comp):
            # act on the interleaved (ubar1, ubar2) nodal vector
            G = G.tocoo()
            return sp.csr_matrix((G.data, (G.row, 2 * G.col + comp)), shape=(G.shape[0], 2 * n_nodes))

        membrane = [vec2(G1, 0), vec2(G2, 1), 0.5 * (vec2(G2, 0) + vec2(G1, 1))]
        bending = _bending_operators(m1, m2, d1, d2)
        self.membrane_ops, self.bending_ops = membrane, bending

        B_micro = micro_strain_operator(ny, n3, self.gamma)
        self.B_micro = B_micro
        nmc = self.n_micro_cells
        blocks = []
        for s in range(6):
            mu_blk = sp.kron(sp.eye(n_cells), B_micro[s * nmc:(s + 1) * nmc], format="csr")
            if s in IN_PLANE_SLOTS:
                a = IN_PLANE_SLOTS.index(s)
                blocks.append([R @ membrane[a], -(X @ R @ bending[a]), mu_blk])
            else:
                blocks.append([None, None, mu_blk])
        # explicit empty blocks keep column counts right in bmat
        blocks[2][0] = sp.csr_matrix((n_pts, 2 * n_nodes))
        blocks[2][1] = sp.csr_matrix((n_pts, n_ext))
        B = sp.bmat(blocks, format="csr")

        fixed = np.zeros(B.shape[1], dtype=bool)
        ii, jj = np.meshgrid(np.arange(m1 + 1), np.arange(m2 + 1), indexing="ij")
        bnd = ((ii == 0) | (ii == m1) | (jj == 0) | (jj == m2)).ravel()
        fixed[: 2 * n_nodes] = np.repeat(bnd, 2)
        gi, gj = np.meshgrid(np.arange(m1 + 2), np.arange(m2 + 2), indexing="ij")
        ghost = ((gi == 0) | (gi == m1 + 1) | (gj == 0) | (gj == m2 + 1)).ravel()
        clamp = ((gi <= 1) | (gi >= m1) | (gj <= 1) | (gj >= m2)).ravel()
        fixed[self.offsets[1]:self.offsets[2]] = clamp
        self.micro_kernel = corrector_kernel(B_micro)
        pins = corrector_pins(B_micro, self.micro_kernel)
        for c in range(n_cells):
            fixed[self.offsets[2] + c * n_mu + pins] = True
        self.ghost_mask = ghost.reshape(m1 + 2, m2 + 2)
        self.clamp_mask = clamp.reshape(m1 + 2, m2 + 2)

        yc = (np.arange(ny) + 0.5) / ny
        y1, y2 = np.meshgrid(yc, yc, indexing="ij")
        micro_phase = np.repeat(phase_at(self.phase_map, np.stack([y1, y2], -1)).ravel(), n3)
        phase = np.tile(micro_phase, n_cells)
        vol = d1 * d2 / (n3 * ny * ny)
        self.model = QuadraticModel(
            B, vol, phase, self.materials, fixed,
            linear_solver=self.cfg.linear_solver, cg_tol=self.cfg.cg_tol,
        )

    # -- geometry ---------------------------------------------------------

    @property
    def grid_shape(self) -> tuple[int, ...]:
        m1, m2 = self.macro_cells
        return (m1, m2, self.n_y, self.n_y, self.n_layers)

    def macro_nodes(self) -> np.ndarray:
        m1, m2 = self.macro_cells
        d1, d2 = self.spacing
        x1, x2 = np.meshgrid(np.arange(m1 + 1) * d1, np.arange(m2 + 1) * d2, indexing="ij")
        return np.stack([x1, x2], -1)

    def macro_centers(self, ghosts: bool = False) -> np.ndarray:
        m1, m2 = self.macro_cells
        d1, d2 = self.spacing
        lo = -1 if ghosts else 0
        i1 = np.arange(lo, m1 + (1 if ghosts else 0))
        i2 = np.arange(lo, m2 + (1 if ghosts else 0))
        x1, x2 = np.meshgrid((i1 + 0.5) * d1, (i2 + 0.5) * d2, indexing="ij")
        return np.stack([x1, x2], -1)

    # -- unknown vector <-> fields -----------------------------------------

    def split(self, x):
        o = self.offsets
        m1, m2 = self.macro_cells
        ubar = x[o[0]:o[1]].reshape(m1 + 1, m2 + 1, 2)
        u3 = x[o[1]:o[2]].reshape(m1 + 2, m2 + 2)
        mu = x[o[2]:o[3]].reshape(m1, m2, self.n_y, self.n_y, self.n_layers + 1, 3)
        return ubar, u3, mu

    def lifting(self, t):
        f = self.datum.factor(t)
        xy = self.macro_nodes()
        ubar = np.stack([self.datum.w1(xy[..., 0], xy[..., 1]), self.datum.w2(xy[..., 0], xy[..., 1])], -1)
        c = self.macro_centers(ghosts=True)
        u3 = self.datum.w3(c[..., 0], c[..., 1])
        x = np.zeros(self.model.n_dofs)
        o = self.offsets
        x[o[0]:o[1]] = ubar.ravel()
        x[o[1]:o[2]] = u3.ravel()
        return f * x

    def make_state(self, t, x, q, dissipation):
        ubar, u3, mu = self.split(x.copy())
        # minimum-norm corrector per macro cell: strip constants and hourglass modes
        flat = mu.reshape(mu.shape[0] * mu.shape[1], -1)
        N = self.micro_kernel
        mu = (flat - (flat @ N) @ N.T).reshape(mu.shape)
        E = (self.model.strain(x) - q).reshape(self.grid_shape + (6,))
        return TwoScaleState(float(t), ubar.copy(), u3.copy(), mu, E, q.reshape(self.grid_shape + (6,)).copy(),
                             float(dissipation))

    def vectors(self, state: TwoScaleState):
        x = np.concatenate([state.ubar.ravel(), state.u3.ravel(), state.mu.ravel()])
        return x, state.P.reshape(-1, 6)

    # -- derived fields ------------------------------------------------------

    def membrane_strain(self, ubar) -> np.ndarray:
        """Cell-wise ``E ubar`` as Sym2 ``(M1, M2, 3)``."""
        v = np.asarray(ubar, dtype=float).ravel()
        return np.stack([op @ v for op in self.membrane_ops], -1).reshape(*self.macro_cells, 3)

    def curvature(self, u3) -> np.ndarray:
        """Cell-wise discrete Hessian ``D2 u3`` as Sym2 ``(M1, M2, 3)``."""
        v = np.asarray(u3, dtype=float).ravel()
        return np.stack([op @ v for op in self.bending_ops], -1).reshape(*self.macro_cells, 3)

    def kl_strain(self, state: TwoScaleState) -> np.ndarray:
        """``E ubar - x3 D2 u3`` embedded with zero i3 rows, per quadrature point."""
        mem = self.membrane_strain(state.ubar)
        curv = self.curvature(state.u3)
        x3 = T.layer_midpoints(self.n_layers)
        f = mem[:, :, None, :] - x3[None, None, :, None] * curv[:, :, None, :]
        out = T.embed_sym2(f)[:, :, None, None, :, :]
        return np.broadcast_to(out, self.grid_shape + (6,)).copy()

    def corrector_strain(self, state: TwoScaleState) -> np.ndarray:
        m1, m2 = self.macro_cells
        mu = state.mu.reshape(m1 * m2, -1)
        nmc = self.n_micro_cells
        out = np.stack([to_points(self.B_micro @ mu[c], nmc) for c in range(m1 * m2)])
        return out.reshape(self.grid_shape + (6,))

    def compatibility_residual(self, state: TwoScaleState) -> float:
        """Largest entry of ``KL strain + E~ mu - E - P``."""
        r = self.kl_strain(state) + self.corrector_strain(state) - state.E - state.P
        return float(np.max(np.abs(r), initial=0.0))

    def stress(self, state: TwoScaleState) -> np.ndarray:
        return self.model.stress(state.E.reshape(-1, 6)).reshape(state.E.shape)

    def energy(self, state: TwoScaleState) -> float:
        return self.model.energy(state.E.reshape(-1, 6))


def incremental_step_hom(problem: TwoScaleProblem, state: TwoScaleState, t_next: float):
    """One time step of the two-scale scheme."""
    if state.E.shape != problem.grid_shape + (6,):
        raise ShapeError("state does not match the two-scale grid")
    return problem.step(state, t_next)


def run_evolution_hom(cfg):
    """Run the two-scale evolution described by a scenario config."""
    from .config import build_twoscale_problem

    problem = build_twoscale_problem(cfg)
    return problem.evolve(cfg.time_grid())
