"""Tensor-grid trilinear discretization of the rescaled plate and its operators.

Strains are evaluated at cell centroids (one-point quadrature), so elastic and
plastic strains are cell-constant.  Displacements are nodal with three
components, stored node-major (dof ``3 * node + component``).  Strain vectors
handed to sparse operators are stored component-major (row ``slot * n_points
+ point``); public helpers return ``(n_points, 6)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import tensors as T
from .errors import AssemblyError, InvalidParameterError, RangeError, ShapeError
from .materials import MaterialLibrary
from .microstructure import PhaseMap, eps_phase_at

# (i, j) index pairs of the stored Sym3 slots
SLOT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class PlateMesh:
    """Uniform hexahedral grid of ``[0, L1] x [0, L2] x (-1/2, 1/2)``.

    The thickness parameter only enters through the operators; the mesh lives
    on the fixed rescaled domain.  Every node on the lateral boundary belongs
    to the Dirichlet part.
    """

    extent: tuple[float, float]
    shape: tuple[int, int, int]

    def __post_init__(self):
        L1, L2 = (float(v) for v in self.extent)
        n1, n2, n3 = (int(v) for v in self.shape)
        if L1 <= 0 or L2 <= 0:
            raise InvalidParameterError(f"in-plane extent must be positive, got {self.extent}")
        if min(n1, n2, n3) < 1:
            raise InvalidParameterError(f"mesh resolution must be >= 1, got {self.shape}")
        object.__setattr__(self, "extent", (L1, L2))
        object.__setattr__(self, "shape", (n1, n2, n3))

    @property
    def node_shape(self) -> tuple[int, int, int]:
        n1, n2, n3 = self.shape
        return n1 + 1, n2 + 1, n3 + 1

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.node_shape))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, float, float]:
        n1, n2, n3 = self.shape
        return self.extent[0] / n1, self.extent[1] / n2, 1.0 / n3

    @property
    def cell_volume(self) -> float:
        d1, d2, d3 = self.spacing
        return d1 * d2 * d3

    @property
    def x3_nodes(self) -> np.ndarray:
        return -0.5 + np.arange(self.shape[2] + 1) / self.shape[2]

    @property
    def x3_cells(self) -> np.ndarray:
        return T.layer_midpoints(self.shape[2])

    def node_coords(self) -> np.ndarray:
        d1, d2, _ = self.spacing
        n1, n2, n3 = self.node_shape
        x1 = np.arange(n1) * d1
        x2 = np.arange(n2) * d2
        g = np.meshgrid(x1, x2, self.x3_nodes, indexing="ij")
        return np.stack(g, axis=-1)

    def cell_centers(self) -> np.ndarray:
        d1, d2, _ = self.spacing
        n1, n2, n3 = self.shape
        x1 = (np.arange(n1) + 0.5) * d1
        x2 = (np.arange(n2) + 0.5) * d2
        g = np.meshgrid(x1, x2, self.x3_cells, indexing="ij")
        return np.stack(g, axis=-1)

    def lateral_nodes(self) -> np.ndarray:
        """Boolean node mask of the Dirichlet boundary (lateral faces)."""
        n1, n2, n3 = self.node_shape
        i = np.arange(n1)[:, None, None]
        j = np.arange(n2)[None, :, None]
        mask = (i == 0) | (i == n1 - 1) | (j == 0) | (j == n2 - 1)
        return np.broadcast_to(mask, (n1, n2, n3)).ravel()

    def face_nodes(self) -> np.ndarray:
        """Boolean node mask of the top and bottom faces."""
        n1, n2, n3 = self.node_shape
        k = np.arange(n3)[None, None, :]
        return np.broadcast_to((k == 0) | (k == n3 - 1), (n1, n2, n3)).ravel()


# --------------------------------------------------------------------------
# Gradient and strain operators


def centroid_gradients(cell_shape, spacing, node_index) -> list[sp.csr_matrix]:
    """Centroid derivative operators of trilinear hexahedra.

    ``node_index(i, j, k)`` maps (possibly out-of-range) grid indices to node
    ids, which lets the same routine build periodic and bounded grids.
    Returns three ``(n_cells, n_nodes)`` matrices.
    """
    n1, n2, n3 = cell_shape
    ci, cj, ck = np.meshgrid(np.arange(n1), np.arange(n2), np.arange(n3), indexing="ij")
    cell = ((ci * n2 + cj) * n3 + ck).ravel()
    n_cells = n1 * n2 * n3
    rows, cols = [], []
    signs = [[], [], []]
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                rows.append(cell)
                cols.append(node_index(ci + a, cj + b, ck + c).ravel())
                for axis, bit in enumerate((a, b, c)):
                    signs[axis].append(np.full(n_cells, 2.0 * bit - 1.0))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n_nodes = int(cols.max()) + 1 if cols.size else 0
    out = []
    for axis in range(3):
        vals = np.concatenate(signs[axis]) / (4.0 * spacing[axis])
        out.append(sp.csr_matrix((vals, (rows, cols)), shape=(n_cells, n_nodes)))
    return out


def strain_operator(grads, slot_scale=None, derivative_scale=(1.0, 1.0, 1.0)) -> sp.csr_matrix:
    """Symmetric-gradient operator from centroid derivative matrices.

    ``derivative_scale`` multiplies each partial derivative before
    symmetrization (``1/h`` or ``1/gamma`` on the thickness direction);
    ``slot_scale`` then rescales the six stored slots (``Lambda_h``).
    Rows are component-major.
    """
    n_cells, n_nodes = grads[0].shape
    blocks = []
    for s, (i, j) in enumerate(SLOT_PAIRS):
        gi = (grads[i] * derivative_scale[i]).tocoo()
        gj = (grads[j] * derivative_scale[j]).tocoo()
        if i == j:
            parts = [(gi, i, 1.0)]
        else:
            parts = [(gj, i, 0.5), (gi, j, 0.5)]
        r, c, v = [], [], []
        for g, comp, w in parts:
            r.append(g.row)
            c.append(3 * g.col + comp)
            v.append(w * g.data)
        fac = 1.0 if slot_scale is None else slot_scale[s]
        blk = sp.csr_matrix(
            (np.concatenate(v) * fac, (np.concatenate(r), np.concatenate(c))),
            shape=(n_cells, 3 * n_nodes),
        )
        blocks.append(blk)
    return sp.vstack(blocks, format="csr")


def plate_gradients(mesh: PlateMesh) -> list[sp.csr_matrix]:
    n1, n2, n3 = mesh.node_shape

    def node_index(i, j, k):
        return (i * n2 + j) * n3 + k

    return centroid_gradients(mesh.shape, mesh.spacing, node_index)


def to_points(flat, n_points) -> np.ndarray:
    return np.asarray(flat).reshape(6, n_points).T


def to_flat(field) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(field, dtype=float).T).ravel()


def assemble_Eh(mesh: PlateMesh, u, h: float) -> np.ndarray:
    """Cell-wise ``sym[grad' u | (1/h) d3 u]`` of a nodal displacement field.

    ``u`` has shape ``(n_nodes, 3)`` or ``mesh.node_shape + (3,)``.  Returns
    ``(n_cells, 6)``.
    """
    if not h > 0:
        raise InvalidParameterError(f"thickness parameter must be positive, got {h}")
    u = np.asarray(u, dtype=float)
    if u.shape not in ((mesh.n_nodes, 3), mesh.node_shape + (3,)):
        raise ShapeError(f"displacement shape {u.shape} does not match mesh {mesh.node_shape}")
    B = strain_operator(plate_gradients(mesh), derivative_scale=(1.0, 1.0, 1.0 / h))
    return to_points(B @ u.reshape(-1), mesh.n_cells)


def scaled_strain_operator(mesh: PlateMesh, h: float) -> sp.csr_matrix:
    """``Lambda_h E``: the scaled strain of a displacement in plate variables."""
    return strain_operator(plate_gradients(mesh), slot_scale=T.lambda_h_factors(h))


# --------------------------------------------------------------------------
# Boundary datum


def _linear_profile(samples):
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise InvalidParameterError("profile must be a list of (t, value) samples")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise InvalidParameterError("profile sample times must be increasing")
    return arr


ZERO_FIELD: Callable = lambda x1, x2: np.zeros(np.broadcast(x1, x2).shape)  # noqa: E731


@dataclass(frozen=True)
class BoundaryDatum:
    """Kirchhoff-Love Dirichlet datum ``profile(t) * (w1, w2, w3)(x')``.

    The three in-plane fields are callables of ``(x1, x2)`` arrays; slopes of
    ``w3`` are taken by central differences with step ``fd_step``.
    """

    w1: Callable = ZERO_FIELD
    w2: Callable = ZERO_FIELD
    w3: Callable = ZERO_FIELD
    profile: np.ndarray = field(default_factory=lambda: np.array([[0.0, 0.0], [1.0, 1.0]]))
    fd_step: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "profile", _linear_profile(self.profile))

    @property
    def T(self) -> float:
        return float(self.profile[-1, 0])

    def factor(self, t: float) -> float:
        t0, t1 = self.profile[0, 0], self.profile[-1, 0]
        tol = 1e-12 * max(1.0, abs(t1))
        if t < t0 - tol or t > t1 + tol:
            raise RangeError(f"time {t} outside [{t0}, {t1}]")
        return float(np.interp(t, self.profile[:, 0], self.profile[:, 1]))

    def slopes(self, x1, x2):
        d = self.fd_step
        s1 = (self.w3(x1 + d, x2) - self.w3(x1 - d, x2)) / (2 * d)
        s2 = (self.w3(x1, x2 + d) - self.w3(x1, x2 - d)) / (2 * d)
        return s1, s2


def eval_boundary_datum(bd: BoundaryDatum, t: float, x) -> np.ndarray:
    """Scaled datum ``(w1 - x3 d1 w3, w2 - x3 d2 w3, w3)`` at points ``x``."""
    x = np.asarray(x, dtype=float)
    f = bd.factor(t)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    s1, s2 = bd.slopes(x1, x2)
    out = np.stack([bd.w1(x1, x2) - x3 * s1, bd.w2(x1, x2) - x3 * s2, bd.w3(x1, x2) + 0 * x3], axis=-1)
    return f * out


def nodal_datum(bd: BoundaryDatum, mesh: PlateMesh, t: float) -> np.ndarray:
    """Nodal interpolant of the datum at time ``t``, shape ``(n_nodes, 3)``.

    Slopes come from :func:`tensors.kl_embed` on the sampled deflection.
    """
    f = bd.factor(t)
    xy = mesh.node_coords()[:, :, 0, :2]
    ubar = np.stack([bd.w1(xy[..., 0], xy[..., 1]), bd.w2(xy[..., 0], xy[..., 1])], axis=-1)
    u3 = bd.w3(xy[..., 0], xy[..., 1])
    return f * T.kl_embed(ubar, u3, mesh).reshape(-1, 3)


# --------------------------------------------------------------------------
# Quadratic model: energy, assembly and elastic solves


class QuadraticModel:
    """Discrete energy ``sum_p vol_p Q(phase_p, B x - q)`` with Dirichlet dofs.

    ``B`` maps the unknown vector to component-major strains at quadrature
    points.  The reduced stiffness on free dofs is factorized once; each
    elastic solve is then a pair of triangular solves.
    """

    def __init__(
        self,
        B: sp.csr_matrix,
        volumes,
        phase,
        materials: MaterialLibrary,
        fixed,
        linear_solver: str = "direct",
        cg_tol: float = 1e-10,
        ordering=None,
    ):
        self.B = B.tocsr()
        self.n_points = B.shape[0] // 6
        self.n_dofs = B.shape[1]
        self.volumes = np.broadcast_to(np.asarray(volumes, dtype=float), (self.n_points,)).copy()
        self.phase = np.asarray(phase, dtype=np.int64)
        self.materials = materials
        self.fixed = np.asarray(fixed, dtype=bool)
        self.free = ~self.fixed
        if self.phase.shape != (self.n_points,) or self.fixed.shape != (self.n_dofs,):
            raise ShapeError("phase or Dirichlet mask does not match the strain operator")
        if self.phase.min() < 0 or self.phase.max() >= len(materials):
            raise AssemblyError("phase id without a material")
        self.yield_radius = materials.yield_radii()[self.phase]
        self.linear_solver = linear_solver
        self.cg_tol = cg_tol
        self.D = self._weight_operator()
        self.B_free = self.B[:, self.free]
        self.B_fixed = self.B[:, self.fixed]
        self.K_ff = (self.B_free.T @ self.D @ self.B_free).tocsc()
        self.abs_B_free_T = abs(self.B_free).T.tocsr()
        self._factor = None
        self._cg_guess = None
        self._perm = None
        if ordering is not None:
            ordering = np.asarray(ordering, dtype=np.int64)
            if np.sort(ordering).tolist() != list(range(self.n_dofs)):
                raise ShapeError("ordering must be a permutation of the dofs")
            pos = np.full(self.n_dofs, -1, dtype=np.int64)
            pos[np.flatnonzero(self.free)] = np.arange(int(self.free.sum()))
            perm = pos[ordering]
            self._perm = perm[perm >= 0]

    def _weight_operator(self) -> sp.csr_matrix:
        mats = np.stack([m.weighted_matrix() for m in self.materials.phases])
        per_point = mats[self.phase] * self.volumes[:, None, None]
        rows = [[sp.diags(per_point[:, a, b]) for b in range(6)] for a in range(6)]
        return sp.bmat(rows, format="csr")

    # -- evaluation -------------------------------------------------------

    def strain(self, x) -> np.ndarray:
        return to_points(self.B @ x, self.n_points)

    def stress(self, elastic_strain) -> np.ndarray:
        return self.materials.stress(self.phase, elastic_strain)

    def energy(self, elastic_strain) -> float:
        sig = self.stress(elastic_strain)
        return float(0.5 * np.sum(self.volumes * T.inner(sig, elastic_strain)))

    def dissipation(self, dq) -> float:
        return float(np.sum(self.volumes * self.yield_radius * T.norm(dq)))

    def internal_force(self, stress) -> np.ndarray:
        """``B^T (vol W stress)``: the weak divergence tested on every dof."""
        w = stress * T.FROBENIUS_WEIGHTS * self.volumes[:, None]
        return self.B.T @ to_flat(w)

    def force_scale(self, stress) -> np.ndarray:
        """Assembly magnitude ``|B|^T (vol |W stress|)`` on free dofs."""
        w = np.abs(stress) * T.FROBENIUS_WEIGHTS * self.volumes[:, None]
        return self.abs_B_free_T @ to_flat(w)

    # -- solves -----------------------------------------------------------

    def factorize(self, A):
        """Sparse LU of a free-dof matrix; returns an object with ``solve``.

        With a fill-reducing ``ordering`` the matrix is permuted once and
        factorized in that order, otherwise SuperLU picks a minimum-degree
        ordering of ``A + A^T``.
        """
        opts = dict(diag_pivot_thresh=0.0, options={"SymmetricMode": True})
        if self._perm is None:
            return spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", **opts)
        perm = self._perm
        lu = spla.splu(sp.csc_matrix(A)[perm][:, perm].tocsc(), permc_spec="NATURAL", **opts)
        return _PermutedFactor(lu, perm)

    def _factorize(self):
        if self._factor is None and self.K_ff.shape[0] > 0:
            diag = self.K_ff.diagonal()
            if np.any(diag <= 0):
                raise AssemblyError("elastic operator has empty rows; is every free dof constrained by a cell?")
            try:
                self._factor = self.factorize(self.K_ff)
            except RuntimeError as exc:
                raise AssemblyError(f"singular elastic operator: {exc}") from None
        return self._factor

    def rhs(self, q, x_fixed) -> np.ndarray:
        """Right-hand side of the free-dof system at plastic strain ``q``."""
        target = to_flat(q) - self.B_fixed @ x_fixed
        return self.B_free.T @ (self.D @ target)

    def solve(self, q, x_fixed) -> np.ndarray:
        """Minimize the quadratic energy over free dofs at fixed ``q``."""
        x = np.zeros(self.n_dofs)
        x[self.fixed] = x_fixed
        if self.K_ff.shape[0] == 0:
            return x
        b = self.rhs(q, x_fixed)
        if self.linear_solver == "direct":
            xf = self._factorize().solve(b)
        elif self.linear_solver == "cg":
            diag = self.K_ff.diagonal()
            M = sp.diags(1.0 / diag)
            xf, info = spla.cg(self.K_ff, b, x0=self._cg_guess, rtol=self.cg_tol, atol=0.0,
                               M=M, maxiter=20 * self.K_ff.shape[0])
            if info != 0:
                raise AssemblyError(f"conjugate gradients did not converge (info={info})")
            self._cg_guess = xf
        else:
            raise InvalidParameterError(f"unknown linear solver {self.linear_solver!r}")
        if not np.all(np.isfinite(xf)):
            raise AssemblyError("elastic solve produced non-finite values")
        x[self.free] = xf
        return x


class _PermutedFactor:
    def __init__(self, lu, perm):
        self.lu = lu
        self.perm = perm

    def solve(self, b):
        out = np.empty_like(b, dtype=float)
        out[self.perm] = self.lu.solve(np.asarray(b, dtype=float)[self.perm])
        return out


def nested_dissection_nodes(node_shape) -> np.ndarray:
    """Node order from recursive bisection of the in-plane node grid.

    Each split removes one through-thickness plane of nodes, ordered after
    the two halves it separates; this keeps LU fill near that of nested
    dissection for the thin, wide grids used here.
    """
    n1, n2, n3 = node_shape
    idx = np.arange(n1 * n2 * n3).reshape(n1, n2, n3)
    blocks = []
    stack = [(0, n1, 0, n2, False)]
    # iterative post-order traversal: halves first, then their separator
    while stack:
        a0, a1, b0, b1, emit = stack.pop()
        if emit or (a1 - a0 <= 4 and b1 - b0 <= 4):
            blocks.append(idx[a0:a1, b0:b1, :].ravel())
            continue
        if a1 - a0 >= b1 - b0:
            c = (a0 + a1) // 2
            parts = [(a0, c, b0, b1, False), (c + 1, a1, b0, b1, False), (c, c + 1, b0, b1, True)]
        else:
            c = (b0 + b1) // 2
            parts = [(a0, a1, b0, c, False), (a0, a1, c + 1, b1, False), (a0, a1, c, c + 1, True)]
        stack.extend(reversed(parts))
    return np.concatenate(blocks)


def plate_phase(mesh: PlateMesh, phase_map: PhaseMap, eps: float) -> np.ndarray:
    centers = mesh.cell_centers().reshape(-1, 3)
    return eps_phase_at(phase_map, centers[:, :2], eps)


def assemble_elastic_system(mesh, materials, phase_map, h, eps, q, w_nodal):
    """Free-dof stiffness and right-hand side of ``min_u Q_h(Lambda_h E u - q)``.

    ``q`` is the scaled plastic strain per cell, ``w_nodal`` the Dirichlet
    values at every node (only lateral nodes are used).
    """
    if not eps > 0:
        raise InvalidParameterError(f"period must be positive, got {eps}")
    model = plate_model(mesh, materials, phase_map, h, eps)
    x_fixed = np.asarray(w_nodal, dtype=float).reshape(-1)[model.fixed]
    return model.K_ff, model.rhs(q, x_fixed)


def plate_model(mesh, materials, phase_map, h, eps, linear_solver="direct", cg_tol=1e-10) -> QuadraticModel:
    B = scaled_strain_operator(mesh, h)
    fixed = np.repeat(mesh.lateral_nodes(), 3)
    nodes = nested_dissection_nodes(mesh.node_shape)
    ordering = (3 * nodes[:, None] + np.arange(3)).ravel()
    return QuadraticModel(
        B, mesh.cell_volume, plate_phase(mesh, phase_map, eps), materials, fixed,
        linear_solver=linear_solver, cg_tol=cg_tol, ordering=ordering,
    )
