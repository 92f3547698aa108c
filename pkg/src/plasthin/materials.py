"""Per-phase elastic law, yield sets, dissipation and the cell-local plastic update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import tensors as T
from .errors import ConfigurationError, ConstraintViolationError

DEV_TOL = 1e-10
YIELD_TOL = 1e-10


def _dev_basis() -> np.ndarray:
    """Orthonormal basis of deviatoric tensors, rows in stored Sym3 layout."""
    s2, s6 = np.sqrt(2.0), np.sqrt(6.0)
    return np.array(
        [
            [1 / s2, -1 / s2, 0, 0, 0, 0],
            [1 / s6, 1 / s6, -2 / s6, 0, 0, 0],
            [0, 0, 0, 1 / s2, 0, 0],
            [0, 0, 0, 0, 1 / s2, 0],
            [0, 0, 0, 0, 0, 1 / s2],
        ]
    )


DEV_BASIS = _dev_basis()


def dev_coords(xi) -> np.ndarray:
    """Coordinates of dev(xi) in ``DEV_BASIS`` (an isometry onto R^5)."""
    return T.inner(np.asarray(xi, dtype=float)[..., None, :], DEV_BASIS)


def from_dev_coords(c) -> np.ndarray:
    return np.asarray(c, dtype=float) @ DEV_BASIS


@dataclass(frozen=True)
class PhaseMaterial:
    """Linear elastic, perfectly plastic phase with a von Mises yield set.

    ``mu2`` is the deviatoric modulus 2*mu_dev of an isotropic phase; passing
    ``c_dev`` (a 5x5 SPD matrix on ``DEV_BASIS``) makes the deviatoric law
    anisotropic and takes precedence.  ``k`` multiplies ``tr(xi) I``.
    """

    mu2: float = 2.0
    k: float = 1.0
    yield_radius: float = 1.0
    c_dev: np.ndarray | None = None

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigurationError(f"bulk coefficient must be positive, got {self.k}")
        if not self.yield_radius > 0:
            raise ConfigurationError(f"yield radius must be positive, got {self.yield_radius}")
        if self.c_dev is None:
            if not self.mu2 > 0:
                raise ConfigurationError(f"deviatoric modulus must be positive, got {self.mu2}")
        else:
            c = np.asarray(self.c_dev, dtype=float)
            if c.shape != (5, 5) or not np.allclose(c, c.T, atol=1e-12):
                raise ConfigurationError("c_dev must be a symmetric 5x5 matrix")
            if np.linalg.eigvalsh(c).min() <= 0:
                raise ConfigurationError("c_dev must be positive definite")
            c = c.copy()
            c.setflags(write=False)
            object.__setattr__(self, "c_dev", c)

    @property
    def isotropic(self) -> bool:
        return self.c_dev is None

    def dev_moduli(self) -> tuple[float, float]:
        if self.isotropic:
            return self.mu2, self.mu2
        ev = np.linalg.eigvalsh(self.c_dev)
        return float(ev[0]), float(ev[-1])

    def coercivity(self) -> tuple[float, float]:
        """Constants ``(r_c, R_c)`` with ``r_c |xi|^2 <= Q(xi) <= R_c |xi|^2``."""
        lo, hi = self.dev_moduli()
        return min(lo, 3 * self.k) / 2, max(hi, 3 * self.k) / 2

    def matrix(self) -> np.ndarray:
        """6x6 matrix ``M`` with ``C xi = M xi`` in stored components."""
        return elasticity_apply(self, np.eye(6)).T

    def weighted_matrix(self) -> np.ndarray:
        """Symmetric form ``W M`` so that ``C xi : eta = eta^T (W M) xi``."""
        return T.FROBENIUS_WEIGHTS[:, None] * self.matrix()


@dataclass(frozen=True)
class MaterialLibrary:
    phases: tuple[PhaseMaterial, ...]

    def __post_init__(self):
        if not self.phases:
            raise ConfigurationError("material library is empty")
        object.__setattr__(self, "phases", tuple(self.phases))

    def __len__(self) -> int:
        return len(self.phases)

    def __getitem__(self, i) -> PhaseMaterial:
        return self.phases[i]

    def yield_radii(self) -> np.ndarray:
        return np.array([m.yield_radius for m in self.phases])

    def coercivity(self) -> tuple[float, float]:
        pairs = [m.coercivity() for m in self.phases]
        return min(p[0] for p in pairs), max(p[1] for p in pairs)

    def dissipation_bounds(self) -> tuple[float, float]:
        r = self.yield_radii()
        return float(r.min()), float(r.max())

    def stress(self, phase, strain) -> np.ndarray:
        phase = np.asarray(phase)
        out = np.empty_like(np.asarray(strain, dtype=float))
        for i, m in enumerate(self.phases):
            sel = phase == i
            if np.any(sel):
                out[sel] = elasticity_apply(m, strain[sel])
        return out

    def plastic_update(self, phase, strain, q_prev) -> np.ndarray:
        phase = np.asarray(phase)
        out = np.empty_like(np.asarray(q_prev, dtype=float))
        for i, m in enumerate(self.phases):
            sel = phase == i
            if np.any(sel):
                out[sel] = plastic_update(m, strain[sel], q_prev[sel])
        return out


def elasticity_apply(m: PhaseMaterial, xi) -> np.ndarray:
    """``C xi = C_dev xi_dev + k tr(xi) I``."""
    xi = np.asarray(xi, dtype=float)
    if m.isotropic:
        out = m.mu2 * T.dev(xi)
    else:
        out = from_dev_coords(dev_coords(xi) @ m.c_dev.T)
    out = out + (m.k * T.trace(xi))[..., None] * T.IDENTITY
    return out


def quadratic_energy(m: PhaseMaterial, xi) -> np.ndarray:
    return 0.5 * T.inner(elasticity_apply(m, xi), xi)


def dissipation(m: PhaseMaterial, q) -> np.ndarray:
    """Support function of the yield ball evaluated on a deviatoric increment."""
    q = np.asarray(q, dtype=float)
    size = T.norm(q)
    if np.any(np.abs(T.trace(q)) > DEV_TOL * np.maximum(size, 1.0)):
        raise ConstraintViolationError("dissipation is only defined on deviatoric tensors")
    return m.yield_radius * size


def in_yield_set(m: PhaseMaterial, sigma_dev) -> np.ndarray:
    return T.norm(sigma_dev) <= m.yield_radius + YIELD_TOL


def plastic_update(m: PhaseMaterial, strain_total, p_prev) -> np.ndarray:
    """Minimize ``Q(strain_total - p) + H(p - p_prev)`` over deviatoric ``p``.

    Isotropic phases use the closed-form radial shrinkage of the trial
    stress.  Anisotropic phases solve the scalar secular equation of the same
    problem on the deviatoric subspace.
    """
    strain_total = np.asarray(strain_total, dtype=float)
    p_prev = np.asarray(p_prev, dtype=float)
    a = T.dev(strain_total - p_prev)
    r = m.yield_radius
    if m.isotropic:
        s_norm = m.mu2 * T.norm(a)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(s_norm > r, 1.0 - r / s_norm, 0.0)
        return T.dev(p_prev + factor[..., None] * a)
    return T.dev(p_prev + _anisotropic_prox(m, a))


def _anisotropic_prox(m: PhaseMaterial, a) -> np.ndarray:
    c, v = np.linalg.eigh(m.c_dev)
    b = dev_coords(a) @ v
    s_norm = np.linalg.norm(b * c, axis=-1)
    r = m.yield_radius
    active = s_norm > r
    z = np.zeros_like(b)
    if np.any(active):
        bb = b[active]
        sn = s_norm[active]
        lo = np.zeros_like(sn)
        hi = r * c[-1] / (sn - r) + 1e-300
        # g(lam) = lam |z(lam)| - r is increasing; 200 bisections reach round-off
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            zl = bb * c / (c + mid[:, None])
            g = mid * np.linalg.norm(zl, axis=-1) - r
            lo = np.where(g < 0, mid, lo)
            hi = np.where(g < 0, hi, mid)
        lam = 0.5 * (lo + hi)
        z[active] = bb * c / (c + lam[:, None])
    return from_dev_coords(z @ v.T)


def _tangent_basis(nu) -> tuple[np.ndarray, np.ndarray]:
    nu = np.asarray(nu, dtype=float)
    helper = np.eye(3)[np.argmin(np.abs(nu))]
    t1 = np.cross(nu, helper)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(nu, t1)
    return t1, t2


def interface_dissipation(m_i: PhaseMaterial, m_j: PhaseMaterial, a, nu, tol: float = 1e-6) -> float:
    """Cheapest split of a jump ``a`` across an interface with normal ``nu``.

    Minimizes ``H_i(a_i . nu) + H_j(-a_j . nu)`` (symmetrized products) over
    ``a = a_i - a_j`` with both parts tangent to the interface.
    """
    a = np.asarray(a, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > tol:
        raise ConstraintViolationError("interface normal must be a unit vector")
    if abs(a @ nu) > tol * max(1.0, np.linalg.norm(a)):
        raise ConstraintViolationError("jump must be orthogonal to the interface normal")
    t1, t2 = _tangent_basis(nu)
    basis = np.stack([t1, t2])
    a_t = basis @ a

    def cost(x):
        ai = x @ basis
        aj = ai - a
        return float(
            dissipation(m_i, T.sym_odot(ai, nu)) + dissipation(m_j, T.sym_odot(-aj, nu))
        )

    scale = max(np.linalg.norm(a), 1e-300)
    starts = [np.zeros(2), a_t, 0.5 * a_t]
    best = min(cost(s) for s in starts)
    if np.linalg.norm(a) == 0:
        return 0.0
    for s in starts:
        res = optimize.minimize(
            cost,
            s,
            method="Nelder-Mead",
            options={"xatol": tol * scale * 1e-2, "fatol": tol * scale * 1e-2, "maxiter": 4000},
        )
        best = min(best, float(res.fun))
    return best
