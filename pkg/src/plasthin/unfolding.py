"""Discrete periodic unfolding of cell fields and two-scale comparison metrics.

A cell field on the plate grid is rearranged into (macro cell, y-cell, layer)
coordinates: every complete period square ``eps * ([i1, i1+1) x [i2, i2+1))``
inside omega becomes one macro cell whose mesh columns are resampled onto a
uniform ``N_Y x N_Y`` grid of the unit cell.  Resampling is piecewise
constant (replication or block averaging), so integrals are preserved exactly
on the covered region.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensors as T
from .errors import ConfigurationError, InvalidParameterError, ShapeError

ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class UnfoldedField:
    """Values on (macro cell) x Y x I.

    ``values`` has shape ``(M1, M2, N_Y, N_Y, N3)`` plus an optional trailing
    component axis (6 for Sym3 fields).  ``point_volume`` is the x-space
    measure carried by one entry, so ``sum(values) * point_volume`` is the
    integral over the covered region.
    """

    values: np.ndarray
    eps: float
    point_volume: float
    covered_mass: float
    excluded_mass: float
    excluded_volume: float

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.values.shape[:5]

    @property
    def is_tensor(self) -> bool:
        return self.values.ndim == 6

    def integral(self) -> np.ndarray:
        return self.values.sum(axis=(0, 1, 2, 3, 4)) * self.point_volume

    def to_csv(self, path) -> None:
        """Write long-format rows ``i1, i2, layer, y1, y2, component, value``.

        ``y1, y2`` are the centres of the Y-cells.
        """
        m1, m2, ny, _, n3 = self.grid_shape
        labels = T.SYM3_LABELS if self.is_tensor else ("value",)
        vals = self.values if self.is_tensor else self.values[..., None]
        yc = (np.arange(ny) + 0.5) / ny
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i1", "i2", "layer", "y1", "y2", "component", "value"])
            for idx in np.ndindex(m1, m2, ny, ny, n3):
                i1, i2, j1, j2, k = idx
                for c, lab in enumerate(labels):
                    w.writerow([i1, i2, k, f"{yc[j1]:.6g}", f"{yc[j2]:.6g}", lab, repr(float(vals[idx + (c,)]))])


def _resample_axis(a, axis, m, ny):
    """Map ``m`` mesh cells per period onto ``ny`` Y-cells along ``axis``."""
    if ny == m:
        return a
    if ny % m == 0:
        return np.repeat(a, ny // m, axis=axis)
    if m % ny == 0:
        shape = a.shape[:axis] + (ny, m // ny) + a.shape[axis + 1:]
        return a.reshape(shape).mean(axis=axis + 1)
    raise ConfigurationError(f"Y resolution {ny} is incompatible with {m} mesh cells per period")


def unfold(f, extent, eps: float, n_y: int) -> UnfoldedField:
    """Unfold a cell field ``f`` of shape ``(N1, N2, N3[, C])`` on ``[0, L1] x [0, L2]``.

    Each period must cover an integer number of mesh columns.
    """
    if not eps > 0:
        raise InvalidParameterError(f"period must be positive, got {eps}")
    if n_y < 1:
        raise InvalidParameterError(f"Y resolution must be >= 1, got {n_y}")
    f = np.asarray(f, dtype=float)
    if f.ndim not in (3, 4):
        raise ShapeError(f"expected a (N1, N2, N3[, C]) cell field, got {f.shape}")
    n1, n2, n3 = f.shape[:3]
    L1, L2 = (float(v) for v in extent)
    per = []
    for n, L in ((n1, L1), (n2, L2)):
        cells = eps * n / L
        m = int(round(cells))
        if m < 1 or abs(cells - m) > ALIGN_TOL * max(1.0, cells):
            raise ConfigurationError(
                f"period {eps} does not cover an integer number of mesh columns ({cells:.6g})"
            )
        per.append(m)
    m = per[0]
    if per[1] != m:
        raise ConfigurationError("mesh columns per period differ between the two directions")
    c1, c2 = n1 // m, n2 // m
    if c1 == 0 or c2 == 0:
        raise ConfigurationError("omega does not contain a complete period cell")
    cell_vol = (L1 / n1) * (L2 / n2) / n3
    covered = f[: c1 * m, : c2 * m]
    tail = covered.shape[3:]
    blocks = covered.reshape((c1, m, c2, m, n3) + tail).swapaxes(1, 2)
    blocks = _resample_axis(blocks, 2, m, n_y)
    blocks = _resample_axis(blocks, 3, m, n_y)
    point_volume = eps * eps / (n_y * n_y * n3)

    def mass(a):
        mag = T.norm(a) if a.ndim == 4 and a.shape[-1] in (3, 6) else np.abs(a)
        return float(np.sum(mag) * cell_vol)

    mask = np.ones((n1, n2), dtype=bool)
    mask[: c1 * m, : c2 * m] = False
    excluded = f[mask]
    return UnfoldedField(
        values=np.ascontiguousarray(blocks),
        eps=float(eps),
        point_volume=point_volume,
        covered_mass=mass(covered),
        excluded_mass=mass(excluded.reshape((-1, 1, 1) + f.shape[2:])) if excluded.size else 0.0,
        excluded_volume=float(mask.sum() * n3 * cell_vol),
    )


def two_scale_gap(a: UnfoldedField, b: UnfoldedField) -> float:
    """L1 distance ``sum |a - b| * vol`` on a common grid (Frobenius norm for tensors)."""
    if a.values.shape != b.values.shape:
        raise ShapeError(f"grid mismatch: {a.values.shape} vs {b.values.shape}")
    if not np.isclose(a.point_volume, b.point_volume, rtol=1e-12):
        raise ShapeError("unfolded fields carry different point volumes")
    d = a.values - b.values
    mag = T.norm(d) if a.is_tensor else np.abs(d)
    return float(np.sum(mag) * a.point_volume)


def from_two_scale(values, eps: float) -> UnfoldedField:
    """Wrap a field already given on the (macro, Y, I) grid."""
    values = np.asarray(values, dtype=float)
    if values.ndim not in (5, 6):
        raise ShapeError(f"expected (M1, M2, N_Y, N_Y, N3[, C]) values, got {values.shape}")
    m1, m2, ny, _, n3 = values.shape[:5]
    pv = eps * eps / (ny * ny * n3)
    integrand = T.norm(values) if values.ndim == 6 else np.abs(values)
    return UnfoldedField(values, float(eps), pv, float(integrand.sum() * pv), 0.0, 0.0)


# --------------------------------------------------------------------------
# Empirical Poincare-Korn constant


def random_corrector(resolution: int, rng, n_modes: int = 2) -> np.ndarray:
    """Smooth random periodic field on the nodes of ``Y x I``.

    Low Fourier modes in y times Legendre-like polynomials in x3, so the same
    continuum field is sampled consistently at every resolution.  Returns shape
    ``(N, N, N + 1, 3)``.
    """
    n = resolution
    y = np.arange(n) / n
    x3 = -0.5 + np.arange(n + 1) / n
    Y1, Y2, X3 = np.meshgrid(y, y, x3, indexing="ij")
    out = np.zeros((n, n, n + 1, 3))
    ks = [(k1, k2) for k1 in range(-n_modes, n_modes + 1) for k2 in range(-n_modes, n_modes + 1)]
    polys = [np.ones_like(X3), X3, X3**2 - 1 / 12]
    for c in range(3):
        for k1, k2 in ks:
            phase = rng.uniform(0, 2 * np.pi)
            coeff = rng.standard_normal(len(polys))
            prof = sum(a * p for a, p in zip(coeff, polys))
            out[..., c] += np.cos(2 * np.pi * (k1 * Y1 + k2 * Y2) + phase) * prof
    return out


def poincare_korn_ratios(resolution: int, gamma: float, n_fields: int = 100, seed: int = 0) -> np.ndarray:
    """Ratios ``||u - mean u||_1 / |E~_gamma u|_1`` for random smooth fields."""
    from .twoscale import assemble_Etilde_gamma

    rng = np.random.default_rng(seed)
    n = resolution
    ratios = np.empty(n_fields)
    # trapezoidal weights in x3 make the nodal L1 norm consistent across resolutions
    wz = np.full(n + 1, 1.0 / n)
    wz[[0, -1]] *= 0.5
    wnode = np.broadcast_to(wz[None, None, :] / (n * n), (n, n, n + 1))
    for s in range(n_fields):
        u = random_corrector(n, rng)
        mean = np.tensordot(wnode, u, axes=([0, 1, 2], [0, 1, 2])) / wnode.sum()
        dev = np.linalg.norm(u - mean, axis=-1)
        num = float(np.sum(dev * wnode))
        E = assemble_Etilde_gamma(u, gamma)
        den = float(np.mean(T.norm(E)))
        ratios[s] = num / den
    return ratios
