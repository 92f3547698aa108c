"""Small algebra of symmetric tensors, scaled strain operators and plate moments.

Symmetric 3x3 tensors are stored as arrays whose last axis holds the six
independent entries in the order ``(11, 22, 33, 12, 13, 23)``.  Entries are
plain components (no Mandel or Voigt factors); the Frobenius product therefore
carries an explicit factor 2 on the off-diagonal slots.  Symmetric 2x2 tensors
use ``(11, 22, 12)`` with the same convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, ShapeError, UnsupportedGridError

SYM3_LABELS = ("11", "22", "33", "12", "13", "23")
SYM2_LABELS = ("11", "22", "12")

FROBENIUS_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
FROBENIUS_WEIGHTS_2D = np.array([1.0, 1.0, 2.0])

# (row, col) of each stored slot
_SLOTS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

IDENTITY = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])


def from_matrix(m) -> np.ndarray:
    """Pack (..., 3, 3) matrices into (..., 6), symmetrizing on the way."""
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (3, 3):
        raise ShapeError(f"expected (..., 3, 3), got {m.shape}")
    out = np.empty(m.shape[:-2] + (6,))
    for s, (i, j) in enumerate(_SLOTS):
        out[..., s] = 0.5 * (m[..., i, j] + m[..., j, i])
    return out


def to_matrix(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    out = np.empty(xi.shape[:-1] + (3, 3))
    for s, (i, j) in enumerate(_SLOTS):
        out[..., i, j] = xi[..., s]
        out[..., j, i] = xi[..., s]
    return out


def inner(a, b) -> np.ndarray:
    """Frobenius product ``a : b`` of stored symmetric tensors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = FROBENIUS_WEIGHTS if a.shape[-1] == 6 else FROBENIUS_WEIGHTS_2D
    return np.sum(a * b * w, axis=-1)


def norm(a) -> np.ndarray:
    return np.sqrt(np.maximum(inner(a, a), 0.0))


def trace(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return xi[..., 0] + xi[..., 1] + xi[..., 2]


def dev(xi) -> np.ndarray:
    """Deviatoric part; the stored trace of the result is zero."""
    xi = np.array(xi, dtype=float)
    m = trace(xi) / 3.0
    xi[..., 0] -= m
    xi[..., 1] -= m
    # closing the third diagonal slot from the other two makes the trace exact
    xi[..., 2] = -(xi[..., 0] + xi[..., 1])
    return xi


def sym_odot(a, b) -> np.ndarray:
    """Symmetrized tensor product ``(a_i b_j + a_j b_i) / 2``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != 3 or b.shape[-1] != 3:
        raise ShapeError("sym_odot expects vectors with 3 components")
    shape = np.broadcast_shapes(a.shape, b.shape)[:-1] + (6,)
    out = np.empty(shape)
    for s, (i, j) in enumerate(_SLOTS):
        out[..., s] = 0.5 * (a[..., i] * b[..., j] + a[..., j] * b[..., i])
    return out


def lambda_h_factors(h: float) -> np.ndarray:
    if not h > 0:
        raise InvalidParameterError(f"thickness parameter must be positive, got {h}")
    return np.array([1.0, 1.0, 1.0 / h**2, 1.0, 1.0 / h, 1.0 / h])


def lambda_h(xi, h: float) -> np.ndarray:
    """Thin-domain strain scaling: 1/h on the i3 shear slots, 1/h**2 on 33."""
    return np.asarray(xi, dtype=float) * lambda_h_factors(h)


def lambda_h_inv(xi, h: float) -> np.ndarray:
    return np.asarray(xi, dtype=float) / lambda_h_factors(h)


def embed_sym2(a) -> np.ndarray:
    """Place a (..., 3) symmetric 2x2 tensor in the in-plane block of a Sym3."""
    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape[:-1] + (6,))
    out[..., 0] = a[..., 0]
    out[..., 1] = a[..., 1]
    out[..., 3] = a[..., 2]
    return out


def in_plane(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return xi[..., [0, 1, 3]]


# --------------------------------------------------------------------------
# Kirchhoff-Love fields


def kl_embed(ubar, u3, mesh) -> np.ndarray:
    """Nodal 3D displacement ``(ubar_a - x3 d_a u3, u3)`` on a plate mesh.

    ``ubar`` has shape ``(N1+1, N2+1, 2)`` and ``u3`` shape ``(N1+1, N2+1)``.
    Slopes of ``u3`` are second-order finite differences (central inside,
    one-sided at the edges), exact for quadratic deflections.
    """
    ubar = np.asarray(ubar, dtype=float)
    u3 = np.asarray(u3, dtype=float)
    n1, n2, n3 = mesh.node_shape
    if ubar.shape != (n1, n2, 2) or u3.shape != (n1, n2):
        raise ShapeError(
            f"KL components must live on the ({n1}, {n2}) in-plane node grid, "
            f"got {ubar.shape} and {u3.shape}"
        )
    d1, d2 = mesh.spacing[:2]
    slope = np.stack(_grid_gradient(u3, d1, d2), axis=-1)
    x3 = mesh.x3_nodes
    out = np.empty((n1, n2, n3, 3))
    out[..., 0] = ubar[:, :, None, 0] - x3[None, None, :] * slope[:, :, None, 0]
    out[..., 1] = ubar[:, :, None, 1] - x3[None, None, :] * slope[:, :, None, 1]
    out[..., 2] = u3[:, :, None]
    return out


def _grid_gradient(f, d1, d2):
    g = []
    for axis, d in ((0, d1), (1, d2)):
        if f.shape[axis] >= 3:
            g.append(np.gradient(f, d, axis=axis, edge_order=2))
        elif f.shape[axis] == 2:
            g.append(np.gradient(f, d, axis=axis, edge_order=1))
        else:
            g.append(np.zeros_like(f))
    return g


# --------------------------------------------------------------------------
# Moments through the thickness


def layer_midpoints(n_layers: int) -> np.ndarray:
    return -0.5 + (np.arange(n_layers) + 0.5) / n_layers


def first_moment_normalizer(n_layers: int) -> float:
    """Discrete counterpart of the integral of x3**2 over the thickness."""
    x3 = layer_midpoints(n_layers)
    return float(np.sum(x3**2) / n_layers)


@dataclass(frozen=True)
class MomentTriple:
    """Membrane, bending and remainder parts of a layered Sym2 field."""

    zeroth: np.ndarray
    first: np.ndarray
    perp: np.ndarray
    x3: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (
            self.zeroth[..., None, :]
            + self.x3[:, None] * self.first[..., None, :]
            + self.perp
        )


def moments(f, x3=None) -> MomentTriple:
    """Split a cell field ``f`` of shape ``(..., N3, 3)`` into moments.

    Layers sit at the midpoints of a uniform partition of (-1/2, 1/2).  The
    first moment uses the exact discrete normalizer so that ``f = x3 g``
    returns ``g`` at every resolution.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim < 2 or f.shape[-1] != 3:
        raise ShapeError(f"expected a (..., N3, 3) Sym2 field, got {f.shape}")
    n3 = f.shape[-2]
    expected = layer_midpoints(n3)
    if x3 is not None:
        x3 = np.asarray(x3, dtype=float)
        if x3.shape != (n3,) or not np.allclose(x3, expected, atol=1e-12):
            raise UnsupportedGridError("layers must be uniform midpoints on (-1/2, 1/2)")
    if n3 < 2 or n3 % 2:
        raise UnsupportedGridError(f"moments need an even number of layers >= 2, got {n3}")
    dx3 = 1.0 / n3
    zeroth = f.sum(axis=-2) * dx3
    first = np.einsum("...kc,k->...c", f, expected) * dx3 / first_moment_normalizer(n3)
    perp = f - zeroth[..., None, :] - expected[:, None] * first[..., None, :]
    return MomentTriple(zeroth=zeroth, first=first, perp=perp, x3=expected)
