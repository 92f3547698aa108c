"""Rasterized periodicity cell: phases, interfaces and the eps-periodic lookup."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidParameterError

GENERATORS = ("laminate", "checkerboard", "inclusion", "custom")


@dataclass(frozen=True)
class PhaseMap:
    """Phase ids on an ``N x N`` raster of the unit torus.

    ``phase_id[i1, i2]`` is the phase of the cell ``[i1/N, (i1+1)/N) x
    [i2/N, (i2+1)/N)``; the first index runs along y1.
    """

    phase_id: np.ndarray
    generator: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = np.asarray(self.phase_id)
        if ids.ndim != 2 or ids.shape[0] != ids.shape[1]:
            raise ConfigurationError(f"phase raster must be square, got {ids.shape}")
        if ids.shape[0] < 2:
            raise ConfigurationError("phase raster needs at least 2 cells per side")
        if not np.issubdtype(ids.dtype, np.integer):
            raise ConfigurationError("phase ids must be integers")
        present = np.unique(ids)
        if present[0] != 0 or not np.array_equal(present, np.arange(present.size)):
            raise ConfigurationError(f"phase ids must form 0..n-1, got {present.tolist()}")
        ids = ids.astype(np.int64).copy()
        ids.setflags(write=False)
        object.__setattr__(self, "phase_id", ids)

    @property
    def resolution(self) -> int:
        return self.phase_id.shape[0]

    @property
    def n_phases(self) -> int:
        return int(self.phase_id.max()) + 1

    def volume_fractions(self) -> np.ndarray:
        return np.bincount(self.phase_id.ravel(), minlength=self.n_phases) / self.phase_id.size


def build_phase_map(generator: str, resolution: int, **params) -> PhaseMap:
    """Rasterize one of the built-in generators at cell centers.

    laminate(fractions, offset=0.0)
        Slabs normal to y1; phase ``i`` occupies the i-th interval of the
        cumulative fractions, shifted by ``offset``.
    checkerboard
        Quadrants with phases ``(0, 1; 1, 0)``.
    inclusion(center, radius)
        Phase 1 inside the periodic disc, phase 0 outside.
    """
    if resolution < 2:
        raise ConfigurationError(f"resolution must be >= 2, got {resolution}")
    n = resolution
    yc = (np.arange(n) + 0.5) / n
    y1, y2 = np.meshgrid(yc, yc, indexing="ij")
    if generator == "laminate":
        fractions = np.asarray(params.get("fractions", (0.5, 0.5)), dtype=float)
        if fractions.ndim != 1 or fractions.size < 1 or np.any(fractions <= 0):
            raise ConfigurationError(f"invalid laminate fractions {fractions.tolist()}")
        if abs(fractions.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"laminate fractions must sum to 1, got {fractions.sum()}")
        offset = float(params.get("offset", 0.0))
        edges = np.cumsum(fractions)[:-1]
        ids = np.searchsorted(edges, np.mod(y1 - offset, 1.0), side="right")
        params = {"fractions": fractions.tolist(), "offset": offset}
    elif generator == "checkerboard":
        ids = (np.floor(2 * y1) + np.floor(2 * y2)).astype(int) % 2
        params = {}
    elif generator == "inclusion":
        center = np.asarray(params.get("center", (0.5, 0.5)), dtype=float)
        radius = float(params.get("radius", 0.25))
        if not 0 < radius < 0.5:
            raise ConfigurationError(f"inclusion radius must lie in (0, 1/2), got {radius}")
        d1 = np.abs(y1 - center[0])
        d2 = np.abs(y2 - center[1])
        d1 = np.minimum(d1, 1 - d1)
        d2 = np.minimum(d2, 1 - d2)
        ids = (d1**2 + d2**2 < radius**2).astype(int)
        params = {"center": center.tolist(), "radius": radius}
    else:
        raise ConfigurationError(f"unknown generator {generator!r}; expected one of {GENERATORS}")
    return PhaseMap(np.asarray(ids, dtype=np.int64), generator=generator, params=params)


def read_phase_raster(path) -> PhaseMap:
    """Read a plain-text raster: ``N`` on the first line, then N rows of N ids.

    Row ``r`` lists the phases of the cells with y2-index ``r``, column ``c``
    the cells with y1-index ``c``.
    """
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise ConfigurationError(f"{path}: empty raster file")
    try:
        n = int(lines[0][0])
        rows = [[int(v) for v in ln] for ln in lines[1:]]
    except ValueError as exc:
        raise ConfigurationError(f"{path}: non-integer entry ({exc})") from None
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ConfigurationError(f"{path}: expected {n} rows of {n} integers")
    ids = np.asarray(rows, dtype=np.int64).T
    return PhaseMap(ids, generator="custom", params={"path": str(path)})


def phase_at(pm: PhaseMap, y) -> np.ndarray:
    """Phase of the raster cell containing ``frac(y)``; works on (..., 2) arrays."""
    y = np.asarray(y, dtype=float)
    n = pm.resolution
    idx = np.floor(np.mod(y, 1.0) * n).astype(np.int64)
    # mod can round up to exactly 1.0 for tiny negative inputs
    idx = np.clip(idx, 0, n - 1)
    return pm.phase_id[idx[..., 0], idx[..., 1]]


def eps_phase_at(pm: PhaseMap, x, eps: float) -> np.ndarray:
    if not eps > 0:
        raise InvalidParameterError(f"period must be positive, got {eps}")
    return phase_at(pm, np.asarray(x, dtype=float) / eps)


@dataclass(frozen=True)
class Facet:
    """Raster facet between two cells of distinct phase.

    ``normal`` points from phase ``phases[1]`` (j) into phase ``phases[0]`` (i),
    where i is the smaller id.
    """

    cells: tuple[tuple[int, int], tuple[int, int]]
    phases: tuple[int, int]
    normal: np.ndarray
    midpoint: tuple[float, float]


@dataclass(frozen=True)
class InterfaceSet:
    facets: tuple[Facet, ...]

    def __len__(self) -> int:
        return len(self.facets)

    def __iter__(self):
        return iter(self.facets)


def interfaces(pm: PhaseMap) -> InterfaceSet:
    """Enumerate mixed-phase raster adjacencies on the torus, once each."""
    ids = pm.phase_id
    n = pm.resolution
    facets = []
    for axis in (0, 1):
        for i1 in range(n):
            for i2 in range(n):
                a = (i1, i2)
                b = ((i1 + 1) % n, i2) if axis == 0 else (i1, (i2 + 1) % n)
                pa, pb = int(ids[a]), int(ids[b])
                if pa == pb:
                    continue
                e = np.zeros(3)
                # cell b lies on the +axis side of the facet
                e[axis] = 1.0 if pb < pa else -1.0
                if axis == 0:
                    mid = (((i1 + 1) % n) / n, (i2 + 0.5) / n)
                else:
                    mid = ((i1 + 0.5) / n, ((i2 + 1) % n) / n)
                facets.append(Facet((a, b), (min(pa, pb), max(pa, pb)), e, mid))
    return InterfaceSet(tuple(facets))
