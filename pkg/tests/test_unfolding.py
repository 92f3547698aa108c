import csv

import numpy as np
import pytest

from plasthin.errors import ConfigurationError, InvalidParameterError, ShapeError
from plasthin.unfolding import from_two_scale, poincare_korn_ratios, two_scale_gap, unfold

CELLS_PER_PERIOD = 8


def grid(extent, eps, n3=2):
    """Cell centres of a mesh with ``CELLS_PER_PERIOD`` columns per period."""
    n1 = int(round(extent[0] * CELLS_PER_PERIOD / eps))
    n2 = int(round(extent[1] * CELLS_PER_PERIOD / eps))
    x1 = (np.arange(n1) + 0.5) * extent[0] / n1
    x2 = (np.arange(n2) + 0.5) * extent[1] / n2
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    return np.repeat(X1[..., None], n3, axis=2), np.repeat(X2[..., None], n3, axis=2)


def indicator(y1):
    return (np.mod(y1, 1.0) < 0.5).astype(float)


class TestUnfold:
    def test_constant(self):
        X1, _ = grid((1.0, 1.0), 0.25)
        u = unfold(np.full(X1.shape, 2.5), (1.0, 1.0), 0.25, 4)
        assert u.grid_shape == (4, 4, 4, 4, 2)
        assert np.all(u.values == 2.5)
        assert u.excluded_mass == 0 and u.excluded_volume == 0

    def test_tensor_constant(self):
        X1, _ = grid((1.0, 1.0), 0.5)
        c = np.arange(6.0)
        u = unfold(np.broadcast_to(c, X1.shape + (6,)), (1.0, 1.0), 0.5, 8)
        assert u.is_tensor
        assert np.all(u.values == c)

    @pytest.mark.parametrize("n_y", [2, 4, 8, 16])
    def test_phase_indicator(self, n_y):
        eps = 0.25
        X1, _ = grid((1.0, 1.0), eps)
        u = unfold(indicator(X1 / eps), (1.0, 1.0), eps, n_y)
        yc = (np.arange(n_y) + 0.5) / n_y
        exact = np.broadcast_to(indicator(yc)[None, None, :, None, None], u.values.shape)
        assert np.array_equal(u.values, exact)
        assert two_scale_gap(u, from_two_scale(exact, eps)) == 0

    def test_oscillating_product_converges_linearly(self):
        gaps = []
        for eps in (1 / 4, 1 / 8, 1 / 16):
            X1, X2 = grid((1.0, 1.0), eps, n3=1)
            phi = lambda a, b: np.sin(np.pi * a) + a * b
            u = unfold(phi(X1, X2) * indicator(X1 / eps), (1.0, 1.0), eps, CELLS_PER_PERIOD)
            m = u.grid_shape[0]
            c = (np.arange(m) + 0.5) * eps
            C1, C2 = np.meshgrid(c, c, indexing="ij")
            yc = (np.arange(CELLS_PER_PERIOD) + 0.5) / CELLS_PER_PERIOD
            ref = phi(C1, C2)[:, :, None, None, None] * indicator(yc)[None, None, :, None, None]
            gaps.append(two_scale_gap(u, from_two_scale(np.broadcast_to(ref, u.values.shape), eps)))
        ratios = np.array(gaps[1:]) / np.array(gaps[:-1])
        assert np.all(np.abs(ratios - 0.5) <= 0.3 * 0.5), ratios

    @pytest.mark.parametrize("n_y", [2, 8, 32])
    def test_mass_preserved(self, rng, n_y):
        extent = (1.125, 1.0)
        X1, _ = grid(extent, 0.25, n3=3)
        f = rng.normal(size=X1.shape + (6,))
        u = unfold(f, extent, 0.25, n_y)
        cov = f[:32, :32]
        vol = (1.125 / 36) * (1.0 / 32) / 3
        assert np.allclose(u.integral(), cov.sum(axis=(0, 1, 2)) * vol, rtol=0, atol=1e-12)
        assert u.excluded_volume == pytest.approx(0.125)

    def test_excluded_mass_bounded(self, rng):
        extent, eps = (1.125, 1.0), 0.25
        X1, _ = grid(extent, eps)
        f = rng.uniform(-3, 3, size=X1.shape)
        u = unfold(f, extent, eps, 4)
        bound = 2 * sum(extent) * eps * np.abs(f).max()
        assert 0 < u.excluded_mass <= bound
        assert u.excluded_mass == pytest.approx(np.abs(f[32:]).sum() * (1.125 / 36) * (1 / 32) / 2)

    def test_incompatible_resolution(self):
        with pytest.raises(ConfigurationError):
            unfold(np.zeros((10, 10, 1)), (1.0, 1.0), 0.25, 4)
        with pytest.raises(ConfigurationError):
            unfold(np.zeros((8, 8, 1)), (1.0, 1.0), 0.25, 3)
        with pytest.raises(ConfigurationError):
            unfold(np.zeros((2, 2, 1)), (1.0, 1.0), 2.0, 1)

    def test_invalid_arguments(self):
        with pytest.raises(InvalidParameterError):
            unfold(np.zeros((8, 8, 1)), (1.0, 1.0), 0.0, 4)
        with pytest.raises(InvalidParameterError):
            unfold(np.zeros((8, 8, 1)), (1.0, 1.0), 0.25, 0)
        with pytest.raises(ShapeError):
            unfold(np.zeros((8, 8)), (1.0, 1.0), 0.25, 4)

    def test_csv(self, tmp_path):
        X1, _ = grid((1.0, 1.0), 0.5, n3=1)
        u = unfold(np.broadcast_to(np.arange(6.0), X1.shape + (6,)), (1.0, 1.0), 0.5, 2)
        path = tmp_path / "u.csv"
        u.to_csv(path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 * 2 * 2 * 2 * 1 * 6
        assert {r["component"] for r in rows} == {"11", "22", "33", "12", "13", "23"}
        assert float(rows[1]["value"]) == 1.0


class TestGap:
    def test_identical(self, rng):
        a = from_two_scale(rng.normal(size=(2, 2, 4, 4, 2, 6)), 0.5)
        assert two_scale_gap(a, a) == 0

    def test_constant_shift(self, rng):
        v = rng.normal(size=(3, 2, 4, 4, 2))
        a, b = from_two_scale(v, 0.25), from_two_scale(v + 0.7, 0.25)
        measure = 3 * 2 * 0.25**2
        assert two_scale_gap(a, b) == pytest.approx(0.7 * measure, rel=1e-12)

    def test_symmetric_and_nonnegative(self, rng):
        a = from_two_scale(rng.normal(size=(2, 2, 2, 2, 2)), 0.5)
        b = from_two_scale(rng.normal(size=(2, 2, 2, 2, 2)), 0.5)
        assert two_scale_gap(a, b) == two_scale_gap(b, a) > 0

    def test_mismatch(self):
        a = from_two_scale(np.zeros((2, 2, 4, 4, 2)), 0.5)
        with pytest.raises(ShapeError):
            two_scale_gap(a, from_two_scale(np.zeros((2, 2, 2, 2, 2)), 0.5))
        with pytest.raises(ShapeError):
            two_scale_gap(a, from_two_scale(np.zeros((2, 2, 4, 4, 2)), 0.25))
        with pytest.raises(ShapeError):
            from_two_scale(np.zeros((2, 2, 4)), 0.5)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_poincare_korn_constant_is_stable(gamma):
    worst = [poincare_korn_ratios(n, gamma, n_fields=100, seed=11).max() for n in (8, 16, 32)]
    assert all(np.isfinite(worst))
    assert worst[1] <= 1.2 * worst[0]
    assert worst[2] <= 1.2 * worst[1]
