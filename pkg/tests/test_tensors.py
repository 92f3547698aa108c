import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from plasthin import tensors as T
from plasthin.discretization import PlateMesh, assemble_Eh
from plasthin.errors import InvalidParameterError, ShapeError, UnsupportedGridError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_matrix_round_trip(rng):
    xi = rng.standard_normal(6)
    m = T.to_matrix(xi)
    assert np.allclose(m, m.T)
    assert np.allclose(T.from_matrix(m), xi)
    assert T.inner(xi, xi) == pytest.approx(np.sum(m * m))


class TestSymOdot:
    def test_examples(self):
        e = np.eye(3)
        assert np.allclose(T.to_matrix(T.sym_odot(e[0], e[1])), [[0, .5, 0], [.5, 0, 0], [0, 0, 0]])
        assert np.allclose(T.to_matrix(T.sym_odot(e[0], e[0])), np.diag([1, 0, 0]))
        assert np.allclose(T.to_matrix(T.sym_odot([1, 1, 0], [1, -1, 0])), np.diag([1, -1, 0]))

    def test_trace_and_norm_bounds(self, rng):
        a = rng.standard_normal((1000, 3))
        b = rng.standard_normal((1000, 3))
        s = T.sym_odot(a, b)
        assert np.allclose(T.trace(s), np.sum(a * b, axis=1))
        prod = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        n = T.norm(s)
        assert np.all(n <= prod * (1 + 1e-12))
        assert np.all(n >= prod / np.sqrt(2) * (1 - 1e-12))

    def test_orthogonal_pair_hits_lower_bound(self):
        assert T.norm(T.sym_odot([0, 2, 0], [1, 0, 0])) == pytest.approx(2 / np.sqrt(2))


class TestDev:
    def test_examples(self):
        assert np.allclose(T.dev(T.from_matrix(np.eye(3))), 0)
        assert np.allclose(T.to_matrix(T.dev(T.from_matrix(np.diag([1.0, 0, 0])))), np.diag([2 / 3, -1 / 3, -1 / 3]))

    @given(arrays(float, 6, elements=finite))
    def test_traceless(self, xi):
        assert abs(T.trace(T.dev(xi))) <= 1e-12 * (1 + np.abs(xi).max())


class TestLambdaH:
    def test_identity_at_one(self, rng):
        xi = rng.standard_normal(6)
        assert np.allclose(T.lambda_h(xi, 1.0), xi)

    def test_examples(self):
        xi = T.from_matrix(np.array([[0, 0, 1.0], [0, 0, 0], [1.0, 0, 0]]))
        assert T.to_matrix(T.lambda_h(xi, 0.5))[0, 2] == pytest.approx(2.0)
        xi = T.from_matrix(np.diag([0, 0, 1.0]))
        assert T.to_matrix(T.lambda_h(xi, 0.5))[2, 2] == pytest.approx(4.0)

    @given(arrays(float, 6, elements=finite), st.floats(1e-3, 1e3))
    def test_inverse(self, xi, h):
        back = T.lambda_h(T.lambda_h(xi, h), 1 / h)
        assert np.allclose(back, xi, rtol=1e-14, atol=1e-14 * (1 + np.abs(xi).max()))
        assert np.allclose(T.lambda_h_inv(T.lambda_h(xi, h), h), xi, rtol=1e-14, atol=1e-300)

    @pytest.mark.parametrize("h", [0.0, -1.0])
    def test_rejects_nonpositive(self, h):
        with pytest.raises(InvalidParameterError):
            T.lambda_h(np.zeros(6), h)


class TestKLEmbed:
    mesh = PlateMesh((1.0, 1.0), (6, 6, 4))

    def grid(self):
        n1, n2, _ = self.mesh.node_shape
        x = self.mesh.node_coords()[:, :, 0, :2]
        return x, np.zeros((n1, n2, 2)), np.zeros((n1, n2))

    def test_zero(self):
        _, ub, u3 = self.grid()
        assert np.all(T.kl_embed(ub, u3, self.mesh) == 0)

    def test_membrane_stretch(self):
        x, ub, u3 = self.grid()
        ub[..., 0] = x[..., 0]
        u = T.kl_embed(ub, u3, self.mesh)
        E = assemble_Eh(self.mesh, u, 1.0)
        assert np.allclose(E[..., 0], 1.0)
        assert np.allclose(E[..., 1:], 0.0, atol=1e-13)

    def test_rotation_is_strain_free(self):
        x, ub, u3 = self.grid()
        u3[:] = x[..., 0]
        u = T.kl_embed(ub, u3, self.mesh)
        assert np.allclose(u[..., 0], -self.mesh.x3_nodes[None, None, :])
        assert np.allclose(assemble_Eh(self.mesh, u, 1.0), 0.0, atol=1e-13)

    def test_i3_rows_vanish(self, rng):
        x, ub, u3 = self.grid()
        ub[:] = rng.standard_normal(ub.shape)
        u3[:] = x[..., 0] ** 2 - 0.5 * x[..., 0] * x[..., 1] + 2 * x[..., 1] ** 2
        E = assemble_Eh(self.mesh, T.kl_embed(ub, u3, self.mesh), 1.0)
        assert np.abs(E[..., [2, 4, 5]]).max() < 1e-12

    def test_bending_curvature(self):
        x, ub, u3 = self.grid()
        u3[:] = 0.5 * x[..., 0] ** 2
        E = assemble_Eh(self.mesh, T.kl_embed(ub, u3, self.mesh), 1.0)
        x3 = self.mesh.cell_centers()[..., 2].reshape(-1)
        assert np.allclose(E[:, 0], -x3, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.kl_embed(np.zeros((3, 3, 2)), np.zeros((3, 3)), self.mesh)


class TestMoments:
    def test_constant_field(self, rng):
        g = rng.standard_normal((5, 5, 3))
        f = np.repeat(g[:, :, None, :], 4, axis=2)
        m = T.moments(f)
        assert np.allclose(m.zeroth, g)
        assert np.allclose(m.first, 0, atol=1e-14)
        assert np.allclose(m.perp, 0, atol=1e-14)

    @pytest.mark.parametrize("n3", [2, 4, 8])
    def test_linear_field_exact(self, rng, n3):
        g = rng.standard_normal((3, 3))
        f = T.layer_midpoints(n3)[None, :, None] * g[:, None, :]
        assert np.allclose(T.moments(f).first, g, rtol=1e-13)

    def test_normalizer_converges_to_twelfth(self):
        assert T.first_moment_normalizer(2) == pytest.approx(1 / 16)
        assert abs(T.first_moment_normalizer(64) - 1 / 12) < 1e-4

    @pytest.mark.parametrize("n3", [2, 4, 8])
    def test_reconstruction_and_orthogonality(self, rng, n3):
        f = rng.standard_normal((4, 5, n3, 3))
        m = T.moments(f)
        assert np.abs(m.reconstruct() - f).max() <= 1e-12
        x3 = m.x3[:, None]
        parts = [np.broadcast_to(m.zeroth[..., None, :], f.shape), x3 * m.first[..., None, :], m.perp]
        scale = np.sum(f * f)
        for i in range(3):
            for j in range(i + 1, 3):
                assert abs(np.sum(parts[i] * parts[j])) <= 1e-12 * scale

    @pytest.mark.parametrize("n3", [1, 3])
    def test_odd_layers_rejected(self, n3):
        with pytest.raises(UnsupportedGridError):
            T.moments(np.zeros((2, 2, n3, 3)))

    def test_irregular_layers_rejected(self):
        with pytest.raises(UnsupportedGridError):
            T.moments(np.zeros((2, 2, 2, 3)), x3=[-0.3, 0.2])


@settings(max_examples=50)
@given(arrays(float, 6, elements=finite), arrays(float, 6, elements=finite))
def test_inner_is_frobenius(a, b):
    assert T.inner(a, b) == pytest.approx(np.sum(T.to_matrix(a) * T.to_matrix(b)), rel=1e-12, abs=1e-9)
