import numpy as np
import pytest

from translearn.kernels import Kernel, kernel_from_config, kernel_matrix, kernel_value


def test_gaussian_zero_distance_is_output_scale():
    k = Kernel(kind="gaussian", lengthscale=1.0)
    assert kernel_value(k, [0.3, -1.2], [0.3, -1.2]) == 1.0


def test_laplace_hand_computed_value():
    # l1 distance |3| + |4| = 7, lengthscale 10 -> exp(-0.7)
    k = Kernel(kind="laplace", lengthscale=10.0)
    np.testing.assert_allclose(
        kernel_value(k, [0.0, 0.0], [3.0, 4.0]), np.exp(-0.7), rtol=1e-14
    )


def test_embedding_orthogonal_vectors():
    k = Kernel(kind="embedding")
    assert kernel_value(k, [1.0, 0.0], [0.0, 1.0]) == 0.0


def test_linear_kernel_on_standard_basis_is_identity():
    k = Kernel(kind="linear")
    K = kernel_matrix(k, np.eye(2))
    np.testing.assert_array_equal(K, np.eye(2))


def test_gaussian_collinear_points():
    k = Kernel(kind="gaussian", lengthscale=1.0)
    X = np.array([[0.0], [1.0], [2.0]])
    K = kernel_matrix(k, X)
    np.testing.assert_allclose(K[0, 1], np.exp(-0.5), rtol=1e-14)
    np.testing.assert_allclose(K[0, 2], np.exp(-2.0), rtol=1e-14)


def test_symmetry_of_eval():
    rng = np.random.default_rng(0)
    for kind in ("gaussian", "laplace", "linear"):
        k = Kernel(kind=kind, lengthscale=0.7)
        x, y = rng.normal(size=2 * 4).reshape(2, 4)
        assert kernel_value(k, x, y) == kernel_value(k, y, x)


ALL_KERNELS = [
    Kernel(kind="gaussian", lengthscale=0.8),
    Kernel(kind="laplace", lengthscale=2.0),
    Kernel(kind="matern", nu=0.5, lengthscale=1.3),
    Kernel(kind="matern", nu=1.5, lengthscale=1.3),
    Kernel(kind="matern", nu=2.5, lengthscale=1.3),
    Kernel(kind="linear"),
    Kernel(kind="embedding"),
]


@pytest.mark.parametrize("kernel", ALL_KERNELS, ids=lambda k: f"{k.kind}-{k.nu}")
def test_self_kernel_matrix_symmetric_psd(kernel):
    rng = np.random.default_rng(42)
    for m in (5, 20, 50):
        X = rng.normal(size=(m, 3))
        K = kernel_matrix(kernel, X)
        np.testing.assert_array_equal(K, K.T)
        eigs = np.linalg.eigvalsh(K)
        assert eigs.min() >= -1e-10


def test_matern_half_matches_exponential_euclidean():
    rng = np.random.default_rng(1)
    h = 1.7
    matern = Kernel(kind="matern", nu=0.5, lengthscale=h)
    for _ in range(50):
        x, y = rng.normal(size=(2, 3))
        expected = np.exp(-np.linalg.norm(x - y) / h)
        assert abs(kernel_value(matern, x, y) - expected) < 1e-12


def test_embedding_correlation_equals_cosine_similarity():
    rng = np.random.default_rng(2)
    E = rng.normal(size=(10, 4))
    k = Kernel(kind="embedding")
    K = kernel_matrix(k, E)
    for i in range(10):
        for j in range(10):
            corr = K[i, j] / np.sqrt(K[i, i] * K[j, j])
            cos = E[i] @ E[j] / (np.linalg.norm(E[i]) * np.linalg.norm(E[j]))
            np.testing.assert_allclose(corr, cos, atol=1e-12)


def test_embedding_weight_matrix():
    W = np.diag([2.0, 0.5])
    k = Kernel(kind="embedding", sigma_weight=W)
    assert kernel_value(k, [1.0, 1.0], [1.0, 1.0]) == 2.5


def test_dimension_mismatch_errors():
    k = Kernel(kind="gaussian")
    with pytest.raises(ValueError, match="dimension mismatch"):
        kernel_matrix(k, np.zeros((2, 2)), np.zeros((2, 3)))


def test_non_finite_inputs_error():
    k = Kernel(kind="gaussian")
    with pytest.raises(ValueError, match="non-finite"):
        kernel_value(k, [np.nan, 0.0], [0.0, 0.0])


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        Kernel(kind="gaussian", lengthscale=0.0)
    with pytest.raises(ValueError):
        Kernel(kind="matern", nu=2.0)
    with pytest.raises(ValueError):
        Kernel(kind="spline")


def test_kernel_from_config_tagged_record():
    k = kernel_from_config({"type": "gaussian", "lengthscale": 1.0})
    assert k.kind == "gaussian" and k.lengthscale == 1.0
    with pytest.raises(ValueError, match="unknown kernel config keys"):
        kernel_from_config({"type": "gaussian", "bandwidth": 1.0})
    with pytest.raises(ValueError, match="'type'"):
        kernel_from_config({"lengthscale": 1.0})
