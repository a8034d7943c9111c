import numpy as np
import pytest
from pydantic import ValidationError

from direal.diversity import (
    DiversityConfig,
    GramMatrix,
    apply_diversity,
    diversity_grad_exact,
    diversity_grad_paper,
    diversity_loss,
    gram,
    layer_diversity,
    mask,
    selected_layers,
)
from direal.errors import ConfigurationError
from direal.gradcheck import check_diversity, check_paper_factor, numeric_gradient, relative_error
from direal.kernel_ops import KernelMatrix, normalize_columns, unroll
from direal.nn import ActivationSpec, ConvSpec, DenseSpec, ReshapeSpec, init

SQRT_HALF = 1.0 / np.sqrt(2.0)


def km(values) -> KernelMatrix:
    return KernelMatrix.from_columns(np.asarray(values, dtype=float))


def cfg(**kwargs) -> DiversityConfig:
    return DiversityConfig(**kwargs)


@pytest.mark.parametrize(
    "columns, expected",
    [
        (np.eye(3), np.eye(3)),
        ([[1.0, 1.0], [0.0, 0.0]], np.ones((2, 2))),
        ([[1.0, SQRT_HALF], [0.0, SQRT_HALF]], [[1.0, SQRT_HALF], [SQRT_HALF, 1.0]]),
    ],
)
def test_gram_examples(columns, expected):
    np.testing.assert_allclose(gram(km(columns), "cosine").values, expected, atol=1e-12)


def test_gram_is_symmetric_and_bounded():
    omega = gram(km(np.random.default_rng(0).standard_normal((7, 5))), "cosine").values
    np.testing.assert_array_equal(omega, omega.T)
    assert np.all(np.abs(omega) <= 1 + 1e-9)
    np.testing.assert_allclose(np.diag(omega), 1.0, atol=1e-12)


def test_gram_raw_uses_unnormalized_columns():
    np.testing.assert_allclose(gram(km([[2.0, 0.0], [0.0, 3.0]]), "raw").values, [[4, 0], [0, 9]])


@pytest.mark.parametrize(
    "off, tau, expected",
    [(SQRT_HALF, 0.5, 1.0), (0.3, 0.5, 0.0), (0.3, 0.0, 1.0), (1.0 + 1e-15, 0.5, 1.0)],
)
def test_mask_examples(off, tau, expected):
    m = mask(GramMatrix(np.array([[1.0, off], [off, 1.0]])), tau).values
    np.testing.assert_array_equal(m, [[0.0, expected], [expected, 0.0]])


def test_mask_tau_zero_is_all_pairs():
    omega = gram(km(np.random.default_rng(1).standard_normal((4, 4))), "cosine")
    np.testing.assert_array_equal(mask(omega, 0.0).values, 1.0 - np.eye(4))


@pytest.mark.parametrize(
    "columns, expected",
    [
        (np.eye(3), 0.0),
        ([[1.0, 1.0], [0.0, 0.0]], 1.0),
        ([[1.0, SQRT_HALF], [0.0, SQRT_HALF]], 0.5),
    ],
)
def test_diversity_loss_examples(columns, expected):
    assert diversity_loss(km(columns), cfg(tau=0.5)) == pytest.approx(expected, abs=1e-12)


def test_loss_is_zero_iff_masked_pairs_vanish():
    rng = np.random.default_rng(2)
    for _ in range(50):
        k = km(rng.standard_normal((6, 4)))
        c = cfg(tau=0.4)
        off = gram(k, "cosine").values[~np.eye(4, dtype=bool)]
        assert (diversity_loss(k, c) == 0.0) == bool(np.all(np.abs(off) < 0.4))


def test_cosine_loss_is_scale_invariant():
    rng = np.random.default_rng(3)
    values = rng.standard_normal((5, 4))
    scaled = values * np.array([1.0, 7.5, 1e-3, 42.0])
    c = cfg(tau=0.1)
    assert diversity_loss(km(scaled), c) == pytest.approx(diversity_loss(km(values), c), abs=1e-9)


def test_simplified_gradient_examples():
    np.testing.assert_array_equal(diversity_grad_paper(km(np.eye(3)), cfg()), 0.0)
    dup = km([[1.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(diversity_grad_paper(dup, cfg(tau=0.5)), [[1.0, 1.0], [0.0, 0.0]])


@pytest.mark.parametrize("variant", ["raw", "cosine"])
def test_exact_gradient_zero_for_orthogonal_columns(variant):
    np.testing.assert_array_equal(diversity_grad_exact(km(np.eye(4)[:, :3]), cfg(variant=variant)), 0.0)


@pytest.mark.parametrize("variant", ["raw", "cosine"])
def test_exact_gradient_matches_finite_differences(variant):
    k = km(np.random.default_rng(4).standard_normal((5, 3)))
    c = cfg(tau=0.3, variant=variant)
    frozen = mask(gram(k, variant), c.tau)
    theta = k.values.copy()

    def loss():
        return diversity_loss(km(theta), c, frozen_mask=frozen)

    numeric = numeric_gradient(loss, theta)
    assert relative_error(diversity_grad_exact(k, c, frozen_mask=frozen), numeric) < 1e-5


def test_cosine_gradient_is_tangent_to_columns():
    rng = np.random.default_rng(5)
    for _ in range(20):
        k = km(rng.standard_normal((6, 4)) * rng.uniform(0.1, 10, size=4))
        g = diversity_grad_exact(k, cfg(tau=0.0))
        np.testing.assert_allclose(np.sum(g * k.values, axis=0), 0.0, atol=1e-9)


def test_cosine_gradient_zero_for_zero_column():
    values = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    g = diversity_grad_exact(km(values), cfg(tau=0.0))
    np.testing.assert_array_equal(g[:, 1], 0.0)
    assert np.all(np.isfinite(g))


def test_gradient_suites_pass():
    assert check_diversity(n_cases=100).passed
    result = check_paper_factor(n_cases=50)
    assert result.passed, result.error


def test_pure_diversity_descent_orthogonalizes():
    for seed in range(10):
        theta = np.random.default_rng(seed).standard_normal((16, 8))
        theta /= np.linalg.norm(theta, axis=0)
        c = cfg(tau=0.0)
        assert np.max(np.abs(gram(km(theta), "cosine").values - np.eye(8))) > 0.3

        previous = diversity_loss(km(theta), c)
        for _ in range(2000):
            theta = theta - 0.01 * diversity_grad_exact(km(theta), c)
            theta /= np.linalg.norm(theta, axis=0)
            current = diversity_loss(km(theta), c)
            assert current <= previous + 1e-9
            previous = current
        off = gram(km(theta), "cosine").values - np.eye(8)
        assert np.max(np.abs(off)) < 0.1, f"seed {seed}"


@pytest.mark.parametrize(
    "kwargs",
    [{"tau": 1.5}, {"tau": -0.1}, {"lambda_d": -1.0}, {"lambda_g": float("inf")}, {"variant": "l2"}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        DiversityConfig(**kwargs)


def test_config_validates_on_assignment():
    c = DiversityConfig()
    with pytest.raises(ValidationError):
        c.tau = 2.0


# ParamStore-level behaviour


def small_store(seed: int = 0):
    specs = [
        DenseSpec(3, 6),
        ActivationSpec("relu"),
        DenseSpec(6, 4),
        ActivationSpec("relu"),
        DenseSpec(4, 1),
    ]
    store = init(specs, seed)
    for layer in store.weight_layers():
        layer.params["weight"][...] = np.random.default_rng(seed).standard_normal(layer.weight.shape)
    return store


def test_default_selection_skips_output_layer():
    store = small_store()
    layers = selected_layers(store, DiversityConfig())
    assert layers == store.weight_layers()[:2]


def test_selector_out_of_range_is_configuration_error():
    with pytest.raises(ConfigurationError, match="layer_selector"):
        selected_layers(small_store(), DiversityConfig(layer_selector=(0, 3)))


def test_apply_diversity_zero_penalty_leaves_gradients():
    store = small_store()
    c = DiversityConfig(tau=0.0)
    total = apply_diversity(store, c, penalty=0.0)
    assert total > 0
    for _, _, grad in store.named_parameters():
        np.testing.assert_array_equal(grad, 0.0)


def test_apply_diversity_totals_and_accumulates():
    store = small_store(1)
    c = DiversityConfig(tau=0.2)
    per_layer = layer_diversity(store, c)
    assert len(per_layer) == 2
    assert apply_diversity(store, c, penalty=2.0) == pytest.approx(sum(per_layer))

    first = store.weight_layers()[0]
    k = unroll(first.weight, first.shape)
    np.testing.assert_allclose(first.weight_grad, 2.0 * diversity_grad_exact(k, c))


def test_apply_diversity_single_layer_equals_layer_loss():
    store = small_store(2)
    c = DiversityConfig(tau=0.0, layer_selector=(1,))
    layer = store.weight_layers()[1]
    assert apply_diversity(store, c, 1.0) == pytest.approx(
        diversity_loss(unroll(layer.weight, layer.shape), c)
    )


def test_conv_layers_are_regularized_per_filter():
    specs = [
        ConvSpec(1, 4, kernel=3, stride=1, padding=1),
        ActivationSpec("leaky_relu"),
        ReshapeSpec((4 * 5 * 5,)),
        DenseSpec(100, 1),
    ]
    store = init(specs, 0, input_shape=(1, 5, 5))
    conv = store.weight_layers()[0]
    c = DiversityConfig(tau=0.0, layer_selector=(0,))
    apply_diversity(store, c, 1.0)

    k = unroll(conv.weight, conv.shape)
    assert k.values.shape == (9, 4)
    unit = normalize_columns(k).values
    expected = 0.5 * np.sum((unit.T @ unit) ** 2 * (1 - np.eye(4)))
    assert layer_diversity(store, c)[0] == pytest.approx(expected)
