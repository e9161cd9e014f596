import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import EXTENDED, max_relative_error, mlp_fd_gradient
from pulsenet.fixed_point import FxFormat, LayerFormats, fake_quantize
from pulsenet.mlp import (
    SPECS,
    MlpModel,
    MlpSpec,
    TrainConfig,
    TrainingDivergedError,
    forward,
    get_spec,
    init_params,
    loss_and_grad,
    mlp_forward,
    mse,
    pack,
    train,
    train_qat,
    unpack,
)
from pulsenet.optimizer import Dataset, split_dataset


def toy_dataset(n=40, seed=0, targets=None):
    rng = np.random.default_rng(seed)
    betas = np.linspace(-np.pi, np.pi, n + 1)[1:]
    alphas = rng.normal(scale=0.02, size=(n, 20)) if targets is None else targets(betas)
    return split_dataset(Dataset(betas, alphas, np.ones(n)), seed=seed)


def test_zero_weights_give_zero_output():
    spec = SPECS["large"]
    model = MlpModel(spec, np.zeros(spec.n_params), 1.0)
    np.testing.assert_array_equal(model.predict([-1.0, 0.0, 2.0]), 0)


def test_bias_only_output():
    spec = MlpSpec((3,))
    ws, bs = unpack(np.zeros(spec.n_params), spec)
    bs[1][:] = np.arange(20) / 100
    model = MlpModel(spec, pack(ws, bs), 2.0)
    np.testing.assert_allclose(mlp_forward(model, 0.7), 2 * np.arange(20) / 100)


def test_hand_computed_forward():
    spec = MlpSpec((2,), n_outputs=1)
    # 1 -> 2 -> 1 with w1 = [1, -1], b1 = [0, 0.5], w2 = [[2], [3]], b2 = [1]
    theta = pack([np.array([[1.0, -1.0]]), np.array([[2.0], [3.0]])], [np.array([0.0, 0.5]), np.array([1.0])])
    x = np.array([[0.25], [-1.0]])
    # x = 0.25: h = [0.25, 0.25] -> 0.5 + 0.75 + 1 = 2.25; x = -1: h = [0, 1.5] -> 4.5 + 1 = 5.5
    np.testing.assert_allclose(forward(theta, x, spec), [[2.25], [5.5]])


@pytest.mark.parametrize("name,count", [("large", 1054), ("small", 790), ("xlarge", 15188)])
def test_parameter_counts(name, count):
    spec = SPECS[name]
    assert spec.n_params == count
    shapes = [w.shape for w in unpack(init_params(spec, 0), spec)[0]]
    biases = [b.shape for b in unpack(init_params(spec, 0), spec)[1]]
    assert sum(a * b for a, b in shapes) + sum(b for (b,) in biases) == count
    assert shapes[0][0] == 1 and shapes[-1][1] == 20


def test_spec_shapes():
    assert SPECS["large"].widths == [1] + [11] * 7 + [20]
    assert SPECS["small"].widths == [1] + [10] * 6 + [20]
    assert get_spec("large") is SPECS["large"]
    with pytest.raises(ValueError):
        get_spec("nope")
    with pytest.raises(ValueError):
        MlpSpec((4, 0))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=100, patience=100)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)


@pytest.mark.skipif(not EXTENDED, reason="needs extended-precision long double")
def test_backprop_matches_finite_differences(rng):
    spec = MlpSpec((4, 4))
    worst = 0.0
    for seed in range(20):
        theta = init_params(spec, seed)
        x, y = rng.uniform(-1, 1, (8, 1)), rng.normal(size=(8, 20))
        _, g = loss_and_grad(theta, x, y, spec)
        worst = max(worst, max_relative_error(g, mlp_fd_gradient(theta, x, y, spec)))
    assert worst <= 1e-6


def test_backprop_normwise_in_double(rng):
    spec = MlpSpec((5, 3), n_outputs=4)
    theta = init_params(spec, 1)
    x, y = rng.uniform(-1, 1, (6, 1)), rng.normal(size=(6, 4))
    _, g = loss_and_grad(theta, x, y, spec)
    fd = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = 1e-6
        fd[i] = (loss_and_grad(theta + e, x, y, spec)[0] - loss_and_grad(theta - e, x, y, spec)[0]) / 2e-6
    assert np.linalg.norm(g - fd) <= 1e-7 * np.linalg.norm(fd)


def test_init_is_deterministic_and_bounded():
    spec = SPECS["small"]
    a, b = init_params(spec, 3), init_params(spec, 3)
    assert a.tobytes() == b.tobytes()
    w0 = unpack(a, spec)[0][1]
    assert np.all(np.abs(w0) <= 1 / np.sqrt(10))


def test_constant_target_is_learned():
    ds = toy_dataset(targets=lambda b: np.tile(np.linspace(-0.03, 0.03, 20), (len(b), 1)))
    model = train(MlpSpec((8,)), ds, TrainConfig(max_epochs=4000, patience=500, learning_rate=1e-2))
    assert mse(model, ds, "test") <= 1e-10


def test_training_determinism():
    ds = toy_dataset()
    cfg = TrainConfig(max_epochs=200, patience=50, seed=4)
    a, b = train("small", ds, cfg), train("small", ds, cfg)
    assert a.theta.tobytes() == b.theta.tobytes()


def test_early_stopping_restores_best():
    ds = toy_dataset()
    model = train("small", ds, TrainConfig(max_epochs=600, patience=40, seed=1))
    val = model.history["val"]
    assert model.report["best_epoch"] == int(np.argmin(val)) + 1
    assert mse(model, ds, "val") == pytest.approx(min(val), rel=1e-12)
    assert model.report["epochs"] <= 600
    if model.report["epochs"] < 600:
        assert model.report["epochs"] - model.report["best_epoch"] == 40


def test_model_report_and_scale(dataset, large_model):
    rep = large_model.report
    assert {"train_mse", "val_mse", "test_mse", "test_mse_unnormalized"} <= set(rep)
    assert large_model.alpha_scale == dataset.metadata["alpha_scale"]
    assert rep["test_mse_unnormalized"] == pytest.approx(rep["test_mse"] * large_model.alpha_scale ** 2, rel=1e-12)


def test_mse_examples(dataset):
    spec = SPECS["small"]
    zero = MlpModel(spec, np.zeros(spec.n_params), dataset.metadata["alpha_scale"])
    _, alphas = dataset.subset("test")
    assert mse(zero, dataset, "test") == pytest.approx(np.mean((alphas / zero.alpha_scale) ** 2), rel=1e-12)

    class Memorizer:
        alpha_scale = 1.0

        def predict(self, betas):
            return np.array([dataset.alpha_at(b) for b in betas])

    assert mse(Memorizer(), dataset, "test") == 0.0
    empty = split_dataset(dataset, fractions=(1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        mse(zero, empty, "test")


def test_model_json_round_trip(tmp_path, large_model):
    path = tmp_path / "m.json"
    large_model.save(path)
    back = MlpModel.load(path)
    assert back.theta.tobytes() == large_model.theta.tobytes()
    assert back.spec.widths == large_model.spec.widths
    assert back.alpha_scale == large_model.alpha_scale


def test_predict_validates_beta(large_model):
    with pytest.raises(ValueError):
        large_model.predict([4.0])
    with pytest.raises(ValueError):
        large_model.predict([np.nan])


def test_divergence_is_reported():
    with pytest.raises(TrainingDivergedError):
        train("small", toy_dataset(), TrainConfig(learning_rate=1e100, max_epochs=50, patience=10))


# --- quantization-aware training -----------------------------------------------


def test_lossless_qat_matches_float():
    wide = FxFormat(10, 50)
    spec = MlpSpec((6, 6))
    qspec = MlpSpec((6, 6), formats=(LayerFormats(wide, wide),) * 3)
    theta = init_params(spec, 2)
    x = np.linspace(-1, 1, 33).reshape(-1, 1)
    np.testing.assert_allclose(forward(theta, x, qspec), forward(theta, x, spec), atol=1e-12)


def test_one_fractional_bit_grid():
    coarse = FxFormat(4, 1)
    spec = MlpSpec((3,), formats=(LayerFormats(coarse, coarse),) * 2)
    out = forward(init_params(spec, 0) * 7, np.linspace(-1, 1, 9).reshape(-1, 1), spec)
    np.testing.assert_array_equal(out * 2, np.round(out * 2))
    assert out.min() >= -16 and out.max() <= 15.5


@settings(max_examples=200)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.integers(0, 6), st.integers(1, 20))
def test_fake_quantize_idempotent(xs, i, f):
    fmt = FxFormat(i, f)
    once = fake_quantize(np.array(xs), fmt)
    np.testing.assert_array_equal(fake_quantize(once, fmt), once)


def test_qat_requires_formats(dataset):
    with pytest.raises(ValueError):
        train_qat("small", dataset, TrainConfig(max_epochs=10, patience=5))


def test_qat_model_close_to_float(dataset, small_model, arty_model):
    assert arty_model.spec.quantized
    assert arty_model.report["quantization_aware"]
    assert mse(arty_model, dataset) <= 5 * mse(small_model, dataset)


def test_lossless_qat_training_trajectory(dataset):
    wide = FxFormat(10, 50)
    cfg = TrainConfig(max_epochs=200, patience=100, seed=0)
    plain = train(MlpSpec((10,) * 6), dataset, cfg)
    qat = train(MlpSpec((10,) * 6, formats=(LayerFormats(wide, wide),) * 7), dataset, cfg)
    np.testing.assert_allclose(qat.history["train"], plain.history["train"], rtol=0, atol=1e-12)


def test_one_fractional_bit_training_terminates(dataset):
    coarse = FxFormat(3, 1)
    spec = MlpSpec((10,) * 6, formats=(LayerFormats(coarse, coarse),) * 7)
    model = train(spec, dataset, TrainConfig(max_epochs=300, patience=50))
    assert np.isfinite(model.report["test_mse"])
    assert model.report["epochs"] <= 300


def test_ultra96_qat_close_to_float(dataset, small_model):
    qat = train_qat("small", dataset, TrainConfig(seed=0), preset="ultra96", init=small_model)
    assert mse(qat, dataset) <= 5 * mse(small_model, dataset)
