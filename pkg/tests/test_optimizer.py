import json

import numpy as np
import pytest

from pulsenet.optimizer import (
    ConvergenceError,
    Dataset,
    OptimizerConfig,
    generate_dataset,
    metadata_path,
    optimize_pulse,
    random_init,
    split_dataset,
)
from pulsenet.pulse import constant_pulse, propagate
from pulsenet.quantum import gate_fidelity, rx_gate

COLD = OptimizerConfig(warm_start=False)


def test_identity_target_needs_no_iterations():
    res = optimize_pulse(0.0, np.zeros(20))
    assert res.iterations == 0
    assert res.converged
    assert res.fidelity == 1.0


def test_half_pi_from_random_start():
    res = optimize_pulse(np.pi / 2, random_init(1, 0, OptimizerConfig()))
    assert res.converged
    assert res.fidelity >= 0.999
    assert gate_fidelity(rx_gate(np.pi / 2), propagate(res.alpha)) == pytest.approx(res.fidelity, abs=1e-15)


def test_exact_pulse_is_already_optimal():
    res = optimize_pulse(np.pi, constant_pulse(np.pi))
    assert res.iterations == 0
    assert abs(res.fidelity - 1) <= 1e-10


def test_best_so_far_is_monotone():
    cfg = OptimizerConfig(target_fidelity=0.99999)
    res = optimize_pulse(2.5, random_init(3, 0, cfg), cfg)
    assert len(res.history) == res.iterations + 1
    assert np.all(np.diff(res.history) >= 0)
    assert res.history[-1] == res.fidelity


def test_unconverged_result_is_explicit():
    cfg = OptimizerConfig(max_iterations=3, target_fidelity=0.999999)
    res = optimize_pulse(np.pi, np.zeros(20), cfg)
    assert not res.converged
    assert res.iterations == 3
    assert res.fidelity == max(res.history)


def test_optimizer_determinism():
    a = optimize_pulse(1.1, random_init(99, 4, COLD), COLD)
    b = optimize_pulse(1.1, random_init(99, 4, COLD), COLD)
    assert a.alpha.tobytes() == b.alpha.tobytes()


@pytest.mark.parametrize("beta", [np.nan, 4.0, -3.2])
def test_rejects_bad_beta(beta):
    with pytest.raises(ValueError):
        optimize_pulse(beta, np.zeros(20))


@pytest.mark.parametrize("kwargs", [dict(target_fidelity=1.0), dict(target_fidelity=0.0), dict(learning_rate=0.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        OptimizerConfig(**kwargs)


def test_random_init_range_and_independence():
    cfg = OptimizerConfig(init_scale=0.05)
    a, b = random_init(7, 0, cfg), random_init(7, 1, cfg)
    assert np.all(np.abs(a) <= 0.05)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, random_init(7, 0, cfg))


def test_grid_of_three_drops_minus_pi():
    ds = generate_dataset(3)
    np.testing.assert_array_equal(ds.betas, [0.0, np.pi])
    assert len(ds) == 2 and ds.metadata["grid_size"] == 3
    assert np.all(ds.fidelities >= 0.999)


def test_default_grid_betas():
    betas = np.linspace(-np.pi, np.pi, 101)[1:]
    assert betas[0] == pytest.approx(-np.pi + 2 * np.pi / 100)


def test_warm_start_is_smoother():
    warm = generate_dataset(11)
    cold = generate_dataset(11, COLD)
    assert np.all(warm.fidelities >= 0.999) and np.all(cold.fidelities >= 0.999)

    def tv(ds):
        return np.sum(np.linalg.norm(np.diff(ds.alphas, axis=0), axis=1))

    assert tv(warm) < tv(cold)


def test_cold_rows_independent_of_order():
    cfg = OptimizerConfig(warm_start=False, seed=5)
    betas = np.linspace(-np.pi, np.pi, 7)
    ref = generate_dataset(7, cfg)
    perm = np.random.default_rng(0).permutation(7)
    fids = {}
    for i in perm:
        fids[i] = optimize_pulse(betas[i], random_init(cfg.seed, i, cfg), cfg).fidelity
    np.testing.assert_allclose([fids[i] for i in range(1, 7)], ref.fidelities, atol=1e-15)


def test_parallel_matches_serial():
    serial = generate_dataset(9, COLD)
    parallel = generate_dataset(9, COLD, jobs=2)
    np.testing.assert_array_equal(serial.alphas, parallel.alphas)


def test_unconverged_dataset_raises():
    cfg = OptimizerConfig(max_iterations=2, warm_start=False)
    with pytest.raises(ConvergenceError) as err:
        generate_dataset(5, cfg)
    assert err.value.betas and all(-np.pi <= b <= np.pi for b in err.value.betas)


def test_dataset_requires_increasing_betas():
    with pytest.raises(ValueError):
        Dataset(np.array([0.0, 0.0]), np.zeros((2, 20)), np.ones(2))


# --- splits ------------------------------------------------------------------


def toy(n):
    return Dataset(np.linspace(-1, 1, n), np.arange(n * 20, dtype=float).reshape(n, 20) / 1000, np.ones(n))


@pytest.mark.parametrize("n,counts", [(100, (60, 20, 20)), (5, (3, 1, 1)), (1, (1, 0, 0))])
def test_split_counts(n, counts):
    ds = split_dataset(toy(n), seed=3)
    assert tuple(int(ds.mask(s).sum()) for s in ("train", "val", "test")) == counts


def test_split_determinism_and_scale():
    a, b = split_dataset(toy(50), seed=1), split_dataset(toy(50), seed=1)
    np.testing.assert_array_equal(a.splits, b.splits)
    assert not np.array_equal(a.splits, split_dataset(toy(50), seed=2).splits)
    assert a.metadata["alpha_scale"] == np.max(np.abs(a.alphas[a.mask("train")]))


def test_split_errors():
    with pytest.raises(ValueError):
        split_dataset(toy(0))
    with pytest.raises(ValueError):
        split_dataset(toy(10), fractions=(0.5, 0.2, 0.2))


# --- serialization -------------------------------------------------------------


def test_csv_round_trip_revalidates(dataset, tmp_path):
    path = tmp_path / "ds.csv"
    dataset.to_csv(path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["beta"] + [f"alpha_{i}" for i in range(20)] + ["fidelity", "split"]
    back = Dataset.from_csv(path)
    np.testing.assert_array_equal(back.betas, dataset.betas)
    np.testing.assert_array_equal(back.alphas, dataset.alphas)
    np.testing.assert_array_equal(back.fidelities, dataset.fidelities)
    np.testing.assert_array_equal(back.splits, dataset.splits)
    assert back.metadata == json.loads(json.dumps(dataset.metadata))
    meta = json.loads(metadata_path(path).read_text())
    assert {"grid_size", "seed", "pulse_config", "alpha_scale", "tool_version"} <= set(meta)
    for beta, alpha in zip(back.betas, back.alphas):
        assert gate_fidelity(rx_gate(beta), propagate(alpha)) >= 0.999


def test_default_dataset_contract(dataset):
    assert len(dataset) == 100
    assert np.all(np.diff(dataset.betas) > 0)
    assert dataset.betas[0] > -np.pi and dataset.betas[-1] == np.pi
    assert np.all(dataset.fidelities >= 0.999)


def test_alpha_at(dataset):
    np.testing.assert_array_equal(dataset.alpha_at(dataset.betas[7]), dataset.alphas[7])
    assert dataset.alpha_at(-np.pi) is None


def test_from_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError):
        Dataset.from_csv(path)
