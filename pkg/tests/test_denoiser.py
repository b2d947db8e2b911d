import io

import numpy as np
import pytest

from difftsp.core import Instance, generate_random_instance, tour_to_adjacency
from difftsp.denoiser import (
    PARAM_ORDER,
    DenoiserParams,
    TrainingConfig,
    denoise,
    load_checkpoint,
    loss_and_grad,
    oracle_denoise,
    save_checkpoint,
    train,
)
from difftsp.diffusion import forward_sample, make_schedule
from difftsp.exact import held_karp
from difftsp.exceptions import CheckpointFormatError, ConfigError, DataError


def random_batch(seed, n=7, size=2, T=100):
    rng = np.random.default_rng(seed)
    sched = make_schedule(T, 1e-3, 0.05, 5)
    batch = []
    for k in range(size):
        inst = generate_random_instance(n, seed * 10 + k)
        target = tour_to_adjacency(rng.permutation(n))
        t = int(rng.integers(1, T + 1))
        batch.append((inst, forward_sample(target, t, sched, rng), t, target))
    return batch


def finite_difference_error(params, batch, eps=1e-5):
    _, grad = loss_and_grad(params, batch)
    worst = 0.0
    rng = np.random.default_rng(0)
    for name in PARAM_ORDER:
        arr = params.arrays[name]
        idxs = [()] if arr.ndim == 0 else [tuple(rng.integers(0, s) for s in arr.shape) for _ in range(4)]
        for idx in idxs:
            orig = float(arr[idx])
            arr[idx] = orig + eps
            up, _ = loss_and_grad(params, batch)
            arr[idx] = orig - eps
            down, _ = loss_and_grad(params, batch)
            arr[idx] = orig
            numeric = (up - down) / (2 * eps)
            analytic = float(np.asarray(grad[name])[idx])
            worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-6))
    return worst


@pytest.mark.parametrize("seed", [0, 1])
def test_gradient_matches_finite_differences(seed):
    params = DenoiserParams.init(8, 100, seed=seed)
    for k in PARAM_ORDER:
        if k.startswith("b"):
            params.arrays[k] = np.asarray(params.arrays[k] + 0.05)
    assert finite_difference_error(params, random_batch(seed)) < 1e-4


def test_zero_weights_give_one_half():
    params = DenoiserParams.zeros(6, 50)
    inst = generate_random_instance(9, 0)
    out = denoise(params, inst, np.zeros((9, 9)), 10)
    off = ~np.eye(9, dtype=bool)
    assert np.allclose(out[off], 0.5) and np.all(np.diag(out) == 0)


def test_permutation_equivariance():
    params = DenoiserParams.init(8, 100, seed=3)
    inst = generate_random_instance(11, 5)
    rng = np.random.default_rng(1)
    x = tour_to_adjacency(rng.permutation(11))
    perm = rng.permutation(11)
    out = denoise(params, inst, x, 40)
    out_p = denoise(params, Instance(inst.coords[perm]), x[np.ix_(perm, perm)], 40)
    assert np.allclose(out[np.ix_(perm, perm)], out_p, atol=1e-10)


def test_output_is_symmetric_probability():
    params = DenoiserParams.init(8, 100, seed=4)
    inst = generate_random_instance(10, 2)
    out = denoise(params, inst, np.ones((10, 10)) - np.eye(10), 99)
    assert np.array_equal(out, out.T)
    assert np.all((out >= 0) & (out <= 1))


def test_oracle_denoiser_marks_optimal_edges():
    inst = generate_random_instance(8, 1)
    opt = held_karp(inst).tour
    out = oracle_denoise(inst, np.zeros((8, 8)), 3, opt, eps=1e-3)
    adj = tour_to_adjacency(opt)
    assert np.allclose(out[adj == 1], 1 - 1e-3)


def single_instance_dataset(n=10, seed=0):
    inst = generate_random_instance(n, seed)
    return [(inst, held_karp(inst).tour)]


def test_training_overfits_single_instance():
    data = single_instance_dataset()
    inst, tour = data[0]
    target = tour_to_adjacency(tour)
    sched = make_schedule(100, 1e-4, 0.02, 5)
    rng = np.random.default_rng(7)
    held_out = [(inst, forward_sample(target, t, sched, rng), t, target) for t in range(1, 101, 3)]
    config = TrainingConfig(n=10, epochs=1500, batch_size=4, hidden=32, T=100, learning_rate=0.05, seed=0)
    before = loss_and_grad(DenoiserParams.init(32, 100, seed=0), held_out)[0]
    ckpt = train(config, data * 4)
    assert loss_and_grad(ckpt.params, held_out)[0] < 0.1 * before


def test_training_is_deterministic():
    config = dict(n=8, epochs=3, batch_size=2, hidden=8, T=50, seed=5)
    data = single_instance_dataset(8) * 3
    a = train(TrainingConfig(**config), data)
    b = train(TrainingConfig(**config), data)
    assert np.array_equal(a.params.flat(), b.params.flat())
    assert a.loss_curve == b.loss_curve


def test_equivalence_mode_sees_several_targets():
    config = TrainingConfig(target_mode="equivalence", n=10, epochs=5, batch_size=1, hidden=8, T=50)
    ckpt = train(config, single_instance_dataset())
    assert ckpt.targets_seen >= 2


def test_warm_start_continues_loss_curve():
    data = single_instance_dataset(8)
    first = train(TrainingConfig(n=8, epochs=2, hidden=8, T=50), data)
    second = train(TrainingConfig(n=8, epochs=3, hidden=8, T=50, target_mode="equivalence"), data, init=first)
    assert len(second.loss_curve) == 5
    assert second.loss_curve[:2] == first.loss_curve


def test_dataset_validation():
    with pytest.raises(ConfigError):
        train(TrainingConfig(n=8), [])
    inst = generate_random_instance(8, 0)
    with pytest.raises(DataError):
        train(TrainingConfig(n=9), [(inst, list(range(8)))])
    with pytest.raises(DataError):
        train(TrainingConfig(n=8), [(inst, [0, 1, 2, 3, 4, 5, 6, 6])])
    with pytest.raises(ConfigError):
        TrainingConfig(n=4, target_mode="equivalence")


def test_checkpoint_round_trip(tmp_path):
    ckpt = train(TrainingConfig(n=8, epochs=2, hidden=8, T=50), single_instance_dataset(8))
    path = tmp_path / "c.bin"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert np.array_equal(back.params.flat(), ckpt.params.flat())
    assert back.T == 50 and back.params.hidden == 8
    assert back.loss_curve == ckpt.loss_curve
    assert back.config.to_dict() == ckpt.config.to_dict()
    buf = io.BytesIO()
    save_checkpoint(back, buf)
    assert buf.getvalue() == path.read_bytes()


def test_checkpoint_rejects_garbage():
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(b"NOTACKPT" + b"\0" * 40)
    ckpt = train(TrainingConfig(n=8, epochs=1, hidden=4, T=20), single_instance_dataset(8))
    buf = io.BytesIO()
    save_checkpoint(ckpt, buf)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(buf.getvalue()[:-16])


def test_loss_equals_entropy_when_target_is_output():
    params = DenoiserParams.init(8, 100, seed=6)
    inst = generate_random_instance(7, 3)
    x_t = tour_to_adjacency(np.random.default_rng(0).permutation(7))
    p = denoise(params, inst, x_t, 30)
    loss, _ = loss_and_grad(params, [(inst, x_t, 30, p)], pos_weight=1.0)
    q = p[~np.eye(7, dtype=bool)]
    entropy = -(q * np.log(q) + (1 - q) * np.log(1 - q)).mean()
    assert loss == pytest.approx(entropy, rel=1e-12)


def test_small_step_against_gradient_descends():
    params = DenoiserParams.init(8, 100, seed=2)
    batch = random_batch(3)
    loss, grad = loss_and_grad(params, batch)
    stepped = params.copy()
    for k in PARAM_ORDER:
        stepped.arrays[k] = stepped.arrays[k] - 1e-4 * grad[k]
    assert loss_and_grad(stepped, batch)[0] < loss


def test_oracle_field_decodes_to_oracle_tour():
    from difftsp.solver import reconstruct_hamiltonian

    inst = generate_random_instance(8, 9)
    opt = held_karp(inst).tour
    field = oracle_denoise(inst, np.zeros((8, 8)), 1, opt)
    assert np.array_equal(field, field.T)
    assert np.all((field > 0.5).sum(axis=1) == 2)
    assert reconstruct_hamiltonian(inst, field) == opt


def test_reloaded_checkpoint_gives_identical_outputs():
    ckpt = train(TrainingConfig(n=8, epochs=2, hidden=8, T=50), single_instance_dataset(8))
    buf = io.BytesIO()
    save_checkpoint(ckpt, buf)
    back = load_checkpoint(buf.getvalue())
    inst = generate_random_instance(11, 4)
    x = tour_to_adjacency(np.arange(11))
    assert denoise(back.params, inst, x, 17).tobytes() == denoise(ckpt.params, inst, x, 17).tobytes()
