import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridrts.engine import load_map
from gridrts.learner import policy as P
from gridrts.learner.checkpoint import (Checkpoint, CheckpointError, from_bytes, load_checkpoint,
                                        save_checkpoint, to_bytes)
from gridrts.learner.distributions import (M, GradVariant, composite_log_prob, masked_entropy,
                                           masked_log_prob, masked_probs, masked_sample, policy_gradient)
from gridrts.learner.network import Architecture, flatten_obs, forward, init_params
from gridrts.learner.ppo import (Adam, PpoConfig, gae, global_norm, learning_rate, minibatch_indices,
                                 normalize, ppo_update)
from gridrts.learner.rollout import Collector, make_runner
from oracles import check_dense, check_masked, check_ppo, gae_direct

LOGITS = np.array([1.0, 1.0, 1.0, 1.0])
MASK = np.array([True, True, False, True])


# -- masked categorical -------------------------------------------------------

def test_masked_gradient_worked_example():
    full = np.ones(4, dtype=bool)
    assert policy_gradient(LOGITS, full, 0).tolist() == [0.75, -0.25, -0.25, -0.25]
    canon = policy_gradient(LOGITS, MASK, 0, variant=GradVariant.CANONICAL)
    np.testing.assert_allclose(canon, [0.67, -0.33, 0.0, -0.33], atol=0.005)
    assert canon[2] == 0.0
    naive = policy_gradient(LOGITS, MASK, 0, variant="naive")
    assert naive.tolist() == [0.75, -0.25, -0.25, -0.25]


def test_masked_probabilities():
    assert M == -1e8
    p = masked_probs(LOGITS, MASK)
    np.testing.assert_allclose(p, [1 / 3, 1 / 3, 0, 1 / 3], atol=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 80))
        mask = rng.random(n) < 0.3
        mask[rng.integers(n)] = True
        p = masked_probs(rng.normal(0, 5, n), mask)
        assert abs(p[mask].sum() - 1) < 1e-6
        assert (p[~mask] <= np.finfo(float).eps).all()


def test_single_valid_entry():
    mask = np.array([False, True, False])
    assert masked_log_prob(np.array([3.0, -2.0, 1.0]), mask, 1) == 0
    assert masked_entropy(np.array([3.0, -2.0, 1.0]), mask) == 0


def test_monte_carlo_frequencies():
    rng = np.random.default_rng(1)
    idx = masked_sample(np.tile(LOGITS, (100_000, 1)), np.tile(MASK, (100_000, 1)), rng)
    freq = np.bincount(idx, minlength=4) / 100_000
    assert freq[2] == 0
    np.testing.assert_allclose(freq[[0, 1, 3]], 1 / 3, atol=0.01)


def test_mask_errors():
    with pytest.raises(ValueError):
        masked_probs(LOGITS, np.zeros(4, dtype=bool))
    with pytest.raises(ValueError):
        masked_log_prob(LOGITS, MASK, 2)
    with pytest.raises(ValueError):
        composite_log_prob([(LOGITS, MASK, 0), (LOGITS, MASK, 2)])


def test_composite_log_prob_is_sum():
    rng = np.random.default_rng(2)
    parts = [(rng.normal(size=n), np.ones(n, dtype=bool), i) for n, i in ((6, 1), (4, 3), (49, 20))]
    expected = sum(masked_log_prob(l, m, i) for l, m, i in parts)
    assert composite_log_prob(parts) == pytest.approx(expected)


def test_unit_terms_use_consumed_components_only():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(1, 78))
    mask = np.ones((1, 78), dtype=bool)
    comps = np.array([[1, 2, 3, 3, 3, 6, 40]])  # move south; other params are ignored
    logp, ent, _ = P.unit_terms(logits, mask, comps)
    expected = masked_log_prob(logits[0, :6], mask[0, :6], 1) + masked_log_prob(logits[0, 6:10], mask[0, 6:10], 2)
    assert logp[0] == pytest.approx(expected)
    # the entropy covers every component with a valid entry
    sizes = (6, 4, 4, 4, 4, 7, 49)
    offs = np.cumsum((0,) + sizes[:-1])
    assert ent[0] == pytest.approx(sum(masked_entropy(logits[0, o:o + n], mask[0, o:o + n])
                                       for o, n in zip(offs, sizes)))


def test_sampled_components_are_always_valid():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(500, 78))
    mask = rng.random((500, 78)) < 0.3
    mask[:, 0] = True
    comps = P.sample_unit(logits, mask, rng)
    offs = (0, 6, 10, 14, 18, 22, 29)
    for k, o in enumerate(offs):
        has = mask[:, o:o + (6, 4, 4, 4, 4, 7, 49)[k]].any(1)
        assert mask[np.arange(500), o + comps[:, k]][has].all()


# -- network ------------------------------------------------------------------

def test_zero_network_outputs_zero():
    arch = Architecture("uas", 2, 3, (8, 6))
    params = {k: np.zeros_like(v) for k, v in init_params(arch, 0).items()}
    out, _ = forward(params, arch, np.ones((2, arch.input_size), dtype=np.float32), np.array([0, 1]))
    assert not out["source"].any() and not out["unit"].any() and not out["value"].any()


def test_golden_forward():
    arch = Architecture("uas", 2, 3, (8, 6))
    params = init_params(arch, 7)
    x = (np.arange(arch.input_size) % 3 == 0).astype(np.float32)[None]
    out, _ = forward(params, arch, x, np.array([4]))
    np.testing.assert_allclose(out["source"][0], [-0.000199803, -0.00038871, -0.000938087, 0.000243559,
                                                  0.000149924, 0.000203701], rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(out["value"], [-0.028278803], rtol=1e-4)
    np.testing.assert_allclose(out["unit"][0, :6], [1.2431161e-04, 8.7608081e-05, 3.8638298e-04,
                                                    9.8112447e-05, 2.0500702e-05, 6.1007220e-05], rtol=1e-4)


def test_batch_rows_are_independent():
    arch = Architecture("gridnet", 2, 2, (5, 4))
    params = init_params(arch, 1)
    x = np.random.default_rng(0).random((4, arch.input_size)).astype(np.float32)
    out, _ = forward(params, arch, x)
    one, _ = forward(params, arch, x[2:3])
    np.testing.assert_allclose(out["grid"][2], one["grid"][0], rtol=1e-5, atol=1e-8)
    assert out["grid"].shape == (4, 4, 78)


def test_shape_errors():
    arch = Architecture("uas", 2, 3)
    params = init_params(arch, 0)
    with pytest.raises(ValueError):
        forward(params, arch, np.zeros((1, 5)))
    with pytest.raises(ValueError):
        flatten_obs(np.zeros((1, 3, 3, 27)), arch)
    with pytest.raises(ValueError):
        Architecture("cnn", 2, 2)


def test_orthogonal_init_gains():
    arch = Architecture("uas", 4, 4, (64, 32))
    p = init_params(arch, 0, np.float64)
    w0 = p["enc0.w"]  # (432, 64): orthonormal columns scaled by sqrt(2)
    np.testing.assert_allclose(w0.T @ w0, 2 * np.eye(64), atol=1e-10)
    w = p["source.w"]  # (32, 16)
    np.testing.assert_allclose(w.T @ w, 1e-4 * np.eye(16), atol=1e-14)
    v = p["value.w"]
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert all(not p[k].any() for k in p if k.endswith(".b") or k == "unit.cond")


# -- gradient oracles ----------------------------------------------------------

def test_dense_backprop_matches_finite_differences():
    rng = np.random.default_rng(10)
    assert max(check_dense(rng) for _ in range(10)) <= 1e-4


def test_masked_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    assert max(check_masked(rng) for _ in range(50)) <= 1e-4


@pytest.mark.parametrize("protocol", ["uas", "gridnet"])
def test_ppo_loss_gradient(protocol):
    rng = np.random.default_rng(12)
    assert max(check_ppo(rng, protocol, samples=6) for _ in range(3)) <= 1e-4
    assert max(check_ppo(rng, protocol, value_only=True, samples=6) for _ in range(3)) <= 1e-4


# -- GAE and optimisation -----------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2 ** 32 - 1))
def test_gae_matches_direct_sum(T, seed):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=T), rng.normal(size=T)
    d = rng.random(T) < 0.2
    boot = rng.normal()
    adv, ret = gae(r, v, d, boot, 0.99, 0.95)
    np.testing.assert_allclose(adv, gae_direct(r, v, d, boot, 0.99, 0.95), rtol=0, atol=1e-10)
    np.testing.assert_allclose(ret, adv + v, atol=1e-12)


def test_gae_is_batched_over_envs():
    rng = np.random.default_rng(5)
    r, v = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    d = rng.random((8, 3)) < 0.3
    boot = rng.normal(size=3)
    adv, _ = gae(r, v, d, boot, 0.9, 0.8)
    for i in range(3):
        np.testing.assert_allclose(adv[:, i], gae_direct(r[:, i], v[:, i], d[:, i], boot[i], 0.9, 0.8), atol=1e-10)


def test_default_hyperparameters():
    c = PpoConfig()
    assert (c.total_steps, c.num_envs, c.num_steps, c.minibatches, c.epochs) == (300_000_000, 24, 256, 4, 4)
    assert (c.gamma, c.gae_lambda, c.clip, c.max_grad_norm) == (0.99, 0.95, 0.1, 0.5)
    assert (c.learning_rate, c.vf_coef, c.ent_coef, c.adam_eps) == (2.5e-4, 0.5, 0.01, 1e-5)
    assert c.overrides() == {}
    assert c.with_(num_envs=8).overrides() == {"num_envs": 8}


def test_learning_rate_anneals_linearly_to_zero():
    cfg = PpoConfig(total_steps=24 * 256 * 10)
    rates = [learning_rate(cfg, u) for u in range(cfg.num_updates + 1)]
    np.testing.assert_allclose(rates, 2.5e-4 * (1 - np.arange(11) / 10))
    assert learning_rate(cfg.with_(anneal_lr=False), 5) == 2.5e-4


def test_minibatches_partition_the_batch():
    rng = np.random.default_rng(0)
    parts = minibatch_indices(103, 4, rng)
    assert len(parts) == 4
    assert sorted(np.concatenate(parts).tolist()) == list(range(103))


def test_advantage_normalisation():
    a = normalize(np.random.default_rng(0).normal(3, 7, 64))
    assert abs(a.mean()) < 1e-12 and a.std() == pytest.approx(1, abs=1e-6)


def test_adam_first_step_is_sign_times_lr():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    Adam(p, eps=1e-5).step(p, {"w": np.array([0.5, -4.0, 0.0])}, 0.1)
    np.testing.assert_allclose(p["w"], [0.9, -1.9, 3.0], atol=1e-5)


def _small_batch(arch, rng, n=32):
    venv = make_runner("uas", load_map("basesWorkers8x8"), ["random"] * 2, seed=1, max_ticks=100)
    cfg = PpoConfig(num_envs=2, num_steps=n // 2, minibatches=2, epochs=2)
    params = init_params(arch, 0)
    batch, _ = Collector(venv, arch).collect(params, cfg, rng)
    return params, batch, cfg


def test_stored_log_probs_are_reproducible():
    arch = Architecture("uas", 8, 8, (32, 32))
    rng = np.random.default_rng(0)
    params, batch, _ = _small_batch(arch, rng)
    logp, _, v, _ = P.evaluate(params, arch, batch)
    np.testing.assert_allclose(logp, batch["logp"], atol=1e-6)
    np.testing.assert_allclose(v, batch["value"], atol=1e-6)


def test_gridnet_segment_shapes_and_log_probs():
    arch = Architecture("gridnet", 8, 8, (16, 16))
    venv = make_runner("gridnet", load_map("basesWorkers8x8"), ["random", "self", "self"], seed=2)
    cfg = PpoConfig(num_envs=3, num_steps=5)
    params = init_params(arch, 0)
    batch, _ = Collector(venv, arch).collect(params, cfg, np.random.default_rng(0))
    assert batch["obs"].shape == (15, 8, 8, 27) and batch["comps"].shape == (15, 64, 7)
    logp, _, _, _ = P.evaluate(params, arch, batch)
    np.testing.assert_allclose(logp, batch["logp"], atol=1e-6)


def test_collector_rejects_mismatched_runner():
    venv = make_runner("gridnet", load_map("basesWorkers8x8"), ["random"])
    with pytest.raises(ValueError):
        Collector(venv, Architecture("uas", 8, 8))


def test_ppo_update_clips_and_moves_params():
    arch = Architecture("uas", 8, 8, (32, 32))
    rng = np.random.default_rng(0)
    params, batch, cfg = _small_batch(arch, rng)
    before = {k: v.copy() for k, v in params.items()}
    stats = ppo_update(params, arch, Adam(params, cfg.adam_eps), batch, cfg, 0, rng)
    assert stats["lr"] == cfg.learning_rate and np.isfinite(stats["loss"])
    assert global_norm({k: params[k] - before[k] for k in params}) > 0


# -- checkpoints --------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    arch = Architecture("uas", 8, 8, (16, 8))
    params = init_params(arch, 3)
    opt = Adam(params)
    ck = Checkpoint(arch, params, update=12, seed=5, extra=opt.state())
    path = tmp_path / "c.bin"
    save_checkpoint(path, ck)
    back = load_checkpoint(path, expect=arch)
    assert (back.update, back.seed, back.arch) == (12, 5, arch)
    for k in params:
        np.testing.assert_array_equal(back.params[k], params[k])
    Adam(back.params).load_state(back.extra)
    assert path.read_bytes()[:8] == b"RTSCKPT1"


def test_checkpoint_errors():
    arch = Architecture("uas", 8, 8, (16, 8))
    data = to_bytes(Checkpoint(arch, init_params(arch, 3)))
    with pytest.raises(CheckpointError):
        from_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(CheckpointError):
        from_bytes(data[:-3])
    with pytest.raises(CheckpointError):
        from_bytes(data + b"\0")
    with pytest.raises(CheckpointError):
        from_bytes(data, expect=Architecture("uas", 8, 8, (16, 16)))
