"""Binding smoke tests; runs standalone (python3 test_smoke.py) or under pytest."""

import math
import os
import tempfile

import numpy as np

import covnet as cov


def rand_cmat(rng, rows, cols):
    return rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))


def test_transforms():
    rng = np.random.default_rng(7)
    h = rand_cmat(rng, 16, 8)
    ad = cov.to_angle_delay(h)
    assert ad.shape == (16, 8)
    assert abs(np.linalg.norm(ad) - np.linalg.norm(h)) < 1e-9
    back = cov.from_angle_delay(ad, 16)
    assert np.abs(back - h).max() < 1e-9
    trunc = cov.to_angle_delay_truncated(h, 5)
    assert np.abs(trunc - ad[:5]).max() < 1e-12

    assert cov.cr_to_codeword_len(32, 32, 256) == 8
    assert cov.codeword_len_to_cr(32, 32, 64) == 32
    assert abs(cov.nmse_db(0.01) + 20.0) < 1e-12
    assert cov.nmse_linear(h, h) == 0.0

    stacked = cov.stack_real(h)
    assert stacked.shape == (2 * 16 * 8,)
    assert stacked[0] == np.float32(h[0, 0].real)


def test_channel_and_covariance():
    cfg = cov.ChannelConfig()
    cfg.n_tx = 8
    cfg.n_sub = 32
    cfg.n_delay = 8
    cfg.n_paths = 3
    cfg.delay_max = 4.0
    cfg.delay_offset = 2.0
    cfg.snapshots_per_geometry = 6
    cfg.seed = 42
    cfg.validate()

    s = cov.generate_sample(cfg, 0)
    assert s["h_truncated"].shape == (8, 8)
    assert len(s["covariance"]) == 8
    again = cov.generate_sample(cfg, 0)
    assert np.array_equal(s["h_truncated"], again["h_truncated"])

    c0 = s["covariance"][0]
    assert np.abs(c0 - c0.conj().T).max() < 1e-12
    value, vec = cov.top_eigenvector(c0)
    resid = np.abs(c0 @ vec - value * vec).max()
    assert resid <= 1e-8 * max(1.0, value)

    pre = cov.preprocess(s["covariance"])
    assert pre.q_bar.shape == (8, 8)
    assert pre.i_m1 != pre.i_m2
    assert pre.stacked_q_bar().shape == (2 * 8 * 8,)
    assert pre.stacked_c_bar().shape == (4 * 8 * 8,)

    noisy = cov.inject_noise(s["covariance"], 10.0, seed=5)
    assert np.abs(noisy[0] - noisy[0].conj().T).max() == 0.0
    clean = cov.inject_noise(s["covariance"], math.inf, seed=5)
    assert np.array_equal(clean[0], s["covariance"][0])


def small_model_config():
    mc = cov.ModelConfig()
    mc.n_a = 8
    mc.n_t = 8
    mc.n_heads = 2
    mc.codeword_len = 16
    mc.n_encoder_blocks = 1
    mc.n_decoder_blocks = 1
    mc.ffn_hidden_delay = 16
    mc.ffn_hidden_angle = 16
    mc.cipn_branch_a_len = 16
    mc.fire = [cov.FireConfig(2, 4, 4)]
    mc.validate()
    return mc


def test_model():
    mc = small_model_config()
    assert mc.variant == "covnet"
    assert mc.raw_len == 128

    model = cov.Model(mc, init_seed=3)
    assert model.n_params > 0
    assert any(n.startswith("cipn.b.f0") for n in model.param_names())

    rng = np.random.default_rng(11)
    h = rng.standard_normal((2, 16, 8)).astype(np.float32)
    q = rng.standard_normal((2, 16, 8)).astype(np.float32)
    c = rng.standard_normal((2, 4, 8, 8)).astype(np.float32)

    v = model.encode(h)
    assert v.shape == (2, 16)
    v_c = model.cipn(q, c)
    assert v_c.shape == (2, 128)
    y = model.forward(h, q, c)
    assert y.shape == (2, 16, 8)
    assert np.isfinite(y).all()

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.cvnt")
        model.save(path)
        clone = cov.Model(mc, init_seed=99)
        clone.load(path)
        assert np.array_equal(clone.forward(h, q, c), y)

    assert cov.flops_linear(1, 64, 32) == 4096
    assert cov.flops_conv(2, 3, 3, 3, 3, 3) == 972
    assert cov.flops_attention(4, 4, 8) == 2304
    f = cov.estimate_flops(mc)
    assert f["total"] == f["encoder"] + f["cipn"] + f["decoder"]

    mc.variant = "no_covariance_baseline"
    base = cov.Model(mc, init_seed=3)
    assert not any(n.startswith("cipn") for n in base.param_names())


def main():
    test_transforms()
    test_channel_and_covariance()
    test_model()
    print("python smoke: all checks passed")


if __name__ == "__main__":
    main()
