import numpy as np
import pytest

from fan.adcore import ShapeError, Tensor, check_gradients, tsum
from fan.encoder import (
    Conv,
    EncoderConfig,
    Pool,
    ResBlocks,
    Stage,
    build_encoder,
    encode,
    lstm_params,
    paper_config,
    preset,
    run_lstm,
    toy_config,
)


@pytest.fixture(scope="module")
def toy():
    return build_encoder(toy_config(hidden=8), rng_seed=3)


class TestShapes:
    def test_paper_stage_sizes(self):
        sizes = dict(paper_config().stage_sizes())
        assert sizes == {"conv1_x": (32, 256), "conv2_x": (16, 128), "conv3_x": (8, 64),
                         "conv4_x": (4, 65), "conv5_x": (1, 65)}
        cfg = paper_config()
        assert cfg.seq_len == 65 and cfg.feature_dim == 512

    def test_toy_sequence(self, toy, rng):
        fs = encode(rng.random((1, 16, 64)), toy)
        assert fs.vectors.shape == (16, 16)
        assert fs.centers.shape == (16, 2)
        assert np.all(np.diff(fs.centers[:, 0]) == 4.0)

    def test_batch_matches_single(self, toy, rng):
        imgs = rng.random((3, 1, 16, 64))
        batch = encode(imgs, toy).vectors.data
        for i in range(3):
            np.testing.assert_allclose(batch[i], encode(imgs[i], toy).vectors.data, rtol=0, atol=1e-13)

    def test_wrong_image_size(self, toy):
        with pytest.raises(ShapeError):
            encode(np.zeros((1, 16, 60)), toy)

    def test_stage_collapse_reported(self):
        cfg = EncoderConfig(stages=[Stage("s", [Pool((2, 2), (2, 2))] * 5)], input_size=(8, 8))
        with pytest.raises(ShapeError, match="s"):
            cfg.stage_sizes()

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            preset("huge")


class TestResidual:
    def test_zero_main_path_is_identity(self, rng):
        cfg = EncoderConfig(stages=[Stage("a", [Conv((3, 3), 4, (1, 1), (1, 1)), ResBlocks(4, 2)])],
                            input_size=(6, 6))
        enc = build_encoder(cfg, rng_seed=0)
        for k, v in enc.params.items():
            if k.startswith("a.1."):
                v.data[...] = 0.0
        x = Tensor(rng.random((1, 1, 6, 6)))
        full, taps = enc.cnn(x, keep=frozenset(["a.0"]))
        np.testing.assert_array_equal(full.data, taps["a.0"].data)


class TestBLSTM:
    def test_reversal_symmetry(self, rng):
        p = lstm_params(rng, 3, 5)
        xs = [Tensor(rng.normal(size=(2, 3))) for _ in range(6)]
        fw = run_lstm(xs, p)
        bw = run_lstm(xs[::-1], p, reverse=True)
        for a, b in zip(fw, bw[::-1]):
            np.testing.assert_array_equal(a.data, b.data)

    def test_first_output_depends_on_whole_sequence(self, toy, rng):
        img = rng.random((1, 16, 64))
        a = encode(img, toy).vectors.data
        img2 = img.copy()
        img2[:, :, -4:] = 0.0
        b = encode(img2, toy).vectors.data
        assert not np.allclose(a[0], b[0])


def test_encoder_gradients():
    enc = build_encoder(toy_config(hidden=3, input_size=(8, 16)), rng_seed=5)
    img = Tensor(np.random.default_rng(0).random((1, 8, 16)), requires_grad=True)
    w = np.random.default_rng(1).normal(size=(4, 6))
    params = list(enc.params.values())
    err = check_gradients(lambda: tsum(encode(img, enc).vectors * w), params + [img], max_entries=6)
    assert err < 1e-4
