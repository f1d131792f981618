import numpy as np
import pytest

from fan import checkpoint as ck
from fan.adcore import AdadeltaState
from fan.config import ConfigError, RunConfig, loads
from fan.corpus import CorpusConfig, make_dataset
from fan.train import WeightAverage, train

TINY = """
corpus.count = 24
encoder.hidden = 6
attn.state_size = 8
attn.attn_size = 8
focus.crop_height = 12
focus.crop_width = 8
train.batch_size = 4
"""


@pytest.fixture
def cfg():
    return loads(TINY)


class TestConfig:
    def test_defaults(self):
        c = RunConfig()
        assert c.focus.lam == 0.01 and c.train.batch_size == 32

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="train.batchsize"):
            loads("train.batchsize = 3\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="optim.lr"):
            loads("optim.lr = 1\n")

    def test_python_name_is_not_a_file_key(self):
        with pytest.raises(ConfigError):
            loads("focus.lam = 0.1\n")

    def test_bad_value_and_line(self):
        with pytest.raises(ConfigError, match=":2:"):
            loads("# ok\ntrain.steps = many\n")
        with pytest.raises(ConfigError):
            loads("train.steps 5\n")

    def test_comments_and_round_trip(self, cfg):
        c = loads("focus.lambda = 0.05  # heavier focus\n" + TINY)
        assert c.focus.lam == 0.05
        assert loads(c.dumps()) == c

    def test_corpus_overrides(self):
        c = loads("corpus.preset = drift\ncorpus.occlusion = 0.5\ncorpus.count = 7\n").corpus_config()
        assert c.corruptions == {"occlusion": 0.5} and c.scale == (1.0, 2.5) and c.count == 7


class TestCheckpoint:
    def test_round_trip_bit_identical(self, cfg, tmp_path, rng):
        model = ck.build_model(cfg)
        imgs = rng.random((10, 1, 16, 64))
        texts = ["abc", "d9", "x", "hello", "zz", "q1w", "ee", "r", "ty", "u"]
        before = model.forward_logits(imgs, texts)
        ck.save(tmp_path / "m.ckpt", cfg, model, AdadeltaState(), 0)
        back = ck.load(tmp_path / "m.ckpt")
        assert np.array_equal(before, back.model.forward_logits(imgs, texts))
        assert back.config == cfg

    def test_layout(self, cfg, tmp_path):
        ck.save(tmp_path / "m.ckpt", cfg, ck.build_model(cfg), None, 7)
        raw = (tmp_path / "m.ckpt").read_bytes()
        assert raw[:8] == b"FANCKPT1"
        n = int.from_bytes(raw[8:16], "little")
        manifest = raw[16 : 16 + n].decode()
        assert "format = 1" in manifest and "step = 7" in manifest and "[tensors]" in manifest

    def test_rebuild_from_echo_only(self, cfg, tmp_path):
        """A model built from nothing but the stored config has the same tensor names and shapes."""
        model = ck.build_model(cfg)
        ck.save(tmp_path / "m.ckpt", cfg, model, None, 0)
        back = ck.load(tmp_path / "m.ckpt")
        fresh = ck.build_model(back.config)
        assert {k: v.shape for k, v in fresh.parameters().items()} == \
               {k: v.shape for k, v in model.parameters().items()}

    def test_resume_matches_uninterrupted(self, cfg, tmp_path):
        ds = make_dataset(CorpusConfig(count=24, seed=1))
        a, avg_a = ck.build_model(cfg), WeightAverage(0.9)
        train(a, ds, steps=4, batch_size=4, seed=3, log_every=0, augment=True, average=avg_a)

        b, avg_b = ck.build_model(cfg), WeightAverage(0.9)
        st, _ = train(b, ds, steps=2, batch_size=4, seed=3, log_every=0, augment=True, average=avg_b)
        ck.save(tmp_path / "r.ckpt", cfg, b, st, 2, avg_b)
        r = ck.load(tmp_path / "r.ckpt")
        assert r.state.step == 2
        train(r.model, ds, steps=4, batch_size=4, seed=3, state=r.state, start_step=r.step,
              log_every=0, augment=True, average=r.average)
        pa, pb = a.parameters(), r.model.parameters()
        for k in pa:
            assert np.array_equal(pa[k].data, pb[k].data), k
            assert np.array_equal(avg_a.values[k], r.average.values[k]), k

    def test_average_round_trip(self, cfg, tmp_path, rng):
        model = ck.build_model(cfg)
        avg = WeightAverage(0.99)
        avg.update(model.parameters(), 0)
        for v in avg.values.values():
            v += rng.normal(size=v.shape) * 1e-3
        ck.save(tmp_path / "m.ckpt", cfg, model, None, 1, avg)
        back = ck.load(tmp_path / "m.ckpt")
        assert back.average.decay == 0.99
        raw = {k: v.data.copy() for k, v in back.model.parameters().items()}
        assert all(np.array_equal(raw[k], v.data) for k, v in model.parameters().items())
        infer = back.inference_model()
        for k, v in infer.parameters().items():
            assert np.array_equal(v.data, avg.values[k]) and not np.array_equal(v.data, raw[k])

    def test_no_average_means_raw_weights(self, cfg, tmp_path):
        model = ck.build_model(cfg)
        ck.save(tmp_path / "m.ckpt", cfg, model, None, 0)
        back = ck.load(tmp_path / "m.ckpt")
        assert back.average is None
        assert "avg/" not in (tmp_path / "m.ckpt").read_bytes()[:4096].decode("utf-8", "ignore")
        assert back.inference_model() is back.model

    def test_corrupt_files(self, cfg, tmp_path):
        path = tmp_path / "m.ckpt"
        ck.save(path, cfg, ck.build_model(cfg), None, 0)
        raw = path.read_bytes()
        (tmp_path / "t.ckpt").write_bytes(raw[:-8])
        with pytest.raises(ck.CheckpointError, match="truncated"):
            ck.load(tmp_path / "t.ckpt")
        (tmp_path / "x.ckpt").write_bytes(b"NOTACKPT" + raw[8:])
        with pytest.raises(ck.CheckpointError, match="magic"):
            ck.load(tmp_path / "x.ckpt")
        (tmp_path / "y.ckpt").write_bytes(raw + b"\0" * 8)
        with pytest.raises(ck.CheckpointError, match="trailing"):
            ck.load(tmp_path / "y.ckpt")

    def test_unresolved_crop(self):
        with pytest.raises(ck.CheckpointError):
            ck.build_model(RunConfig())
