import math

import numpy as np
import pytest

from fan import pnm
from fan.corpus import (
    CORRUPTIONS,
    CorpusConfig,
    ManifestError,
    corpus_preset,
    corrupt,
    make_dataset,
    make_sample,
    max_box_size,
    read_dataset,
    render,
    write_dataset,
)
from fan.glyphs import GLYPHS, glyph


@pytest.fixture(scope="module")
def small():
    return make_dataset(CorpusConfig(count=40, seed=3, ratio=0.5, corruptions={"noise": 0.2}))


class TestGlyphs:
    def test_every_class_has_a_distinct_bitmap(self):
        assert len(GLYPHS) == 36
        keys = {g.tobytes() for g in GLYPHS.values()}
        assert len(keys) == 36

    def test_resample_native_size(self):
        assert np.array_equal(glyph("a", 7, 5), GLYPHS["a"])
        assert glyph("Q", 14, 10).shape == (14, 10)


class TestRender:
    def test_deterministic(self):
        cfg = CorpusConfig()
        a = render("hello", cfg, np.random.default_rng(5))
        b = render("hello", cfg, np.random.default_rng(5))
        assert np.array_equal(a.image, b.image) and a.boxes == b.boxes

    def test_no_horizontal_overlap(self):
        cfg = CorpusConfig(jitter=0, scale=(1.0, 2.5))
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = render("abcde", cfg, rng)
            for (a0, _, a1, _), (b0, _, b1, _) in zip(s.boxes, s.boxes[1:]):
                assert a1 < b0

    def test_boxes_inside_image(self):
        cfg = CorpusConfig(scale=(1.0, 2.5))
        rng = np.random.default_rng(1)
        for _ in range(50):
            s = render("w0rd", cfg, rng)
            for x0, y0, x1, y1 in s.boxes:
                assert 0 <= x0 <= x1 < 64 and 0 <= y0 <= y1 < 16

    def test_length_outside_range(self):
        with pytest.raises(ValueError):
            render("toolong", CorpusConfig(), np.random.default_rng(0))


class TestCorrupt:
    @pytest.mark.parametrize("kind", CORRUPTIONS)
    def test_zero_strength_identity(self, kind, rng):
        img = rng.random((16, 64))
        assert np.array_equal(corrupt(img, kind, 0.0, rng), img)

    def test_occlusion_is_local(self, rng):
        img = rng.random((16, 64))
        out = corrupt(img, "occlusion", 0.3, np.random.default_rng(2))
        rows, cols = np.nonzero(out != img)
        assert rows.max() - rows.min() + 1 <= math.ceil(0.3 * 16)
        assert cols.max() - cols.min() + 1 <= math.ceil(0.3 * 64 / 2)

    def test_blur_interior_is_box_mean(self, rng):
        img = rng.random((12, 20))
        out = corrupt(img, "blur", 1.0, rng)  # radius 2
        for y in range(2, 10):
            for x in range(2, 18):
                assert math.isclose(out[y, x], img[y - 2 : y + 3, x - 2 : x + 3].mean(), rel_tol=1e-12)

    def test_blur_reflective_border_keeps_constant(self):
        img = np.full((8, 8), 0.4)
        img[:, 0] = 0.9
        out = corrupt(img, "blur", 0.5, np.random.default_rng(0))  # radius 1
        # reflection at the left edge: column 0 sees itself twice and column 1 once
        assert math.isclose(out[4, 0], (0.9 * 2 + 0.4) / 3, rel_tol=1e-12)

    def test_contrast_keeps_mean(self, rng):
        img = rng.uniform(0.2, 0.8, size=(16, 64))
        out = corrupt(img, "contrast", 0.5, rng)
        assert math.isclose(out.mean(), img.mean(), rel_tol=1e-12)
        assert out.std() < img.std()

    def test_bad_args(self, rng):
        with pytest.raises(ValueError):
            corrupt(np.zeros((4, 4)), "smear", 0.5, rng)
        with pytest.raises(ValueError):
            corrupt(np.zeros((4, 4)), "blur", 1.5, rng)


class TestDataset:
    def test_annotation_ratio(self):
        ds = make_dataset(CorpusConfig(count=1000, seed=0, ratio=0.3))
        assert sum(s.annotated for s in ds) == 300
        assert all((s.boxes is not None) == s.annotated for s in ds)

    def test_crop_is_max_annotated_box(self, small):
        assert small.crop_size == max_box_size(small.samples)
        assert small.crop_size[0] == 12

    def test_samples_independent_of_count(self):
        cfg = CorpusConfig(count=10, seed=4)
        assert np.array_equal(make_sample(7, cfg).image, make_sample(7, CorpusConfig(count=99, seed=4)).image)

    def test_round_trip(self, small, tmp_path):
        write_dataset(small, tmp_path)
        back = read_dataset(tmp_path)
        assert len(back) == len(small) and back.crop_size == small.crop_size
        for a, b in zip(small, back):
            assert np.array_equal(a.image, b.image)
            assert (a.text, a.boxes, a.annotated) == (b.text, b.boxes, b.annotated)

    def test_files_bit_identical(self, tmp_path):
        cfg = CorpusConfig(count=10, seed=8, ratio=0.3)
        write_dataset(make_dataset(cfg), tmp_path / "a")
        write_dataset(make_dataset(cfg), tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert len(names) == 11
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "manifest.tsv").write_text("img.pgm\tabc\n")
        with pytest.raises(ManifestError):
            read_dataset(tmp_path)

    def test_drift_preset(self):
        cfg = corpus_preset("drift", count=5)
        assert cfg.scale == (1.0, 2.5) and cfg.corruptions == {"occlusion": 0.3}
        with pytest.raises(KeyError):
            corpus_preset("nope")

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            CorpusConfig(ratio=1.5)


class TestPNM:
    def test_pgm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(5, 7)).astype(np.uint8)
        pnm.write_pgm(tmp_path / "a.pgm", img)
        assert np.array_equal(pnm.read_pnm(tmp_path / "a.pgm"), img)

    def test_ppm_with_comment(self, tmp_path):
        raw = b"P6\n# made by hand\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6])
        (tmp_path / "c.ppm").write_bytes(raw)
        assert pnm.read_pnm(tmp_path / "c.ppm").tolist() == [[[1, 2, 3], [4, 5, 6]]]

    def test_truncated(self, tmp_path):
        (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(pnm.PNMError):
            pnm.read_pnm(tmp_path / "t.pgm")
