import numpy as np
import pytest

from fan.adcore import Tensor
from fan.corpus import CorpusConfig, make_dataset
from fan.train import WeightAverage, augment_batch, batches, ink_columns


class TestBatches:
    def test_each_epoch_is_a_permutation(self):
        stream = batches(10, 4, np.random.default_rng(0))
        epoch = np.concatenate([next(stream) for _ in range(3)])
        assert sorted(epoch.tolist()) == list(range(10))


class TestInkColumns:
    def test_bright_ink(self):
        img = np.zeros((4, 10))
        img[1:3, 3:6] = 1.0
        assert ink_columns(img) == (3, 5)

    def test_blank(self):
        assert ink_columns(np.full((4, 10), 0.3)) == (0, 9)


class TestAugment:
    @pytest.fixture
    def batch(self):
        ds = make_dataset(CorpusConfig(count=16, seed=4, ratio=1.0))
        images = ds.images()
        boxes = [s.boxes for s in ds]
        extents = np.array([(min(b[0] for b in bx), max(b[2] for b in bx)) for bx in boxes])
        return images, boxes, extents

    def test_deterministic_per_key(self, batch):
        a = augment_batch(*batch, np.random.default_rng([3, 7]))
        b = augment_batch(*batch, np.random.default_rng([3, 7]))
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]

    def test_range_shape_and_input_untouched(self, batch):
        images = batch[0].copy()
        out, _ = augment_batch(*batch, np.random.default_rng(0))
        assert out.shape == images.shape
        assert out.min() >= 0.0 and out.max() <= 1.0
        np.testing.assert_array_equal(batch[0], images)

    def test_boxes_shift_rigidly(self, batch):
        _, new = augment_batch(*batch, np.random.default_rng(1))
        for old, moved in zip(batch[1], new):
            d = {(n[0] - o[0], n[1] - o[1]) for o, n in zip(old, moved)}
            assert len(d) == 1
            dx, dy = d.pop()
            assert abs(dx) <= 3 and abs(dy) <= 1
            assert all(n[2] - n[0] == o[2] - o[0] and n[3] - n[1] == o[3] - o[1] for o, n in zip(old, moved))

    def test_ink_stays_in_frame(self, batch):
        _, new = augment_batch(*batch, np.random.default_rng(2), max_shift=3)
        w = batch[0].shape[-1]
        for moved in new:
            assert min(b[0] for b in moved) >= 0 and max(b[2] for b in moved) <= w - 1

    def test_unannotated_boxes_stay_none(self, batch):
        images, boxes, extents = batch
        _, new = augment_batch(images, [None] * len(boxes), extents, np.random.default_rng(0))
        assert new == [None] * len(boxes)


class TestWeightAverage:
    def test_first_update_copies(self):
        p = {"w": Tensor(np.array([1.0, 2.0]))}
        avg = WeightAverage(0.9)
        avg.update(p, 0)
        np.testing.assert_array_equal(avg.values["w"], [1.0, 2.0])
        assert avg.values["w"] is not p["w"].data

    def test_ramped_decay(self):
        p = {"w": Tensor(np.array([0.0]))}
        avg = WeightAverage(0.99)
        avg.update(p, 0)
        p["w"].data = np.array([10.0])
        avg.update(p, 1)
        # effective decay at step 1 is min(0.99, 2 / 11)
        assert np.isclose(avg.values["w"][0], 10.0 * (1 - 2 / 11))

    def test_constant_parameters_are_a_fixed_point(self, rng):
        p = {"w": Tensor(rng.normal(size=(3, 2)))}
        avg = WeightAverage(0.999)
        for t in range(50):
            avg.update(p, t)
        np.testing.assert_allclose(avg.values["w"], p["w"].data, rtol=1e-14)

    def test_copy_to(self):
        p = {"w": Tensor(np.zeros(2)), "b": Tensor(np.ones(1))}
        avg = WeightAverage(values={"w": np.array([3.0, 4.0])})
        avg.copy_to(p)
        np.testing.assert_array_equal(p["w"].data, [3.0, 4.0])
        np.testing.assert_array_equal(p["b"].data, [1.0])

    @pytest.mark.parametrize("decay", [0.0, 1.0, -0.5])
    def test_bad_decay(self, decay):
        with pytest.raises(ValueError):
            WeightAverage(decay)
