import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fan.adcore import Tensor, backward, check_gradients, conv2d, index, tsum
from fan.rfgeom import (
    BBox,
    Center,
    GeometryError,
    LayerSpec,
    LayerStack,
    StackParseError,
    attention_center,
    crop_patch,
    feature_center,
    feature_centers,
    format_stack,
    parse_stack,
    receptive_field,
    rf_one_layer,
    round_half_up,
)


def impulse_support_1d(layers, pos):
    """Coordinates (1-indexed, may be <= 0) whose unit impulse reaches output ``pos``.

    Works on one axis given (kernel, stride, pad) triples.  Padding is made
    real: the signal lives on a wide zero canvas, and each layer runs unpadded
    after trimming the canvas front so its first window starts where the
    padded layer's would.  With all-ones kernels the network is linear, so the
    response at ``pos`` to an impulse at cell i is d out / d x_i, and a single
    backward pass yields every impulse response.
    """
    net = int(np.prod([s for _, s, _ in layers]))
    margin = (pos + 2) * net + sum(k + p for k, _, p in layers) * net
    start = 1 - margin  # coordinate of canvas index 0
    x = Tensor(np.zeros((1, 1, 2 * margin)), requires_grad=True)
    t = x
    for k, s, p in layers:
        trim = (-(start - 1 + p)) % s
        t = index(t, (slice(None), slice(None), slice(trim, None)))
        start += trim
        t = conv2d(t, Tensor(np.ones((1, 1, 1, k))), Tensor(np.zeros(1)), stride=(1, s), pad=0)
        start = (start - 1 + p) // s + 1
    backward(index(t, (0, 0, pos - start)))
    hit = np.nonzero(x.grad[0, 0] > 0)[0]
    return hit.min() + 1 - margin, hit.max() + 1 - margin


def random_stack(rng, max_layers=5):
    layers = []
    for _ in range(rng.integers(1, max_layers + 1)):
        k = tuple(int(v) for v in rng.integers(1, 5, size=2))
        s = tuple(int(v) for v in rng.integers(1, 4, size=2))
        p = tuple(min(int(v), kk - 1) for v, kk in zip(rng.integers(0, 3, size=2), k))
        layers.append(LayerSpec(str(rng.choice(["conv", "pool"])), k, s, p))
    return LayerStack(layers)


class TestOneLayer:
    def test_k3_s1_p1(self):
        b = rf_one_layer((1, 1), LayerSpec("conv", (3, 3), (1, 1), (1, 1)))
        assert (b.x_min, b.x_max) == (0, 2)

    def test_k2_s2_p0(self):
        b = rf_one_layer((3, 1), LayerSpec("pool", (2, 2), (2, 2), (0, 0)))
        assert (b.x_min, b.x_max) == (5, 6)

    def test_out_of_range_position(self):
        with pytest.raises(GeometryError):
            rf_one_layer((5, 1), LayerSpec("conv", (3, 3)), out_size=(4, 4))


class TestStack:
    def test_two_pools(self):
        stack = [LayerSpec("pool", (2, 2), (2, 2))] * 2
        b = receptive_field((1, 1), stack)
        assert (b.x_min, b.x_max) == (1, 4)
        assert feature_center(1, stack).x == 2.5

    def test_matches_impulse_response_on_fixed_stack(self):
        stack = LayerStack([LayerSpec("conv", (3, 3), (1, 1), (1, 1)), LayerSpec("pool", (2, 2), (2, 2))])
        box = receptive_field((1, 3), stack)
        assert impulse_support_1d([(3, 1, 1), (2, 2, 0)], 1) == (box.x_min, box.x_max) == (0, 3)

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_impulse_response_random(self, seed):
        rng = np.random.default_rng(seed)
        stack = random_stack(rng)
        pos = (int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        box = receptive_field(pos, stack)
        xs = impulse_support_1d([(l.kernel[0], l.stride[0], l.pad[0]) for l in stack], pos[0])
        ys = impulse_support_1d([(l.kernel[1], l.stride[1], l.pad[1]) for l in stack], pos[1])
        assert (xs, ys) == ((box.x_min, box.x_max), (box.y_min, box.y_max))

    def test_position_outside_final_extent(self):
        with pytest.raises(GeometryError):
            receptive_field((3, 1), [LayerSpec("pool", (2, 2), (2, 2))], input_size=(4, 4))

    def test_non_positive_extent(self):
        with pytest.raises(GeometryError, match="layer 1"):
            LayerStack([LayerSpec("conv", (3, 3)), LayerSpec("conv", (3, 3))]).sizes((4, 4))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1), st.integers(1, 30))
    def test_monotone_and_translation(self, seed, x):
        stack = random_stack(np.random.default_rng(seed))
        a, b = receptive_field((x, 1), stack), receptive_field((x + 1, 1), stack)
        sw, _ = stack.net_stride()
        assert b.x_min >= a.x_min and b.x_max >= a.x_max
        assert b.x_min - a.x_min == sw and b.x_max - a.x_max == sw
        assert b.x_max - b.x_min == a.x_max - a.x_min


class TestAttentionCenter:
    def test_one_hot(self):
        c = attention_center([0, 1, 0], [(1.0, 2.0), (5.0, 2.0), (9.0, 2.0)])
        assert c == Center(5.0, 2.0)

    def test_unnormalized_rejected(self):
        with pytest.raises(GeometryError):
            attention_center([0.5, 0.6], [(1.0, 1.0), (2.0, 1.0)])

    def test_length_mismatch(self):
        with pytest.raises(GeometryError):
            attention_center([1.0], [(1.0, 1.0), (2.0, 1.0)])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.01, 10), min_size=1, max_size=20), st.integers(0, 1000))
    def test_convex_hull(self, w, seed):
        a = np.asarray(w) / np.sum(w)
        cs = np.random.default_rng(seed).uniform(-50, 50, size=(len(w), 2))
        c = attention_center(a, cs)
        assert cs[:, 0].min() - 1e-9 <= c.x <= cs[:, 0].max() + 1e-9
        assert cs[:, 1].min() - 1e-9 <= c.y <= cs[:, 1].max() + 1e-9


class TestCrop:
    def test_identity(self, rng):
        f = rng.normal(size=(2, 4, 6))
        patch, origin = crop_patch(f, Center(3.5, 2.5), 4, 6)
        assert origin == (1, 1)
        np.testing.assert_array_equal(patch.data, f)

    def test_corner_zero_fill(self, rng):
        f = rng.normal(size=(1, 5, 5))
        patch, origin = crop_patch(f, Center(1, 1), 3, 3)
        assert origin == (0, 0)
        np.testing.assert_array_equal(patch.data[0, 1:, 1:], f[0, :2, :2])
        assert np.all(patch.data[0, 0, :] == 0) and np.all(patch.data[0, :, 0] == 0)

    def test_constant_map(self):
        patch, _ = crop_patch(np.full((3, 8, 8), 0.7), Center(4.2, 5.6), 3, 4)
        assert np.all(patch.data == 0.7)

    def test_round_half_up(self):
        assert round_half_up([2.5, 3.5, -0.5, 2.4999999999999]).tolist() == [3, 4, 0, 3]

    def test_gradient_flows_to_covered_cells(self, rng):
        f = Tensor(rng.normal(size=(2, 6, 7)), requires_grad=True)
        w = rng.normal(size=(2, 3, 3))
        assert check_gradients(lambda: tsum(crop_patch(f, Center(6.0, 2.0), 3, 3)[0] * w), [f]) < 1e-6

    def test_bad_size(self):
        with pytest.raises(GeometryError):
            crop_patch(np.zeros((1, 3, 3)), Center(1, 1), 0, 2)


class TestParse:
    def test_round_trip(self):
        text = "input height=32 width=100\nconv kernel=3x3 stride=1x1 pad=1x1\npool kernel=2x2 stride=1x2 pad=1x0\n"
        stack, size = parse_stack(text)
        assert size == (32, 100)
        assert format_stack(stack, size) == text

    def test_comments_and_defaults(self):
        stack, size = parse_stack("# header\n\nconv kernel=3x1  # trailing\n")
        assert size is None and stack == [LayerSpec("conv", (3, 1))]

    def test_malformed_reports_line(self):
        with pytest.raises(StackParseError) as e:
            parse_stack("conv kernel=3x3\npool kernel=2by2\n")
        assert e.value.lineno == 2

    def test_paper_preset_centers(self):
        stack, size = parse_stack("preset paper\n")
        c = feature_centers(stack, size)
        assert c.shape == (65, 2)
        assert np.all(np.diff(c[:, 0]) == 4.0)

    def test_bbox_rejects_degenerate(self):
        with pytest.raises(GeometryError):
            BBox(3, 2, 1, 1)
