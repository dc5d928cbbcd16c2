import io
import json
from fractions import Fraction

import numpy as np
import pytest

from lipcert.cli import load_exp1
from lipcert.interval import HyperBox, Interval, ShapeError
from lipcert.network import (
    ActivationKind,
    InputRegion,
    Layer,
    Network,
    NetworkFormatError,
    difference_network,
    eval_interval,
    eval_real,
    interval_activation,
    load_network,
    preactivation_intervals,
    random_network,
    read_network,
    select_output,
)
from nets import linear_network, random_small_net, zero_network
from oracles import eval_exact

EXP1_CENTER = (-4.832202221268014242, -7.364287590384273940)


def exp1_network():
    return load_exp1()[0]


class TestLoading:
    def test_exp1_fixture(self):
        net = exp1_network()
        assert net.dims == [2, 2, 2]
        assert net.layers[0].activation is ActivationKind.RELU
        assert net.layers[-1].activation is ActivationKind.IDENTITY

    def test_decimal_strings_round_trip(self):
        net = exp1_network()
        again = load_network(net.dumps())
        assert again.digest() == net.digest()
        for a, b in zip(net.layers, again.layers):
            assert np.array_equal(a.weights, b.weights)

    def test_sources(self, tmp_path):
        text = exp1_network().dumps()
        path = tmp_path / "net.json"
        path.write_text(text)
        for source in (text, text.encode(), io.StringIO(text), io.BytesIO(text.encode()), path):
            assert load_network(source).digest() == exp1_network().digest()
        assert read_network(str(path)).digest() == exp1_network().digest()

    def test_output_bias_defaults_to_zero(self):
        net = load_network(json.dumps({"input_dim": 1, "layers": [{"weights": [["2"]]}]}))
        assert net.layers[0].biases.tolist() == [0.0]

    def test_empty_layers(self):
        with pytest.raises(ShapeError):
            load_network('{"input_dim": 2, "layers": []}')

    def test_shape_mismatch_reports_layer(self):
        obj = {"input_dim": 2, "layers": [
            {"weights": [["1", "0"], ["0", "1"]], "biases": ["0", "0"], "activation": "relu"},
            {"weights": [["1", "1", "1"]], "biases": ["0"], "activation": "identity"},
        ]}
        with pytest.raises(ShapeError) as err:
            load_network(json.dumps(obj))
        assert err.value.layer == 1

    def test_rejects_non_finite(self):
        obj = {"input_dim": 1, "layers": [{"weights": [["nan"]], "biases": ["0"], "activation": "identity"}]}
        with pytest.raises(ValueError):
            load_network(json.dumps(obj))

    def test_rejects_unknown_activation(self):
        obj = {"input_dim": 1, "layers": [
            {"weights": [["1"]], "biases": ["0"], "activation": "softplus"},
            {"weights": [["1"]]},
        ]}
        with pytest.raises(NetworkFormatError):
            load_network(json.dumps(obj))

    def test_rejects_bad_json(self):
        with pytest.raises(NetworkFormatError):
            load_network("{not json")

    def test_output_layer_must_be_identity(self):
        with pytest.raises(ShapeError):
            Network(1, (Layer([[1.0]], [0.0], "relu"),))

    def test_layers_are_read_only(self):
        net = exp1_network()
        with pytest.raises(ValueError):
            net.layers[0].weights[0, 0] = 1.0


class TestSignConvention:
    def test_center_lies_on_both_hyperplanes(self):
        net = exp1_network()
        region = InputRegion(center=EXP1_CENTER, radius=1e-7)
        pre = preactivation_intervals(net, region.to_box())[0]
        assert all(z.lo < 0 < z.hi for z in pre)
        # both straddle by about |W| * radius, matching the magnitudes the
        # fixture notes describe
        assert pre[0].hi == pytest.approx(8.3054951e-8, rel=1e-6)
        assert pre[1].hi == pytest.approx(6.3310434e-8, rel=1e-6)

    def test_other_signing_misses_the_center(self):
        net = exp1_network()
        w = np.abs(net.layers[0].weights)
        b = np.array([0.3763356208801269531, -0.6647928357124328613])
        z = w @ np.array(EXP1_CENTER) + b
        assert np.all(np.abs(z) > 1.0)


class TestRealEvaluation:
    def test_zero_network(self):
        assert eval_real(zero_network(), [0.3])[0] == 0.0

    def test_identity(self):
        net = linear_network(np.eye(3))
        assert eval_real(net, [1.0, -2.0, 0.5]).tolist() == [1.0, -2.0, 0.5]

    def test_exp1_center_regression(self):
        # the hidden pre-activations at the center are within rounding of
        # zero, so both outputs are (near) zero
        out = eval_real(exp1_network(), EXP1_CENTER)
        assert out.shape == (2,)
        assert np.all(np.abs(out) < 1e-15)

    def test_batch_matches_points(self):
        rng = np.random.default_rng(0)
        net = random_network(rng, [3, 5, 2], "tanh")
        x = rng.standard_normal((10, 3))
        # batched and single-point matrix products may round differently
        np.testing.assert_allclose(eval_real(net, x), [eval_real(net, p) for p in x], rtol=1e-14)


class TestIntervalEvaluation:
    @pytest.mark.parametrize("act", ["relu", "tanh", "sigmoid"])
    def test_extension_on_point_boxes(self, act):
        rng = np.random.default_rng(1)
        for _ in range(40):
            net = random_small_net(rng, act, n=3, outputs=2)
            for x in rng.uniform(-2, 2, (25, 3)):
                outs = eval_interval(net, HyperBox.from_point(x))
                real = eval_real(net, x)
                for o, r in zip(outs, real):
                    assert o.lo <= r <= o.hi
                    assert o.hi - o.lo <= 1e-9 * (1 + abs(r))

    def test_point_boxes_contain_exact_output(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            net = random_small_net(rng, "relu", n=2)
            x = rng.uniform(-1, 1, 2)
            o = eval_interval(net, HyperBox.from_point(x))[0]
            assert Fraction(o.lo) <= eval_exact(net, x) <= Fraction(o.hi)

    @pytest.mark.parametrize("act", ["relu", "tanh", "sigmoid"])
    def test_soundness_by_sampling(self, act):
        rng = np.random.default_rng(3)
        for _ in range(20):
            net = random_small_net(rng, act, n=2, outputs=2)
            lo = rng.uniform(-2, 1, 2)
            box = HyperBox.from_bounds(lo, lo + rng.uniform(0, 1, 2))
            outs = eval_interval(net, box)
            pts = rng.uniform(box.lo, box.hi, (1000, 2))
            vals = eval_real(net, pts)
            for j, o in enumerate(outs):
                assert np.all((o.lo <= vals[:, j]) & (vals[:, j] <= o.hi))

    def test_inclusion_monotone(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            net = random_small_net(rng, "tanh", n=2)
            lo = rng.uniform(-1, 0, 2)
            hi = lo + rng.uniform(0, 1, 2)
            inner_lo = lo + rng.uniform(0, 1, 2) * (hi - lo) / 2
            inner = HyperBox.from_bounds(inner_lo, np.maximum(inner_lo, hi - rng.uniform(0, 1, 2) * (hi - lo) / 2))
            assert eval_interval(net, inner)[0].subset_of(eval_interval(net, HyperBox.from_bounds(lo, hi))[0])

    def test_zero_network_dependency(self):
        out = eval_interval(zero_network(), HyperBox.from_bounds([-1], [1]))[0]
        assert out.lo <= 0 <= out.hi

    def test_identity_net_returns_box(self):
        box = HyperBox.from_bounds([0.1, -3], [0.2, 5])
        outs = eval_interval(linear_network(np.eye(2)), box)
        assert outs == list(box.coords)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            eval_interval(linear_network(np.eye(2)), HyperBox.from_point([0.0]))


class TestActivations:
    def test_relu_clamps(self):
        assert interval_activation("relu", Interval(-1, 2)) == Interval(0, 2)

    def test_sigmoid_at_zero(self):
        s = interval_activation("sigmoid", Interval(0, 0))
        assert s.lo <= 0.5 <= s.hi
        assert s.hi - s.lo <= 2 * np.spacing(0.5)

    def test_tanh_symmetric(self):
        for t in (1e-3, 0.7, 3.0, 40.0):
            r = interval_activation("tanh", Interval(-t, t))
            assert r.lo == -r.hi

    @pytest.mark.parametrize("kind", ["sigmoid", "tanh"])
    def test_contains_high_precision_values(self, kind):
        import mpmath
        fn = {"sigmoid": lambda v: 1 / (1 + mpmath.exp(-v)), "tanh": mpmath.tanh}[kind]
        rng = np.random.default_rng(5)
        for x in np.concatenate([rng.standard_normal(300) * 5, [-800.0, -40.0, 1e-300, 40.0, 800.0]]):
            r = interval_activation(kind, Interval(x, x))
            with mpmath.workdps(50):
                v = fn(mpmath.mpf(float(x)))
                assert mpmath.mpf(r.lo) <= v <= mpmath.mpf(r.hi)


class TestRegions:
    def test_ball_box(self):
        box = InputRegion(center=(0.0, 1.0), radius=0.5).to_box()
        assert box == HyperBox.from_bounds([-0.5, 0.5], [0.5, 1.5])

    def test_clip(self):
        clip = HyperBox.from_bounds([-1, -1], [1, 1])
        box = InputRegion(center=(0.9, 0.0), radius=0.5, clip_domain=clip).to_box()
        assert box == HyperBox.from_bounds([0.4, -0.5], [1.0, 0.5])

    def test_orthant_pieces_cover_the_ball(self):
        region = InputRegion(center=(0.0, 1.0, 2.0), radius=0.25)
        pieces = region.to_boxes(max_pieces=8)
        assert len(pieces) == 8
        lo = np.min([p.lo for p in pieces], axis=0)
        hi = np.max([p.hi for p in pieces], axis=0)
        assert HyperBox.from_bounds(lo, hi) == region.to_box()
        assert all(any(c.lo == m or c.hi == m for c in p.coords[i:i + 1])
                   for p in pieces for i, m in enumerate(region.center))

    def test_large_or_explicit_regions_stay_whole(self):
        assert len(InputRegion(center=(0.0,) * 30, radius=1.0).to_boxes(10 ** 6)) == 1
        box = HyperBox.from_bounds([0, 0], [1, 1])
        assert InputRegion(box=box).to_boxes(10 ** 6) == [box]

    def test_json_round_trip(self):
        region = InputRegion(center=(0.1, -0.2), radius=1e-7, clip_domain=HyperBox.from_bounds([-1, -1], [1, 1]))
        assert InputRegion.from_json(json.loads(json.dumps(region.to_json()))) == region

    def test_needs_exactly_one_form(self):
        with pytest.raises(ValueError):
            InputRegion()
        with pytest.raises(ValueError):
            InputRegion(center=(0.0,), radius=-1.0)


class TestDifferenceNetwork:
    def test_identical_rows_give_zero(self):
        net = Network(2, (Layer([[1.0, 2.0], [0.5, -1.0]], [0.1, 0.2], "relu"),
                          Layer([[0.3, 0.7], [0.3, 0.7]], [0.0, 0.0], "identity")))
        diff = difference_network(net, 0, 1)
        assert np.all(diff.layers[-1].weights == 0)
        assert eval_real(diff, [0.4, -0.2])[0] == 0.0

    def test_exp1_difference_at_center(self):
        net = exp1_network()
        diff = difference_network(net, 0, 1)
        assert diff.output_count == 1
        out = eval_real(net, EXP1_CENTER)
        assert eval_real(diff, EXP1_CENTER)[0] == pytest.approx(out[0] - out[1], abs=1e-15)

    def test_exact_in_real_arithmetic(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            net = random_network(rng, [2, 4, 3], "relu")
            for i0, i in [(0, 1), (2, 0)]:
                diff = difference_network(net, i0, i)
                x = rng.uniform(-1, 1, 2)
                full = [eval_exact(select_output(net, j), x) for j in (i0, i)]
                assert eval_exact(diff, x) == full[0] - full[1]

    def test_index_errors(self):
        net = exp1_network()
        with pytest.raises(ValueError):
            difference_network(net, 0, 0)
        with pytest.raises(IndexError):
            difference_network(net, 0, 2)

