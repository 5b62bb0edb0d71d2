import numpy as np
import pytest

from cookstate.errors import ConfigError, DimensionError
from cookstate.graph import LayerGraph
from cookstate.layers import softmax_cross_entropy
from cookstate.rng import Rng
from cookstate.sstf import write_tensors

from helpers import central_diff_sample, rel_error


def tiny_graph(seed=0, allocate=True):
    g = LayerGraph(allocate=allocate)
    if allocate:
        g.set_initializer(Rng(seed))
    g.add_input("input", [2, 6, 6])
    g.add("conv", "c1", "input", filters=3, kernel=[3, 3], stride=[1, 1],
          padding="same", use_bias=False)
    g.add("batchnorm", "c1_bn", "c1", scale=True)
    g.add("relu", "c1_act", "c1_bn")
    g.add("maxpool", "pool", "c1_act", window=[2, 2], stride=[2, 2])
    g.add("conv", "c2", "pool", filters=4, kernel=[1, 1], use_bias=True)
    g.add("concat", "cat", ["pool", "c2"])
    g.add("gap", "gap", "cat")
    g.add("dropout", "drop", "gap", rate=0.25)
    g.add("dense", "logits", "drop", units=3, use_bias=True)
    g.add("softmax", "probs", "logits")
    return g


class TestConstruction:
    def test_shapes_inferred(self):
        g = tiny_graph()
        assert g.shapes["c1"] == (3, 6, 6)
        assert g.shapes["pool"] == (3, 3, 3)
        assert g.shapes["cat"] == (7, 3, 3)
        assert g.shapes["gap"] == (7,)
        assert g.shapes["probs"] == (3,)

    def test_duplicate_name_rejected(self):
        g = tiny_graph()
        with pytest.raises(ConfigError):
            g.add("relu", "c1", "input")

    def test_unknown_input_rejected(self):
        g = LayerGraph()
        g.set_initializer(Rng(0))
        g.add_input("input", [1, 4, 4])
        with pytest.raises(ConfigError):
            g.add("relu", "r", "nope")

    def test_same_seed_bit_identical_params(self):
        a, b = tiny_graph(7), tiny_graph(7)
        for key in a.params:
            np.testing.assert_array_equal(a.params[key].value, b.params[key].value)
        c = tiny_graph(8)
        assert any(
            not np.array_equal(a.params[k].value, c.params[k].value) for k in a.params
        )


class TestExecution:
    def test_forward_output_shape_and_simplex(self):
        g = tiny_graph()
        x = np.random.default_rng(0).normal(size=(5, 2, 6, 6)).astype(np.float32)
        probs, _ = g.forward(x, mode="inference")
        assert probs.shape == (5, 3)
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(5), atol=1e-5)

    def test_inference_deterministic(self):
        g = tiny_graph()
        x = np.random.default_rng(1).normal(size=(3, 2, 6, 6)).astype(np.float32)
        a, _ = g.forward(x, mode="inference")
        b, _ = g.forward(x, mode="inference")
        np.testing.assert_array_equal(a, b)

    def test_input_shape_checked(self):
        g = tiny_graph()
        with pytest.raises(DimensionError):
            g.forward(np.zeros((1, 2, 5, 5), dtype=np.float32))

    def test_upto_unknown_node(self):
        g = tiny_graph()
        with pytest.raises(ConfigError):
            g.forward(np.zeros((1, 2, 6, 6), dtype=np.float32), upto="missing")

    def test_train_mode_updates_bn_state(self):
        g = tiny_graph()
        x = np.random.default_rng(2).normal(size=(4, 2, 6, 6)).astype(np.float32)
        before = g.bn_states["c1_bn"].moving_mean.copy()
        g.forward(x, mode="train", gen=Rng(0).stream(3), upto="logits")
        assert not np.array_equal(before, g.bn_states["c1_bn"].moving_mean)

    def test_calibrate_mode_leaves_state(self):
        g = tiny_graph()
        x = np.random.default_rng(2).normal(size=(4, 2, 6, 6)).astype(np.float32)
        before = g.bn_states["c1_bn"].moving_mean.copy()
        g.forward(x, mode="calibrate", upto="logits")
        np.testing.assert_array_equal(before, g.bn_states["c1_bn"].moving_mean)

    def test_end_to_end_gradient_matches_fd(self):
        from cookstate.tensor import use_dtype

        with use_dtype(np.float64):
            g = tiny_graph()
            gen = np.random.default_rng(3)
            x = gen.normal(size=(4, 2, 6, 6))
            y = gen.integers(0, 3, size=4)

            logits, caches = g.forward(x, mode="calibrate", upto="logits")
            loss, dlogits = softmax_cross_entropy(logits, y)
            grads = g.backward(dlogits, caches, at="logits")

            def loss_with(key, arr):
                old = g.params[key].value
                g.params[key].value = arr
                try:
                    lg, _ = g.forward(x, mode="calibrate", upto="logits")
                    return softmax_cross_entropy(lg, y)[0]
                finally:
                    g.params[key].value = old

            for key in ("c1/weight", "c1_bn/gamma", "c2/bias", "logits/weight"):
                p = g.params[key].value
                coords = np.random.default_rng(5).choice(p.size, size=min(6, p.size),
                                                         replace=False)
                num = central_diff_sample(lambda a, k=key: loss_with(k, a), p, coords)
                assert rel_error(grads[key].ravel()[coords], num) < 1e-6


class TestFreeze:
    def test_freeze_marks_prefix(self):
        g = tiny_graph()
        g.apply_freeze("pool")
        assert not g.params["c1/weight"].trainable
        assert not g.params["c1_bn/beta"].trainable
        assert g.params["c2/weight"].trainable
        assert g.params["logits/weight"].trainable

    def test_freeze_all_and_reset(self):
        g = tiny_graph()
        g.apply_freeze("all")
        assert g.count_params().trainable == 0
        g.apply_freeze(None)
        assert g.count_params().trainable > 0

    def test_monotone(self):
        g = tiny_graph()
        g.apply_freeze("c1_bn")
        t_small = g.count_params().trainable
        g.apply_freeze("c2")
        t_big = g.count_params().trainable
        assert t_big < t_small

    def test_unknown_boundary(self):
        with pytest.raises(ConfigError):
            tiny_graph().apply_freeze("mixed99")

    def test_bad_index(self):
        with pytest.raises(ConfigError):
            tiny_graph().apply_freeze(10_000)


class TestCounting:
    def test_counts(self):
        g = tiny_graph()
        c = g.count_params()
        # c1: 2*3*9=54 w; bn: 3 gamma + 3 beta (+6 stats); c2: 3*4+4; dense: 7*3+3
        assert c.trainable == 54 + 6 + 16 + 24
        assert c.non_trainable == 6
        assert c.total == c.trainable + c.non_trainable

    def test_single_dense_2048_to_7(self):
        g = LayerGraph(allocate=False)
        g.add_input("input", [2048])
        g.add("dense", "fc", "input", units=7, use_bias=True)
        assert g.count_params().total == 14_343

    def test_single_conv_64_to_32(self):
        g = LayerGraph(allocate=False)
        g.add_input("input", [64, 8, 8])
        g.add("conv", "c", "input", filters=32, kernel=[3, 3], use_bias=False)
        assert g.count_params().total == 18_432


class TestSerialization:
    def test_topology_round_trip_counts(self):
        g = tiny_graph()
        g2 = LayerGraph.from_topology_json(g.topology_json(), allocate=False)
        assert g2.count_params().total == g.count_params().total
        assert [n.name for n in g2.nodes] == [n.name for n in g.nodes]

    def test_weights_round_trip_bit_identical(self, tmp_path):
        g = tiny_graph(3)
        x = np.random.default_rng(0).normal(size=(2, 2, 6, 6)).astype(np.float32)
        g.forward(x, mode="train", gen=Rng(0).stream(3), upto="logits")  # move BN stats
        path = tmp_path / "w.sstf"
        g.save_weights(path)
        g2 = LayerGraph.from_topology_json(g.topology_json())
        report = g2.load_weights(path, strictness="strict")
        assert not report["missing"] and not report["unexpected"]
        a, _ = g.forward(x, mode="inference")
        b, _ = g2.forward(x, mode="inference")
        np.testing.assert_array_equal(a, b)

    def test_by_name_empty_container(self, tmp_path):
        path = tmp_path / "empty.sstf"
        write_tensors(path, {})
        g = tiny_graph()
        report = g.load_weights(path, strictness="by-name")
        assert report["loaded"] == []
        assert len(report["missing"]) == len(g.state_tensors())

    def test_strict_renamed_tensor_errors(self, tmp_path):
        g = tiny_graph()
        tensors = g.state_tensors()
        tensors["c1/kernel"] = tensors.pop("c1/weight")
        path = tmp_path / "renamed.sstf"
        write_tensors(path, tensors)
        g2 = tiny_graph()
        with pytest.raises(ConfigError) as err:
            g2.load_weights(path, strictness="strict")
        assert "c1/weight" in str(err.value) and "c1/kernel" in str(err.value)

    def test_shape_mismatch_names_tensor(self, tmp_path):
        g = tiny_graph()
        tensors = g.state_tensors()
        tensors["c2/bias"] = np.zeros(9, dtype=np.float32)
        path = tmp_path / "bad.sstf"
        write_tensors(path, tensors)
        with pytest.raises(DimensionError) as err:
            tiny_graph().load_weights(path, strictness="by-name")
        assert "c2/bias" in str(err.value)
