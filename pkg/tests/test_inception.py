import numpy as np
import pytest

from cookstate.errors import ConfigError
from cookstate.inception import (
    FREEZE_ALIASES,
    TABLE2_TOTAL,
    TABLE2_TRAINABLE,
    HeadConfig,
    apply_freeze,
    build_inception_v3,
    build_mini_inception,
    reconcile_head,
    reconciled_head,
)
from cookstate.rng import Rng


@pytest.fixture(scope="module")
def shape_only_graph():
    return build_inception_v3(head=reconciled_head(), allocate=False)


class TestParamAccounting:
    def test_total_matches_published(self, shape_only_graph):
        c = shape_only_graph.count_params()
        assert c.total == TABLE2_TOTAL == 22_992_167

    def test_no_freeze_trainable_matches_published(self, shape_only_graph):
        c = shape_only_graph.count_params()
        assert c.trainable == TABLE2_TRAINABLE["none"] == 22_957_575
        assert c.non_trainable == 34_592

    @pytest.mark.parametrize("label", ["0-100", "0-132", "0-164"])
    def test_freeze_boundaries_match_published(self, shape_only_graph, label):
        apply_freeze(shape_only_graph, label)
        try:
            assert shape_only_graph.count_params().trainable == TABLE2_TRAINABLE[label]
        finally:
            apply_freeze(shape_only_graph, None)

    def test_freeze_ordering_monotone(self, shape_only_graph):
        seq = []
        for label in ["0-164", "0-132", "0-100", "none"]:
            apply_freeze(shape_only_graph, label)
            seq.append(shape_only_graph.count_params().trainable)
        apply_freeze(shape_only_graph, None)
        assert seq == sorted(seq)
        assert seq == [17_830_439, 19_519_719, 20_815_591, 22_957_575]

    def test_full_freeze_zero_trainable(self, shape_only_graph):
        apply_freeze(shape_only_graph, "all")
        assert shape_only_graph.count_params().trainable == 0
        apply_freeze(shape_only_graph, None)

    def test_count_invariant_under_topology_round_trip(self, shape_only_graph):
        from cookstate.graph import LayerGraph

        g2 = LayerGraph.from_topology_json(shape_only_graph.topology_json(), allocate=False)
        assert g2.count_params().total == shape_only_graph.count_params().total


class TestReconciliation:
    def test_best_variant_is_exact(self):
        best, candidates = reconcile_head()
        assert best.residual == 0
        assert best.head.conv2_filters == 16
        assert best.head.conv_bias and best.head.bn_scale
        assert best.head.dense_units is None

    def test_textual_variant_documented_residual(self):
        # the 32-filter second conv overshoots the published total by 9,408
        g = build_inception_v3(head=HeadConfig(), allocate=False)
        residual = g.count_params().total - TABLE2_TOTAL
        assert residual == 9_408

    def test_candidates_sorted_by_residual(self):
        _, candidates = reconcile_head()
        residuals = [abs(c.residual) for c in candidates]
        assert residuals == sorted(residuals)


class TestTopology:
    def test_stem_first_conv_output_149(self, shape_only_graph):
        assert shape_only_graph.shapes["conv1a"] == (32, 149, 149)

    def test_block_grid_sizes(self, shape_only_graph):
        assert shape_only_graph.shapes["mixed0"] == (256, 35, 35)
        assert shape_only_graph.shapes["mixed2"] == (288, 35, 35)
        assert shape_only_graph.shapes["mixed3"] == (768, 17, 17)
        assert shape_only_graph.shapes["mixed7"] == (768, 17, 17)
        assert shape_only_graph.shapes["mixed8"] == (1280, 8, 8)
        assert shape_only_graph.shapes["mixed10"] == (2048, 8, 8)

    def test_head_shapes(self, shape_only_graph):
        assert shape_only_graph.shapes["head_conv1"] == (64, 6, 6)
        assert shape_only_graph.shapes["head_conv2"] == (16, 4, 4)
        assert shape_only_graph.shapes["probs"] == (7,)

    def test_input_too_small_rejected(self):
        with pytest.raises(ConfigError):
            build_inception_v3(input_shape=(3, 64, 64), allocate=False)

    def test_aux_branch_optional(self):
        g = build_inception_v3(head=reconciled_head(), allocate=False, include_aux=True)
        assert "aux_logits" in [n.name for n in g.nodes]
        assert g.count_params().total > TABLE2_TOTAL  # documented: aux breaks the match

    def test_forward_on_zeros_finite(self):
        g = build_inception_v3(head=reconciled_head(), rng=Rng(0))
        probs, _ = g.forward(np.zeros((1, 3, 299, 299), dtype=np.float32), mode="inference")
        assert probs.shape == (1, 7)
        assert np.all(np.isfinite(probs))


class TestMiniModel:
    def test_builds_and_runs(self):
        g = build_mini_inception(rng=Rng(0))
        x = np.random.default_rng(0).normal(size=(2, 3, 32, 32)).astype(np.float32)
        probs, _ = g.forward(x, mode="inference")
        assert probs.shape == (2, 7)
        np.testing.assert_allclose(probs.sum(axis=1), np.ones(2), atol=1e-5)

    def test_rebuild_same_seed_identical(self):
        a = build_mini_inception(rng=Rng(5))
        b = build_mini_inception(rng=Rng(5))
        for key in a.params:
            np.testing.assert_array_equal(a.params[key].value, b.params[key].value)

    def test_freeze_then_steps_leave_frozen_bits(self):
        from cookstate.layers import softmax_cross_entropy
        from cookstate.optim import Optimizer, SgdConfig

        g = build_mini_inception(rng=Rng(1))
        g.apply_freeze("mixed0")
        frozen_before = {
            k: p.value.copy() for k, p in g.params.items() if not p.trainable
        }
        live_before = {k: p.value.copy() for k, p in g.params.items() if p.trainable}
        opt = Optimizer(SgdConfig())
        gen = np.random.default_rng(2)
        for step in range(3):
            x = gen.normal(size=(4, 3, 32, 32)).astype(np.float32)
            y = gen.integers(0, 7, size=4)
            logits, caches = g.forward(x, mode="train", gen=Rng(0).stream(3, step),
                                       upto="logits")
            _, dlogits = softmax_cross_entropy(logits, y)
            grads = g.backward(dlogits, caches, at="logits")
            opt.step(g, grads, epoch=0)
        for key, val in frozen_before.items():
            assert g.params[key].value.tobytes() == val.tobytes(), key
        changed = sum(
            not np.array_equal(g.params[k].value, v) for k, v in live_before.items()
        )
        assert changed > 0


class TestFreezeAliases:
    def test_alias_map(self, shape_only_graph):
        assert FREEZE_ALIASES["0-100"] == "mixed3"
        assert FREEZE_ALIASES["0-132"] == "mixed4"
        assert FREEZE_ALIASES["0-164"] == "mixed5"
        assert FREEZE_ALIASES["none"] is None

    def test_unknown_boundary_raises(self, shape_only_graph):
        with pytest.raises(ConfigError):
            apply_freeze(shape_only_graph, "mixed42")
