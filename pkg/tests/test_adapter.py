import numpy as np
import pytest

from gatpad.adapter import (
    AdapterConfig,
    EdgeMatrix,
    FeatureStack,
    GatHead,
    GraphSpec,
    Topology,
    VertexSet,
    adapt,
    attention_scores,
    build_edges,
    combine_latent,
    gat_layer,
    init_adapter_params,
    normalize_attention,
    project_features,
)
from gatpad.diffengine import Tensor, backward, ops

TINY = AdapterConfig(level_dims=((2, 4, 4), (3, 4, 4), (2, 4, 4)), vertex_dim=6,
                     out_dim=5, heads=2, proj_channels=2, pool_hw=2)


def tiny_stack(rng, cfg=TINY):
    return FeatureStack([rng.normal(size=d).astype(np.float32) for d in cfg.level_dims])


class TestBuildEdges:
    def test_chain_n3(self):
        e = build_edges(GraphSpec(Topology.STEP_BY_STEP, 3))
        assert e.matrix.tolist() == [[1, 1, 0], [1, 1, 1], [0, 1, 1]]

    def test_dense_n3(self):
        e = build_edges(GraphSpec(Topology.DENSE, 3))
        assert e.matrix.tolist() == [[1, 1, 1], [1, 1, 1], [1, 1, 1]]

    def test_single_vertex(self):
        e = build_edges(GraphSpec(Topology.STEP_BY_STEP, 1))
        assert e.matrix.tolist() == [[1]]

    def test_zero_vertices_rejected(self):
        with pytest.raises(ValueError):
            GraphSpec(Topology.DENSE, 0)

    @pytest.mark.parametrize("n", range(1, 33))
    @pytest.mark.parametrize("topology", list(Topology))
    def test_symmetry_and_edge_counts(self, n, topology):
        e = build_edges(GraphSpec(topology, n))
        assert np.array_equal(e.matrix, e.matrix.T)
        assert (np.diag(e.matrix) == 1).all()
        expected = n - 1 if topology is Topology.STEP_BY_STEP else n * (n - 1) // 2
        assert e.edge_count() == expected

    def test_no_self_loops_variant(self):
        e = build_edges(GraphSpec(Topology.DENSE, 3, self_loops=False))
        assert (np.diag(e.matrix) == 0).all()

    def test_edge_matrix_validation(self):
        with pytest.raises(ValueError):
            EdgeMatrix(np.array([[1, 1], [0, 1]]))  # not symmetric
        with pytest.raises(ValueError):
            EdgeMatrix(np.array([[2, 0], [0, 1]]))  # not binary


class TestProjectFeatures:
    def test_shape_contract_defaults(self):
        cfg = AdapterConfig()  # 4 levels, d = 64
        rng = np.random.default_rng(0)
        params = init_adapter_params(cfg, rng)
        stack = FeatureStack([rng.normal(size=d).astype(np.float32) for d in cfg.level_dims])
        v = project_features(stack, params, cfg)
        assert isinstance(v, VertexSet)
        assert v.matrix.shape == (4, 64)

    def test_zero_stack_zero_biases_gives_zero_vertices(self):
        rng = np.random.default_rng(1)
        params = init_adapter_params(TINY, rng)
        stack = FeatureStack([np.zeros(d, dtype=np.float32) for d in TINY.level_dims])
        v = project_features(stack, params, TINY)
        assert not v.matrix.data.any()

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(2)
        stack = tiny_stack(rng)

        def run():
            params = init_adapter_params(TINY, np.random.default_rng(5))
            return project_features(stack, params, TINY).matrix.data.tobytes()

        assert run() == run()

    def test_level_count_mismatch(self):
        rng = np.random.default_rng(3)
        params = init_adapter_params(TINY, rng)
        bad = FeatureStack([rng.normal(size=(2, 4, 4)).astype(np.float32)] * 2)
        with pytest.raises(Exception):
            project_features(bad, params, TINY)


class TestAttentionScores:
    def test_identity_weight_reduction(self):
        # W = I, q1 = e1, q2 = 0, dense n=2: A[i, j] = V[i, 0]
        v = VertexSet(Tensor([[3.0, 0.0], [5.0, 0.0]]))
        e = build_edges(GraphSpec(Topology.DENSE, 2))
        a, mask = attention_scores(v, Tensor(np.eye(2)), Tensor([1.0, 0.0]),
                                   Tensor([0.0, 0.0]), e)
        assert np.allclose(a.data, [[3.0, 3.0], [5.0, 5.0]])
        assert mask.all()

    def test_zero_attention_vectors_give_zero_scores(self):
        rng = np.random.default_rng(0)
        v = VertexSet(Tensor(rng.normal(size=(3, 4)).astype(np.float32)))
        e = build_edges(GraphSpec(Topology.DENSE, 3))
        a, _ = attention_scores(v, Tensor(rng.normal(size=(4, 4)).astype(np.float32)),
                                Tensor(np.zeros(4)), Tensor(np.zeros(4)), e)
        assert np.allclose(a.data, 0.0)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_naive_double_loop(self, seed):
        rng = np.random.default_rng(seed)
        n, d, dout = 5, 4, 3
        vm = rng.normal(size=(n, d)).astype(np.float32)
        w = rng.normal(size=(dout, d)).astype(np.float32)
        q1 = rng.normal(size=dout).astype(np.float32)
        q2 = rng.normal(size=dout).astype(np.float32)
        topo = Topology.DENSE if seed % 2 else Topology.STEP_BY_STEP
        e = build_edges(GraphSpec(topo, n))
        a, mask = attention_scores(VertexSet(Tensor(vm)), Tensor(w), Tensor(q1), Tensor(q2), e)
        # independent direct evaluation
        for i in range(n):
            for j in range(n):
                hi = w @ vm[i]
                hj = w @ vm[j]
                expected = float(q1 @ hi + q2 @ hj)
                assert mask[i, j] == bool(e.matrix[i, j])
                if mask[i, j]:
                    assert abs(a.data[i, j] - expected) < 1e-4


class TestNormalizeAttention:
    def test_uniform_scores_dense(self):
        e = build_edges(GraphSpec(Topology.DENSE, 4))
        a_s = normalize_attention(Tensor(np.full((4, 4), 1.7)), e)
        assert np.allclose(a_s.data, 0.25, atol=1e-7)

    def test_exact_softmax_two_neighbors(self):
        e = EdgeMatrix(np.ones((2, 2), dtype=np.int8))
        a = Tensor([[np.log(2.0), 0.0], [np.log(2.0), 0.0]])
        a_s = normalize_attention(a, e)
        assert np.allclose(a_s.data[0], [2 / 3, 1 / 3], atol=1e-6)

    def test_chain_disconnected_entries_exactly_zero(self):
        e = build_edges(GraphSpec(Topology.STEP_BY_STEP, 3))
        rng = np.random.default_rng(0)
        a_s = normalize_attention(Tensor(rng.normal(size=(3, 3)).astype(np.float32)), e)
        assert a_s.data[0, 2] == 0.0
        assert a_s.data[2, 0] == 0.0
        assert np.allclose(a_s.data.sum(axis=1), 1.0, atol=1e-6)

    def test_isolated_vertex_rejected(self):
        e = EdgeMatrix(np.array([[0, 0], [0, 1]], dtype=np.int8))
        with pytest.raises(ValueError, match="isolated"):
            normalize_attention(Tensor(np.zeros((2, 2))), e)


class TestGatLayer:
    def test_uniform_attention_identity_weight_averages_neighbors(self):
        # q1 = q2 = 0 makes attention uniform over neighbors; W = I keeps features
        rng = np.random.default_rng(0)
        vm = rng.normal(size=(4, 3)).astype(np.float32)
        e = build_edges(GraphSpec(Topology.STEP_BY_STEP, 4))
        head = GatHead(Tensor(np.eye(3)), Tensor(np.zeros(3)), Tensor(np.zeros(3)))
        out = gat_layer(Tensor(vm), e, [head], head_combine="average")
        for i in range(4):
            nbrs = np.flatnonzero(e.matrix[i])
            assert np.allclose(out.data[i], vm[nbrs].mean(axis=0), atol=1e-6)

    @pytest.mark.parametrize("seed", range(6))
    def test_permutation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        n, d = 5, 4
        vm = rng.normal(size=(n, d)).astype(np.float32)
        heads = [GatHead(Tensor(rng.normal(size=(d, d)).astype(np.float32)),
                         Tensor(rng.normal(size=d).astype(np.float32)),
                         Tensor(rng.normal(size=d).astype(np.float32)))
                 for _ in range(2)]
        e = build_edges(GraphSpec(Topology.STEP_BY_STEP, n))
        perm = rng.permutation(n)
        p = np.eye(n, dtype=np.int8)[perm]
        e_perm = EdgeMatrix(p @ e.matrix @ p.T)
        out = gat_layer(Tensor(vm), e, heads, head_combine="concat")
        out_perm = gat_layer(Tensor(vm[perm]), e_perm, heads, head_combine="concat")
        assert np.allclose(out_perm.data, out.data[perm], atol=1e-5)

    def test_identical_vertices_dense_gives_identical_outputs(self):
        rng = np.random.default_rng(2)
        row = rng.normal(size=4).astype(np.float32)
        vm = np.tile(row, (5, 1))
        e = build_edges(GraphSpec(Topology.DENSE, 5))
        head = GatHead(Tensor(rng.normal(size=(4, 4)).astype(np.float32)),
                       Tensor(rng.normal(size=4).astype(np.float32)),
                       Tensor(rng.normal(size=4).astype(np.float32)))
        out = gat_layer(Tensor(vm), e, [head], head_combine="average")
        assert np.allclose(out.data, out.data[0], atol=1e-6)
        # with all vertex outputs equal, the gate is the first output and
        # the combined feature is its elementwise square
        f = [ops.take_row(out, i) for i in range(5)]
        f_t = combine_latent(f)
        assert np.allclose(f_t.data, out.data[0] * out.data[0], atol=1e-6)

    def test_unknown_combine_rejected(self):
        e = build_edges(GraphSpec(Topology.DENSE, 2))
        head = GatHead(Tensor(np.eye(2)), Tensor(np.zeros(2)), Tensor(np.zeros(2)))
        with pytest.raises(ValueError):
            gat_layer(Tensor(np.zeros((2, 2))), e, [head], head_combine="sum")


class TestCombineLatent:
    def test_two_outputs_is_plain_product(self):
        f = [Tensor([1.0, 2.0]), Tensor([3.0, 4.0])]
        assert np.allclose(combine_latent(f).data, [3.0, 8.0])

    def test_all_ones_prefix_passes_last_through(self):
        f = [Tensor(np.ones(3)), Tensor(np.ones(3)), Tensor([5.0, -1.0, 0.5])]
        assert np.allclose(combine_latent(f).data, [5.0, -1.0, 0.5])

    def test_forced_arithmetic(self):
        f = [Tensor([2.0, 0.0]), Tensor([4.0, 2.0]), Tensor([1.0, 3.0])]
        out = combine_latent(f)
        assert np.allclose(out.data, [3.0, 3.0])  # mean([2,0],[4,2]) = [3,1]; * [1,3]

    def test_single_output_rejected(self):
        with pytest.raises(ValueError):
            combine_latent([Tensor([1.0])])


class TestAdapt:
    def test_output_dim_contract(self):
        rng = np.random.default_rng(0)
        params = init_adapter_params(TINY, rng)
        spec = GraphSpec(Topology.DENSE, TINY.n_levels)
        out = adapt(tiny_stack(rng), params, spec, TINY)
        assert out.shape == (TINY.out_dim,)

    def test_identical_stacks_identical_outputs(self):
        rng = np.random.default_rng(1)
        params = init_adapter_params(TINY, rng)
        spec = GraphSpec(Topology.STEP_BY_STEP, TINY.n_levels)
        stack = tiny_stack(rng)
        a = adapt(stack, params, spec, TINY)
        b = adapt(stack, params, spec, TINY)
        assert a.data.tobytes() == b.data.tobytes()

    def test_zero_params_zero_output(self):
        rng = np.random.default_rng(2)
        params = init_adapter_params(TINY, rng)
        for _, t in params.items():
            t.data[...] = 0.0
        spec = GraphSpec(Topology.DENSE, TINY.n_levels)
        out = adapt(tiny_stack(rng), params, spec, TINY)
        assert not out.data.any()

    def test_gradients_reach_every_adapter_tensor(self):
        # leaky scores bend the score map so even the first attention
        # vectors influence the output; see the dense-graph cancellation
        # note in the adapter docs.
        cfg = AdapterConfig(level_dims=TINY.level_dims, vertex_dim=6, out_dim=5,
                            heads=2, proj_channels=2, pool_hw=2, leaky_scores=True)
        rng = np.random.default_rng(3)
        params = init_adapter_params(cfg, rng)
        spec = GraphSpec(Topology.STEP_BY_STEP, cfg.n_levels)
        out = adapt(tiny_stack(rng), params, spec, cfg)
        backward(ops.sum_all(out))
        for name, t in params.trainable_items():
            assert t.grad is not None and np.abs(t.grad).max() > 0, name


class TestFeatureStack:
    def test_needs_two_levels(self):
        with pytest.raises(ValueError):
            FeatureStack([np.zeros((1, 3, 3), dtype=np.float32)])

    def test_casts_to_float32(self):
        stack = FeatureStack([np.zeros((1, 3, 3)), np.ones((2, 3, 3))])
        assert all(lv.dtype == np.float32 for lv in stack.levels)
