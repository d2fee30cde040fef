"""Cross-modal feature adapter.

Multi-level feature maps tapped from a frozen auxiliary network are
projected into graph vertices (one vertex per level), re-mapped by a
two-layer multi-head graph attention network over a chain or dense
topology, and squeezed into a single output vector: the mean of all but
the last vertex output gates the last one elementwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .diffengine import ParamSet, Tensor, glorot_uniform, ops, zeros
from .diffengine.tensor import ShapeError

__all__ = [
    "Topology",
    "GraphSpec",
    "EdgeMatrix",
    "FeatureStack",
    "VertexSet",
    "AdapterConfig",
    "GatHead",
    "init_adapter_params",
    "build_edges",
    "project_features",
    "attention_scores",
    "normalize_attention",
    "gat_layer",
    "combine_latent",
    "adapt",
    "adapt_batch",
]


class Topology(str, enum.Enum):
    """Vertex connectivity: a chain over the level order, or all pairs."""

    STEP_BY_STEP = "step_by_step"
    DENSE = "dense"


@dataclass(frozen=True)
class GraphSpec:
    topology: Topology
    n: int
    self_loops: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"graph needs at least one vertex, got n={self.n}")
        object.__setattr__(self, "topology", Topology(self.topology))


@dataclass(frozen=True)
class EdgeMatrix:
    """Binary symmetric adjacency; diagonal is all ones iff self-loops."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int8)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"edge matrix must be square, got {m.shape}")
        if not np.isin(m, (0, 1)).all():
            raise ValueError("edge matrix must be binary")
        if not np.array_equal(m, m.T):
            raise ValueError("edge matrix must be symmetric")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return self.matrix.astype(bool)

    def edge_count(self) -> int:
        """Undirected edges, self-loops excluded."""
        off_diag = self.matrix.sum() - np.trace(self.matrix)
        return int(off_diag) // 2


@dataclass
class FeatureStack:
    """Ordered multi-level features from one frozen auxiliary network.

    Level index is depth in the source network; at least two levels are
    required because the head gates the last level by the mean of the rest.
    """

    levels: list[np.ndarray]
    source_tag: str = "synthetic"

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValueError(f"need at least 2 feature levels, got {len(self.levels)}")
        cast = []
        for i, lv in enumerate(self.levels):
            arr = np.asarray(lv, dtype=np.float32)
            if arr.ndim != 3:
                raise ValueError(f"level {i} must be (channels, h, w), got shape {arr.shape}")
            cast.append(arr)
        self.levels = cast

    @property
    def n(self) -> int:
        return len(self.levels)

    def level_dims(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(lv.shape for lv in self.levels)


@dataclass(frozen=True)
class VertexSet:
    """One d-dimensional vertex per feature level, rows in level order."""

    matrix: Tensor

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class AdapterConfig:
    """Dimensions and switches of the adapter.

    The projection block per level is conv3x3 -> relu -> adaptive average
    pool to ``pool_hw`` -> flatten -> linear to ``vertex_dim``. Attention
    runs 2 layers with ``heads`` heads each: concat combine after layer 1,
    average after layer 2, leaky-relu between the layers only.
    ``leaky_scores`` optionally bends raw attention scores with
    leaky-relu(0.2) before normalization (off by default: the score map
    is affine unless asked otherwise).
    """

    level_dims: tuple[tuple[int, int, int], ...] = (
        (4, 16, 16), (8, 8, 8), (16, 4, 4), (32, 4, 4),
    )
    vertex_dim: int = 64
    out_dim: int = 64
    heads: int = 2
    proj_channels: int = 16
    pool_hw: int = 4
    alpha: float = 0.2
    leaky_scores: bool = False

    def __post_init__(self):
        if len(self.level_dims) < 2:
            raise ValueError("adapter needs at least 2 levels")
        if self.heads < 1:
            raise ValueError("adapter needs at least 1 attention head")

    @property
    def n_levels(self) -> int:
        return len(self.level_dims)

    @property
    def flat_proj_dim(self) -> int:
        return self.proj_channels * self.pool_hw * self.pool_hw


class GatHead(NamedTuple):
    """Per-head trainables: shared map w plus the two attention vectors."""

    w: Tensor
    q1: Tensor
    q2: Tensor


def init_adapter_params(cfg: AdapterConfig, rng: np.random.Generator,
                        params: ParamSet | None = None, prefix: str = "adapter") -> ParamSet:
    """Glorot-uniform weights, zero biases, under ``prefix.*`` paths."""
    params = ParamSet() if params is None else params
    pc = cfg.proj_channels
    for i, (c, _, _) in enumerate(cfg.level_dims):
        params.add(f"{prefix}.proj{i}.conv.w",
                   glorot_uniform(rng, (pc, c, 3, 3), fan_in=c * 9, fan_out=pc * 9))
        params.add(f"{prefix}.proj{i}.conv.b", zeros((pc,)))
        params.add(f"{prefix}.proj{i}.lin.w",
                   glorot_uniform(rng, (cfg.vertex_dim, cfg.flat_proj_dim),
                                  fan_in=cfg.flat_proj_dim, fan_out=cfg.vertex_dim))
        params.add(f"{prefix}.proj{i}.lin.b", zeros((cfg.vertex_dim,)))
    layer_dims = [
        (cfg.vertex_dim, cfg.vertex_dim),                # layer 1, combined by concat
        (cfg.heads * cfg.vertex_dim, cfg.out_dim),       # layer 2, combined by average
    ]
    for layer, (din, dout) in enumerate(layer_dims, start=1):
        for h in range(1, cfg.heads + 1):
            params.add(f"{prefix}.gat{layer}.head{h}.w",
                       glorot_uniform(rng, (dout, din), fan_in=din, fan_out=dout))
            params.add(f"{prefix}.gat{layer}.head{h}.q1",
                       glorot_uniform(rng, (dout,), fan_in=dout, fan_out=1))
            params.add(f"{prefix}.gat{layer}.head{h}.q2",
                       glorot_uniform(rng, (dout,), fan_in=dout, fan_out=1))
    return params


def gat_heads(params: ParamSet, layer: int, cfg: AdapterConfig,
              prefix: str = "adapter") -> list[GatHead]:
    return [
        GatHead(
            params[f"{prefix}.gat{layer}.head{h}.w"],
            params[f"{prefix}.gat{layer}.head{h}.q1"],
            params[f"{prefix}.gat{layer}.head{h}.q2"],
        )
        for h in range(1, cfg.heads + 1)
    ]


def build_edges(spec: GraphSpec) -> EdgeMatrix:
    """Binary symmetric adjacency for the chosen topology."""
    n = spec.n
    m = np.zeros((n, n), dtype=np.int8)
    if spec.topology is Topology.DENSE:
        m[:] = 1
        np.fill_diagonal(m, 0)
    else:
        for i in range(n - 1):
            m[i, i + 1] = m[i + 1, i] = 1
    if spec.self_loops:
        np.fill_diagonal(m, 1)
    return EdgeMatrix(m)


def _project_levels_batch(level_batches: Sequence[Tensor], params: ParamSet,
                          cfg: AdapterConfig, prefix: str = "adapter") -> list[Tensor]:
    """Per level: conv -> relu -> pool -> flatten -> linear, batched.

    ``level_batches[i]`` has shape [batch, c_i, h_i, w_i]; each output is
    [batch, vertex_dim].
    """
    if len(level_batches) != cfg.n_levels:
        raise ShapeError(
            f"stack has {len(level_batches)} levels, adapter configured for {cfg.n_levels}")
    outs = []
    for i, x in enumerate(level_batches):
        want_c = cfg.level_dims[i][0]
        if x.ndim != 4 or x.shape[1] != want_c:
            raise ShapeError(
                f"level {i}: expected [batch, {want_c}, h, w], got {x.shape}")
        y = ops.conv2d(x, params[f"{prefix}.proj{i}.conv.w"],
                       params[f"{prefix}.proj{i}.conv.b"], stride=1)
        y = ops.relu(y)
        y = ops.adaptive_avg_pool(y, (cfg.pool_hw, cfg.pool_hw))
        y = ops.reshape(y, (x.shape[0], cfg.flat_proj_dim))
        y = ops.linear(y, params[f"{prefix}.proj{i}.lin.w"], params[f"{prefix}.proj{i}.lin.b"])
        outs.append(y)
    return outs


def project_features(stack: FeatureStack, params: ParamSet, cfg: AdapterConfig,
                     prefix: str = "adapter") -> VertexSet:
    """Project one stack into its vertex matrix [n, vertex_dim]."""
    batches = [Tensor(lv[None]) for lv in stack.levels]
    projs = _project_levels_batch(batches, params, cfg, prefix)
    return VertexSet(ops.stack_rows([ops.take_row(p, 0) for p in projs]))


def _as_matrix(v: VertexSet | Tensor) -> Tensor:
    m = v.matrix if isinstance(v, VertexSet) else v
    if m.ndim != 2:
        raise ShapeError(f"vertex matrix must be 2-D, got {m.shape}")
    return m


def _col(q: Tensor) -> Tensor:
    return ops.reshape(q, (q.shape[0], 1))


def _head_scores(vm: Tensor, head: GatHead, leaky_scores: bool) -> tuple[Tensor, Tensor]:
    """Mapped vertices H = V W^T and the raw score matrix A, A[i,j] = s_i + r_j."""
    n = vm.shape[0]
    h = ops.matmul(vm, ops.transpose(head.w))
    s = ops.matmul(h, _col(head.q1))
    r = ops.matmul(h, _col(head.q2))
    ones_row = Tensor(np.ones((1, n)), dtype=vm.data.dtype)
    a = ops.add(ops.matmul(s, ones_row), ops.transpose(ops.matmul(r, ones_row)))
    if leaky_scores:
        a = ops.leaky_relu(a, 0.2)
    return h, a


def attention_scores(v: VertexSet | Tensor, w: Tensor, q1: Tensor, q2: Tensor,
                     edges: EdgeMatrix, leaky_scores: bool = False) -> tuple[Tensor, np.ndarray]:
    """Raw pairwise scores plus the connectivity mask.

    Connected entries hold s_i + r_j with s = (V W^T) q1 and r = (V W^T) q2
    evaluated per vertex; disconnected entries are reported through the
    returned boolean mask rather than being zeroed, since a zero score
    would still win softmax weight.
    """
    vm = _as_matrix(v)
    if edges.n != vm.shape[0]:
        raise ShapeError(f"edge matrix is {edges.n}x{edges.n} but there are {vm.shape[0]} vertices")
    _, a = _head_scores(vm, GatHead(w, q1, q2), leaky_scores)
    return a, edges.mask


def normalize_attention(a: Tensor, edges: EdgeMatrix) -> Tensor:
    """Row-wise softmax over connected vertices only.

    Disconnected entries come out exactly 0 and every row sums to 1; a
    vertex with no neighbor at all (no self-loop either) is an error.
    """
    try:
        return ops.softmax_masked(a, edges.mask)
    except ValueError as err:
        raise ValueError("isolated vertex: add self-loops or connect it") from err


def gat_layer(v: VertexSet | Tensor, edges: EdgeMatrix, heads: Sequence[GatHead],
              head_combine: str = "concat", leaky_scores: bool = False,
              activation_alpha: float | None = None) -> Tensor:
    """One attention layer: per head A_s (V W^T), then combine heads.

    ``head_combine`` is "concat" or "average". ``activation_alpha`` applies
    leaky-relu after combining (used between stacked layers, never after
    the final one).
    """
    if head_combine not in ("concat", "average"):
        raise ValueError(f"unknown head_combine: {head_combine!r}")
    vm = _as_matrix(v)
    if edges.n != vm.shape[0]:
        raise ShapeError(f"edge matrix is {edges.n}x{edges.n} but there are {vm.shape[0]} vertices")
    per_head = []
    for head in heads:
        h, a = _head_scores(vm, head, leaky_scores)
        a_s = normalize_attention(a, edges)
        per_head.append(ops.matmul(a_s, h))
    if head_combine == "concat":
        out = per_head[0] if len(per_head) == 1 else ops.concat(per_head, axis=1)
    else:
        acc = per_head[0]
        for extra in per_head[1:]:
            acc = ops.add(acc, extra)
        out = ops.scale(acc, 1.0 / len(per_head))
    if activation_alpha is not None:
        out = ops.leaky_relu(out, activation_alpha)
    return out


def combine_latent(f: Sequence[Tensor]) -> Tensor:
    """Gate the last vertex output by the mean of all earlier ones."""
    if len(f) < 2:
        raise ValueError(f"latent combination needs >= 2 vertex outputs, got {len(f)}")
    acc = f[0]
    for t in f[1:-1]:
        acc = ops.add(acc, t)
    f_w = ops.scale(acc, 1.0 / (len(f) - 1))
    return ops.mul(f_w, f[-1])


def adapt_batch(level_batches: Sequence[Tensor], params: ParamSet, spec: GraphSpec,
                cfg: AdapterConfig, prefix: str = "adapter") -> Tensor:
    """Run the full adapter over a batch; returns [batch, out_dim]."""
    if spec.n != cfg.n_levels:
        raise ShapeError(f"graph has {spec.n} vertices but adapter has {cfg.n_levels} levels")
    projs = _project_levels_batch(level_batches, params, cfg, prefix)
    batch = projs[0].shape[0]
    edges = build_edges(spec)
    heads1 = gat_heads(params, 1, cfg, prefix)
    heads2 = gat_heads(params, 2, cfg, prefix)
    outs = []
    for j in range(batch):
        vm = ops.stack_rows([ops.take_row(p, j) for p in projs])
        v1 = gat_layer(vm, edges, heads1, head_combine="concat",
                       leaky_scores=cfg.leaky_scores, activation_alpha=cfg.alpha)
        v2 = gat_layer(v1, edges, heads2, head_combine="average",
                       leaky_scores=cfg.leaky_scores, activation_alpha=None)
        outs.append(combine_latent([ops.take_row(v2, i) for i in range(spec.n)]))
    return ops.stack_rows(outs)


def adapt(stack: FeatureStack, params: ParamSet, spec: GraphSpec, cfg: AdapterConfig,
          prefix: str = "adapter") -> Tensor:
    """Project one stack, attend over the graph, return the gated output."""
    if stack.n != cfg.n_levels:
        raise ShapeError(f"stack has {stack.n} levels, adapter configured for {cfg.n_levels}")
    batches = [Tensor(lv[None]) for lv in stack.levels]
    out = adapt_batch(batches, params, spec, cfg, prefix)
    return ops.take_row(out, 0)
