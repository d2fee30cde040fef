#!/usr/bin/env python3
"""The cross-modal adapter piece by piece: edges, attention, gating.

Run: python3 demos/02_graph_adapter.py
"""

import numpy as np

from gatpad.adapter import (
    AdapterConfig,
    FeatureStack,
    GatHead,
    GraphSpec,
    Topology,
    adapt,
    attention_scores,
    build_edges,
    combine_latent,
    init_adapter_params,
    normalize_attention,
)
from gatpad.diffengine import Tensor

# --- two topologies over the level vertices -------------------------------
for topology in Topology:
    edges = build_edges(GraphSpec(topology, n=4))
    print(f"{topology.value} adjacency (self-loops on):")
    print(edges.matrix)

# --- attention scores and their masked normalization ----------------------
rng = np.random.default_rng(0)
vm = Tensor(rng.normal(size=(4, 6)).astype(np.float32))
head = GatHead(Tensor(rng.normal(size=(6, 6)).astype(np.float32)),
               Tensor(rng.normal(size=6).astype(np.float32)),
               Tensor(rng.normal(size=6).astype(np.float32)))
edges = build_edges(GraphSpec(Topology.STEP_BY_STEP, 4))
raw, mask = attention_scores(vm, head.w, head.q1, head.q2, edges)
weights = normalize_attention(raw, edges)
print("normalized attention (chain; zeros where no edge):")
print(np.round(weights.data, 3))
print("row sums:", weights.data.sum(axis=1))

# --- latent gating: mean of the early outputs gates the last one -----------
f = [Tensor([2.0, 0.0]), Tensor([4.0, 2.0]), Tensor([1.0, 3.0])]
print("combine_latent([2,0],[4,2],[1,3]) =", combine_latent(f).data, "(mean [3,1] times [1,3])")

# --- the full adapter on one feature stack ---------------------------------
cfg = AdapterConfig()
params = init_adapter_params(cfg, np.random.default_rng(1))
stack = FeatureStack([rng.normal(size=d).astype(np.float32) for d in cfg.level_dims])
f_t = adapt(stack, params, GraphSpec(Topology.STEP_BY_STEP, cfg.n_levels), cfg)
print("adapted feature: shape", f_t.shape, "norm", float(np.linalg.norm(f_t.data)))
