"""Finite-difference verification of every primitive and composition.

Runs each check over many seeds in float64 and reports the worst relative
error per op. Sizes are kept tiny so the whole suite, including the
end-to-end model composition, stays well under the two-minute budget.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import adapter as adapter_mod
from . import detector as detector_mod
from .adapter import AdapterConfig, Topology
from .detector import DetectorConfig, ModelConfig
from .diffengine import ParamSet, Tensor, ops
from .diffengine.gradcheck import check_grads

__all__ = ["GRADCHECK_TOLERANCE", "run_gradient_suite", "check_model_composition"]

GRADCHECK_TOLERANCE = 1e-4


def _away_from_zero(rng, size, low=0.2, high=1.5):
    """Samples with |x| in [low, high]; keeps kinked ops off their corner."""
    mag = rng.uniform(low, high, size=size)
    sign = rng.choice([-1.0, 1.0], size=size)
    return mag * sign


def _weighted(out: Tensor, r: np.ndarray) -> Tensor:
    """Scalar head: random fixed projection of the op output."""
    return ops.sum_all(ops.mul(out, Tensor(r, dtype=np.float64)))


def _check_matmul(rng):
    a = rng.normal(size=(4, 3))
    b = rng.normal(size=(3, 2))
    r = rng.normal(size=(4, 2))
    return check_grads(lambda a, b: _weighted(ops.matmul(a, b), r), {"a": a, "b": b})


def _check_linear(rng):
    x = rng.normal(size=(3, 5))
    w = rng.normal(size=(4, 5))
    b = rng.normal(size=(4,))
    r = rng.normal(size=(3, 4))
    return check_grads(lambda x, w, b: _weighted(ops.linear(x, w, b), r),
                       {"x": x, "w": w, "b": b})


def _check_conv2d_stride1(rng):
    x = rng.normal(size=(2, 4, 5))
    k = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=(3,))
    r = rng.normal(size=(3, 4, 5))
    return check_grads(lambda x, k, b: _weighted(ops.conv2d(x, k, b, stride=1), r),
                       {"x": x, "k": k, "b": b})


def _check_conv2d_stride2(rng):
    x = rng.normal(size=(1, 2, 5, 5))
    k = rng.normal(size=(2, 2, 3, 3))
    b = rng.normal(size=(2,))
    r = rng.normal(size=(1, 2, 3, 3))
    return check_grads(lambda x, k, b: _weighted(ops.conv2d(x, k, b, stride=2), r),
                       {"x": x, "k": k, "b": b})


def _check_add_mul(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4))
    r = rng.normal(size=(3, 4))
    return check_grads(lambda a, b: _weighted(ops.add(ops.mul(a, b), a), r),
                       {"a": a, "b": b})


def _check_relu(rng):
    x = _away_from_zero(rng, (4, 4))
    r = rng.normal(size=(4, 4))
    return check_grads(lambda x: _weighted(ops.relu(x), r), {"x": x})


def _check_leaky_relu(rng):
    x = _away_from_zero(rng, (4, 4))
    r = rng.normal(size=(4, 4))
    return check_grads(lambda x: _weighted(ops.leaky_relu(x, 0.2), r), {"x": x})


def _check_exp(rng):
    x = rng.uniform(-2.0, 2.0, size=(3, 3))
    r = rng.normal(size=(3, 3))
    return check_grads(lambda x: _weighted(ops.exp(x), r), {"x": x})


def _check_log(rng):
    x = rng.uniform(0.3, 3.0, size=(3, 3))
    r = rng.normal(size=(3, 3))
    return check_grads(lambda x: _weighted(ops.log(x), r), {"x": x})


def _check_avg_pool(rng):
    x = rng.normal(size=(3, 6))
    r = rng.normal(size=(3,))
    return check_grads(lambda x: _weighted(ops.avg_pool(x), r), {"x": x})


def _check_adaptive_avg_pool(rng):
    x = rng.normal(size=(2, 7, 5))
    r = rng.normal(size=(2, 3, 3))
    return check_grads(lambda x: _weighted(ops.adaptive_avg_pool(x, (3, 3)), r), {"x": x})


def _check_concat_reshape(rng):
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 2))
    r = rng.normal(size=(10,))

    def build(a, b):
        joined = ops.concat([a, b], axis=1)
        return _weighted(ops.flatten(joined), r)

    return check_grads(build, {"a": a, "b": b})


def _check_rows(rng):
    a = rng.normal(size=(3,))
    b = rng.normal(size=(3,))
    m = rng.normal(size=(4, 3))
    r = rng.normal(size=(3, 3))

    def build(a, b, m):
        stacked = ops.stack_rows([a, b, ops.take_row(m, 2)])
        return _weighted(stacked, r)

    return check_grads(build, {"a": a, "b": b, "m": m})


def _check_softmax_masked(rng):
    x = rng.normal(size=(8,))
    mask = rng.random(8) < 0.6
    if not mask.any():
        mask[0] = True
    r = rng.normal(size=(8,))
    return check_grads(lambda x: _weighted(ops.softmax_masked(x, mask), r), {"x": x})


def _check_cross_entropy(rng):
    logits = rng.normal(size=(3, 2))
    labels = rng.integers(0, 2, size=3)
    return check_grads(lambda logits: ops.cross_entropy(logits, labels), {"logits": logits})


def _check_composed_net(rng):
    """conv -> relu -> linear -> cross-entropy, all params checked."""
    x = rng.normal(size=(2, 4, 4))
    k = rng.normal(size=(2, 2, 3, 3))
    kb = rng.normal(size=(2,))
    w = rng.normal(size=(2, 2 * 4 * 4))
    b = rng.normal(size=(2,))
    labels = np.array([rng.integers(0, 2)])

    def build(x, k, kb, w, b):
        y = ops.relu(ops.conv2d(x, k, kb, stride=1))
        y = ops.reshape(ops.flatten(y), (1, 2 * 4 * 4))
        logits = ops.linear(y, w, b)
        return ops.cross_entropy(logits, labels)

    return check_grads(build, {"x": x, "k": k, "kb": kb, "w": w, "b": b})


_TINY_ADAPTER = AdapterConfig(level_dims=((2, 4, 4), (3, 4, 4)), vertex_dim=5,
                              out_dim=4, heads=2, proj_channels=2, pool_hw=2)
_TINY_DETECTOR = DetectorConfig(input_dims=(2, 4, 4), channels=(2,), feature_dim=4)


def _tiny_model(topology=Topology.STEP_BY_STEP, adapter_enabled=True) -> ModelConfig:
    return ModelConfig(detector=_TINY_DETECTOR, adapter=_TINY_ADAPTER,
                       adapter_enabled=adapter_enabled, topology=topology)


def _random_param_arrays(cfg: ModelConfig, rng) -> dict[str, np.ndarray]:
    params = detector_mod.build_params(cfg, seed=int(rng.integers(0, 2**31)))
    # biases start at zero; perturb everything so the check point is generic
    return {name: t.data.astype(np.float64) + 0.05 * rng.normal(size=t.shape)
            for name, t in params.items()}


def _rebuild_params(arrays: dict[str, Tensor]) -> ParamSet:
    ps = ParamSet()
    for name, t in arrays.items():
        ps.add(name, t, trainable=True)
    return ps


def _check_adapt_end_to_end(rng):
    cfg = _tiny_model(topology=Topology(rng.choice([t.value for t in Topology])))
    arrays = {k: v for k, v in _random_param_arrays(cfg, rng).items()
              if k.startswith("adapter.")}
    levels = [rng.normal(size=(1,) + d) for d in cfg.adapter.level_dims]
    r = rng.normal(size=(cfg.adapter.out_dim,))
    spec = cfg.graph_spec()

    def build(**tensors):
        ps = _rebuild_params(tensors)
        batches = [Tensor(lv, dtype=np.float64) for lv in levels]
        out = adapter_mod.adapt_batch(batches, ps, spec, cfg.adapter)
        return _weighted(ops.take_row(out, 0), r)

    return check_grads(build, arrays)


def _check_detect_end_to_end(rng):
    cfg = _tiny_model(adapter_enabled=False)
    arrays = {k: v for k, v in _random_param_arrays(cfg, rng).items()
              if k.startswith("detector.")}
    x = rng.normal(size=cfg.detector.input_dims)
    r = rng.normal(size=(cfg.detector.feature_dim,))

    def build(**tensors):
        ps = _rebuild_params(tensors)
        f_p = detector_mod.detect_features(Tensor(x, dtype=np.float64), ps, cfg.detector)
        return _weighted(f_p, r)

    return check_grads(build, arrays)


def _check_loss_end_to_end(rng):
    """Full composition: detect + adapt + fuse + classify + cross-entropy."""
    cfg = _tiny_model(topology=Topology(rng.choice([t.value for t in Topology])))
    arrays = _random_param_arrays(cfg, rng)
    raw = rng.normal(size=(2,) + cfg.detector.input_dims)
    levels = [rng.normal(size=(2,) + d) for d in cfg.adapter.level_dims]
    labels = np.array([0, 1])
    spec = cfg.graph_spec()

    def build(**tensors):
        ps = _rebuild_params(tensors)
        f_p = detector_mod.detect_features(Tensor(raw, dtype=np.float64), ps, cfg.detector)
        f_t = adapter_mod.adapt_batch([Tensor(lv, dtype=np.float64) for lv in levels],
                                      ps, spec, cfg.adapter)
        logits = detector_mod.classify(detector_mod.fuse(f_p, f_t), ps)
        return ops.cross_entropy(logits, labels)

    return check_grads(build, arrays)


_CHECKS: dict[str, Callable] = {
    "matmul": _check_matmul,
    "linear": _check_linear,
    "conv2d_stride1": _check_conv2d_stride1,
    "conv2d_stride2": _check_conv2d_stride2,
    "add_mul": _check_add_mul,
    "relu": _check_relu,
    "leaky_relu": _check_leaky_relu,
    "exp": _check_exp,
    "log": _check_log,
    "avg_pool": _check_avg_pool,
    "adaptive_avg_pool": _check_adaptive_avg_pool,
    "concat_flatten": _check_concat_reshape,
    "take_stack_rows": _check_rows,
    "softmax_masked": _check_softmax_masked,
    "cross_entropy": _check_cross_entropy,
    "composed_conv_net": _check_composed_net,
    "adapt_end_to_end": _check_adapt_end_to_end,
    "detect_end_to_end": _check_detect_end_to_end,
    "loss_end_to_end": _check_loss_end_to_end,
}


def check_model_composition(seed: int = 0) -> float:
    return _check_loss_end_to_end(np.random.default_rng(seed))


def run_gradient_suite(seeds: int = 20, verbose: bool = False) -> dict[str, float]:
    """Worst relative error per op over ``seeds`` random instances each."""
    results = {}
    for name, fn in _CHECKS.items():
        worst = 0.0
        for s in range(seeds):
            rng = np.random.default_rng(1000 * s + hash(name) % 997)
            worst = max(worst, fn(rng))
        results[name] = worst
        if verbose:
            status = "ok" if worst <= GRADCHECK_TOLERANCE else "FAIL"
            print(f"  {name:24s} max rel err {worst:10.3e}  [{status}]")
    return results
