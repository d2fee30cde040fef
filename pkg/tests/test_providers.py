import dataclasses

import numpy as np
import pytest

from gatpad.adapter import FeatureStack
from gatpad.detector import Sample
from gatpad.diffengine import ParamSet, Tensor
from gatpad.providers import (
    ContainerFormatError,
    SynthSpec,
    container_manifest,
    generate_synthetic,
    load_checkpoint,
    load_container,
    params_from_bytes,
    params_to_bytes,
    read_container,
    samples_equal,
    save_checkpoint,
    save_container,
    write_container,
)

TINY_SPEC = SynthSpec(count_per_class=5, level_dims=((2, 4, 4), (3, 4, 4)),
                      raw_dims=(3, 8, 8), seed=1)


def random_samples(rng, count=3, level_dims=((2, 3, 3), (1, 4, 4)), dataset_id="x"):
    out = []
    for i in range(count):
        stack = FeatureStack([rng.normal(size=d).astype(np.float32) for d in level_dims])
        out.append(Sample(raw_input=rng.normal(size=(3, 4, 4)).astype(np.float32),
                          feature_stack=stack, label=int(rng.integers(0, 2)),
                          dataset_id=dataset_id))
    return out


class TestContainerRoundTrip:
    def test_empty_list_header_only(self):
        blob = write_container([])
        assert read_container(blob) == []
        assert len(blob) == 4 + 2 + 4 + 1  # magic, version, count, level count

    def test_single_sample_bitwise(self):
        rng = np.random.default_rng(0)
        samples = random_samples(rng, count=1)
        back = read_container(write_container(samples))
        assert len(back) == 1
        assert samples_equal(samples[0], back[0])

    @pytest.mark.parametrize("seed", range(10))
    def test_randomized_round_trip_property(self, seed):
        rng = np.random.default_rng(seed)
        dims = tuple(tuple(rng.integers(1, 5, size=3)) for _ in range(rng.integers(2, 5)))
        samples = random_samples(rng, count=int(rng.integers(0, 6)), level_dims=dims,
                                 dataset_id=f"set-{seed}")
        blob = write_container(samples)
        back = read_container(blob)
        assert len(back) == len(samples)
        assert all(samples_equal(a, b) for a, b in zip(samples, back))
        # a second encode of the decoded samples is byte-identical
        assert write_container(back) == blob

    def test_unicode_dataset_id(self):
        rng = np.random.default_rng(3)
        samples = random_samples(rng, count=1, dataset_id="données-α")
        back = read_container(write_container(samples))
        assert back[0].dataset_id == "données-α"


class TestContainerErrors:
    def test_bad_magic(self):
        with pytest.raises(ContainerFormatError, match="magic"):
            read_container(b"NOPE" + b"\x00" * 16)

    def test_bad_version(self):
        rng = np.random.default_rng(0)
        blob = bytearray(write_container(random_samples(rng, count=1)))
        blob[4] = 9
        with pytest.raises(ContainerFormatError, match="version"):
            read_container(bytes(blob))

    def test_truncated_payload(self):
        rng = np.random.default_rng(1)
        blob = write_container(random_samples(rng, count=2))
        with pytest.raises(ContainerFormatError, match="truncated"):
            read_container(blob[:-7])

    def test_corrupted_count_field(self):
        rng = np.random.default_rng(2)
        blob = bytearray(write_container(random_samples(rng, count=1)))
        blob[6:10] = (999).to_bytes(4, "little")  # declare far more samples
        with pytest.raises(ContainerFormatError):
            read_container(bytes(blob))

    def test_trailing_garbage(self):
        rng = np.random.default_rng(3)
        blob = write_container(random_samples(rng, count=1))
        with pytest.raises(ContainerFormatError, match="trailing"):
            read_container(blob + b"\x00")

    def test_bad_label_byte(self):
        rng = np.random.default_rng(4)
        samples = random_samples(rng, count=1)
        blob = bytearray(write_container(samples))
        header = 4 + 2 + 4 + 1 + 6 * len(samples[0].feature_stack.levels)
        blob[header] = 7  # label byte of sample 0
        with pytest.raises(ContainerFormatError, match="label"):
            read_container(bytes(blob))

    def test_inconsistent_level_dims_rejected_on_write(self):
        rng = np.random.default_rng(5)
        a = random_samples(rng, count=1, level_dims=((2, 3, 3), (1, 4, 4)))[0]
        b = random_samples(rng, count=1, level_dims=((2, 3, 3), (1, 5, 5)))[0]
        with pytest.raises(ContainerFormatError):
            write_container([a, b])


class TestContainerFiles:
    def test_save_load_with_manifest(self, tmp_path):
        rng = np.random.default_rng(6)
        samples = random_samples(rng, count=4, dataset_id="disk")
        path = save_container(tmp_path / "d.fstk", samples)
        back = load_container(path)
        assert all(samples_equal(a, b) for a, b in zip(samples, back))
        manifest = (tmp_path / "d.fstk.manifest.json").read_text()
        assert '"sample_count": 4' in manifest
        assert '"disk"' in manifest

    def test_manifest_counts(self):
        rng = np.random.default_rng(7)
        samples = random_samples(rng, count=5)
        m = container_manifest("f.fstk", samples)
        assert m["sample_count"] == 5
        assert m["labels"]["attack"] + m["labels"]["bonafide"] == 5


class TestSynthetic:
    def test_determinism_bitwise(self):
        a = generate_synthetic(TINY_SPEC)
        b = generate_synthetic(TINY_SPEC)
        assert all(samples_equal(x, y) for x, y in zip(a, b))

    def test_distinct_seeds_differ(self):
        a = generate_synthetic(TINY_SPEC)
        b = generate_synthetic(dataclasses.replace(TINY_SPEC, seed=2))
        assert not samples_equal(a[0], b[0])

    def test_counts_and_labels(self):
        samples = generate_synthetic(TINY_SPEC)
        labels = [s.label for s in samples]
        assert len(samples) == 10
        assert labels.count(0) == 5 and labels.count(1) == 5
        assert set(labels) == {0, 1}

    def test_features_only_raw_is_class_independent(self):
        # raw pixels are drawn before any label-dependent term is applied,
        # so the per-class raw distributions coincide by construction
        spec = dataclasses.replace(TINY_SPEC, count_per_class=300,
                                   signal_target="features_only")
        samples = generate_synthetic(spec)
        raw = np.stack([s.raw_input for s in samples])
        labels = np.array([s.label for s in samples])
        gap = raw[labels == 1].mean() - raw[labels == 0].mean()
        n = (labels == 1).sum() * raw[0].size
        assert abs(gap) < 5.0 * spec.noise_std * np.sqrt(2.0 / n)

    def test_domain_shift_moves_raw_channels(self):
        spec = dataclasses.replace(TINY_SPEC, count_per_class=200,
                                   signal_target="features_only",
                                   domain_shift=(2.0, 0.0, -1.0))
        samples = generate_synthetic(spec)
        raw = np.stack([s.raw_input for s in samples])
        means = raw.mean(axis=(0, 2, 3))
        assert abs(means[0] - 2.0) < 0.1
        assert abs(means[1]) < 0.1
        assert abs(means[2] + 1.0) < 0.1

    def test_linear_probe_separates_features_only(self):
        # independent oracle: least-squares probe on the flattened stacks
        spec = dataclasses.replace(TINY_SPEC, count_per_class=200,
                                   signal_target="features_only", seed=9)
        samples = generate_synthetic(spec)
        x = np.stack([np.concatenate([lv.ravel() for lv in s.feature_stack.levels])
                      for s in samples])
        y = np.array([s.label for s in samples]) * 2.0 - 1.0
        idx = np.random.default_rng(0).permutation(len(samples))
        half = len(samples) // 2
        tr, te = idx[:half], idx[half:]
        design = np.c_[x[tr], np.ones(half)]
        w, *_ = np.linalg.lstsq(design, y[tr], rcond=None)
        pred = np.sign(np.c_[x[te], np.ones(len(te))] @ w)
        assert (pred == y[te]).mean() >= 0.95

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            SynthSpec(count_per_class=0)
        with pytest.raises(ValueError):
            SynthSpec(noise_std=-1.0)
        with pytest.raises(ValueError):
            SynthSpec(signal_target="nowhere")
        with pytest.raises(ValueError):
            SynthSpec(domain_shift=(1.0,))


class TestCheckpoints:
    def test_round_trip_with_config(self, tmp_path):
        rng = np.random.default_rng(8)
        ps = ParamSet()
        ps.add("layer.w", Tensor(rng.normal(size=(3, 4)).astype(np.float32)))
        ps.add("frozen.b", Tensor(rng.normal(size=(2,)).astype(np.float32)), trainable=False)
        path = save_checkpoint(tmp_path / "m.bin", ps, {"note": 1})
        back, cfg = load_checkpoint(path)
        assert cfg == {"note": 1}
        assert back.names() == ps.names()
        assert np.array_equal(back["layer.w"].data, ps["layer.w"].data)
        assert back["layer.w"].requires_grad
        assert not back["frozen.b"].requires_grad

    def test_bad_magic(self):
        with pytest.raises(ContainerFormatError):
            params_from_bytes(b"XXXX" + b"\x00" * 12)

    def test_truncation(self):
        ps = ParamSet()
        ps.add("w", Tensor(np.ones(4, dtype=np.float32)))
        blob = params_to_bytes(ps)
        with pytest.raises(ContainerFormatError):
            params_from_bytes(blob[:-3])
