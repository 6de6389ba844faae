import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmc.clustering import dbscan
from xmc.dataspace import (
    FeatureSet,
    HeaderError,
    Modality,
    NonFiniteError,
    RowLengthError,
    RowParseError,
    SynthConfig,
    ZeroRowError,
    generate_synthetic,
    l2_normalize,
    load_features,
    save_features,
)
from xmc.evaluator import label_quality

from oracles import ari_pair_counting


class TestNormalize:
    def test_three_four(self):
        np.testing.assert_allclose(l2_normalize([[3.0, 4.0]]), [[0.6, 0.8]], atol=1e-15)

    def test_unit_row_unchanged(self):
        row = np.array([[0.6, 0.8]])
        np.testing.assert_allclose(l2_normalize(row), row, atol=1e-15)

    def test_zero_row_names_index(self):
        with pytest.raises(ZeroRowError) as info:
            l2_normalize([[1.0, 0.0], [0.0, 0.0]])
        assert info.value.row == 1

    @given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=1, max_size=8))
    def test_rows_unit_norm(self, rows):
        x = np.array(rows)
        if np.any(np.linalg.norm(x, axis=1) < 1e-6):
            return
        np.testing.assert_allclose(np.linalg.norm(l2_normalize(x), axis=1), 1.0, atol=1e-6)


class TestFeatureSet:
    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValueError, match="unique"):
            FeatureSet(Modality.VISIBLE, np.eye(2), [0, 0])

    def test_rejects_truth_length(self):
        with pytest.raises(ValueError, match="truth"):
            FeatureSet(Modality.VISIBLE, np.eye(2), [0, 1], truth=[0])

    def test_rejects_dim_one(self):
        with pytest.raises(ValueError):
            FeatureSet(Modality.VISIBLE, np.ones((2, 1)), [0, 1])

    def test_rejects_non_unit_rows(self):
        with pytest.raises(ValueError, match="unit norm"):
            FeatureSet(Modality.VISIBLE, [[3.0, 4.0]], [0])


class TestSynthetic:
    def test_deterministic(self):
        cfg = SynthConfig(num_identities=5, samples_per_identity_per_modality=4, dim=8, seed=7)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        for x, y in zip(a, b):
            assert x.features.tobytes() == y.features.tobytes()
            assert np.array_equal(x.truth, y.truth)

    def test_seed_changes_output(self):
        base = SynthConfig(num_identities=5, samples_per_identity_per_modality=4, dim=8)
        v1, _ = generate_synthetic(base)
        v2, _ = generate_synthetic(SynthConfig(num_identities=5, samples_per_identity_per_modality=4, dim=8, seed=1))
        assert not np.array_equal(v1.features, v2.features)

    def test_zero_noise_identities_collapse(self):
        cfg = SynthConfig(num_identities=6, samples_per_identity_per_modality=5, dim=16,
                          intra_identity_spread=0.0, modality_offset_scale=0.0,
                          fragmentation_rate=0.0, seed=3)
        v, i = generate_synthetic(cfg)
        for fs in (v, i):
            assert np.unique(fs.features, axis=0).shape[0] == 6
            for ident in range(6):
                rows = fs.features[fs.truth == ident]
                assert np.all(rows == rows[0])
        # no offset: both modalities share the same vectors per identity
        np.testing.assert_array_equal(v.features, i.features)

    def test_shapes_and_truth(self):
        v, i = generate_synthetic(SynthConfig(num_identities=3, samples_per_identity_per_modality=4, dim=5))
        assert v.modality is Modality.VISIBLE and i.modality is Modality.INFRARED
        assert v.features.shape == (12, 5) and i.features.shape == (12, 5)
        assert list(np.bincount(v.truth)) == [4, 4, 4]

    @pytest.mark.parametrize("bad", [dict(dim=1), dict(num_identities=0), dict(fragmentation_rate=1.5)])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            generate_synthetic(SynthConfig(**bad))

    def test_dbscan_recovers_clean_identities(self):
        cfg = SynthConfig(num_identities=10, samples_per_identity_per_modality=20, dim=64,
                          intra_identity_spread=0.1, modality_offset_scale=0.3,
                          fragmentation_rate=0.0, seed=11)
        for fs in generate_synthetic(cfg):
            a = dbscan(fs, eps=0.3, min_pts=4)
            assert a.num_clusters >= 10
            ari, _ = label_quality(a, fs.truth)
            assert ari == pytest.approx(1.0)
            assert ari_pair_counting(list(fs.truth), list(a.labels)) == pytest.approx(1.0)

    def test_fragmentation_splits_clusters(self):
        common = dict(num_identities=20, samples_per_identity_per_modality=30, dim=64,
                      intra_identity_spread=0.3, modality_offset_scale=0.0, seed=4)
        v0, _ = generate_synthetic(SynthConfig(fragmentation_rate=0.0, **common))
        v1, _ = generate_synthetic(SynthConfig(fragmentation_rate=1.0, **common))
        assert dbscan(v0, 0.2).num_clusters == 20
        assert dbscan(v1, 0.2).num_clusters == 40


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        v, i = generate_synthetic(SynthConfig(num_identities=4, samples_per_identity_per_modality=3, dim=6, seed=2))
        for fs in (v, i):
            path = tmp_path / f"{fs.modality.value}.xmc"
            save_features(fs, path)
            back = load_features(path)
            assert back.modality is fs.modality
            assert back.features.tobytes() == fs.features.tobytes()
            assert np.array_equal(back.sample_ids, fs.sample_ids)
            assert np.array_equal(back.truth, fs.truth)

    def test_round_trip_without_truth(self, tmp_path):
        fs = FeatureSet(Modality.INFRARED, l2_normalize([[1.0, 2.0], [3.0, -1.0]]), [10, 20])
        save_features(fs, tmp_path / "f.xmc")
        back = load_features(tmp_path / "f.xmc")
        assert back.truth is None
        assert list(back.sample_ids) == [10, 20]

    def test_header_layout(self, tmp_path):
        fs = FeatureSet(Modality.VISIBLE, np.eye(2), [0, 1], truth=[5, 6])
        save_features(fs, tmp_path / "f.xmc")
        lines = (tmp_path / "f.xmc").read_bytes().split(b"\n")
        assert lines[0] == b"XMC1 visible 2 2 1"
        assert lines[1] == b"0 5 1.0 0.0"
        assert b"\r" not in (tmp_path / "f.xmc").read_bytes()

    def test_handwritten_rows_unit_norm(self, tmp_path):
        p = tmp_path / "h.xmc"
        p.write_text("XMC1 infrared 3 2 0\n0 1 0\n1 0 1\n2 0.6 0.8\n")
        fs = load_features(p)
        np.testing.assert_allclose(np.linalg.norm(fs.features, axis=1), 1.0, atol=1e-12)

    def test_unnormalized_rows_are_normalized(self, tmp_path):
        p = tmp_path / "h.xmc"
        p.write_text("XMC1 visible 1 2 0\n0 3 4\n")
        np.testing.assert_allclose(load_features(p).features, [[0.6, 0.8]])

    @pytest.mark.parametrize("text, exc, row", [
        ("XMC2 visible 1 2 0\n0 1 0\n", HeaderError, None),
        ("XMC1 visible 2 2 0\n0 1 0\n", HeaderError, None),
        ("XMC1 ultraviolet 1 2 0\n0 1 0\n", HeaderError, None),
        ("XMC1 visible 2 2 0\n0 1 0\n1 1 0 0\n", RowLengthError, 1),
        ("XMC1 visible 2 2 0\n0 1 0\n1 nan 1\n", NonFiniteError, 1),
        ("XMC1 visible 1 2 0\n0 inf 1\n", NonFiniteError, 0),
        ("XMC1 visible 1 2 0\n0 abc 1\n", RowParseError, 0),
    ])
    def test_parse_errors(self, tmp_path, text, exc, row):
        p = tmp_path / "bad.xmc"
        p.write_text(text)
        with pytest.raises(exc) as info:
            load_features(p)
        if row is not None:
            assert info.value.row == row
            assert f"row {row}" in str(info.value)

    def test_zero_row_in_file(self, tmp_path):
        p = tmp_path / "z.xmc"
        p.write_text("XMC1 visible 2 2 0\n0 1 0\n1 0 0\n")
        with pytest.raises(ZeroRowError) as info:
            load_features(p)
        assert info.value.row == 1

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**64 - 1))
    def test_round_trip_any_seed(self, seed):
        import tempfile
        from pathlib import Path
        v, _ = generate_synthetic(SynthConfig(num_identities=2, samples_per_identity_per_modality=2, dim=3,
                                              fragmentation_rate=0.5, seed=seed))
        with tempfile.TemporaryDirectory() as d:
            save_features(v, Path(d) / "v.xmc")
            assert load_features(Path(d) / "v.xmc").features.tobytes() == v.features.tobytes()
