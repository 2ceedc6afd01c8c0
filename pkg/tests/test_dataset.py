import numpy as np
import pytest

from amfir import (
    DataFormatError,
    EmbeddingRecord,
    MultimodalDataset,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    sample_episode,
    save_dataset,
    split_by_class,
)


def tiny_dataset():
    recs = tuple(
        EmbeddingRecord(f"id{i}", i % 2, np.arange(4, dtype=float) + i, -np.arange(4, dtype=float) * i)
        for i in range(4)
    )
    return MultimodalDataset(4, 4, 2, recs)


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        ds = tiny_dataset()
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert (loaded.dim_rgb, loaded.dim_flow, loaded.num_classes) == (4, 4, 2)
        assert len(loaded) == 4
        for a, b in zip(ds.records, loaded.records):
            assert a.id == b.id and a.label == b.label
            assert np.array_equal(a.rgb, b.rgb)
            assert np.array_equal(a.flow, b.flow)

    def test_save_is_bit_reproducible(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(num_classes=3, per_class=4, dim_rgb=5, dim_flow=7, seed=1))
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_dataset(ds, p1)
        save_dataset(load_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_dimension_mismatch_names_record(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"kind": "meta", "dim_rgb": 4, "dim_flow": 4, "num_classes": 1, "format_version": 1}\n'
            '{"id": "rec7", "label": 0, "rgb": [1.0, 2.0, 3.0], "flow": [0.0, 0.0, 0.0, 0.0]}\n'
        )
        with pytest.raises(DataFormatError, match="rec7"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DataFormatError):
            load_dataset(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"kind": "meta", "dim_rgb": 2, "dim_flow": 2, "num_classes": 1, "format_version": 1}\n'
            '{"id": "a", "label": 0, "rgb": [0.0, 0.0], "flow": [0.0, 0.0]}\n'
            "this is not a record\n"
        )
        with pytest.raises(DataFormatError, match=":3"):
            load_dataset(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        rec = '{"id": "x", "label": 0, "rgb": [0.0], "flow": [0.0]}\n'
        path.write_text(
            '{"kind": "meta", "dim_rgb": 1, "dim_flow": 1, "num_classes": 1, "format_version": 1}\n'
            + rec + rec
        )
        with pytest.raises(DataFormatError, match="duplicate"):
            load_dataset(path)

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "lab.jsonl"
        path.write_text(
            '{"kind": "meta", "dim_rgb": 1, "dim_flow": 1, "num_classes": 1, "format_version": 1}\n'
            '{"id": "a", "label": 0, "rgb": [0.0], "flow": [0.0]}\n'
            '{"id": "b", "label": 3, "rgb": [0.0], "flow": [0.0]}\n'
        )
        with pytest.raises(DataFormatError, match="out of range"):
            load_dataset(path)

    def test_scientific_notation_accepted(self, tmp_path):
        path = tmp_path / "sci.jsonl"
        path.write_text(
            '{"kind": "meta", "dim_rgb": 2, "dim_flow": 1, "num_classes": 1, "format_version": 1}\n'
            '{"id": "a", "label": 0, "rgb": [1e-3, -2.5E4], "flow": [3.25e0]}\n'
        )
        ds = load_dataset(path)
        assert np.allclose(ds.records[0].rgb, [1e-3, -2.5e4])


class TestSynthetic:
    def test_deterministic(self):
        spec = SyntheticSpec(num_classes=5, per_class=20, dim_rgb=6, dim_flow=6, seed=7)
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        for ra, rb in zip(a.records, b.records):
            assert ra.id == rb.id and ra.dominant == rb.dominant
            assert np.array_equal(ra.rgb, rb.rgb) and np.array_equal(ra.flow, rb.flow)

    def test_equal_sigmas_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(sigma_low=0.5, sigma_high=0.5)

    def test_sigma_low_above_high_rejected(self):
        with pytest.raises(ValueError):
            SyntheticSpec(sigma_low=1.0, sigma_high=0.5)

    def test_noise_levels_match_spec(self):
        # oracle: differences of same-class, same-dominance records cancel the
        # class mean exactly, so diff/sqrt(2) has the modality's noise std
        ds = generate_synthetic(SyntheticSpec(seed=11))
        low, high = [], []
        by_key = {}
        for rec in ds.records:
            by_key.setdefault((rec.label, rec.dominant), []).append(rec)
        for (_, dom), recs in by_key.items():
            for a, b in zip(recs[::2], recs[1::2]):
                d_rgb = (a.rgb - b.rgb) / np.sqrt(2)
                d_flow = (a.flow - b.flow) / np.sqrt(2)
                if dom == "r":
                    low.append(d_rgb)
                    high.append(d_flow)
                else:
                    low.append(d_flow)
                    high.append(d_rgb)
        s_low = np.concatenate(low).std()
        s_high = np.concatenate(high).std()
        assert abs(s_low - 0.2) < 0.02
        assert abs(s_high - 1.0) < 0.1

    def test_dominant_tag_on_all_records(self):
        ds = generate_synthetic(SyntheticSpec(num_classes=3, per_class=5, seed=2))
        assert all(rec.dominant in ("r", "f") for rec in ds.records)

    def test_no_dominant_tag_when_absent_from_file(self, tmp_path):
        path = tmp_path / "plain.jsonl"
        save_dataset(tiny_dataset(), path)
        assert all(rec.dominant is None for rec in load_dataset(path).records)


class TestEpisodes:
    def test_5way_1shot_sizes(self, default_dataset, rng):
        ep = sample_episode(default_dataset, 5, 1, 5, rng)
        assert len(ep.support) == 5
        assert len(ep.query) == 25

    def test_minimal_episode(self, small_dataset, rng):
        ep = sample_episode(small_dataset, 1, 1, 1, rng)
        assert len(ep.support) == 1 and len(ep.query) == 1
        assert ep.support[0].id != ep.query[0].id

    def test_deterministic_given_seed(self, small_dataset):
        e1 = sample_episode(small_dataset, 3, 2, 2, np.random.default_rng(5))
        e2 = sample_episode(small_dataset, 3, 2, 2, np.random.default_rng(5))
        assert [r.id for r in e1.support] == [r.id for r in e2.support]
        assert [r.id for r in e1.query] == [r.id for r in e2.query]

    def test_class_balance_over_many_episodes(self, small_dataset):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            ep = sample_episode(small_dataset, 4, 2, 3, rng)
            s_counts = np.bincount(ep.support_labels, minlength=4)
            q_counts = np.bincount(ep.query_labels, minlength=4)
            assert (s_counts == 2).all()
            assert (q_counts == 3).all()
            assert not set(r.id for r in ep.support) & set(r.id for r in ep.query)

    def test_insufficient_classes(self, small_dataset, rng):
        with pytest.raises(ValueError, match="classes"):
            sample_episode(small_dataset, 7, 1, 1, rng)

    def test_insufficient_records_names_class(self, rng):
        recs = [EmbeddingRecord(f"a{i}", 0, np.zeros(2), np.zeros(2)) for i in range(3)]
        recs += [EmbeddingRecord("b0", 1, np.ones(2), np.ones(2))]
        ds = MultimodalDataset(2, 2, 2, tuple(recs))
        with pytest.raises(ValueError, match="class 1"):
            sample_episode(ds, 2, 2, 2, rng)


class TestSplit:
    def test_class_disjoint_split(self, small_dataset, rng):
        train, test = split_by_class(small_dataset, 0.7, rng)
        assert train.num_classes + test.num_classes == small_dataset.num_classes
        train_ids = {r.id for r in train.records}
        test_ids = {r.id for r in test.records}
        assert not train_ids & test_ids
        assert len(train_ids) + len(test_ids) == len(small_dataset)

    def test_bad_ratio(self, small_dataset, rng):
        with pytest.raises(ValueError):
            split_by_class(small_dataset, 1.0, rng)
