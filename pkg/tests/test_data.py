import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import data_root, have_dataset
from ihgnn.data import (CitationDataset, DatasetFormatError, SplitSpec, citations_to_hypergraph,
                        dataset_paths, file_sha256, load_citation_dataset, make_splits,
                        row_normalize, substream, synthetic_citations, write_citation_files)
from ihgnn.hypergraph import read_hypergraph, write_hypergraph


def _write(tmp_path, content, cites):
    (tmp_path / "d.content").write_text(content)
    (tmp_path / "d.cites").write_text(cites)
    return tmp_path / "d.content", tmp_path / "d.cites"


def _dataset(n, pairs):
    return CitationDataset([str(i) for i in range(n)], np.zeros((n, 1)), np.zeros(n, np.int64),
                           ["a"], np.array(pairs, dtype=np.int64).reshape(-1, 2))


class TestLoader:
    def test_three_line_fixture(self, tmp_path):
        c, k = _write(tmp_path, "p1\t1\t0\t1\tNeural\np2\t0\t0\t1\tTheory\np3\t1\t1\t0\tNeural\n",
                      "p1\tp2\np1\tp3\np2\tp3\n")
        ds = load_citation_dataset(c, k, normalize=False)
        assert ds.node_ids == ["p1", "p2", "p3"]
        np.testing.assert_array_equal(ds.features, [[1, 0, 1], [0, 0, 1], [1, 1, 0]])
        assert ds.label_names == ["Neural", "Theory"]
        np.testing.assert_array_equal(ds.labels, [0, 1, 0])
        # "cited citing" lines become (citing, cited)
        np.testing.assert_array_equal(ds.citations, [[1, 0], [2, 0], [2, 1]])

    def test_normalized_rows(self, tmp_path):
        c, k = _write(tmp_path, "a 1 1 0 x\nb 0 0 0 y\n", "")
        ds = load_citation_dataset(c, k)
        np.testing.assert_array_equal(ds.features, [[0.5, 0.5, 0], [0, 0, 0]])

    def test_malformed_line_number(self, tmp_path):
        c, k = _write(tmp_path, "a 1 0 x\nb 1 y\n", "")
        with pytest.raises(DatasetFormatError, match=":2:"):
            load_citation_dataset(c, k)

    def test_non_numeric(self, tmp_path):
        c, k = _write(tmp_path, "a 1 q x\n", "")
        with pytest.raises(DatasetFormatError, match=":1: non-numeric"):
            load_citation_dataset(c, k)

    def test_duplicate_id(self, tmp_path):
        c, k = _write(tmp_path, "a 1 x\na 0 y\n", "")
        with pytest.raises(DatasetFormatError, match="duplicate"):
            load_citation_dataset(c, k)

    def test_bad_cites_line(self, tmp_path):
        c, k = _write(tmp_path, "a 1 x\n", "a\n")
        with pytest.raises(DatasetFormatError, match="d.cites:1"):
            load_citation_dataset(c, k)

    def test_unknown_citation_dropped(self, tmp_path):
        c, k = _write(tmp_path, "a 1 x\nb 1 x\n", "a b\nzz a\n")
        with pytest.warns(UserWarning, match="dropped 1"):
            ds = load_citation_dataset(c, k)
        assert ds.dropped_citations == 1 and len(ds.citations) == 1

    def test_write_read_round_trip(self, tmp_path):
        ds = synthetic_citations(n=40, d=12, seed=2)
        write_citation_files(ds, tmp_path / "s.content", tmp_path / "s.cites")
        back = load_citation_dataset(tmp_path / "s.content", tmp_path / "s.cites", normalize=False)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert sorted(map(tuple, back.citations.tolist())) == sorted(map(tuple, ds.citations.tolist()))

    def test_row_normalize_l1(self, rng):
        x = rng.random((5, 4))
        np.testing.assert_allclose(np.abs(row_normalize(x)).sum(axis=1), 1.0)

    def test_paths(self, tmp_path):
        c, k = dataset_paths(tmp_path, "cora")
        assert c == tmp_path / "cora" / "cora.content" and k.name == "cora.cites"

    def test_sha256(self, tmp_path):
        (tmp_path / "f").write_bytes(b"abc")
        assert file_sha256(tmp_path / "f").startswith("ba7816bf")

    @pytest.mark.skipif(not have_dataset("cora"), reason="Cora files not present under $IHGNN_DATA")
    def test_cora_shape(self):
        ds = load_citation_dataset(*dataset_paths(data_root(), "cora"))
        assert (ds.num_nodes, ds.num_features, ds.num_classes) == (2708, 1433, 7)

    @pytest.mark.skipif(not have_dataset("citeseer"), reason="Citeseer files not present under $IHGNN_DATA")
    def test_citeseer_shape(self):
        ds = load_citation_dataset(*dataset_paths(data_root(), "citeseer"))
        assert (ds.num_nodes, ds.num_features, ds.num_classes) == (3327, 3703, 6)


class TestHypergraphConstruction:
    def test_minimal_grouping(self):
        g = citations_to_hypergraph(_dataset(3, [[0, 2], [1, 2]]))
        assert g.edges == ((0, 1),)

    def test_no_citations(self):
        assert citations_to_hypergraph(_dataset(3, [])).num_edges == 0

    def test_self_citation_ignored(self):
        assert citations_to_hypergraph(_dataset(2, [[1, 1], [0, 1]])).edges == ((0,),)

    def test_min_size(self):
        g = citations_to_hypergraph(_dataset(4, [[0, 3], [1, 2], [0, 2]]), min_size=2)
        assert g.edges == ((0, 1),)

    @given(st.integers(0, 2**32 - 1))
    def test_inverse_index(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 30))
        pairs = rng.integers(0, n, size=(int(rng.integers(0, 101)), 2))
        g = citations_to_hypergraph(_dataset(n, pairs))
        expected = {}
        for citing, cited in pairs.tolist():
            if citing != cited:
                expected.setdefault(cited, set()).add(citing)
        want = {}
        for members in expected.values():
            key = tuple(sorted(members))
            want[key] = want.get(key, 0.0) + 1.0
        assert dict(zip(g.edges, g.weights)) == want

    def test_serialization_round_trip(self, tmp_path):
        g = citations_to_hypergraph(synthetic_citations(n=80, seed=1))
        write_hypergraph(g, tmp_path / "h.txt")
        assert read_hypergraph(tmp_path / "h.txt") == g


class TestSplits:
    def test_stratified_deterministic(self):
        labels = np.random.default_rng(0).integers(0, 4, size=300)
        a = make_splits(labels, "stratified", seed=5)
        b = make_splits(labels, "stratified", seed=5)
        for name in ("train", "val", "test"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_stratified_proportions(self):
        labels = np.random.default_rng(1).integers(0, 3, size=257)
        s = make_splits(labels, "stratified", seed=0, train_frac=0.1, val_frac=0.1)
        for k in range(3):
            cnt = np.sum(labels == k)
            assert abs(np.sum(labels[s.train] == k) - 0.1 * cnt) <= 1
            assert abs(np.sum(labels[s.val] == k) - 0.1 * cnt) <= 1

    def test_standard(self):
        labels = np.repeat(np.arange(7), 300)
        s = make_splits(labels, "standard", seed=0)
        assert s.train.size == 140 and s.val.size == 500 and s.test.size == 1000
        np.testing.assert_array_equal(np.bincount(labels[s.train]), 20)

    def test_standard_too_small(self):
        with pytest.raises(ValueError, match="left for"):
            make_splits(np.zeros(100, int), "standard")

    def test_empty_class(self):
        with pytest.raises(ValueError, match="class 1 has no nodes"):
            make_splits(np.array([0, 0, 2, 2]), "stratified", num_classes=3)

    def test_unknown_strategy(self):
        with pytest.raises(ValueError, match="unknown split"):
            make_splits(np.zeros(10, int), "random")

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["standard", "stratified"]))
    def test_disjoint_in_range(self, seed, strategy):
        labels = np.random.default_rng(seed).integers(0, 5, size=2000)
        s = make_splits(labels, strategy, seed)
        s.check_bounds(2000)
        assert not (set(s.train) & set(s.val) or set(s.train) & set(s.test) or set(s.val) & set(s.test))

    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="disjoint"):
            SplitSpec([0, 1], [1], [2])

    def test_bounds(self):
        with pytest.raises(ValueError, match="outside"):
            SplitSpec([0], [5], []).check_bounds(3)


class TestRandomness:
    def test_substreams_independent_and_reproducible(self):
        a = substream(3, "init").random(4)
        np.testing.assert_array_equal(a, substream(3, "init").random(4))
        assert not np.array_equal(a, substream(3, "dropout").random(4))
        assert not np.array_equal(a, substream(4, "init").random(4))

    def test_synthetic_reproducible(self):
        a, b = synthetic_citations(seed=9), synthetic_citations(seed=9)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.citations, b.citations)

    def test_synthetic_homophily(self):
        ds = synthetic_citations(n=400, seed=0, homophily=0.9)
        same = ds.labels[ds.citations[:, 0]] == ds.labels[ds.citations[:, 1]]
        assert same.mean() > 0.8
