"""Citation datasets: loading, hypergraph construction and transductive splits.

File layout (the public Cora/Citeseer/Pubmed distribution):

* ``<name>.content``: ``node_id  f_1 ... f_d  label_name`` (tab/whitespace separated)
* ``<name>.cites``: ``cited_id  citing_id``
"""
from __future__ import annotations

import hashlib
import logging
import os
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hypergraph import Hypergraph
from .linalg import DTYPE

log = logging.getLogger(__name__)


class DatasetFormatError(ValueError):
    pass


_SUBSTREAMS = {"init": 1, "dropout": 2, "splits": 3, "synthetic": 4}


def substream(seed: int, purpose: str) -> np.random.Generator:
    """Independent generator for one named purpose, derived from a single seed."""
    key = _SUBSTREAMS.get(purpose, zlib.crc32(purpose.encode()))
    return np.random.default_rng([int(seed), key])


@dataclass
class CitationDataset:
    node_ids: list[str]
    features: np.ndarray
    labels: np.ndarray
    label_names: list[str]
    citations: np.ndarray  # (k, 2) int array of (citing, cited) node indices
    dropped_citations: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.label_names)


@dataclass
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64).ravel())
        a, b, c = (set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist()))
        if a & b or a & c or b & c:
            raise ValueError("train/val/test splits must be pairwise disjoint")

    def check_bounds(self, n: int) -> None:
        for name in ("train", "val", "test"):
            idx = getattr(self, name)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValueError(f"{name} split has indices outside [0, {n})")


def load_citation_dataset(content_path: str | os.PathLike, cites_path: str | os.PathLike,
                          normalize: bool = True) -> CitationDataset:
    """Parse a content/cites pair. Citations to or from unknown nodes are dropped."""
    node_ids: list[str] = []
    index: dict[str, int] = {}
    rows: list[list[float]] = []
    raw_labels: list[str] = []
    width = None
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise DatasetFormatError(f"{content_path}:{lineno}: expected id, features, label")
            nid, feats, lab = parts[0], parts[1:-1], parts[-1]
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise DatasetFormatError(
                    f"{content_path}:{lineno}: {len(feats)} features, expected {width}")
            if nid in index:
                raise DatasetFormatError(f"{content_path}:{lineno}: duplicate node id {nid!r}")
            try:
                rows.append([float(f) for f in feats])
            except ValueError:
                raise DatasetFormatError(f"{content_path}:{lineno}: non-numeric feature") from None
            index[nid] = len(node_ids)
            node_ids.append(nid)
            raw_labels.append(lab)
    if not node_ids:
        raise DatasetFormatError(f"{content_path}: no nodes")
    label_names = sorted(set(raw_labels))
    lab_index = {name: i for i, name in enumerate(label_names)}
    labels = np.array([lab_index[s] for s in raw_labels], dtype=np.int64)
    features = np.array(rows, dtype=DTYPE)
    if normalize:
        features = row_normalize(features)

    pairs, dropped = [], 0
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetFormatError(f"{cites_path}:{lineno}: expected 'cited_id citing_id'")
            cited, citing = parts
            if cited not in index or citing not in index:
                dropped += 1
                continue
            pairs.append((index[citing], index[cited]))
    if dropped:
        warnings.warn(f"dropped {dropped} citation(s) referencing unknown nodes", stacklevel=2)
    citations = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return CitationDataset(node_ids, features, labels, label_names, citations, dropped)


def row_normalize(x: np.ndarray) -> np.ndarray:
    """Scale rows to unit l1 norm; all-zero rows are left at zero."""
    s = np.abs(x).sum(axis=1, keepdims=True)
    return np.divide(x, s, out=np.zeros_like(x), where=s > 0)


def citations_to_hypergraph(ds: CitationDataset, min_size: int = 1) -> Hypergraph:
    """One hyperedge per cited paper, joining every paper that cites it.

    Self-citations are ignored. Hyperedges are ordered by target node index;
    identical citer sets merge (weights add) through :meth:`Hypergraph.from_edges`.
    """
    by_target: dict[int, set[int]] = {}
    for citing, cited in ds.citations.tolist():
        if citing == cited:
            continue
        by_target.setdefault(cited, set()).add(citing)
    edges = [sorted(by_target[t]) for t in sorted(by_target) if len(by_target[t]) >= min_size]
    g = Hypergraph.from_edges(ds.num_nodes, edges)
    log.info("built %d hyperedges from %d targets", g.num_edges, len(by_target))
    return g


def make_splits(labels, strategy: str = "standard", seed: int = 0, *,
                per_class: int = 20, num_val: int = 500, num_test: int = 1000,
                train_frac: float = 0.1, val_frac: float = 0.1,
                num_classes: int | None = None) -> SplitSpec:
    """Deterministic transductive splits.

    ``standard``: ``per_class`` training nodes per class, then ``num_val`` and
    ``num_test`` nodes drawn from the remainder. ``stratified``: per class,
    ``round(train_frac * count)`` train, ``round(val_frac * count)`` val, rest test.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rng = substream(seed, "splits")
    c = num_classes or int(labels.max()) + 1
    by_class = [np.flatnonzero(labels == k) for k in range(c)]
    if strategy == "standard":
        train = []
        for members in by_class:
            train.extend(rng.permutation(members)[:per_class].tolist())
        train = np.sort(np.array(train, dtype=np.int64))
        rest = rng.permutation(np.setdiff1d(np.arange(labels.size), train))
        if rest.size < num_val + num_test:
            raise ValueError(f"only {rest.size} nodes left for {num_val} val + {num_test} test")
        return SplitSpec(train, np.sort(rest[:num_val]), np.sort(rest[num_val:num_val + num_test]))
    if strategy == "stratified":
        if not (0 < train_frac and 0 <= val_frac and train_frac + val_frac < 1):
            raise ValueError("need 0 < train_frac, 0 <= val_frac, train_frac + val_frac < 1")
        train, val, test = [], [], []
        for k, members in enumerate(by_class):
            if members.size == 0:
                raise ValueError(f"class {k} has no nodes; cannot stratify")
            perm = rng.permutation(members)
            nt = int(round(train_frac * perm.size))
            nv = int(round(val_frac * perm.size))
            train.extend(perm[:nt].tolist())
            val.extend(perm[nt:nt + nv].tolist())
            test.extend(perm[nt + nv:].tolist())
        return SplitSpec(np.sort(train), np.sort(val), np.sort(test))
    raise ValueError(f"unknown split strategy {strategy!r}")


def file_sha256(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dataset_paths(root: str | os.PathLike, name: str) -> tuple[Path, Path]:
    base = Path(root) / name
    return base / f"{name}.content", base / f"{name}.cites"


# ---------------------------------------------------------------------------
# synthetic data


def synthetic_citations(n: int = 300, num_classes: int = 3, d: int = 50, seed: int = 0,
                        cites_per_node: int = 3, homophily: float = 0.85,
                        words_per_node: int = 8, topic_strength: float = 0.6) -> CitationDataset:
    """Planted-partition citation corpus with class-dependent bag-of-words features.

    Each paper cites ``cites_per_node`` others, from its own class with probability
    ``homophily``; each of its words comes from its class's topic block with
    probability ``topic_strength`` and uniformly otherwise.
    """
    rng = substream(seed, "synthetic")
    labels = np.sort(rng.integers(0, num_classes, size=n))
    labels = rng.permutation(labels)
    block = max(1, d // num_classes)
    feats = np.zeros((n, d), dtype=DTYPE)
    for i in range(n):
        for _ in range(words_per_node):
            if rng.random() < topic_strength:
                j = labels[i] * block + rng.integers(block)
            else:
                j = rng.integers(d)
            feats[i, min(j, d - 1)] = 1.0
    members = [np.flatnonzero(labels == k) for k in range(num_classes)]
    pairs = set()
    for i in range(n):
        for _ in range(cites_per_node):
            pool = members[labels[i]] if rng.random() < homophily else np.arange(n)
            t = int(rng.choice(pool))
            if t != i:
                pairs.add((i, t))
    citations = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return CitationDataset([f"p{i:05d}" for i in range(n)], feats, labels.astype(np.int64),
                           [f"class_{k}" for k in range(num_classes)], citations)


def write_citation_files(ds: CitationDataset, content_path: str | os.PathLike,
                         cites_path: str | os.PathLike) -> None:
    """Write a dataset in the content/cites layout (features written with ``repr``)."""
    with open(content_path, "w", encoding="utf-8") as fh:
        for nid, row, lab in zip(ds.node_ids, ds.features, ds.labels):
            vals = "\t".join(repr(float(v)) if v != int(v) else str(int(v)) for v in row)
            fh.write(f"{nid}\t{vals}\t{ds.label_names[lab]}\n")
    with open(cites_path, "w", encoding="utf-8") as fh:
        for citing, cited in ds.citations.tolist():
            fh.write(f"{ds.node_ids[cited]}\t{ds.node_ids[citing]}\n")
