"""Score functions for learned filters.

A scorer maps a key to a confidence s in [0, 1] that the key belongs to the
positive set.  The built-in model is a from-scratch decision tree grown
best-first by Gini impurity reduction, with Laplace-smoothed leaf scores and
a canonical little-endian serialization whose byte length defines the model
size charged against a learned filter's space budget.

An OracleScorer with exactly controllable error rates ships alongside, so
learned-filter composition logic is testable independently of training
quality.
"""

from __future__ import annotations

import heapq
import re
import struct
from dataclasses import dataclass
from urllib.parse import urlsplit

import numpy as np

from .hashing import hash_key_wide

TREE_MAGIC = b"FCT1"
TREE_HEADER_BYTES = 16
TREE_INTERNAL_BYTES = 19  # tag u8, feature u16, threshold f64, children 2*u32
TREE_LEAF_BYTES = 9       # tag u8, score f64

URL_FEATURE_COUNT = 20
_COUNTED_CHARS = ".-_/?=@&!~%+"  # counted over the whole url, in this order
_IPV4_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")


def featurize_url(url: str) -> np.ndarray:
    """Lexical URL features, fixed order, length 20.

    Layout: total length; hostname length; path length; counts of
    . - _ / ? = @ & ! ~ % + ; digit count; letter count; directory count
    (path '/' segments); IP-literal host flag; ';' count.
    """
    if not url:
        raise ValueError("url must be non-empty")
    try:
        parts = urlsplit(url)
        host = parts.hostname or ""
        path = parts.path
    except ValueError:
        host, path = "", url
    out = np.empty(URL_FEATURE_COUNT, dtype=np.float64)
    out[0] = len(url)
    out[1] = len(host)
    out[2] = len(path)
    for i, ch in enumerate(_COUNTED_CHARS):
        out[3 + i] = url.count(ch)
    out[15] = sum(c.isdigit() for c in url)
    out[16] = sum(c.isalpha() for c in url)
    out[17] = path.count("/")
    out[18] = 1.0 if (_IPV4_RE.match(host) or host.startswith("[")) else 0.0
    out[19] = url.count(";")
    return out


@dataclass
class LabeledExample:
    key: bytes
    features: np.ndarray
    label: int  # 1 positive, 0 negative


def build_training_set(dataset, neg_fraction: float, seed: int) -> list[LabeledExample]:
    """All positives plus a seeded floor(neg_fraction * n_neg) sample of
    negatives, drawn uniformly without replacement."""
    if not 0.0 <= neg_fraction <= 1.0:
        raise ValueError("neg_fraction must be in [0, 1]")
    positives = [r for r in dataset.records if r.label == 1]
    negatives = [r for r in dataset.records if r.label == 0]
    k = int(neg_fraction * len(negatives))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(negatives), size=k, replace=False) if k else []
    out = [LabeledExample(r.key, r.features, 1) for r in positives]
    out.extend(
        LabeledExample(negatives[i].key, negatives[i].features, 0)
        for i in sorted(chosen)
    )
    return out


# -- decision tree ------------------------------------------------------------


class DecisionTree:
    """Axis-aligned binary tree in flat arrays.

    Internal node i: feature[i] >= 0, descend left if x[feature] <= threshold.
    Leaf: feature[i] == -1, score[i] in (0, 1).
    """

    def __init__(self, feature, threshold, left, right, score, n_features, seed):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.score = score
        self.n_features = n_features
        self.seed = seed

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f < 0)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def score_vector(self, fv) -> float:
        if len(fv) != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {len(fv)}"
            )
        feature, threshold = self.feature, self.threshold
        left, right = self.left, self.right
        i = 0
        while feature[i] >= 0:
            i = left[i] if fv[feature[i]] <= threshold[i] else right[i]
        return self.score[i]

    # -- canonical serialization ------------------------------------------

    def serialize(self) -> bytes:
        n_leaves = self.n_leaves
        n_internal = self.n_nodes - n_leaves
        out = [
            struct.pack(
                "<4sHHII",
                TREE_MAGIC,
                1,
                self.n_features,
                n_internal,
                n_leaves,
            )
        ]
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                out.append(struct.pack("<Bd", 1, self.score[i]))
            else:
                out.append(
                    struct.pack(
                        "<BHdII",
                        0,
                        self.feature[i],
                        self.threshold[i],
                        self.left[i],
                        self.right[i],
                    )
                )
        return b"".join(out)

    @classmethod
    def deserialize(cls, blob: bytes) -> "DecisionTree":
        magic, version, n_features, n_internal, n_leaves = struct.unpack_from(
            "<4sHHII", blob, 0
        )
        if magic != TREE_MAGIC or version != 1:
            raise ValueError("not a serialized decision tree")
        feature, threshold, left, right, score = [], [], [], [], []
        off = TREE_HEADER_BYTES
        for _ in range(n_internal + n_leaves):
            tag = blob[off]
            if tag == 1:
                (s,) = struct.unpack_from("<d", blob, off + 1)
                feature.append(-1)
                threshold.append(0.0)
                left.append(0)
                right.append(0)
                score.append(s)
                off += TREE_LEAF_BYTES
            else:
                f, t, l, r = struct.unpack_from("<HdII", blob, off + 1)
                feature.append(f)
                threshold.append(t)
                left.append(l)
                right.append(r)
                score.append(0.0)
                off += TREE_INTERNAL_BYTES
        return cls(feature, threshold, left, right, score, n_features, seed=0)


def model_size_bytes(tree: DecisionTree) -> int:
    n_leaves = tree.n_leaves
    n_internal = tree.n_nodes - n_leaves
    return TREE_HEADER_BYTES + TREE_INTERNAL_BYTES * n_internal + TREE_LEAF_BYTES * n_leaves


def _gini_sums(n_pos, n_neg):
    n = n_pos + n_neg
    if n == 0:
        return 0.0
    # count-weighted impurity: n * (1 - p+^2 - p-^2)
    return n - (n_pos * n_pos + n_neg * n_neg) / n


def _best_split(X, y, idx):
    """Best (feature, threshold, gain, left_idx, right_idx) for the node
    holding rows ``idx``; gain is count-weighted Gini reduction."""
    n = len(idx)
    n_pos = int(y[idx].sum())
    n_neg = n - n_pos
    parent = _gini_sums(n_pos, n_neg)
    if n_pos == 0 or n_neg == 0 or n < 2:
        return None
    best = None
    sub_y = y[idx].astype(np.float64)
    for f in range(X.shape[1]):
        col = X[idx, f]
        order = np.argsort(col, kind="stable")
        vals = col[order]
        cum_pos = np.cumsum(sub_y[order])
        boundary = np.nonzero(vals[:-1] != vals[1:])[0]
        if boundary.size == 0:
            continue
        left_n = boundary + 1.0
        right_n = n - left_n
        left_pos = cum_pos[boundary]
        right_pos = n_pos - left_pos
        left_imp = left_n - (left_pos**2 + (left_n - left_pos) ** 2) / left_n
        right_imp = right_n - (right_pos**2 + (right_n - right_pos) ** 2) / right_n
        gains = parent - left_imp - right_imp
        j = int(np.argmax(gains))
        gain = float(gains[j])
        if best is None or gain > best[2]:
            b = boundary[j]
            thr = (vals[b] + vals[b + 1]) / 2.0
            best = (f, thr, gain, idx[order[: b + 1]], idx[order[b + 1 :]])
    if best is None or best[2] <= 0.0:
        return None
    return best


def train_decision_tree(train, max_leaf_nodes: int, seed: int) -> DecisionTree:
    """Grow a tree best-first: repeatedly split the frontier leaf with the
    largest Gini reduction until the leaf budget or purity stops growth."""
    if not train:
        raise ValueError("training set is empty")
    X = np.asarray([ex.features for ex in train], dtype=np.float64)
    y = np.asarray([ex.label for ex in train], dtype=np.uint8)
    n_features = X.shape[1]

    feature, threshold, left, right, score = [], [], [], [], []

    def new_leaf(idx):
        node = len(feature)
        n_pos = int(y[idx].sum())
        n_neg = len(idx) - n_pos
        feature.append(-1)
        threshold.append(0.0)
        left.append(0)
        right.append(0)
        score.append((n_pos + 1) / (n_pos + n_neg + 2))  # Laplace
        return node

    root_idx = np.arange(len(train))
    new_leaf(root_idx)
    if max_leaf_nodes < 2:
        return DecisionTree(feature, threshold, left, right, score, n_features, seed)

    heap = []
    counter = 0  # deterministic tie-break: earlier candidates first

    def consider(node, idx):
        nonlocal counter
        split = _best_split(X, y, idx)
        if split is not None:
            heapq.heappush(heap, (-split[2], counter, node, split))
            counter += 1

    consider(0, root_idx)
    n_leaves = 1
    while heap and n_leaves < max_leaf_nodes:
        _, _, node, (f, thr, _, l_idx, r_idx) = heapq.heappop(heap)
        feature[node] = f
        threshold[node] = thr
        l_node = new_leaf(l_idx)
        r_node = new_leaf(r_idx)
        left[node] = l_node
        right[node] = r_node
        n_leaves += 1
        consider(l_node, l_idx)
        consider(r_node, r_idx)
    return DecisionTree(feature, threshold, left, right, score, n_features, seed)


# -- scorer interfaces ---------------------------------------------------------


class TreeScorer:
    """Tree + vectorizer; keeps inference separable from vectorization so
    the benchmark can time the two stages independently."""

    def __init__(self, tree: DecisionTree, vectorizer):
        self.tree = tree
        self.vectorize = vectorizer

    @property
    def size_bytes(self) -> int:
        return model_size_bytes(self.tree)

    def score_vector(self, fv) -> float:
        return self.tree.score_vector(fv)

    def score(self, key: bytes) -> float:
        return self.tree.score_vector(self.vectorize(key))


class OracleScorer:
    """Ground-truth-backed scorer with exact, per-key-deterministic error
    rates: negatives score >= 0.5 with probability fp_rate, positives score
    < 0.5 with probability fn_rate."""

    size_bytes = 32  # nominal; not a trained artifact

    def __init__(self, positives, fp_rate=0.0, fn_rate=0.0, seed=0):
        self._positives = frozenset(positives)
        self.fp_rate = fp_rate
        self.fn_rate = fn_rate
        self.seed = seed

    def vectorize(self, key: bytes):
        return key

    def score_vector(self, key: bytes) -> float:
        w = hash_key_wide(key, self.seed)
        u_err = (w & 0xFFFFFFFFFFFFFFFF) / 2.0**64
        u_spread = (w >> 64) / 2.0**64
        if key in self._positives:
            high = u_err >= self.fn_rate
        else:
            high = u_err < self.fp_rate
        return 0.5 + 0.5 * u_spread if high else 0.5 * u_spread

    def score(self, key: bytes) -> float:
        return self.score_vector(key)
