"""Exact k-NN retrieval over polar keys with an incrementally built KD-tree.

Callers must not insert while a query is running (single writer, many readers).
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .descriptor import PolarKey
from .errors import FormatError, ParameterError


@dataclass(frozen=True)
class RetrievalConfig:
    exclusion_gap: int = 50
    top_k: int = 1

    def __post_init__(self):
        if self.exclusion_gap < 0:
            raise ParameterError("exclusion_gap must be >= 0")
        if self.top_k < 1:
            raise ParameterError("top_k must be >= 1")


class _Node:
    __slots__ = ("rows", "axis", "split", "left", "right")

    def __init__(self, rows):
        self.rows = rows          # list of row indices into the key store (leaf only)
        self.axis = -1
        self.split = 0.0
        self.left: Optional[_Node] = None
        self.right: Optional[_Node] = None

    @property
    def is_leaf(self):
        return self.left is None


class KDTree:
    """Bucketed KD-tree supporting insertion and exact filtered k-NN.

    Leaves split at the median of their widest coordinate once they exceed
    ``leaf_size`` points. Queries prune a subtree only when the distance to its
    splitting plane is strictly larger than the current k-th best, so exact ties
    are always visited and resolved by id.
    """

    def __init__(self, dim: int, leaf_size: int = 16):
        self.dim = dim
        self.leaf_size = leaf_size
        self._keys = np.empty((64, dim))
        self._ids = np.empty(64, dtype=np.int64)
        self._n = 0
        self._root = _Node([])

    def __len__(self):
        return self._n

    def _grow(self):
        cap = 2 * len(self._keys)
        keys = np.empty((cap, self.dim))
        ids = np.empty(cap, dtype=np.int64)
        keys[: self._n] = self._keys[: self._n]
        ids[: self._n] = self._ids[: self._n]
        self._keys, self._ids = keys, ids

    def insert(self, item_id: int, key: np.ndarray) -> None:
        if self._n == len(self._keys):
            self._grow()
        row = self._n
        self._keys[row] = key
        self._ids[row] = item_id
        self._n += 1
        node = self._root
        while not node.is_leaf:
            node = node.left if key[node.axis] < node.split else node.right
        node.rows.append(row)
        if len(node.rows) > self.leaf_size:
            self._split(node)

    def _split(self, node: _Node) -> None:
        pts = self._keys[node.rows]
        spread = pts.max(axis=0) - pts.min(axis=0)
        axis = int(np.argmax(spread))
        if spread[axis] == 0.0:
            return  # identical keys; keep as an oversized leaf
        vals = pts[:, axis]
        split = float(np.median(vals))
        if not (vals < split).any():
            split = float(np.min(vals[vals > split]))
        left = [r for r, v in zip(node.rows, vals) if v < split]
        right = [r for r, v in zip(node.rows, vals) if v >= split]
        node.axis, node.split = axis, split
        node.left, node.right = _Node(left), _Node(right)
        node.rows = None

    def query(self, q: np.ndarray, k: int, exclude=None) -> List[Tuple[int, float]]:
        """k nearest (id, squared distance), ascending by (distance, id).

        ``exclude`` is an optional predicate on ids.
        """
        best: List[Tuple[float, int]] = []  # max-heap via negation: (-d2, -id)

        def worst():
            return -best[0][0], -best[0][1]

        def visit(node: _Node):
            if node.is_leaf:
                if not node.rows:
                    return
                rows = np.asarray(node.rows)
                d2 = ((self._keys[rows] - q) ** 2).sum(axis=1)
                for dist2, item in zip(d2.tolist(), self._ids[rows].tolist()):
                    if exclude is not None and exclude(item):
                        continue
                    if len(best) < k:
                        heapq.heappush(best, (-dist2, -item))
                    elif (dist2, item) < worst():
                        heapq.heapreplace(best, (-dist2, -item))
                return
            diff = q[node.axis] - node.split
            near, far = (node.left, node.right) if diff < 0 else (node.right, node.left)
            visit(near)
            if len(best) < k or diff * diff <= worst()[0]:
                visit(far)

        visit(self._root)
        return sorted(((-i, -d) for d, i in best), key=lambda t: (t[1], t[0]))


class KeyIndex:
    """Polar-key store answering loop-candidate queries."""

    def __init__(self, dim: Optional[int] = None, leaf_size: int = 16):
        self.dim = dim
        self._leaf_size = leaf_size
        self._tree: Optional[KDTree] = KDTree(dim, leaf_size) if dim else None
        self._keys: Dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self._keys)

    def __contains__(self, frame_id):
        return frame_id in self._keys

    @property
    def entries(self) -> List[Tuple[int, PolarKey]]:
        return [(i, PolarKey(k)) for i, k in self._keys.items()]

    def insert(self, frame_id: int, key) -> None:
        vec = np.asarray(key.values if isinstance(key, PolarKey) else key, dtype=np.float64).ravel()
        if self.dim is None:
            self.dim = len(vec)
            self._tree = KDTree(self.dim, self._leaf_size)
        if len(vec) != self.dim:
            raise ParameterError(f"key length {len(vec)} != index dimension {self.dim}")
        frame_id = int(frame_id)
        if frame_id in self._keys:
            raise ParameterError(f"frame id {frame_id} already indexed")
        self._keys[frame_id] = vec.copy()
        self._tree.insert(frame_id, vec)

    def query(self, query_id: int, query_key, cfg: RetrievalConfig = RetrievalConfig()
              ) -> List[Tuple[int, float]]:
        """Up to ``top_k`` (frame_id, distance) pairs, ascending, excluding the recent window."""
        if self._tree is None or len(self) == 0:
            return []
        q = np.asarray(query_key.values if isinstance(query_key, PolarKey) else query_key,
                       dtype=np.float64).ravel()
        if len(q) != self.dim:
            raise ParameterError(f"query length {len(q)} != index dimension {self.dim}")
        lo = query_id - cfg.exclusion_gap
        hits = self._tree.query(q, cfg.top_k, exclude=lambda i: lo < i <= query_id)
        return [(i, float(np.sqrt(d2))) for i, d2 in hits]

    def save(self, path) -> None:
        with open(path, "w") as f:
            for frame_id in sorted(self._keys):
                f.write(json.dumps({"frame_id": frame_id, "key": self._keys[frame_id].tolist()}))
                f.write("\n")

    @classmethod
    def load(cls, path) -> "KeyIndex":
        index = cls()
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    index.insert(rec["frame_id"], rec["key"])
                except (json.JSONDecodeError, KeyError) as e:
                    raise FormatError(f"{path}:{lineno}: bad key record ({e})") from None
        return index

