#!/usr/bin/env python3
"""
Item / Key-Term Catalog
Weighted bipartite graph between items and key-terms, with validation and CSV I/O.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-9
Edge = Tuple[int, int]


@dataclass(frozen=True)
class Catalog:
    """
    The weighted bipartite graph (items, key-terms, W).

    Immutable after construction. `membership_index` holds, for every key-term, the
    ascending tuple of items with nonzero weight; it is derived from `weights` unless
    given explicitly (explicit indices are checked by `validate_catalog`).
    """
    num_items: int
    num_keyterms: int
    weights: Mapping[Edge, float]
    membership_index: Optional[Tuple[Tuple[int, ...], ...]] = None
    _dense: np.ndarray = field(init=False, repr=False, compare=False)
    _members: Tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = dict(self.weights)
        object.__setattr__(self, 'weights', weights)

        if self.membership_index is None:
            buckets: Dict[int, List[int]] = {k: [] for k in range(self.num_keyterms)}
            for (a, k), w in weights.items():
                if w != 0 and k in buckets:
                    buckets[k].append(a)
            index = tuple(tuple(sorted(buckets[k])) for k in range(self.num_keyterms))
            object.__setattr__(self, 'membership_index', index)
        else:
            object.__setattr__(self, 'membership_index',
                               tuple(tuple(members) for members in self.membership_index))

        dense = np.zeros((self.num_items, self.num_keyterms), dtype=float)
        for (a, k), w in weights.items():
            if 0 <= a < self.num_items and 0 <= k < self.num_keyterms:
                dense[a, k] = w
        dense.setflags(write=False)
        object.__setattr__(self, '_dense', dense)
        object.__setattr__(self, '_members', tuple(
            np.asarray(members, dtype=np.int64) for members in self.membership_index
        ))

    @property
    def weight_matrix(self) -> np.ndarray:
        """Read-only dense |A| x |K| view of W."""
        return self._dense

    def weight(self, item: int, keyterm: int) -> float:
        return self.weights.get((item, keyterm), 0.0)

    def members(self, keyterm: int) -> np.ndarray:
        """Ascending item indices of A_k as an int array (hot-loop accessor)."""
        return self._members[keyterm]

    def member_weights(self, keyterm: int) -> np.ndarray:
        return self._dense[self._members[keyterm], keyterm]

    def keyterms_of_item(self, item: int) -> List[int]:
        return [int(k) for k in np.flatnonzero(self._dense[item])]


def validate_catalog(catalog: Catalog) -> List[str]:
    """Return every invariant violation as a readable string; empty means valid."""
    violations = []

    for (a, k), w in sorted(catalog.weights.items()):
        if not (0 <= a < catalog.num_items):
            violations.append(f"out-of-range item {a} on key-term {k}")
        if not (0 <= k < catalog.num_keyterms):
            violations.append(f"out-of-range key-term {k} on item {a}")
        if not math.isfinite(w):
            violations.append(f"non-finite weight item {a} key-term {k}")
        elif w < 0:
            violations.append(f"negative weight item {a} key-term {k}")

    dense = catalog.weight_matrix
    for a in range(catalog.num_items):
        row = dense[a]
        if not np.any(row != 0):
            violations.append(f"empty item {a}")
            continue
        row_sum = float(row.sum())
        if abs(row_sum - 1.0) > ROW_SUM_TOLERANCE:
            violations.append(f"row-sum violation item {a} (sum {row_sum:.12g})")

    for k in range(catalog.num_keyterms):
        expected = tuple(int(a) for a in np.flatnonzero(dense[:, k]))
        if not expected:
            violations.append(f"empty key-term {k}")
        if k >= len(catalog.membership_index):
            violations.append(f"membership index missing key-term {k}")
        elif catalog.membership_index[k] != expected:
            violations.append(f"membership index mismatch key-term {k}")

    return violations


def items_of_keyterm(catalog: Catalog, k: int) -> List[Tuple[int, float]]:
    """A_k with weights, ascending by item index."""
    if not (0 <= k < catalog.num_keyterms):
        raise ValueError(f"key-term {k} out of range (catalog has {catalog.num_keyterms} key-terms)")
    return [(a, catalog.weights[(a, k)]) for a in catalog.membership_index[k]]


def normalize_weights(raw: Mapping[Edge, float],
                      num_items: Optional[int] = None,
                      num_keyterms: Optional[int] = None) -> Catalog:
    """
    Divide every item row by its sum and build the Catalog.

    Sizes default to max id + 1. Rows already summing to 1 (within 1e-12) are kept
    bit-for-bit, so normalizing a valid catalog is the identity.
    """
    if num_items is None:
        num_items = max((a for a, _ in raw), default=-1) + 1
    if num_keyterms is None:
        num_keyterms = max((k for _, k in raw), default=-1) + 1

    rows: Dict[int, Dict[int, float]] = {a: {} for a in range(num_items)}
    for (a, k), w in raw.items():
        if not (0 <= a < num_items) or not (0 <= k < num_keyterms):
            raise ValueError(f"edge ({a}, {k}) outside catalog of {num_items} items x {num_keyterms} key-terms")
        if not math.isfinite(w) or w < 0:
            raise ValueError(f"weight for item {a} key-term {k} must be finite and nonnegative, got {w}")
        if w != 0:
            rows[a][k] = float(w)

    weights: Dict[Edge, float] = {}
    for a in range(num_items):
        row = rows[a]
        row_sum = math.fsum(row.values())
        if row_sum <= 0:
            raise ValueError(f"item {a} has an all-zero weight row")
        if abs(row_sum - 1.0) <= 1e-12:
            weights.update({(a, k): w for k, w in row.items()})
        else:
            weights.update({(a, k): w / row_sum for k, w in row.items()})

    return Catalog(num_items=num_items, num_keyterms=num_keyterms, weights=weights)


def build_binary_catalog(edges: Iterable[Edge],
                         num_items: Optional[int] = None,
                         num_keyterms: Optional[int] = None) -> Catalog:
    """Default construction path: W in {0,1} before normalization."""
    return normalize_weights({(int(a), int(k)): 1.0 for a, k in edges}, num_items, num_keyterms)


def build_block_catalog(num_keyterms: int, items_per_keyterm: int) -> Catalog:
    """Contiguous blocks: items [k*m, (k+1)*m) belong to key-term k only."""
    edges = [(k * items_per_keyterm + j, k)
             for k in range(num_keyterms) for j in range(items_per_keyterm)]
    return build_binary_catalog(edges, num_keyterms * items_per_keyterm, num_keyterms)


def read_graph_csv(path, item_index: Optional[Mapping[str, int]] = None,
                   keyterm_index: Optional[Mapping[str, int]] = None) -> Catalog:
    """
    Load `item_id,keyterm_id[,weight]` edges.

    Without index maps, ids must be dense integers. With maps, ids are labels resolved
    through them; unknown labels raise ValueError naming the file and line.
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    name = getattr(path, 'name', str(path))
    missing = {'item_id', 'keyterm_id'} - set(df.columns)
    if missing:
        raise ValueError(f"{name}: missing column(s) {sorted(missing)}")
    extra = set(df.columns) - {'item_id', 'keyterm_id', 'weight'}
    if extra:
        raise ValueError(f"{name}: unexpected column(s) {sorted(extra)}")
    has_weight = 'weight' in df.columns

    raw: Dict[Edge, float] = {}
    for row_number, row in enumerate(df.itertuples(index=False)):
        line = row_number + 2
        item_label = row.item_id.strip()
        keyterm_label = row.keyterm_id.strip()

        if item_index is not None:
            if item_label not in item_index:
                raise ValueError(f"unknown item id {item_label}, {name} line {line}")
            a = item_index[item_label]
        else:
            a = _parse_dense_id(item_label, 'item id', name, line)

        if keyterm_index is not None:
            if keyterm_label not in keyterm_index:
                raise ValueError(f"unknown key-term id {keyterm_label}, {name} line {line}")
            k = keyterm_index[keyterm_label]
        else:
            k = _parse_dense_id(keyterm_label, 'key-term id', name, line)

        weight = 1.0
        if has_weight and row.weight.strip():
            try:
                weight = float(row.weight)
            except ValueError:
                raise ValueError(f"malformed weight {row.weight!r}, {name} line {line}") from None
            if not math.isfinite(weight) or weight < 0:
                raise ValueError(f"invalid weight {row.weight!r}, {name} line {line}")
        raw[(a, k)] = raw.get((a, k), 0.0) + weight

    num_items = len(item_index) if item_index is not None else None
    num_keyterms = len(keyterm_index) if keyterm_index is not None else None
    catalog = normalize_weights(raw, num_items, num_keyterms)
    logger.debug(f"Loaded graph {name}: {catalog.num_items} items, {catalog.num_keyterms} key-terms")
    return catalog


def write_graph_csv(catalog: Catalog, path, item_labels: Optional[List[str]] = None,
                    keyterm_labels: Optional[List[str]] = None, binary: bool = False) -> str:
    """Write edges ordered by (item, key-term). `binary` omits the weight column."""
    records = []
    for (a, k) in sorted(catalog.weights):
        record = {
            'item_id': item_labels[a] if item_labels else a,
            'keyterm_id': keyterm_labels[k] if keyterm_labels else k,
        }
        if not binary:
            record['weight'] = catalog.weights[(a, k)]
        records.append(record)
    columns = ['item_id', 'keyterm_id'] + ([] if binary else ['weight'])
    pd.DataFrame(records, columns=columns).to_csv(path, index=False, lineterminator='\n')
    return str(path)


def _parse_dense_id(label: str, what: str, name: str, line: int) -> int:
    try:
        value = int(label)
    except ValueError:
        raise ValueError(f"malformed {what} {label!r}, {name} line {line}") from None
    if value < 0:
        raise ValueError(f"negative {what} {value}, {name} line {line}")
    return value
