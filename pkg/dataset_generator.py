#!/usr/bin/env python3
"""
Synthetic Dataset Generator
Writes a portable contextual dataset (items.csv, graph.csv, users.csv and optionally
keyterms.csv) that load_dataset_env reads back.
"""

import logging
from pathlib import Path
from typing import Dict

import numpy as np

from catalog import build_binary_catalog, write_graph_csv
from environments import construction_rng, random_unit_vectors, write_vector_csv

logger = logging.getLogger(__name__)


def balanced_assignment(num_items: int, num_keyterms: int, rng: np.random.Generator):
    """
    Random balanced binary item -> key-term edges.

    A permutation of the items is dealt round-robin over key-terms, so every item and
    every key-term gets at least one edge and key-term sizes differ by at most one.
    """
    perm = rng.permutation(num_items)
    edges = {(int(perm[j % num_items]), j % num_keyterms) for j in range(max(num_items, num_keyterms))}
    return sorted(edges)


def cmd_generate_dataset(num_users: int, num_items: int, num_keyterms: int, dim: int,
                         seed: int, out_dir, with_keyterm_contexts: bool = False) -> Dict[str, str]:
    """Generate and write the dataset files; same arguments give byte-identical files."""
    for name, value in (('num_users', num_users), ('num_items', num_items),
                        ('num_keyterms', num_keyterms), ('dim', dim)):
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = construction_rng(seed)

    items = random_unit_vectors(rng, num_items, dim)
    users = random_unit_vectors(rng, num_users, dim)
    catalog = build_binary_catalog(balanced_assignment(num_items, num_keyterms, rng),
                                   num_items, num_keyterms)

    item_labels = [f"i{a}" for a in range(num_items)]
    keyterm_labels = [f"k{k}" for k in range(num_keyterms)]
    user_labels = [f"u{u}" for u in range(num_users)]

    files = {
        'items': write_vector_csv(out / "items.csv", 'item_id', item_labels, items),
        'graph': write_graph_csv(catalog, out / "graph.csv", item_labels, keyterm_labels, binary=True),
        'users': write_vector_csv(out / "users.csv", 'user_id', user_labels, users),
    }
    if with_keyterm_contexts:
        # Member centroid, renormalized into the unit ball.
        membership = (catalog.weight_matrix > 0).astype(float)
        X_k = (membership.T @ items) / membership.sum(axis=0)[:, None]
        norms = np.maximum(np.linalg.norm(X_k, axis=1, keepdims=True), 1.0)
        files['keyterms'] = write_vector_csv(out / "keyterms.csv", 'keyterm_id', keyterm_labels, X_k / norms)

    logger.info(f"✅ Dataset generated in {out}: {num_users} users, {num_items} items, "
                f"{num_keyterms} key-terms, d={dim}")
    return files
