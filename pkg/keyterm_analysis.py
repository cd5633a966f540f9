#!/usr/bin/env python3
"""
Key-Term Reward Analysis
Aggregates member-item ratings into key-term ratings (simple, top-alpha and weighted
averages) and compares them per category.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

RATING_SCALE = (1.0, 5.0)


@dataclass
class RatedItem:
    label: str
    rating: float
    weight: Optional[float] = None


@dataclass
class RatingTable:
    """Ratings grouped by category (key-term)."""
    categories: Dict[str, List[RatedItem]] = field(default_factory=dict)
    scale: Tuple[float, float] = RATING_SCALE
    has_weights: bool = False

    def add(self, category: str, label: str, rating: float, weight: Optional[float] = None):
        self.categories.setdefault(category, []).append(RatedItem(label, rating, weight))
        if weight is not None:
            self.has_weights = True

    def validate(self) -> List[str]:
        problems = []
        low, high = self.scale
        for category, items in self.categories.items():
            if not items:
                problems.append(f"empty category {category}")
            for item in items:
                if not (low <= item.rating <= high):
                    problems.append(f"rating {item.rating} outside [{low}, {high}] for {category}/{item.label}")
                if item.weight is not None and (not math.isfinite(item.weight) or item.weight < 0):
                    problems.append(f"negative weight for {category}/{item.label}")
        return problems


def _as_ratings(ratings: Sequence[float]) -> List[float]:
    values = [float(r) for r in ratings]
    if not values:
        raise ValueError("ratings must be non-empty")
    if not all(math.isfinite(v) for v in values):
        raise ValueError("ratings must be finite")
    return values


def simple_average(ratings: Sequence[float]) -> float:
    values = _as_ratings(ratings)
    return math.fsum(values) / len(values)


def top_alpha_count(n: int, alpha: float) -> int:
    """ceil(alpha * n), never below 1."""
    return max(1, math.ceil(alpha * n - 1e-9))


def top_alpha_average(ratings: Sequence[float], alpha: float) -> float:
    """Mean of the top ceil(alpha * n) ratings."""
    values = _as_ratings(ratings)
    if not (0 < alpha <= 1):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    top = sorted(values, reverse=True)[:top_alpha_count(len(values), alpha)]
    return math.fsum(top) / len(top)


def weighted_average(ratings: Sequence[float], weights: Sequence[float]) -> float:
    values = _as_ratings(ratings)
    w = [float(x) for x in weights]
    if len(w) != len(values):
        raise ValueError(f"ratings and weights differ in length ({len(values)} vs {len(w)})")
    if any(not math.isfinite(x) or x < 0 for x in w):
        raise ValueError("weights must be finite and nonnegative")
    total = math.fsum(w)
    if total <= 0:
        raise ValueError("weights must not all be zero")
    if all(x == w[0] for x in w):
        return simple_average(values)
    return math.fsum(x * r for x, r in zip(w, values)) / total


def alpha_column(alpha: float) -> str:
    return f"top_{alpha:g}"


def compare_aggregates(table: RatingTable, alphas: Sequence[float]) -> pd.DataFrame:
    """One row per category (sorted by label) with every aggregate."""
    problems = table.validate()
    if problems:
        raise ValueError(f"invalid rating table: {'; '.join(problems[:5])}")
    rows = []
    for category in sorted(table.categories):
        items = table.categories[category]
        ratings = [item.rating for item in items]
        row = {'category': category, 'n_items': len(items), 'simple': simple_average(ratings)}
        for alpha in alphas:
            row[alpha_column(alpha)] = top_alpha_average(ratings, alpha)
        if table.has_weights:
            weights = [item.weight if item.weight is not None else 0.0 for item in items]
            row['weighted'] = weighted_average(ratings, weights)
        rows.append(row)
    columns = ['category', 'n_items', 'simple'] + [alpha_column(a) for a in alphas]
    if table.has_weights:
        columns.append('weighted')
    return pd.DataFrame(rows, columns=columns)


class KeyTermRewardAnalyzer:
    """Loads rating CSVs and reports key-term aggregates."""

    def __init__(self, scale: Tuple[float, float] = RATING_SCALE, debug: bool = False):
        self.debug = debug
        self.scale = scale
        self.logger = self._setup_logger()
        self.table: Optional[RatingTable] = None

    def _setup_logger(self):
        logger = logging.getLogger('KeyTermAnalysis')
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
            logger.addHandler(handler)
        logger.setLevel(logging.DEBUG if self.debug else logging.INFO)
        return logger

    def load_ratings(self, path) -> RatingTable:
        """Parse `category,item,rating[,weight]`; malformed rows raise with line numbers."""
        name = getattr(path, 'name', str(path))
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
        required = ['category', 'item', 'rating']
        if list(df.columns[:3]) != required or len(df.columns) > 4 or \
                (len(df.columns) == 4 and df.columns[3] != 'weight'):
            raise ValueError(f"{name}: header must be category,item,rating[,weight], got {list(df.columns)}")
        has_weight = 'weight' in df.columns
        low, high = self.scale

        table = RatingTable(scale=self.scale, has_weights=has_weight)
        for row_number, row in enumerate(df.itertuples(index=False)):
            line = row_number + 2
            category = row.category.strip()
            if not category:
                raise ValueError(f"{name} line {line}: empty category")
            rating = self._parse_number(row.rating, 'rating', name, line)
            if not (low <= rating <= high):
                raise ValueError(f"{name} line {line}: rating {rating} outside [{low}, {high}]")
            weight = None
            if has_weight:
                weight = self._parse_number(row.weight, 'weight', name, line)
                if weight < 0:
                    raise ValueError(f"{name} line {line}: negative weight {weight}")
            table.add(category, row.item.strip(), rating, weight)

        if not table.categories:
            raise ValueError(f"{name}: no ratings")
        self.table = table
        self.logger.info(f"📋 Ratings loaded: {sum(len(v) for v in table.categories.values())} "
                         f"ratings across {len(table.categories)} categories")
        return table

    @staticmethod
    def _parse_number(cell: str, what: str, name: str, line: int) -> float:
        try:
            value = float(cell)
        except ValueError:
            raise ValueError(f"{name} line {line}: malformed {what} {cell!r}") from None
        if not math.isfinite(value):
            raise ValueError(f"{name} line {line}: non-finite {what}")
        return value

    def analyze(self, alphas: Sequence[float], table: Optional[RatingTable] = None) -> pd.DataFrame:
        table = table or self.table
        if table is None:
            raise ValueError("no ratings loaded")
        report = compare_aggregates(table, alphas)
        if self.debug:
            for row in report.itertuples(index=False):
                self.logger.debug(f"🔍 {row.category}: simple {row.simple:.3f}")
        return report


def correlated_weight_table(categories: int = 5, items: int = 20, seed: int = 0) -> RatingTable:
    """
    Synthetic table whose weights grow with the rating, the regime in which top-half
    averages land nearer the weighted average than the simple one does.
    """
    rng = np.random.default_rng(seed)
    table = RatingTable(has_weights=True)
    for c in range(categories):
        ratings = np.round(rng.uniform(1.0, 5.0, size=items), 2)
        for i, rating in enumerate(ratings):
            table.add(f"category_{c}", f"item_{i}", float(rating), float(np.exp(2.0 * rating)))
    return table
