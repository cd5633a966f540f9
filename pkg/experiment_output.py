#!/usr/bin/env python3
"""
Experiment Output Generator
Writes batch and trace CSVs, the run manifest and an optional styled Excel workbook,
and reads the CSVs back.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill
from openpyxl.utils.dataframe import dataframe_to_rows

from harness import BATCH_COLUMNS, REPETITION_COLUMNS, TRACE_COLUMNS, BatchResult, EpisodeTrace

MANIFEST_NAME = "manifest.json"


def file_stem(name: str) -> str:
    """Filesystem-safe stem for a policy name (`Hier-UCB` -> `hier-ucb`)."""
    stem = re.sub(r'[^A-Za-z0-9_.-]+', '_', name.strip()).strip('_').lower()
    return stem or "policy"


def write_batch_csv(result: BatchResult, path) -> str:
    result.to_frame().to_csv(path, index=False, lineterminator='\n')
    return str(path)


def read_batch_csv(path) -> pd.DataFrame:
    name = Path(path).name
    df = pd.read_csv(path)
    if list(df.columns) != BATCH_COLUMNS:
        raise ValueError(f"{name}: expected columns {BATCH_COLUMNS}, got {list(df.columns)}")
    expected_rounds = np.arange(1, len(df) + 1)
    if not np.array_equal(df['round'].to_numpy(), expected_rounds):
        raise ValueError(f"{name}: rounds must run 1..{len(df)} without gaps")
    return df


def write_repetition_csv(result: BatchResult, path) -> str:
    result.repetition_frame().to_csv(path, index=False, lineterminator='\n')
    return str(path)


def read_repetition_csv(path) -> pd.DataFrame:
    name = Path(path).name
    df = pd.read_csv(path, dtype={'user': str})
    if list(df.columns) != REPETITION_COLUMNS:
        raise ValueError(f"{name}: expected columns {REPETITION_COLUMNS}, got {list(df.columns)}")
    return df


def write_trace_csv(trace: EpisodeTrace, path) -> str:
    trace.to_frame().to_csv(path, index=False, lineterminator='\n')
    return str(path)


def read_trace_csv(path, policy_label: str = "") -> EpisodeTrace:
    name = Path(path).name
    df = pd.read_csv(path)
    if list(df.columns) != TRACE_COLUMNS:
        raise ValueError(f"{name}: expected columns {TRACE_COLUMNS}, got {list(df.columns)}")
    bad = ~df['action_type'].isin(['item', 'keyterm'])
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 2
        raise ValueError(f"{name} line {line}: action_type must be 'item' or 'keyterm'")
    return EpisodeTrace.from_frame(df, policy_label)


def summary_frame(results: Dict[str, BatchResult]) -> pd.DataFrame:
    """One row per policy: final regret with CI, asks and switch points."""
    rows = []
    for name, result in results.items():
        switches = [s for s in result.switch_points if s is not None]
        rows.append({
            'policy': name,
            'label': result.label,
            'repetitions': result.repetitions,
            'horizon': result.horizon,
            'final_mean_regret': result.final_mean_regret,
            'ci_half_width': result.final_ci_half_width,
            'final_mean_avg_reward': float(result.mean_avg_reward[-1]),
            'mean_keyterm_asks': float(np.mean(result.keyterm_asks)),
            'median_switch_point': float(np.median(switches)) if switches else None,
            'median_settle_round': float(np.median(result.settle_rounds)) if result.settle_rounds else None,
        })
    return pd.DataFrame(rows)


class ExperimentOutputGenerator:
    """
    Collects batch results for one run and emits every artifact into `output_dir`.

    File names are derived from policy names only, so rerunning a configuration
    overwrites the same files.
    """

    def __init__(self, output_dir, debug: bool = False):
        self.debug = debug
        self.logger = self._setup_logger()
        self.output_dir = Path(output_dir)
        self.results: Dict[str, BatchResult] = {}
        self.trace_files: Dict[str, str] = {}

    def _setup_logger(self):
        logger = logging.getLogger('ExperimentOutput')
        if not logger.handlers:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter('%(levelname)s - %(message)s'))
            logger.addHandler(handler)
        logger.setLevel(logging.DEBUG if self.debug else logging.INFO)
        return logger

    def add_result(self, name: str, result: BatchResult):
        if name in self.results:
            raise ValueError(f"duplicate policy name {name!r}")
        self.results[name] = result

    def batch_path(self, name: str) -> Path:
        return self.output_dir / f"batch_{file_stem(name)}.csv"

    def trace_path(self, name: str) -> Path:
        return self.output_dir / f"trace_{file_stem(name)}.csv"

    def repetition_path(self, name: str) -> Path:
        return self.output_dir / f"repetitions_{file_stem(name)}.csv"

    def write_batches(self) -> Dict[str, str]:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        written = {}
        for name, result in self.results.items():
            written[name] = write_batch_csv(result, self.batch_path(name))
            self.logger.debug(f"Batch CSV written: {written[name]}")
        return written

    def write_repetitions(self) -> Dict[str, str]:
        """Per-repetition switch points, asks and final regret (per user on dataset runs)."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return {name: write_repetition_csv(result, self.repetition_path(name))
                for name, result in self.results.items()}

    def write_traces(self) -> Dict[str, str]:
        """First repetition's trace per policy (requires traces kept by the harness)."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        for name, result in self.results.items():
            if not result.traces:
                self.logger.warning(f"⚠️ No trace kept for {name}")
                continue
            self.trace_files[name] = write_trace_csv(result.traces[0], self.trace_path(name))
        return dict(self.trace_files)

    def write_manifest(self, config_name: str, config_hash: str, base_seed: int,
                       extra: Optional[Dict[str, Any]] = None) -> str:
        manifest = {
            'experiment': config_name,
            'config_hash': config_hash,
            'base_seed': base_seed,
            'policies': {
                name: {
                    'label': result.label,
                    'seeds': list(result.seeds),
                    'repetitions': result.repetitions,
                    'horizon': result.horizon,
                    'final_mean_regret': result.final_mean_regret,
                    'final_ci_half_width': result.final_ci_half_width,
                    'batch_csv': self.batch_path(name).name,
                    'repetitions_csv': self.repetition_path(name).name,
                    'switch_points': list(result.switch_points),
                    'keyterm_asks': list(result.keyterm_asks),
                    'settle_rounds': list(result.settle_rounds),
                    'trace_csv': Path(self.trace_files[name]).name if name in self.trace_files else None,
                }
                for name, result in self.results.items()
            },
        }
        if extra:
            manifest.update(extra)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / MANIFEST_NAME
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding='utf-8')
        self.logger.info(f"✅ Manifest written: {path}")
        return str(path)

    def export_to_excel(self, output_path=None) -> str:
        """Summary sheet plus one sheet per policy with the batch columns."""
        path = Path(output_path) if output_path else self.output_dir / "experiment.xlsx"
        path.parent.mkdir(parents=True, exist_ok=True)
        self.logger.info(f"📊 Exporting experiment workbook to: {path}")

        wb = Workbook()
        wb.remove(wb.active)
        self._add_styled_sheet(wb, "Summary", summary_frame(self.results))
        for name, result in self.results.items():
            self._add_styled_sheet(wb, self._sheet_title(name, wb), result.to_frame())
        wb.save(path)

        self.logger.info("✅ Excel workbook exported")
        return str(path)

    @staticmethod
    def _sheet_title(name: str, wb: Workbook) -> str:
        # Excel caps titles at 31 chars and forbids []:*?/\
        title = re.sub(r'[\[\]:*?/\\]', '_', name)[:31] or "policy"
        base, n = title, 1
        while title in wb.sheetnames:
            n += 1
            suffix = f"_{n}"
            title = base[:31 - len(suffix)] + suffix
        return title

    def _add_styled_sheet(self, wb: Workbook, sheet_name: str, df: pd.DataFrame):
        ws = wb.create_sheet(title=sheet_name)
        df = df.astype(object).where(pd.notna(df), None)
        for row in dataframe_to_rows(df, index=False, header=True):
            ws.append(row)

        header_font = Font(bold=True)
        header_fill = PatternFill(start_color="CCCCCC", end_color="CCCCCC", fill_type="solid")
        for cell in ws[1]:
            cell.font = header_font
            cell.fill = header_fill

        for column in ws.columns:
            width = max(len(str(cell.value)) for cell in column if cell.value is not None)
            ws.column_dimensions[column[0].column_letter].width = min(width + 2, 50)

    def print_summary(self):
        """Console table: final mean regret ± CI, asks and median switch point."""
        if not self.results:
            print("⚠️ No results")
            return
        print(f"\n{'Policy':<32} {'Final regret':>22} {'Asks':>10} {'Switch pt':>10}")
        print("-" * 78)
        for row in summary_frame(self.results).itertuples(index=False):
            regret = f"{row.final_mean_regret:.2f} ± {row.ci_half_width:.2f}"
            switch = "-" if pd.isna(row.median_switch_point) else f"{row.median_switch_point:.0f}"
            print(f"{row.policy:<32} {regret:>22} {row.mean_keyterm_asks:>10.1f} {switch:>10}")
        print()
