"""CSV schemas, dataset writing, and channel ingestion.

Schemas (UTF-8, header row, comma separator, '.' decimal point):

    fundamental.csv  firm_id, report_date, f_001..f_F   (empty cell = missing)
    market.csv       firm_id, report_date, m_001..m_M
    pricing.csv      firm_id, trade_date, high, low, close
    labels.csv       firm_id, default_date (ISO-8601 or empty)

Floats are written with shortest round-trip repr so generate -> write ->
load is bit-exact.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .panel import ChannelPanel, Dataset, Observation, build_targets
from .synthetic import trading_days_ending_at

log = logging.getLogger(__name__)

FILE_NAMES = {
    "fundamental": "fundamental.csv",
    "market": "market.csv",
    "pricing": "pricing.csv",
    "labels": "labels.csv",
}


class CsvFormatError(ValueError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def write_dataset(dataset, out_dir) -> Dict[str, Path]:
    """Write the four channel/label CSVs for a generated dataset."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {k: out_dir / v for k, v in FILE_NAMES.items()}

    first = dataset.observations[0]
    n_f = first.panels["fundamental"].n_features
    n_m = first.panels["market"].n_features
    w_q = first.panels["fundamental"].window
    days = first.panels["pricing"].window
    report_dates = getattr(dataset, "_report_dates", None)
    price_dates = getattr(dataset, "_price_dates", None)
    if report_dates is None:
        from .panel import add_months

        report_dates = [add_months(first.observation_date, -3 * (w_q - 1 - i)) for i in range(w_q)]
    if price_dates is None:
        price_dates = trading_days_ending_at(first.observation_date, days)

    with open(paths["fundamental"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["firm_id", "report_date"] + [f"f_{j + 1:03d}" for j in range(n_f)])
        for obs in dataset.observations:
            vals = obs.panels["fundamental"].values
            for t, rd in enumerate(report_dates):
                w.writerow([obs.firm_id, rd.isoformat()] + [_fmt(v) for v in vals[t]])

    with open(paths["market"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["firm_id", "report_date"] + [f"m_{j + 1:03d}" for j in range(n_m)])
        for obs in dataset.observations:
            vals = obs.panels["market"].values
            for t, rd in enumerate(report_dates):
                w.writerow([obs.firm_id, rd.isoformat()] + [_fmt(v) for v in vals[t]])

    with open(paths["pricing"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["firm_id", "trade_date", "high", "low", "close"])
        for obs in dataset.observations:
            vals = obs.panels["pricing"].values
            for d, td in enumerate(price_dates):
                w.writerow([obs.firm_id, td.isoformat()] + [_fmt(v) for v in vals[d]])

    with open(paths["labels"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["firm_id", "default_date"])
        for obs in dataset.observations:
            dd = dataset.default_dates.get(obs.firm_id)
            w.writerow([obs.firm_id, dd.isoformat() if dd else ""])

    return paths


def _parse_float(cell: str, path, line_no) -> float:
    if cell == "":
        return np.nan
    try:
        return float(cell)
    except ValueError:
        raise CsvFormatError(path, line_no, f"not a number: {cell!r}")


def _parse_date(cell: str, path, line_no) -> date:
    try:
        return date.fromisoformat(cell)
    except ValueError:
        raise CsvFormatError(path, line_no, f"not an ISO-8601 date: {cell!r}")


def _read_rows(path, key_field: str, n_values: Optional[int] = None):
    """Yield (firm_id, date, values) per row, validating the header."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(path, 1, "empty file")
        if header[0] != "firm_id" or header[1] != key_field:
            raise CsvFormatError(path, 1, f"expected header firm_id,{key_field},... got {header[:2]}")
        width = len(header) - 2
        if n_values is not None and width != n_values:
            raise CsvFormatError(path, 1, f"expected {n_values} value columns, got {width}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(path, line_no, f"expected {len(header)} cells, got {len(row)}")
            firm = row[0]
            d = _parse_date(row[1], path, line_no)
            vals = np.array([_parse_float(c, path, line_no) for c in row[2:]])
            rows.append((firm, d, vals))
    return rows, len(header) - 2


@dataclass
class LoadReport:
    observations_kept: int = 0
    dropped_short_history: int = 0
    dropped_short_pricing: int = 0
    dropped_post_default: int = 0
    unknown_label_firms: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "observations_kept": self.observations_kept,
            "dropped_short_history": self.dropped_short_history,
            "dropped_short_pricing": self.dropped_short_pricing,
            "dropped_post_default": self.dropped_post_default,
            "unknown_label_firms": list(self.unknown_label_firms),
        }


def load_channels(
    fundamental_path,
    market_path,
    pricing_path,
    labels_path,
    quarters: int = 12,
    pricing_window_days: int = 504,
) -> tuple[Dataset, LoadReport]:
    """Assemble per-(firm, observation_date) panels from the channel CSVs.

    An observation exists at every fundamental report date with at least
    `quarters` rows of history (inclusive) and a full pricing window ending
    at the last trading day on or before it.  Observations after a firm's
    default date are dropped.  No value dated after the observation date
    enters any panel.
    """
    f_rows, n_f = _read_rows(fundamental_path, "report_date")
    m_rows, n_m = _read_rows(market_path, "report_date")
    p_rows, _ = _read_rows(pricing_path, "trade_date", n_values=3)

    by_firm_f: Dict[str, list] = {}
    for firm, d, vals in f_rows:
        by_firm_f.setdefault(firm, []).append((d, vals))
    by_firm_m: Dict[str, dict] = {}
    for firm, d, vals in m_rows:
        by_firm_m.setdefault(firm, {})[d] = vals
    by_firm_p: Dict[str, list] = {}
    for firm, d, vals in p_rows:
        by_firm_p.setdefault(firm, []).append((d, vals))

    defaults: Dict[str, Optional[date]] = {}
    with open(labels_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["firm_id", "default_date"]:
            raise CsvFormatError(labels_path, 1, f"bad header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise CsvFormatError(labels_path, line_no, f"expected 2 cells, got {len(row)}")
            defaults[row[0]] = _parse_date(row[1], labels_path, line_no) if row[1] else None

    report = LoadReport()
    for firm in defaults:
        if firm not in by_firm_f:
            report.unknown_label_firms.append(firm)
            log.warning("labels.csv firm %s has no fundamental data", firm)

    observations: List[Observation] = []
    for firm in sorted(by_firm_f):
        f_hist = sorted(by_firm_f[firm], key=lambda r: r[0])
        m_hist = by_firm_m.get(firm, {})
        p_hist = sorted(by_firm_p.get(firm, []), key=lambda r: r[0])
        p_dates = [d for d, _ in p_hist]
        dd = defaults.get(firm)
        for i in range(len(f_hist)):
            obs_date = f_hist[i][0]
            if i + 1 < quarters:
                report.dropped_short_history += 1
                continue
            if dd is not None and dd < obs_date:
                report.dropped_post_default += 1
                continue
            window = f_hist[i + 1 - quarters : i + 1]
            fvals = np.stack([v for _, v in window])
            mvals = np.full((quarters, n_m), np.nan)
            for t, (d, _) in enumerate(window):
                if d in m_hist:
                    mvals[t] = m_hist[d]
            # pricing window ends at the last trading day <= obs_date
            hi = int(np.searchsorted(np.array([d.toordinal() for d in p_dates]), obs_date.toordinal(), side="right"))
            if hi < pricing_window_days:
                report.dropped_short_pricing += 1
                continue
            pvals = np.stack([v for _, v in p_hist[hi - pricing_window_days : hi]])
            panels = {
                "fundamental": ChannelPanel(firm, obs_date, "fundamental", fvals, np.isnan(fvals)),
                "market": ChannelPanel(firm, obs_date, "market", mvals, np.isnan(mvals)),
                "pricing": ChannelPanel(firm, obs_date, "pricing", pvals, np.isnan(pvals)),
            }
            observations.append(Observation(firm, obs_date, panels, build_targets(obs_date, dd)))
    report.observations_kept = len(observations)
    if report.dropped_short_history or report.dropped_short_pricing or report.dropped_post_default:
        log.info(
            "dropped observations: %d short history, %d short pricing, %d post-default",
            report.dropped_short_history,
            report.dropped_short_pricing,
            report.dropped_post_default,
        )
    return Dataset(observations, defaults), report


def load_directory(data_dir, quarters: int = 12, pricing_window_days: int = 504):
    data_dir = Path(data_dir)
    return load_channels(
        data_dir / FILE_NAMES["fundamental"],
        data_dir / FILE_NAMES["market"],
        data_dir / FILE_NAMES["pricing"],
        data_dir / FILE_NAMES["labels"],
        quarters=quarters,
        pricing_window_days=pricing_window_days,
    )
