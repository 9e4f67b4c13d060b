"""
Success rates, residue summaries, histograms and paired bootstrap comparisons

Every function here is a pure function of a per-record results frame (the
CSV written by the evaluation workflow), so summaries can be recomputed from
the raw records and match to the last digit.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.settings import BOOTSTRAP_RESAMPLES
from quantum.channels import ChannelFamily
from utils.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

GROUP_KEYS = ["method", "k_factor", "grid_index"]


def _true_columns(family: ChannelFamily) -> List[str]:
    return [f"true_{name}" for name in family.parameter_names]


def _require(frame: pd.DataFrame, columns: Sequence[str]):
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"Results frame lacks column(s): {', '.join(missing)}")


# ==================== RESIDUE SUMMARIES ====================

def mean_residues(frame: pd.DataFrame, family) -> pd.DataFrame:
    """Mean and standard deviation of each residue per (method, k, grid point)"""
    family = ChannelFamily.parse(family)
    residue_cols = [f"residue_{n}" for n in family.parameter_names]
    _require(frame, GROUP_KEYS + _true_columns(family) + residue_cols)

    grouped = frame.groupby(GROUP_KEYS + _true_columns(family), sort=True)
    out = grouped[residue_cols].agg(["mean", "std"])
    out.columns = [f"{stat}_{col}" for col, stat in out.columns]
    out["count"] = grouped.size()
    return out.reset_index()


def overall_residues(frame: pd.DataFrame, family) -> pd.DataFrame:
    """Mean and standard deviation of each residue per (method, k), over all grid points"""
    family = ChannelFamily.parse(family)
    residue_cols = [f"residue_{n}" for n in family.parameter_names]
    _require(frame, ["method", "k_factor"] + residue_cols)
    grouped = frame.groupby(["method", "k_factor"], sort=True)
    out = grouped[residue_cols].agg(["mean", "std"])
    out.columns = [f"{stat}_{col}" for col, stat in out.columns]
    out["count"] = grouped.size()
    return out.reset_index()


# ==================== SUCCESS RATES ====================

def success_percentages(frame: pd.DataFrame, family, cutoff: float) -> pd.DataFrame:
    """
    Per grid point: percentage of records whose residue is <= cutoff, per parameter

    Columns: method, k_factor, grid_index, true_<param>..., success_<param>...
    """
    family = ChannelFamily.parse(family)
    if not cutoff > 0:
        raise ConfigError(f"Residue cutoff must be > 0, got {cutoff}")
    names = family.parameter_names
    _require(frame, GROUP_KEYS + _true_columns(family) + [f"residue_{n}" for n in names])

    hits = frame[GROUP_KEYS + _true_columns(family)].copy()
    for name in names:
        hits[f"success_{name}"] = (frame[f"residue_{name}"] <= cutoff).astype(float) * 100.0
    return hits.groupby(GROUP_KEYS + _true_columns(family), sort=True).mean().reset_index()


def aggregate_success(per_point: pd.DataFrame, family, thresholds: Sequence[float]) -> pd.DataFrame:
    """
    Fraction (in percent) of grid points whose success percentage exceeds each threshold

    Example: at threshold 99 a GAD row reports the share of (eta, gamma) pairs
    for which more than 99% of the records landed within the cutoff.
    """
    family = ChannelFamily.parse(family)
    rows = []
    for (method, k_factor), group in per_point.groupby(["method", "k_factor"], sort=True):
        for threshold in thresholds:
            row = {"method": method, "k_factor": k_factor, "threshold": float(threshold),
                   "grid_points": int(len(group))}
            for name in family.parameter_names:
                row[f"rate_{name}"] = float((group[f"success_{name}"] > threshold).mean() * 100.0)
            rows.append(row)
    return pd.DataFrame(rows)


def cp_success(frame: pd.DataFrame, absolute_cutoff: float, relative_cutoff: float) -> pd.DataFrame:
    """
    CP success percentages per (method, k)

    absolute: wrapped residue <= absolute_cutoff, over every record
    relative: residue / phi <= relative_cutoff, over records with phi > 0
    """
    _require(frame, ["method", "k_factor", "residue_phi", "relative_residue_phi"])
    rows = []
    for (method, k_factor), group in frame.groupby(["method", "k_factor"], sort=True):
        relative = group["relative_residue_phi"].dropna()
        rows.append({
            "method": method,
            "k_factor": k_factor,
            "records": int(len(group)),
            "absolute_success": float((group["residue_phi"] <= absolute_cutoff).mean() * 100.0),
            "relative_records": int(len(relative)),
            "relative_success": float((relative <= relative_cutoff).mean() * 100.0) if len(relative) else np.nan,
        })
    return pd.DataFrame(rows)


# ==================== HISTOGRAMS ====================

def residue_histograms(frame: pd.DataFrame, family, bins: int = 20, upper: float = 0.5) -> pd.DataFrame:
    """
    Residue counts per (method, k, grid point, parameter) in `bins` equal bins on [0, upper]

    Residues above `upper` are counted in an extra overflow row (bin_low = upper, bin_high = inf).
    """
    family = ChannelFamily.parse(family)
    edges = np.linspace(0.0, upper, bins + 1)
    rows = []
    for key, group in frame.groupby(GROUP_KEYS, sort=True):
        method, k_factor, grid_index = key
        for name in family.parameter_names:
            values = group[f"residue_{name}"].to_numpy()
            counts, _ = np.histogram(values[values <= upper], bins=edges)
            base = {"method": method, "k_factor": k_factor, "grid_index": grid_index, "parameter": name}
            for low, high, count in zip(edges[:-1], edges[1:], counts):
                rows.append({**base, "bin_low": low, "bin_high": high, "count": int(count)})
            rows.append({**base, "bin_low": upper, "bin_high": np.inf, "count": int((values > upper).sum())})
    return pd.DataFrame(rows)


# ==================== PAIRED BOOTSTRAP ====================

def paired_bootstrap(
    a: np.ndarray,
    b: np.ndarray,
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: Optional[int] = 0,
    confidence: float = 0.95,
) -> Dict[str, float]:
    """
    Bootstrap interval of mean(a - b) over paired residues

    Returns:
        mean_difference, low, high and `a_better` (1.0 when the whole interval is below 0)
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
        raise DataError(f"Paired bootstrap needs two equal, non-empty 1-D arrays, got {a.shape} and {b.shape}")
    diff = a - b
    rng = np.random.default_rng(seed)
    means = np.empty(resamples)
    # chunked so large samples do not allocate resamples x N at once
    chunk = max(1, 2_000_000 // len(diff))
    for start in range(0, resamples, chunk):
        stop = min(start + chunk, resamples)
        idx = rng.integers(0, len(diff), size=(stop - start, len(diff)))
        means[start:stop] = diff[idx].mean(axis=1)
    tail = (1.0 - confidence) / 2.0
    low, high = np.quantile(means, [tail, 1.0 - tail])
    return {
        "mean_difference": float(diff.mean()),
        "low": float(low),
        "high": float(high),
        "a_better": float(high < 0),
    }


def paired_comparisons(
    frame: pd.DataFrame,
    family,
    pairs: Sequence[tuple] = (("ANN_FF", "FF"), ("FF", "MF"), ("ANN_FF", "MF")),
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
) -> pd.DataFrame:
    """
    Paired bootstrap of residue differences between methods, per k and parameter

    Records are paired on (k_factor, seed); methods missing from the frame are skipped.
    """
    family = ChannelFamily.parse(family)
    rows = []
    present = set(frame["method"].unique()) if len(frame) else set()
    for method_a, method_b in pairs:
        if method_a not in present or method_b not in present:
            continue
        for k_factor in sorted(frame["k_factor"].unique()):
            at_k = frame[frame["k_factor"] == k_factor]
            left = at_k[at_k["method"] == method_a].set_index("seed").sort_index()
            right = at_k[at_k["method"] == method_b].set_index("seed").sort_index()
            common = left.index.intersection(right.index)
            if len(common) == 0:
                continue
            for name in family.parameter_names:
                col = f"residue_{name}"
                stats = paired_bootstrap(left.loc[common, col].to_numpy(), right.loc[common, col].to_numpy(),
                                         resamples, seed)
                rows.append({"method_a": method_a, "method_b": method_b, "k_factor": k_factor,
                             "parameter": name, "pairs": int(len(common)), **stats})
    return pd.DataFrame(rows)
