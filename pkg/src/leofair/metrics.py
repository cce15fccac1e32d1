"""Fairness and efficiency statistics per sample and across a run."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .categories import CATEGORIES
from .errors import ConsistencyError

UNDEFINED = float("nan")


def allocation_rate(allocated: dict | np.ndarray, categories: np.ndarray, user_ids: np.ndarray | None = None) -> dict:
    """Fraction of each category's users holding spectrum.

    ``allocated`` is either a boolean/fractional indicator aligned with ``categories`` or a
    mapping user_id -> bandwidth. Categories without users are left out of the result.
    """
    cats = np.asarray(categories)
    if isinstance(allocated, dict):
        if user_ids is None:
            raise ConsistencyError("a user_id -> bandwidth map needs the matching user_ids")
        index = {int(u): i for i, u in enumerate(user_ids)}
        ind = np.zeros(len(cats))
        for uid, bw in allocated.items():
            if int(uid) not in index:
                raise ConsistencyError(f"allocation names unknown user {uid}")
            ind[index[int(uid)]] = 1.0 if bw > 0 else 0.0
    else:
        ind = np.asarray(allocated, dtype=float)
        if ind.shape != cats.shape:
            raise ConsistencyError("allocation indicator and categories differ in length")
    out = {}
    for i, name in enumerate(CATEGORIES):
        members = cats == i
        if members.any():
            out[name] = float(ind[members].mean())
    return out


def disparity(rates: dict) -> float:
    """Urban over rural allocation rate; +inf if only rural is starved, NaN for 0/0."""
    if "rural" not in rates or "urban" not in rates:
        raise ConsistencyError("disparity needs both urban and rural rates")
    u, r = rates["urban"], rates["rural"]
    if r == 0:
        return math.inf if u > 0 else UNDEFINED
    return u / r


def disparity_from_counts(allocated: dict, sizes: dict) -> float:
    """Same ratio as ``disparity`` but from integer tallies.

    Evaluated as one integer division, so equal ratios of counts give bit-identical floats.
    ``allocated`` may hold slot-summed counts; the slot factor cancels.
    """
    au, ar = int(allocated["urban"]), int(allocated["rural"])
    nu, nr = int(sizes["urban"]), int(sizes["rural"])
    if nu == 0 or nr == 0:
        raise ConsistencyError("disparity needs both urban and rural users")
    if ar == 0:
        return math.inf if au > 0 else UNDEFINED
    return (au * nr) / (ar * nu)


def jain_index(rates: Sequence[float]) -> float:
    x = np.asarray(rates, dtype=float)
    if x.size == 0:
        raise ValueError("jain index of an empty sequence")
    if np.any(x < 0):
        raise ValueError("rates must be non-negative")
    sq = float(np.dot(x, x))
    if sq == 0:
        return UNDEFINED
    return float(x.sum() ** 2 / (x.size * sq))


def average_sinr(sinr_linear: Sequence[float]) -> float:
    """Linear-domain mean of allocated users' SINR, in dB."""
    x = np.asarray(sinr_linear, dtype=float)
    if x.size == 0:
        return UNDEFINED
    return float(10.0 * np.log10(x.mean()))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape or a.size < 3:
        raise ValueError("pearson needs two equal-length sequences of at least 3 values")
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0:
        return UNDEFINED
    return float(np.dot(da, db) / denom)


@dataclass
class SnapshotMetrics:
    policy: str
    snapshot_index: int
    sample_index: int
    rho_urban: float
    rho_suburban: float
    rho_rural: float
    dgeo: float
    jain: float
    jain_all: float
    avg_sinr_db: float
    avg_snr_db: float
    sum_rate: float

    FIELDS = (
        "policy", "snapshot_index", "sample_index", "rho_urban", "rho_suburban", "rho_rural",
        "dgeo", "jain", "jain_all", "avg_sinr_db", "avg_snr_db", "sum_rate",
    )

    def row(self) -> list:
        d = asdict(self)
        return [d[k] if isinstance(d[k], (str, int)) else format_float(d[k]) for k in self.FIELDS]


def format_float(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def summarize(values: Iterable[float]) -> dict:
    """Mean/std/min/max over finite values with the sentinels counted separately."""
    v = np.asarray(list(values), dtype=float)
    finite = v[np.isfinite(v)]
    out = {
        "n": int(v.size),
        "n_finite": int(finite.size),
        "n_inf": int(np.count_nonzero(np.isinf(v))),
        "n_undefined": int(np.count_nonzero(np.isnan(v))),
    }
    if finite.size:
        out.update(
            mean=float(finite.mean()),
            std=float(finite.std()),
            min=float(finite.min()),
            max=float(finite.max()),
        )
    else:
        out.update(mean=UNDEFINED, std=UNDEFINED, min=UNDEFINED, max=UNDEFINED)
    return out


def aggregate(records: Sequence[SnapshotMetrics]) -> dict:
    """Per-policy statistics over every (snapshot, sample) record."""
    by_policy: dict[str, list] = {}
    for rec in records:
        by_policy.setdefault(rec.policy, []).append(rec)
    report = {}
    for policy, recs in by_policy.items():
        col = {f: np.array([getattr(r, f) for r in recs], dtype=float) for f in SnapshotMetrics.FIELDS[3:]}
        entry = {f: summarize(col[f]) for f in col}
        ru, rr = col["rho_urban"].mean(), col["rho_rural"].mean()
        entry["dgeo_ratio_of_means"] = float(ru / rr) if rr > 0 else (math.inf if ru > 0 else UNDEFINED)
        ok = np.isfinite(col["avg_sinr_db"]) & np.isfinite(col["dgeo"])
        entry["pearson_sinr_dgeo"] = (
            pearson(col["avg_sinr_db"][ok], col["dgeo"][ok]) if ok.sum() >= 3 else UNDEFINED
        )
        snaps = sorted({r.snapshot_index for r in recs})
        snap_idx = np.array([r.snapshot_index for r in recs])
        entry["dgeo_timeseries"] = [summarize(col["dgeo"][snap_idx == k])["mean"] for k in snaps]
        report[policy] = entry
    return report


def json_safe(obj):
    """Replace non-finite floats with strings so the report is strict JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return format_float(obj)
    return obj
