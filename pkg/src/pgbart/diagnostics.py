"""Chain traces, effective sample size and error summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

TRACE_COLUMNS = ("iter", "loglik", "sigma", "total_leaves", "train_mse", "test_mse", "elapsed_s")
_INT_COLUMNS = {"iter", "total_leaves"}


class TraceFormatError(ValueError):
    pass


@dataclass
class ChainTrace:
    """Per-iteration record of a chain.

    Row 0 is the initial state; row ``i`` is the state after ``i`` Gibbs
    sweeps. ``elapsed_s`` is cumulative sweep time, excluding bookkeeping.
    """

    columns: dict[str, list] = field(default_factory=lambda: {c: [] for c in TRACE_COLUMNS})
    leaf_counts: list[list[int]] = field(default_factory=list)
    meta: dict[str, float] = field(default_factory=dict)
    test_prediction: np.ndarray | None = None
    final_state: Any = field(default=None, repr=False)

    def append(self, *, leaf_counts: list[int] | None = None, **row) -> None:
        missing = set(TRACE_COLUMNS) - set(row)
        if missing:
            raise ValueError(f"trace row is missing {sorted(missing)}")
        it = self.columns["iter"]
        if it and row["iter"] <= it[-1]:
            raise ValueError("trace iterations must be strictly increasing")
        el = self.columns["elapsed_s"]
        if el and row["elapsed_s"] < el[-1]:
            raise ValueError("elapsed time must be non-decreasing")
        for name in TRACE_COLUMNS:
            self.columns[name].append(row[name])
        if leaf_counts is not None:
            self.leaf_counts.append(list(leaf_counts))

    def __len__(self) -> int:
        return len(self.columns["iter"])

    def __getitem__(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=int if name in _INT_COLUMNS else float)

    def slice(self, start: int, stop: int | None = None) -> ChainTrace:
        out = ChainTrace({c: v[start:stop] for c, v in self.columns.items()})
        out.leaf_counts = self.leaf_counts[start:stop]
        return out

    def __eq__(self, other):
        if not isinstance(other, ChainTrace):
            return NotImplemented
        return all(
            np.array_equal(self[c], other[c], equal_nan=True) for c in TRACE_COLUMNS
        ) and len(self) == len(other)


def ess(series) -> float:
    """Effective sample size by Geyer's initial monotone sequence estimator.

    Autocorrelations are summed in consecutive pairs, truncated at the first
    non-positive pair and forced to be non-increasing. The result is capped at
    the series length; a constant series gives 0.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 values to estimate ESS")
    if np.ptp(x) == 0:
        return 0.0
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    rho = acov / acov[0]
    n_pairs = n // 2
    pairs = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    stop = np.flatnonzero(pairs <= 0)
    if len(stop):
        pairs = pairs[: stop[0]]
    pairs = np.minimum.accumulate(pairs)
    tau = 2.0 * pairs.sum() - 1.0
    if tau <= 0:
        return float(n)
    return float(min(n / tau, n))


def ess_report(trace: ChainTrace, burn_in: int) -> dict[str, float]:
    """ESS of the post-burn-in log-likelihood and ESS per second of sweep time.

    The post-burn-in window is rows ``burn_in`` onwards.
    """
    if not 0 <= burn_in < len(trace):
        raise ValueError(f"burn_in must lie in [0, {len(trace)}), got {burn_in}")
    loglik = trace["loglik"][burn_in:]
    elapsed = trace["elapsed_s"]
    seconds = float(elapsed[-1] - elapsed[burn_in])
    value = ess(loglik) if len(loglik) >= 2 else float("nan")
    return {
        "n_samples": len(loglik),
        "ess": value,
        "seconds": seconds,
        "ess_per_s": value / seconds if seconds > 0 else float("nan"),
    }


def mse(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def _fmt(value, name: str) -> str:
    if name in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def write_trace(trace: ChainTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for i in range(len(trace)):
            writer.writerow([_fmt(trace.columns[c][i], c) for c in TRACE_COLUMNS])


def read_trace(path) -> ChainTrace:
    path = Path(path)
    trace = ChainTrace()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError(f"{path}: empty file, expected header {','.join(TRACE_COLUMNS)}")
        if tuple(header) != TRACE_COLUMNS:
            raise TraceFormatError(f"{path}:1: bad header {header}, expected {list(TRACE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise TraceFormatError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields, got {len(row)}")
            parsed = {}
            for col, (name, cell) in enumerate(zip(TRACE_COLUMNS, row), start=1):
                try:
                    parsed[name] = int(cell) if name in _INT_COLUMNS else float(cell)
                except ValueError:
                    raise TraceFormatError(f"{path}:{lineno}:{col}: cannot parse {cell!r} as {name}") from None
            trace.append(**parsed)
    return trace


def trace_summary(trace: ChainTrace, burn_in: int) -> dict[str, float]:
    """Headline numbers for one chain: ESS, ESS/s, final and mean errors, leaf counts."""
    burn_in = min(burn_in, len(trace) - 1)
    out = {}
    if len(trace) - burn_in >= 2:
        out.update(ess_report(trace, burn_in))
    post = slice(burn_in, None)
    out["mean_train_mse"] = float(np.mean(trace["train_mse"][post]))
    out["mean_test_mse"] = float(np.mean(trace["test_mse"][post]))
    out["mean_total_leaves"] = float(np.mean(trace["total_leaves"][post]))
    out["mean_sigma"] = float(np.mean(trace["sigma"][post]))
    out["final_train_mse"] = float(trace["train_mse"][-1])
    out["final_test_mse"] = float(trace["test_mse"][-1])
    out["total_seconds"] = float(trace["elapsed_s"][-1])
    out.update(trace.meta)
    return out
