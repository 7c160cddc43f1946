"""
Aggregates over evaluation traces: aggregate throughput per trajectory,
below-threshold slot count, handovers, reactive fallbacks and ping-pongs,
each as a mean over realizations with a 95% normal-approximation interval.
"""
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binomtest, norm

PING_PONG_WINDOW = 3
CONFIDENCE = 0.95

METRICS = ("throughput", "unmet", "handover", "fallback", "pingpong")


@dataclass(frozen=True)
class RunSummary:
    realizations: int
    slots: int
    throughput_mean: float
    throughput_ci: float
    unmet_mean: float
    unmet_ci: float
    handover_mean: float
    handover_ci: float
    fallback_mean: float
    fallback_ci: float
    pingpong_mean: float
    pingpong_ci: float

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------------------
# Per-trace counts
# ----------------------------
def ping_pong_count(serving: Sequence[int], initial_bs: int = 1, window: int = PING_PONG_WINDOW) -> int:
    """
    Number of returns A -> B -> A where the switch back comes at most
    `window` slots after the switch away.
    """
    previous = initial_bs
    last_switch = None  # (slot, from, to)
    count = 0
    for slot, bs in enumerate(serving, start=1):
        bs = int(bs)
        if bs != previous:
            if last_switch is not None:
                t, src, dst = last_switch
                if src == bs and dst == previous and slot - t <= window:
                    count += 1
            last_switch = (slot, previous, bs)
            previous = bs
    return count


def trace_totals(trace: pd.DataFrame, throughput_threshold: float = 1.0) -> dict:
    gamma = trace["throughput"].to_numpy(dtype=float)
    return {
        "throughput": math.fsum(gamma),
        "unmet": int(np.count_nonzero(gamma <= throughput_threshold)),
        "handover": int(np.count_nonzero(trace["handover"].astype(bool) | trace["fallback"].astype(bool))),
        "fallback": int(np.count_nonzero(trace["fallback"].astype(bool))),
        "pingpong": ping_pong_count(trace["serving_bs"].to_numpy()),
    }


def totals_frame(traces: Sequence[pd.DataFrame], throughput_threshold: float = 1.0) -> pd.DataFrame:
    rows = [{"realization": i, **trace_totals(t, throughput_threshold)} for i, t in enumerate(traces)]
    return pd.DataFrame(rows, columns=["realization", *METRICS])


# ----------------------------
# Aggregation
# ----------------------------
def _mean_ci(values: Iterable[float]) -> Tuple[float, float]:
    values = sorted(float(v) for v in values)
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, float(norm.ppf(0.5 + CONFIDENCE / 2) * math.sqrt(var / n))


def summarize(traces: Sequence[pd.DataFrame], throughput_threshold: float = 1.0) -> RunSummary:
    """
    Means and 95% half-widths over realizations.

    Raises:
        ValueError: no traces, or traces of different length.
    """
    if len(traces) == 0:
        raise ValueError("Cannot summarize an empty trace list.")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"All traces must cover the same number of slots, got {sorted(lengths)}")

    totals = totals_frame(traces, throughput_threshold)
    stats = {}
    for m in METRICS:
        mean, ci = _mean_ci(totals[m])
        stats[f"{m}_mean"] = mean
        stats[f"{m}_ci"] = ci
    return RunSummary(realizations=len(traces), slots=lengths.pop(), **stats)


def compare(summaries: Dict[str, RunSummary], reference: str = "proposed") -> pd.DataFrame:
    """
    One row per method; `delta_*` columns are method minus `reference`
    (the first entry when `reference` is absent).
    """
    if not summaries:
        raise ValueError("Nothing to compare.")
    slots = {s.slots for s in summaries.values()}
    if len(slots) != 1:
        raise ValueError(f"Summaries cover different trajectory lengths: {sorted(slots)}")
    ref = summaries.get(reference, next(iter(summaries.values())))

    rows = []
    for name, s in summaries.items():
        row = {"method": name, "realizations": s.realizations, "slots": s.slots}
        for m in METRICS:
            row[f"{m}_mean"] = getattr(s, f"{m}_mean")
            row[f"{m}_ci"] = getattr(s, f"{m}_ci")
        for m in METRICS:
            row[f"delta_{m}"] = getattr(s, f"{m}_mean") - getattr(ref, f"{m}_mean")
        rows.append(row)
    return pd.DataFrame(rows)


def paired_sign_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided sign test p-value on paired samples; ties are dropped."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"Paired samples differ in length: {a.shape} vs {b.shape}")
    diff = a - b
    diff = diff[diff != 0.0]
    if len(diff) == 0:
        return 1.0
    return float(binomtest(int(np.count_nonzero(diff > 0)), len(diff), 0.5).pvalue)


# ----------------------------
# Figure tables
# ----------------------------
def unmet_table(entries: List[Tuple[int, str, RunSummary]]) -> pd.DataFrame:
    """(trajectory_length, method, RunSummary) entries -> unmet-slot figure table."""
    return pd.DataFrame(
        [{"trajectory_length": m, "method": name, "unmet_mean": s.unmet_mean, "unmet_ci": s.unmet_ci}
         for m, name, s in entries],
        columns=["trajectory_length", "method", "unmet_mean", "unmet_ci"],
    )


def handover_table(entries: List[Tuple[int, str, RunSummary]]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"trajectory_length": m, "method": name, "handover_mean": s.handover_mean, "handover_ci": s.handover_ci}
         for m, name, s in entries],
        columns=["trajectory_length", "method", "handover_mean", "handover_ci"],
    )


def throughput_table(entries: List[Tuple[int, str, RunSummary]]) -> pd.DataFrame:
    """(num_bs, method, RunSummary) entries -> aggregate-throughput figure table."""
    return pd.DataFrame(
        [{"num_bs": k, "method": name, "aggregate_throughput_mean": s.throughput_mean, "ci": s.throughput_ci}
         for k, name, s in entries],
        columns=["num_bs", "method", "aggregate_throughput_mean", "ci"],
    )
