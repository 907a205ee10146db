"""Deterministic stand-in for the physics application a job runs.

One call simulates N events. Every event is driven by the 64-bit FNV-1a hash
of "<model>|<seed>|<index>", so output is bit-identical for identical
(events, model, seed) on any platform. Each event lands in one of ten fixed
histogram bins (hash mod 10); the per-row values are derived from the same
hash, so the ntuple and the summary always agree.
"""

from __future__ import annotations

from ..fnv import fnv1a64

HISTOGRAM_BINS = 10

TWO64 = float(1 << 64)


def event_bin(model: str, seed: int, index: int) -> int:
    """Bin of one event: fnv1a64("<model>|<seed>|<index>") mod 10."""
    return fnv1a64(f"{model}|{seed}|{index}".encode("utf-8")) % HISTOGRAM_BINS


def run_simulated_app(events: int, model: str, seed: int) -> tuple[list[list[float]], dict[str, int]]:
    """Simulate `events` events; returns (ntuple rows, histogram bin->count).

    Rows are [index, u, bin] with u in [0, 1) derived from the event hash.
    The histogram keys are the decimal bin labels "0".."9" and its counts
    always sum to `events`.
    """
    if events < 1:
        raise ValueError("events must be >= 1")
    rows: list[list[float]] = []
    summary = {str(b): 0 for b in range(HISTOGRAM_BINS)}
    for i in range(events):
        h = fnv1a64(f"{model}|{seed}|{i}".encode("utf-8"))
        b = h % HISTOGRAM_BINS
        rows.append([float(i), h / TWO64, float(b)])
        summary[str(b)] += 1
    return rows, summary


def ntuple_csv(rows: list[list[float]]) -> bytes:
    """Deterministic CSV rendering of the ntuple (repr keeps full precision)."""
    lines = [",".join(repr(v) for v in row) for row in rows]
    return ("\n".join(lines) + "\n").encode("utf-8")
