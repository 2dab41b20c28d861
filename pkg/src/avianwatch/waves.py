"""Outbreak waves: detection on case series, official windows, signal timeliness."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from datetime import date

import numpy as np

from .ingestion import WEEK, FileFormatError, RowError, WeeklySeries, _decode, week_start

logger = logging.getLogger(__name__)

PRE_START_WINDOW = 3  # weeks before an official start that still count as timely
EXTENT_FRACTION = 0.1
WAVE_COLUMNS = ("label", "start", "end")
TIMELINESS_COLUMNS = ("wave", "first_fire", "lead_weeks", "within_3w")


@dataclass(frozen=True)
class WaveSegment:
    label: str
    start: date
    end: date
    peak: date | None = None
    total: float | None = None
    source: str = "detected"  # or "official"

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"wave {self.label}: start {self.start} after end {self.end}")
        if self.peak is not None and not self.start <= self.peak <= self.end:
            raise ValueError(f"wave {self.label}: peak outside the segment")


def smooth(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; edges average over the part of the window that exists."""
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(values)))
    n = values.size
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def detect_waves(cases: WeeklySeries, min_prominence: float = 0.1, smoothing_window: int = 3) -> list[WaveSegment]:
    """Waves as intervals around local peaks of the smoothed series.

    A peak qualifies when it reaches ``min_prominence`` of the global
    smoothed maximum and a decline follows it inside the series. The
    interval grows outward while smoothed values stay at or above 10% of
    the peak; overlapping intervals are merged.
    """
    if smoothing_window < 1 or smoothing_window % 2 == 0:
        raise ValueError("smoothing_window must be a positive odd integer")
    if not 0 < min_prominence <= 1:
        raise ValueError("min_prominence must be in (0, 1]")
    x = cases.values
    if x.size < smoothing_window:
        raise ValueError(f"need at least {smoothing_window} weeks, got {x.size}")
    if np.any(x < 0):
        raise ValueError("case counts must be non-negative")
    sm = smooth(x, smoothing_window)
    top = sm.max()
    if top <= 0:
        return []
    n = sm.size
    intervals = []
    i = 1
    while i < n - 1:
        # a plateau counts as one peak; it needs a rise before and a decline after
        j = i
        while j + 1 < n and sm[j + 1] == sm[i]:
            j += 1
        if j < n - 1 and sm[i - 1] < sm[i] and sm[j + 1] < sm[i] and sm[i] >= min_prominence * top:
            floor = EXTENT_FRACTION * sm[i]
            lo, hi = i, j
            while lo > 0 and sm[lo - 1] >= floor:
                lo -= 1
            while hi < n - 1 and sm[hi + 1] >= floor:
                hi += 1
            intervals.append((lo, hi))
        i = j + 1
    merged: list[list[int]] = []
    for lo, hi in intervals:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    out = []
    for k, (lo, hi) in enumerate(merged, start=1):
        peak = lo + int(np.argmax(sm[lo : hi + 1]))
        out.append(
            WaveSegment(
                label=f"W{k}",
                start=cases.start_week + lo * WEEK,
                end=cases.start_week + hi * WEEK,
                peak=cases.start_week + peak * WEEK,
                total=float(x[lo : hi + 1].sum()),
                source="detected",
            )
        )
    return out


def load_official_waves(stream) -> list[WaveSegment]:
    reader = csv.reader(io.StringIO(_decode(stream)))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != WAVE_COLUMNS:
        raise FileFormatError("waves file header must be label,start,end")
    out = []
    for line, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 3:
            raise RowError(line, "expected label,start,end")
        label, start, end = (c.strip() for c in row)
        try:
            s, e = date.fromisoformat(start), date.fromisoformat(end)
        except ValueError:
            raise RowError(line, "dates must be ISO YYYY-MM-DD") from None
        if s > e:
            raise RowError(line, f"start {s} is after end {e}")
        out.append(WaveSegment(label, s, e, source="official"))
    return out


@dataclass(frozen=True)
class WaveTimeliness:
    wave: str
    first_fire: date | None
    lead_weeks: int | None  # start week minus first-fire week; None unless the fire is at or before the start

    @property
    def within_window(self) -> bool:
        return self.lead_weeks is not None and 0 <= self.lead_weeks <= PRE_START_WINDOW


@dataclass(frozen=True)
class TimelinessReport:
    rows: tuple[WaveTimeliness, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMELINESS_COLUMNS)
        for r in self.rows:
            w.writerow([
                r.wave,
                r.first_fire.isoformat() if r.first_fire else "",
                "" if r.lead_weeks is None else r.lead_weeks,
                str(r.within_window).lower(),
            ])
        return buf.getvalue()


def evaluate_timeliness(
    signal: WeeklySeries,
    waves: list[WaveSegment],
    z_threshold: float = 2.0,
    baseline_window: int = 8,
    week_convention: str = "iso",
) -> TimelinessReport:
    """First week from three weeks before each wave start where the signal's
    trailing z-score exceeds ``z_threshold``.

    The z-score of week ``t`` uses the mean and sample std of the
    ``baseline_window`` weeks before ``t``. Weeks whose baseline is flat
    or shorter than ``baseline_window`` are skipped. Wave dates are snapped
    to the signal's week buckets.
    """
    if baseline_window < 4:
        raise ValueError("baseline_window must be at least 4 weeks")
    x = signal.values
    rows = []
    for wave in waves:
        start = week_start(wave.start, week_convention)
        end = week_start(wave.end, week_convention)
        i0 = signal.index_of(start) - PRE_START_WINDOW
        i1 = signal.index_of(end)
        if i0 >= len(signal) or i0 + PRE_START_WINDOW < 0:
            raise ValueError(f"signal does not overlap the pre-start window of wave {wave.label}")
        fire = None
        for t in range(max(i0, 0), min(i1, len(signal) - 1) + 1):
            week = signal.start_week + t * WEEK
            if t < baseline_window:
                logger.warning("wave %s: week %s has no full baseline, skipped", wave.label, week)
                continue
            base = x[t - baseline_window : t]
            sd = base.std(ddof=1)
            if sd == 0:
                logger.warning("wave %s: flat baseline before week %s, skipped", wave.label, week)
                continue
            if (x[t] - base.mean()) / sd > z_threshold:
                fire = t
                break
        if fire is None:
            rows.append(WaveTimeliness(wave.label, None, None))
        else:
            fired = signal.start_week + fire * WEEK
            lead = (start - fired).days // 7
            rows.append(WaveTimeliness(wave.label, fired, lead if lead >= 0 else None))
    return TimelinessReport(tuple(rows))


def mark_waves(weeks: list[date], waves: list[WaveSegment], week_convention: str = "iso") -> list[str]:
    """Label of the wave covering each week, or an empty string."""
    spans = [(week_start(w.start, week_convention), week_start(w.end, week_convention), w.label) for w in waves]
    return [next((lab for s, e, lab in spans if s <= wk <= e), "") for wk in weeks]
