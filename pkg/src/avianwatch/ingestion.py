"""Parsing of raw case, search-trend and post files, and weekly bucketing.

Three input kinds are supported:

* case reports (``date,country,region,cases``), one row per official report;
* search-trend exports (``week_start,region,score``) with scores in [0, 100];
* posts as line-delimited JSON with ``id,timestamp,text,lang,user_location``.

Everything downstream works on :class:`WeeklySeries`, a gapless run of
weekly buckets.
"""

from __future__ import annotations

import codecs
import csv
import io
import json
import logging
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Any, BinaryIO

import numpy as np

logger = logging.getLogger(__name__)

WEEK = timedelta(days=7)

# week convention -> weekday index (Monday=0) on which buckets start
WEEK_CONVENTIONS = {"iso": 0, "mmwr": 6}

CASE_COLUMNS = ("date", "country", "region", "cases")
TREND_COLUMNS = ("week_start", "region", "score")
POST_KEYS = ("id", "timestamp", "text", "lang", "user_location")


class IngestError(ValueError):
    """Base class for ingestion failures."""


class FileFormatError(IngestError):
    """The whole file is unusable (encoding, header, missing column)."""


class RowError(IngestError):
    """A single row could not be parsed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.reason = message


class EmptySeriesError(IngestError):
    pass


class NoOverlapError(IngestError):
    pass


@dataclass(frozen=True)
class CaseRecord:
    report_date: date
    country: str
    region: str
    case_count: int | None  # None: count left empty by the reporting body

    @property
    def flagged(self) -> bool:
        return self.case_count is None


@dataclass(frozen=True)
class TrendScore:
    week_start: date
    region: str
    score: int


@dataclass(frozen=True)
class Post:
    id: str
    timestamp: datetime
    text: str
    language: str = "en"
    user_location: str = ""
    geo: Any = None  # GeoTag once resolved
    relevance: str | None = None


@dataclass
class IngestReport:
    """Row accounting for one parsed file."""

    source: str = ""
    rows_read: int = 0
    flagged: int = 0
    dropped: list[RowError] = field(default_factory=list)

    @property
    def rows_dropped(self) -> int:
        return len(self.dropped)


class WeeklySeries:
    """Consecutive weekly buckets starting at ``start_week``.

    Values are stored as a read-only float array; there are no gaps and no
    NaNs by construction.
    """

    __slots__ = ("start_week", "values")

    def __init__(self, start_week: date, values: Iterable[float]):
        arr = np.array(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise EmptySeriesError("a weekly series needs at least one bucket")
        if not np.all(np.isfinite(arr)):
            raise ValueError("weekly series values must be finite")
        if isinstance(start_week, datetime):
            start_week = start_week.date()
        arr.flags.writeable = False
        self.start_week = start_week
        self.values = arr

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeeklySeries):
            return NotImplemented
        return self.start_week == other.start_week and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"WeeklySeries(start_week={self.start_week}, n={len(self)})"

    @property
    def end_week(self) -> date:
        return self.start_week + (len(self) - 1) * WEEK

    @property
    def weeks(self) -> list[date]:
        return [self.start_week + k * WEEK for k in range(len(self))]

    def index_of(self, week: date) -> int:
        """Bucket index of ``week`` (which must fall on a bucket boundary)."""
        days = (week - self.start_week).days
        if days % 7:
            raise ValueError(f"{week} is not on this series' week boundary")
        return days // 7

    def slice_weeks(self, first: date, last: date) -> WeeklySeries:
        i, j = self.index_of(first), self.index_of(last)
        if i < 0 or j >= len(self) or i > j:
            raise NoOverlapError(f"weeks {first}..{last} outside {self.start_week}..{self.end_week}")
        return WeeklySeries(first, self.values[i : j + 1])


@dataclass(frozen=True)
class AlignedPair:
    a: WeeklySeries
    b: WeeklySeries

    def __post_init__(self):
        if self.a.start_week != self.b.start_week or len(self.a) != len(self.b):
            raise ValueError("aligned series must share start week and length")

    @property
    def n_overlap(self) -> int:
        return len(self.a)


def week_start(day: date, convention: str = "iso") -> date:
    """First day of the bucket containing ``day``."""
    try:
        first = WEEK_CONVENTIONS[convention]
    except KeyError:
        raise ValueError(f"unknown week convention {convention!r}") from None
    if isinstance(day, datetime):
        day = day.date()
    return day - timedelta(days=(day.weekday() - first) % 7)


# ---------------------------------------------------------------- parsing


def _decode(stream: BinaryIO | bytes | str) -> str:
    if isinstance(stream, str):
        return stream
    raw = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    if isinstance(raw, str):
        return raw
    try:
        return codecs.decode(raw, "utf-8-sig")
    except UnicodeDecodeError as exc:
        raise FileFormatError(f"input is not valid UTF-8 (byte {exc.start})") from None


def _parse_date(value: str, fmt: str | None) -> date:
    value = value.strip()
    if fmt:
        return datetime.strptime(value, fmt).date()
    return date.fromisoformat(value)


def _read_table(text: str, required: Iterable[str], schema: Mapping[str, str]):
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FileFormatError("file is empty (no header row)") from None
    index = {}
    for col in required:
        name = schema.get(col, col)
        if name not in header:
            raise FileFormatError(f"missing mandatory column {name!r}")
        index[col] = header.index(name)
    # header is line 1
    return index, ((line, row) for line, row in enumerate(reader, start=2))


def _field(row: list[str], i: int) -> str:
    return row[i].strip() if i < len(row) else ""


def _handle(err: RowError, strict: bool, report: IngestReport | None):
    if strict:
        raise err
    logger.warning("%s: dropped %s", report.source if report else "input", err)
    if report is not None:
        report.dropped.append(err)


def parse_case_reports(
    stream,
    schema: Mapping[str, str] | None = None,
    *,
    strict: bool = True,
    report: IngestReport | None = None,
) -> list[CaseRecord]:
    """Parse official case reports.

    ``schema`` maps canonical column names (``date``, ``country``, ``region``,
    ``cases``) to the file's header names; the key ``date_format`` overrides
    ISO date parsing. Rows with an empty ``cases`` field come back with
    ``case_count=None`` rather than being dropped.

    With ``strict=False`` bad rows are recorded in ``report`` and skipped.
    """
    schema = dict(schema or {})
    fmt = schema.pop("date_format", None)
    index, rows = _read_table(_decode(stream), CASE_COLUMNS, schema)
    out = []
    for line, row in rows:
        if not any(cell.strip() for cell in row):
            continue
        if report is not None:
            report.rows_read += 1
        try:
            rec = _case_row(row, index, fmt, line)
        except RowError as err:
            _handle(err, strict, report)
            continue
        if rec.flagged and report is not None:
            report.flagged += 1
        out.append(rec)
    return out


def _case_row(row, index, fmt, line) -> CaseRecord:
    raw_date = _field(row, index["date"])
    try:
        day = _parse_date(raw_date, fmt)
    except ValueError:
        raise RowError(line, f"malformed date {raw_date!r}") from None
    raw_count = _field(row, index["cases"])
    count = None
    if raw_count:
        try:
            as_float = float(raw_count)
        except ValueError:
            raise RowError(line, f"malformed case count {raw_count!r}") from None
        if not as_float.is_integer() or as_float < 0:
            raise RowError(line, f"case count must be a non-negative integer, got {raw_count!r}")
        count = int(as_float)
    return CaseRecord(day, _field(row, index["country"]), _field(row, index["region"]), count)


def parse_trend_scores(
    stream,
    schema: Mapping[str, str] | None = None,
    *,
    strict: bool = True,
    report: IngestReport | None = None,
) -> list[TrendScore]:
    schema = dict(schema or {})
    fmt = schema.pop("date_format", None)
    index, rows = _read_table(_decode(stream), TREND_COLUMNS, schema)
    out = []
    for line, row in rows:
        if not any(cell.strip() for cell in row):
            continue
        if report is not None:
            report.rows_read += 1
        try:
            out.append(_trend_row(row, index, fmt, line))
        except RowError as err:
            _handle(err, strict, report)
    return out


def _trend_row(row, index, fmt, line) -> TrendScore:
    raw_date = _field(row, index["week_start"])
    try:
        day = _parse_date(raw_date, fmt)
    except ValueError:
        raise RowError(line, f"malformed date {raw_date!r}") from None
    raw = _field(row, index["score"])
    # trend exports write "<1" for non-zero interest below one
    if raw == "<1":
        raw = "0"
    try:
        score = int(raw)
    except ValueError:
        raise RowError(line, f"malformed score {raw!r}") from None
    if not 0 <= score <= 100:
        raise RowError(line, f"score {score} outside [0, 100]")
    return TrendScore(day, _field(row, index["region"]), score)


def _parse_timestamp(value: str) -> datetime:
    value = value.strip()
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    return datetime.fromisoformat(value)


def parse_posts(stream, *, strict: bool = True, report: IngestReport | None = None) -> list[Post]:
    """Parse line-delimited JSON posts. Duplicate ids are an error."""
    text = _decode(stream)
    out: list[Post] = []
    seen: dict[str, int] = {}
    for line, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        if report is not None:
            report.rows_read += 1
        try:
            post = _post_line(raw, line)
            if post.id in seen:
                raise RowError(line, f"duplicate post id {post.id!r} (first seen on line {seen[post.id]})")
        except RowError as err:
            _handle(err, strict, report)
            continue
        seen[post.id] = line
        out.append(post)
    return out


def _post_line(raw: str, line: int) -> Post:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RowError(line, f"malformed record: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise RowError(line, "record is not an object")
    for key in ("id", "timestamp", "text"):
        if obj.get(key) in (None, ""):
            raise RowError(line, f"missing {key!r}")
    try:
        ts = _parse_timestamp(str(obj["timestamp"]))
    except ValueError:
        raise RowError(line, f"malformed timestamp {obj['timestamp']!r}") from None
    return Post(
        id=str(obj["id"]),
        timestamp=ts,
        text=str(obj["text"]),
        language=str(obj.get("lang") or "und"),
        user_location=str(obj.get("user_location") or ""),
    )


# ------------------------------------------------------------ serializing


def write_case_reports(records: Iterable[CaseRecord]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CASE_COLUMNS)
    for r in records:
        w.writerow([r.report_date.isoformat(), r.country, r.region, "" if r.case_count is None else r.case_count])
    return buf.getvalue().encode("utf-8")


def write_trend_scores(records: Iterable[TrendScore]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TREND_COLUMNS)
    for r in records:
        w.writerow([r.week_start.isoformat(), r.region, r.score])
    return buf.getvalue().encode("utf-8")


def write_posts(posts: Iterable[Post]) -> bytes:
    lines = []
    for p in posts:
        obj = {
            "id": p.id,
            "timestamp": p.timestamp.isoformat(),
            "text": p.text,
            "lang": p.language,
            "user_location": p.user_location,
        }
        lines.append(json.dumps(obj, ensure_ascii=False, sort_keys=True))
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def write_series(series: WeeklySeries) -> str:
    rows = [f"{wk.isoformat()},{v:.10g}" for wk, v in zip(series.weeks, series.values)]
    return "week,value\n" + "\n".join(rows) + "\n"


def read_series(text: str) -> WeeklySeries:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["week", "value"]:
        raise FileFormatError("series file must have header 'week,value'")
    weeks, values = [], []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            weeks.append(date.fromisoformat(row[0]))
            values.append(float(row[1]))
        except (ValueError, IndexError):
            raise RowError(line, f"bad series row {row!r}") from None
    if not weeks:
        raise EmptySeriesError("series file has no rows")
    for k, wk in enumerate(weeks):
        if wk != weeks[0] + k * WEEK:
            raise FileFormatError(f"series file has a gap or disorder at {wk}")
    return WeeklySeries(weeks[0], values)


# ------------------------------------------------------------ aggregation


def record_date(record) -> date:
    if isinstance(record, CaseRecord):
        return record.report_date
    if isinstance(record, TrendScore):
        return record.week_start
    if isinstance(record, Post):
        return record.timestamp.date()
    if isinstance(record, tuple):
        return record[0]
    raise TypeError(f"don't know the date of {type(record).__name__}")


def _default_value(record) -> float | None:
    if isinstance(record, CaseRecord):
        return record.case_count
    if isinstance(record, TrendScore):
        return record.score
    if isinstance(record, Post):
        return 1.0
    if isinstance(record, tuple):
        return record[1]
    raise TypeError(f"no default value for {type(record).__name__}")


def aggregate_weekly(
    records: Iterable,
    value_of: Callable[[Any], float | None] | None = None,
    week_convention: str = "iso",
    *,
    date_of: Callable[[Any], date] = record_date,
    span: tuple[date, date] | None = None,
) -> WeeklySeries:
    """Sum ``value_of(record)`` into weekly buckets.

    A ``None`` value (a flagged case row) contributes 0. Weeks without
    records are 0. The result runs from the earliest to the latest week seen,
    or over ``span`` (inclusive, snapped to week starts) when given; records
    outside ``span`` are ignored.
    """
    value_of = value_of or _default_value
    sums: dict[date, float] = {}
    for rec in records:
        wk = week_start(date_of(rec), week_convention)
        v = value_of(rec)
        sums[wk] = sums.get(wk, 0.0) + (0.0 if v is None else float(v))
    if span is not None:
        first, last = (week_start(d, week_convention) for d in span)
    else:
        if not sums:
            raise EmptySeriesError("no records to aggregate")
        first, last = min(sums), max(sums)
    if first > last:
        raise EmptySeriesError("empty week span")
    n = (last - first).days // 7 + 1
    values = np.zeros(n)
    for wk, v in sums.items():
        k = (wk - first).days // 7
        if 0 <= k < n:
            values[k] += v
    return WeeklySeries(first, values)


def align(a: WeeklySeries, b: WeeklySeries, fill: str = "zero") -> AlignedPair:
    """Trim two series to their common weeks.

    ``fill="error"`` instead refuses any pair whose ranges differ.
    Interior gaps cannot occur, so zero filling never has anything to fill.
    """
    if fill not in ("zero", "error"):
        raise ValueError("fill must be 'zero' or 'error'")
    if (a.start_week - b.start_week).days % 7:
        raise ValueError("series use different week conventions")
    first = max(a.start_week, b.start_week)
    last = min(a.end_week, b.end_week)
    if first > last:
        raise NoOverlapError(f"no common weeks: {a.start_week}..{a.end_week} vs {b.start_week}..{b.end_week}")
    if fill == "error" and (a.start_week != b.start_week or len(a) != len(b)):
        raise NoOverlapError("series cover different week ranges")
    return AlignedPair(a.slice_weeks(first, last), b.slice_weeks(first, last))


def align_many(series: list[WeeklySeries]) -> list[WeeklySeries]:
    if not series:
        raise ValueError("nothing to align")
    first = max(s.start_week for s in series)
    last = min(s.end_week for s in series)
    if first > last:
        raise NoOverlapError("series share no common weeks")
    return [s.slice_weeks(first, last) for s in series]
