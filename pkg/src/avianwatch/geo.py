"""Resolve free-text profile locations against a static gazetteer."""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from importlib import resources

from .ingestion import FileFormatError, Post, RowError, _decode

GAZETTEER_COLUMNS = ("name", "aliases", "country", "region", "lat", "lon")
DEFAULT_EXCLUSIONS = ("earth", "worldwide", "everywhere", "nowhere", "international")

_NON_ALNUM = re.compile(r"[^0-9a-z]+")
_SEGMENT_SPLIT = re.compile(r"[,/|;]| - ")


class Unmatched(enum.Enum):
    EXCLUDED = "excluded"
    UNRESOLVED = "unresolved"


EXCLUDED = Unmatched.EXCLUDED
UNRESOLVED = Unmatched.UNRESOLVED


@dataclass(frozen=True)
class GazetteerEntry:
    names: tuple[str, ...]  # first is the canonical name, the rest aliases
    country: str
    region: str
    lat: float
    lon: float


@dataclass(frozen=True)
class GeoTag:
    country: str
    region: str
    match_kind: str  # exact | alias | fuzzy
    confidence: float


def normalize_place(text: str) -> str:
    return " ".join(_NON_ALNUM.sub(" ", text.lower()).split())


@dataclass(frozen=True)
class Gazetteer:
    entries: tuple[GazetteerEntry, ...]
    exclusions: frozenset[str] = frozenset(DEFAULT_EXCLUSIONS)
    _index: dict = field(default=None, init=False, repr=False, compare=False)
    _variants: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        index: dict[str, list[tuple[int, str]]] = {}
        variants = []
        for i, entry in enumerate(self.entries):
            if not entry.names:
                raise ValueError("gazetteer entry without a name")
            for k, name in enumerate(entry.names):
                key = normalize_place(name)
                if not key:
                    continue
                kind = "exact" if k == 0 else "alias"
                index.setdefault(key, []).append((i, kind))
                variants.append((key, i))
        object.__setattr__(self, "exclusions", frozenset(normalize_place(e) for e in self.exclusions))
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_variants", tuple(variants))


def load_gazetteer(stream, exclusions: Iterable[str] | None = None) -> Gazetteer:
    reader = csv.reader(io.StringIO(_decode(stream)))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != GAZETTEER_COLUMNS:
        raise FileFormatError("gazetteer header must be " + ",".join(GAZETTEER_COLUMNS))
    entries = []
    for line, row in enumerate(reader, start=2):
        if not row or row[0].startswith("#"):
            continue
        if len(row) != len(GAZETTEER_COLUMNS):
            raise RowError(line, "wrong number of gazetteer fields")
        name, aliases, country, region, lat, lon = (c.strip() for c in row)
        names = (name,) + tuple(a.strip() for a in aliases.split("|") if a.strip())
        try:
            entries.append(GazetteerEntry(names, country, region, float(lat), float(lon)))
        except ValueError:
            raise RowError(line, "bad coordinates") from None
    if exclusions is None:
        exclusions = DEFAULT_EXCLUSIONS
    return Gazetteer(tuple(entries), frozenset(exclusions))


def load_exclusions(stream) -> list[str]:
    return [ln.strip() for ln in _decode(stream).splitlines() if ln.strip() and not ln.startswith("#")]


def default_gazetteer() -> Gazetteer:
    data = resources.files("avianwatch") / "data"
    exclusions = load_exclusions((data / "exclusions.txt").read_bytes())
    return load_gazetteer((data / "gazetteer.csv").read_bytes(), exclusions)


def levenshtein(a: str, b: str, bound: int | None = None) -> int:
    """Edit distance; returns ``bound + 1`` as soon as it must exceed ``bound``."""
    if len(a) < len(b):
        a, b = b, a
    if bound is not None and len(a) - len(b) > bound:
        return bound + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        if bound is not None and min(cur) > bound:
            return bound + 1
        prev = cur
    return prev[-1]


def _place(gz: Gazetteer, i: int) -> tuple[str, str]:
    e = gz.entries[i]
    return e.country, e.region


def _exact(gz: Gazetteer, key: str) -> GeoTag | None | Unmatched:
    hits = gz._index.get(key)
    if not hits:
        return None
    places = {_place(gz, i) for i, _ in hits}
    if len(places) > 1:
        return UNRESOLVED
    i, kind = min(hits, key=lambda h: (h[1] != "exact", h[0]))
    country, region = _place(gz, i)
    return GeoTag(country, region, kind, 1.0)


def _segments_exact(gz: Gazetteer, freeform: str) -> GeoTag | None | Unmatched:
    tags = []
    for seg in _SEGMENT_SPLIT.split(freeform):
        key = normalize_place(seg)
        if not key or key in gz.exclusions:
            continue
        tag = _exact(gz, key)
        if tag is UNRESOLVED:
            return UNRESOLVED
        if tag is not None:
            tags.append(tag)
    if not tags:
        return None
    if len({t.country for t in tags}) > 1:
        return UNRESOLVED
    regions = {t.region for t in tags if t.region}
    if len(regions) > 1:
        return UNRESOLVED
    # most specific: a tag carrying a region beats a country-only tag
    best = next((t for t in tags if t.region), tags[0])
    return GeoTag(best.country, best.region, "alias", 1.0)


def _fuzzy(gz: Gazetteer, key: str, threshold: float) -> GeoTag | None | Unmatched:
    hits = []  # (normalized distance, entry index)
    for variant, i in gz._variants:
        longest = max(len(key), len(variant))
        bound = int(threshold * longest)
        d = levenshtein(key, variant, bound)
        if d <= bound:
            hits.append((d / longest, i))
    if not hits:
        return None
    score, i = min(hits)
    if len({_place(gz, j) for s, j in hits if s == score}) > 1:
        return UNRESOLVED
    country, region = _place(gz, i)
    return GeoTag(country, region, "fuzzy", 1.0 - score)


def resolve_location(freeform: str, gz: Gazetteer, fuzzy_threshold: float = 0.2) -> GeoTag | Unmatched:
    """Map a profile location string to a :class:`GeoTag`.

    Order of checks: exclusion list, exact/alias lookup of the whole string,
    exact lookup of comma-separated parts, fuzzy lookup of the whole string.
    Equal-quality matches naming different places resolve to ``UNRESOLVED``.
    """
    key = normalize_place(freeform)
    if not key:
        return UNRESOLVED
    if key in gz.exclusions:
        return EXCLUDED
    for step in (lambda: _exact(gz, key), lambda: _segments_exact(gz, freeform)):
        tag = step()
        if tag is not None:
            return tag
    if fuzzy_threshold > 0:
        tag = _fuzzy(gz, key, fuzzy_threshold)
        if tag is not None:
            return tag
    return UNRESOLVED


@dataclass
class GeoSummary:
    resolved: int = 0
    excluded: int = 0
    unresolved: int = 0


def geotag_posts(
    posts: Sequence[Post], gz: Gazetteer, fuzzy_threshold: float = 0.2, summary: GeoSummary | None = None
) -> list[Post]:
    """Set ``geo`` on every post whose location resolves; others keep ``geo=None``."""
    cache: dict[str, GeoTag | Unmatched] = {}
    out = []
    for p in posts:
        loc = p.user_location
        if loc not in cache:
            cache[loc] = resolve_location(loc, gz, fuzzy_threshold)
        res = cache[loc]
        if summary is not None:
            if isinstance(res, GeoTag):
                summary.resolved += 1
            elif res is EXCLUDED:
                summary.excluded += 1
            else:
                summary.unresolved += 1
        out.append(dataclasses.replace(p, geo=res if isinstance(res, GeoTag) else None))
    return out


def filter_by_region(posts: Iterable[Post], country: str, region: str | None = None) -> list[Post]:
    country = country.casefold()
    region = region.casefold() if region else None
    out = []
    for p in posts:
        tag = p.geo
        if not isinstance(tag, GeoTag) or tag.country.casefold() != country:
            continue
        if region is not None and tag.region.casefold() != region:
            continue
        out.append(p)
    return out
