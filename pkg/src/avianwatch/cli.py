"""Command-line entry point: ``avianwatch <command> [options]``.

Every command reads the raw inputs itself, so commands can run in any order
against the same output directory. Reports carry the tool version, master
seed and a hash of the effective configuration (input file contents plus
settings, not paths), and contain no timestamps: identical inputs and seed
give byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import fcntl
import hashlib
import io
import json
import logging
import sys
from collections.abc import Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .forecasting import build_design, run_ablation
from .forecasting.model import DesignError, ModelSpec
from .forecasting.search import SearchError
from .geo import GeoSummary, default_gazetteer, filter_by_region, geotag_posts, load_exclusions, load_gazetteer
from .ingestion import (
    IngestError,
    IngestReport,
    NoOverlapError,
    WeeklySeries,
    aggregate_weekly,
    align_many,
    parse_case_reports,
    parse_posts,
    parse_trend_scores,
    week_start,
    write_series,
)
from .relevance import (
    RELEVANT,
    apply_external_labels,
    classify_posts,
    dedupe,
    evaluate,
    load_corpus,
    stratified_split,
    train_classifier,
)
from .timeseries import NonStationaryError, StationarityError, lagged_correlation
from .waves import detect_waves, evaluate_timeliness, load_official_waves, mark_waves

logger = logging.getLogger("avianwatch")

TOOL = "avianwatch"
PATH_KEYS = ("cases", "trends", "posts", "labels", "corpus", "gazetteer", "exclusions", "waves")
SAMPLE_FILES = {
    "cases": "cases.csv",
    "trends": "trends.csv",
    "posts": "posts.jsonl",
    "corpus": "corpus.csv",
    "waves": "waves_canada.csv",
}
DEFAULTS = {
    "seed": 0,
    "region": "Canada",
    "week_convention": "iso",
    "lag_min": -10,
    "lag_max": 10,
    "window_min": -4,
    "window_max": 0,
    "max_d": 2,
    "fuzzy_threshold": 0.2,
    "alpha": 1.0,
    "test_fraction": 0.2,
    "runs": 30,
    "lags": "0,-3",
    "eval_weeks": 13,
    "order": "",
    "z_threshold": 2.0,
    "baseline_window": 8,
    "min_prominence": 0.1,
    "smoothing_window": 3,
    "detect_waves": False,
    "sample": False,
}
CORRELATION_TABLE = ("location", "media", "cases", "timeframe", "lag", "coeff", "p_value")
MEDIA = ("posts", "trends")


class UsageError(Exception):
    """Bad invocation or missing input (exit status 2)."""


class LockError(Exception):
    pass


# ------------------------------------------------------------------ config


@dataclass
class RunConfig:
    command: str
    out: Path
    paths: dict[str, Path | None]
    settings: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.settings[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def country(self) -> str:
        return self.settings["region"].split(":", 1)[0]

    @property
    def subregion(self) -> str | None:
        parts = self.settings["region"].split(":", 1)
        return parts[1] if len(parts) == 2 and parts[1] else None

    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.settings, sort_keys=True, default=str).encode())
        for key in PATH_KEYS:
            path = self.paths.get(key)
            h.update(key.encode())
            h.update(hashlib.sha256(path.read_bytes()).digest() if path else b"-")
        return h.hexdigest()


def read_config_file(path: Path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    default = DEFAULTS.get(key)
    try:
        if isinstance(default, bool):
            if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None
    return value


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults < config file < flags and check every input path up front."""
    file_values = read_config_file(Path(args.config)) if args.config else {}
    unknown = set(file_values) - set(DEFAULTS) - set(PATH_KEYS) - {"out"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = {}
    for key in (*DEFAULTS, *PATH_KEYS, "out"):
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            merged[key] = flag
        elif key in file_values:
            merged[key] = file_values[key]
        elif key in DEFAULTS:
            merged[key] = DEFAULTS[key]
    settings = {k: _coerce(k, merged[k]) for k in DEFAULTS}
    raw_paths = {k: merged.get(k) for k in PATH_KEYS}
    if settings["sample"]:
        base = resources.files(TOOL) / "data" / "sample"
        for key, name in SAMPLE_FILES.items():
            if not raw_paths.get(key):
                raw_paths[key] = str(base / name)
    paths: dict[str, Path | None] = {}
    for key, value in raw_paths.items():
        if not value:
            paths[key] = None
            continue
        p = Path(value).expanduser().resolve()
        if not p.is_file():
            raise UsageError(f"{key} file not found: {p}")
        paths[key] = p
    if not merged.get("out"):
        raise UsageError("--out is required")
    if settings["region"].count(":") > 1 or not settings["region"].split(":")[0]:
        raise UsageError("--region must be COUNTRY or COUNTRY:REGION")
    return RunConfig(args.command, Path(merged["out"]).expanduser().resolve(), paths, settings)


# ------------------------------------------------------------------ output


@contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / ".avianwatch.lock", "w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise LockError(f"another avianwatch process is using {out}") from None
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def header(cfg: RunConfig) -> list[str]:
    return [
        f"tool={TOOL}",
        f"version={__version__}",
        f"command={cfg.command}",
        f"seed={cfg.seed}",
        f"config_hash={cfg.hash()}",
    ]


def write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")
    logger.info("wrote %s", path)


def write_rows(path: Path, columns: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    write_text(path, buf.getvalue())


def fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# ------------------------------------------------------------------ inputs


@dataclass
class Inputs:
    cases: WeeklySeries
    trends: WeeklySeries | None
    posts: WeeklySeries | None
    reports: list[IngestReport]
    geo: GeoSummary | None = None
    post_records: list = field(default_factory=list)


def _match(value: str, wanted: str | None) -> bool:
    return wanted is None or value.casefold() == wanted.casefold()


def load_inputs(cfg: RunConfig, need=("cases", "trends", "posts")) -> Inputs:
    """Parse, region-filter and bucket the inputs over the union of their week spans."""
    if cfg.paths["cases"] is None:
        raise UsageError("--cases is required")
    reports = []
    rep = IngestReport(source=cfg.paths["cases"].name)
    records = parse_case_reports(cfg.paths["cases"].read_bytes(), strict=False, report=rep)
    reports.append(rep)
    records = [r for r in records if _match(r.country, cfg.country) and _match(r.region, cfg.subregion)]
    if not records:
        raise NoOverlapError(f"no case rows for region {cfg.region}")
    dated = [r.report_date for r in records]

    scores = None
    if "trends" in need and cfg.paths["trends"] is not None:
        rep = IngestReport(source=cfg.paths["trends"].name)
        scores = parse_trend_scores(cfg.paths["trends"].read_bytes(), strict=False, report=rep)
        reports.append(rep)
        place = cfg.subregion or cfg.country
        scores = [s for s in scores if _match(s.region, place)]
        if not scores:
            raise NoOverlapError(f"no trend rows for {place}")
        dated += [s.week_start for s in scores]

    geo = None
    kept = None
    if "posts" in need and cfg.paths["posts"] is not None:
        rep = IngestReport(source=cfg.paths["posts"].name)
        raw = parse_posts(cfg.paths["posts"].read_bytes(), strict=False, report=rep)
        reports.append(rep)
        geo = GeoSummary()
        tagged = geotag_posts(dedupe(raw), _gazetteer(cfg), cfg.fuzzy_threshold, geo)
        kept = filter_by_region(tagged, cfg.country, cfg.subregion)
        dated += [p.timestamp.date() for p in kept]

    span = (min(dated), max(dated))
    wc = cfg.week_convention
    cases = aggregate_weekly(records, week_convention=wc, span=span)
    trends = None
    if scores is not None:
        total = aggregate_weekly(scores, week_convention=wc, span=span)
        count = aggregate_weekly(scores, lambda s: 1.0, week_convention=wc, span=span)
        # several rows in a week are averaged; weeks without rows stay 0
        trends = WeeklySeries(total.start_week, total.values / np.maximum(count.values, 1.0))
    posts = aggregate_weekly(kept, week_convention=wc, span=span) if kept is not None else None
    return Inputs(cases, trends, posts, reports, geo, kept or [])


def _gazetteer(cfg: RunConfig):
    if cfg.paths["gazetteer"] is None:
        if cfg.paths["exclusions"] is not None:
            gz = default_gazetteer()
            extra = load_exclusions(cfg.paths["exclusions"].read_bytes())
            return dataclasses.replace(gz, exclusions=gz.exclusions | frozenset(extra))
        return default_gazetteer()
    exclusions = load_exclusions(cfg.paths["exclusions"].read_bytes()) if cfg.paths["exclusions"] else None
    return load_gazetteer(cfg.paths["gazetteer"].read_bytes(), exclusions)


@dataclass
class Labelled:
    posts: list
    source: str  # "labels" | "classifier"
    metrics: object = None
    unmatched: int = 0


def label_posts(cfg: RunConfig, posts: list) -> Labelled:
    if cfg.paths["labels"] is None and cfg.paths["corpus"] is None:
        raise UsageError("filtering needs --labels or --corpus")
    if cfg.paths["labels"] is not None:
        if cfg.paths["corpus"] is not None:
            logger.warning("both --labels and --corpus given; external labels take precedence")
        labelled, unmatched = apply_external_labels(posts, cfg.paths["labels"].read_bytes())
        return Labelled(labelled, "labels", None, len(unmatched))
    corpus = load_corpus(cfg.paths["corpus"].read_bytes())
    train, test = stratified_split(corpus, cfg.test_fraction, cfg.seed)
    model = train_classifier(train, cfg.alpha)
    metrics = evaluate(model, test) if len(test) else None
    return Labelled(classify_posts(model, posts), "classifier", metrics)


def relevant_series(cfg: RunConfig, inputs: Inputs) -> tuple[WeeklySeries, Labelled | None]:
    """Relevant-post counts when a labels file or corpus is configured, else all posts."""
    if inputs.posts is None:
        raise UsageError("--posts is required")
    if cfg.paths["labels"] is None and cfg.paths["corpus"] is None:
        return inputs.posts, None
    lab = label_posts(cfg, inputs.post_records)
    rel = [p for p in lab.posts if p.relevance == RELEVANT]
    span = (inputs.cases.start_week, inputs.cases.end_week)
    return aggregate_weekly(rel, lambda p: 1.0, cfg.week_convention, span=span), lab


# ---------------------------------------------------------------- commands


def cmd_ingest(cfg: RunConfig) -> None:
    inputs = load_inputs(cfg)
    lines = header(cfg) + [f"region={cfg.region}", "", "series,first_week,last_week,weeks,total"]
    named = [("cases", inputs.cases), ("trends", inputs.trends), ("posts", inputs.posts)]
    for name, s in named:
        if s is None:
            continue
        write_text(cfg.out / f"series_{name}.csv", write_series(s))
        lines.append(f"{name},{s.start_week},{s.end_week},{len(s)},{fmt(float(s.values.sum()))}")
    lines += ["", "source,rows_read,flagged,dropped"]
    for rep in inputs.reports:
        lines.append(f"{rep.source},{rep.rows_read},{rep.flagged},{rep.rows_dropped}")
        lines += [f"  dropped line {e.line}: {e.reason}" for e in rep.dropped]
    if inputs.geo is not None:
        g = inputs.geo
        lines += ["", "geo_resolved,geo_excluded,geo_unresolved,posts_in_region"]
        lines.append(f"{g.resolved},{g.excluded},{g.unresolved},{len(inputs.post_records)}")
    write_text(cfg.out / "ingest_report.txt", "\n".join(lines) + "\n")


def cmd_filter(cfg: RunConfig) -> None:
    inputs = load_inputs(cfg, need=("cases", "posts"))
    if inputs.posts is None:
        raise UsageError("--posts is required")
    series, lab = relevant_series(cfg, inputs)
    if lab is None:
        raise UsageError("filtering needs --labels or --corpus")
    write_text(cfg.out / "series_relevant_posts.csv", write_series(series))
    span = (inputs.cases.start_week, inputs.cases.end_week)
    by_label = {
        name: aggregate_weekly([p for p in lab.posts if p.relevance == name], lambda p: 1.0, cfg.week_convention, span=span)
        for name in ("relevant", "irrelevant")
    }
    unlabeled = aggregate_weekly([p for p in lab.posts if p.relevance is None], lambda p: 1.0, cfg.week_convention, span=span)
    write_rows(
        cfg.out / "labels_weekly.csv",
        ("week", "relevant", "irrelevant", "unlabeled"),
        (
            (wk, int(r), int(i), int(u))
            for wk, r, i, u in zip(series.weeks, by_label["relevant"].values, by_label["irrelevant"].values, unlabeled.values)
        ),
    )
    counts = {k: sum(p.relevance == k for p in lab.posts) for k in ("relevant", "irrelevant")}
    lines = header(cfg) + [
        f"region={cfg.region}",
        f"label_source={lab.source}",
        f"posts_in_region={len(lab.posts)}",
        f"relevant={counts['relevant']}",
        f"irrelevant={counts['irrelevant']}",
        f"unlabeled={len(lab.posts) - counts['relevant'] - counts['irrelevant']}",
    ]
    if lab.source == "labels":
        lines.append(f"label_ids_without_post={lab.unmatched}")
    if lab.metrics is not None:
        m = lab.metrics
        lines += [
            "",
            "[metrics]",
            f"heldout={m.total}",
            f"accuracy={m.accuracy:.4f}",
            f"precision={m.precision:.4f}",
            f"recall={m.recall:.4f}",
            f"f1={m.f1:.4f}",
            f"confusion=tp:{m.tp} fp:{m.fp} tn:{m.tn} fn:{m.fn}",
        ]
    write_text(cfg.out / "filter_report.txt", "\n".join(lines) + "\n")


def _timeframes(cfg: RunConfig, cases: WeeklySeries):
    frames = [("full", cases.start_week, cases.end_week)]
    if cfg.paths["waves"] is not None:
        for w in load_official_waves(cfg.paths["waves"].read_bytes()):
            frames.append((f"{w.label} {w.start}..{w.end}", w.start, w.end))
    return frames


def cmd_correlate(cfg: RunConfig) -> None:
    inputs = load_inputs(cfg)
    posts, _ = relevant_series(cfg, inputs)
    media = {"posts": posts, "trends": inputs.trends}
    table, detail, sweep_rows = [], [], []
    for name in MEDIA:
        online = media[name]
        if online is None:
            continue
        for label, first, last in _timeframes(cfg, inputs.cases):
            lo = max(week_start(first, cfg.week_convention), inputs.cases.start_week)
            hi = min(week_start(last, cfg.week_convention), inputs.cases.end_week)
            row_id = (cfg.region, name, label)
            if lo > hi:
                detail.append((*row_id, "", "", "", 0, "", "failed: timeframe outside data"))
                continue
            c = inputs.cases.slice_weeks(lo, hi)
            o = online.slice_weeks(lo, hi)
            total = int(c.values.sum())
            try:
                res = lagged_correlation(
                    o, c, (cfg.lag_min, cfg.lag_max), (cfg.window_min, cfg.window_max), cfg.max_d
                )
            except (NonStationaryError, StationarityError, ValueError) as exc:
                detail.append((*row_id, "", "", "", len(c), "", f"failed: {exc}"))
                continue
            r = res.result
            table.append((cfg.region, name, total, label, r.lag, f"{r.r:.4f}", f"{r.p_value:.4g}"))
            detail.append((*row_id, r.lag, f"{r.r:.6f}", f"{r.p_value:.6g}", r.n, res.d_applied, "ok"))
            for lc in res.sweep:
                sweep_rows.append((*row_id, lc.lag, f"{lc.r:.6f}", lc.n, f"{res.band:.6f}"))
    write_rows(cfg.out / "correlation_table.csv", CORRELATION_TABLE, table)
    write_rows(
        cfg.out / "correlations.csv",
        ("location", "media", "timeframe", "lag", "coeff", "p_value", "n", "d_applied", "status"),
        detail,
    )
    write_rows(cfg.out / "lag_sweep.csv", ("location", "media", "timeframe", "lag", "coeff", "n", "band"), sweep_rows)
    failed = sum(1 for d in detail if d[-1] != "ok")
    lines = header(cfg) + [
        f"region={cfg.region}",
        f"lag_range={cfg.lag_min}..{cfg.lag_max}",
        f"reporting_window={cfg.window_min}..{cfg.window_max}",
        f"rows={len(detail)}",
        f"failed_rows={failed}",
        "",
    ]
    lines.append(",".join(CORRELATION_TABLE))
    lines += [",".join(str(v) for v in row) for row in table]
    write_text(cfg.out / "correlation_report.txt", "\n".join(lines) + "\n")


def _parse_lags(text: str) -> list[int]:
    try:
        lags = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad --lags value {text!r}") from None
    if not lags or any(v > 0 for v in lags):
        raise UsageError("--lags takes non-positive integers, e.g. 0,-3")
    return lags


def _parse_order(text: str) -> tuple[int, int, int] | None:
    if not text:
        return None
    try:
        p, d, q = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--order must be p,d,q, got {text!r}") from None
    return p, d, q


def cmd_ablate(cfg: RunConfig) -> None:
    inputs = load_inputs(cfg)
    if inputs.trends is None or inputs.posts is None:
        raise UsageError("ablation needs --cases, --posts and --trends")
    posts, _ = relevant_series(cfg, inputs)
    cases, posts, trends = align_many([inputs.cases, posts, inputs.trends])
    order = _parse_order(cfg.order)
    lines = header(cfg) + [f"region={cfg.region}", f"runs={cfg.runs}"]
    for lag in _parse_lags(cfg.lags):
        ds = build_design(cases, [posts, trends], lag, None, cfg.eval_weeks, ("posts", "trends"))
        spec = None
        if order:
            p, d, q = order
            spec = ModelSpec(p, d, q, include_intercept=d == 0, exog_count=2)
        report = run_ablation(ds, cfg.runs, cfg.seed, spec)
        lines += ["", f"[lag {lag}]", report.to_text().rstrip("\n")]
    write_text(cfg.out / "ablation_report.txt", "\n".join(lines) + "\n")


def cmd_waves(cfg: RunConfig) -> None:
    if cfg.paths["waves"] is None and not cfg.detect_waves:
        raise UsageError("waves needs --waves or --detect-waves")
    inputs = load_inputs(cfg)
    if cfg.paths["waves"] is not None:
        waves = load_official_waves(cfg.paths["waves"].read_bytes())
    else:
        waves = detect_waves(inputs.cases, cfg.min_prominence, cfg.smoothing_window)
    write_rows(
        cfg.out / "waves.csv",
        ("label", "start", "end", "peak", "total_cases", "source"),
        ((w.label, w.start, w.end, w.peak or "", fmt(w.total), w.source) for w in waves),
    )
    lines = header(cfg) + [f"region={cfg.region}", f"waves={len(waves)}", f"source={'official' if cfg.paths['waves'] else 'detected'}"]
    signals = {}
    if inputs.posts is not None:
        signals["posts"] = relevant_series(cfg, inputs)[0]
    if inputs.trends is not None:
        signals["trends"] = inputs.trends
    for name, sig in signals.items():
        rep = evaluate_timeliness(sig, waves, cfg.z_threshold, cfg.baseline_window, cfg.week_convention)
        text = rep.to_csv()
        write_text(cfg.out / f"timeliness_{name}.csv", text)
        lines += ["", f"[timeliness {name}]", text.rstrip("\n")]
    weeks = inputs.cases.weeks
    marks = mark_waves(weeks, waves, cfg.week_convention)
    cols = ["week", "cases", *signals, "wave"]
    rows = []
    for k, wk in enumerate(weeks):
        rows.append([wk, fmt(float(inputs.cases.values[k])), *(fmt(float(s.values[k])) for s in signals.values()), marks[k]])
    write_rows(cfg.out / "wave_plot.csv", cols, rows)
    write_text(cfg.out / "waves_report.txt", "\n".join(lines) + "\n")


COMMANDS = {
    "ingest": cmd_ingest,
    "filter": cmd_filter,
    "correlate": cmd_correlate,
    "ablate": cmd_ablate,
    "waves": cmd_waves,
}


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override its values")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--region", help="COUNTRY or COUNTRY:REGION (default Canada)")
    common.add_argument("--week-convention", choices=("iso", "mmwr"))
    common.add_argument("--sample", action="store_true", help="use the bundled sample for inputs not given")
    common.add_argument("-v", "--verbose", action="store_true")
    for key in PATH_KEYS:
        common.add_argument(f"--{key}", metavar="PATH")
    common.add_argument("--fuzzy-threshold", type=float)
    common.add_argument("--alpha", type=float, help="Naive Bayes smoothing")
    common.add_argument("--test-fraction", type=float)

    parser = argparse.ArgumentParser(prog=TOOL, description="Lead-lag analysis of online signals against case reports.")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="validate inputs and write weekly series")
    sub.add_parser("filter", parents=[common], help="label posts and write the relevant-post series")
    p = sub.add_parser("correlate", parents=[common], help="lagged correlation per media and timeframe")
    p.add_argument("--lag-min", type=int)
    p.add_argument("--lag-max", type=int)
    p.add_argument("--window-min", type=int, help="reporting window lower bound (default -4)")
    p.add_argument("--window-max", type=int)
    p.add_argument("--max-d", type=int)
    p = sub.add_parser("ablate", parents=[common], help="SARIMAX exogenous-variable ablation")
    p.add_argument("--runs", type=int)
    p.add_argument("--lags", help="comma-separated non-positive lags (default 0,-3)")
    p.add_argument("--eval-weeks", type=int)
    p.add_argument("--order", help="fixed p,d,q instead of a grid search")
    p = sub.add_parser("waves", parents=[common], help="wave windows and signal timeliness")
    p.add_argument("--detect-waves", action="store_true")
    p.add_argument("--z-threshold", type=float)
    p.add_argument("--baseline-window", type=int)
    p.add_argument("--min-prominence", type=float)
    p.add_argument("--smoothing-window", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        with output_lock(cfg.out):
            COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"{TOOL}: error: {exc}", file=sys.stderr)
        return 2
    except (IngestError, DesignError, SearchError, LockError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"{TOOL}: {cfg.command if 'cfg' in locals() else args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
