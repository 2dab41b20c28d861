"""Regenerate the bundled sample data under src/avianwatch/data/sample/.

Everything is synthetic and seeded: three Canadian case waves, post counts
that run two weeks ahead of cases, trend scores one week ahead, a labelled
training corpus and an external labels file.

    python3 scripts/make_sample.py
"""

from __future__ import annotations

import csv
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np

from avianwatch.ingestion import CaseRecord, Post, TrendScore, write_case_reports, write_posts, write_trend_scores

OUT = Path(__file__).resolve().parents[1] / "src" / "avianwatch" / "data" / "sample"
START = date(2021, 12, 27)  # ISO Monday
WEEKS = 65
SEED = 20220306

PROVINCES = {
    "Ontario": 0.30,
    "British Columbia": 0.28,
    "Alberta": 0.18,
    "Quebec": 0.10,
    "Manitoba": 0.07,
    "Saskatchewan": 0.05,
    "Nova Scotia": 0.02,
}
# (peak week index, width in weeks, height in birds)
WAVES = [(16, 3.0, 260_000.0), (41, 4.5, 420_000.0), (61, 1.8, 150_000.0)]
OFFICIAL_WAVES = [
    ("Canada-W1", "2022-03-06", "2022-07-28"),
    ("Canada-W2", "2022-08-02", "2023-01-22"),
    ("Canada-W3", "2023-02-21", "2023-04-01"),
]
POST_LEAD = 2
TREND_LEAD = 1

CANADA_PLACES = [
    "Toronto", "Toronto, ON", "Ottawa ON", "Guelph", "Vancouver BC", "Abbotsford, British Columbia",
    "Calgary AB", "Edmonton", "Montréal", "Winnipeg, Manitoba", "Saskatoon SK", "Halifax NS",
    "Ontario, Canada", "BC", "Canada", "Alberta", "Torontoo",
]
OTHER_PLACES = ["Minneapolis, MN", "Iowa", "Des Moines IA", "London UK", "Paris", "Texas", "Georgia"]
VAGUE_PLACES = ["", "Earth", "worldwide", "somewhere", "the internet", "here and there"]

RELEVANT_TOPIC = [
    "avian influenza", "bird flu", "h5n1", "hpai", "poultry", "flock", "culled", "cfia", "outbreak",
    "farm", "quarantine", "layer barn", "turkey farm", "control zone", "infected premises", "depopulated",
]
IRRELEVANT_TOPIC = [
    "flu shot", "angry birds", "chicken wings", "birdwatching", "hockey", "eagles game", "cold and flu",
    "recipe", "weather", "blue jays", "pigeon", "concert", "traffic", "feather duster", "duck dynasty",
]
SHARED = ["today", "news", "canada", "people", "update", "local", "week", "report", "again", "just",
          "bird", "flu", "chicken", "new", "watch", "big", "check", "really", "so", "this"]


def intensity(k: np.ndarray) -> np.ndarray:
    out = np.zeros(k.shape, dtype=float)
    for peak, width, height in WAVES:
        out += height * np.exp(-0.5 * ((k - peak) / width) ** 2)
    return out


def text(rng: np.random.Generator, relevant: bool, noise: float) -> str:
    own, other = (RELEVANT_TOPIC, IRRELEVANT_TOPIC) if relevant else (IRRELEVANT_TOPIC, RELEVANT_TOPIC)
    words = []
    for _ in range(rng.integers(1, 4)):
        pool = other if rng.random() < noise else own
        words.append(pool[rng.integers(len(pool))])
    words += [SHARED[i] for i in rng.integers(len(SHARED), size=rng.integers(3, 8))]
    rng.shuffle(words)
    body = " ".join(words)
    extras = []
    if rng.random() < 0.3:
        extras.append(f"https://t.co/{rng.integers(10**6, 10**7)}")
    if rng.random() < 0.2:
        extras.append("#BirdFlu" if relevant else "#Friday")
    if rng.random() < 0.2:
        extras.insert(0, f"@user{rng.integers(1000)}")
    return " ".join([*extras[:1], body, *extras[1:]]).strip()


def make_cases(rng: np.random.Generator) -> list[CaseRecord]:
    k = np.arange(WEEKS)
    base = intensity(k)
    rows = []
    for wk in range(WEEKS):
        for prov, share in PROVINCES.items():
            expected = base[wk] * share
            n_reports = rng.poisson(min(expected / 2000.0, 8.0))
            if n_reports == 0:
                continue
            sizes = rng.dirichlet(np.ones(n_reports)) * expected * rng.lognormal(0, 0.1)
            for size in sizes:
                day = START + timedelta(weeks=wk, days=int(rng.integers(7)))
                count = None if rng.random() < 0.02 else int(round(size))
                rows.append(CaseRecord(day, "Canada", prov, count))
    # a few United States rows so region filtering has something to discard
    for wk in range(0, WEEKS, 5):
        rows.append(CaseRecord(START + timedelta(weeks=wk, days=2), "United States", "Iowa", int(rng.integers(1000, 90000))))
    rows.sort(key=lambda r: (r.report_date, r.country, r.region))
    return rows


def make_trends(rng: np.random.Generator) -> list[TrendScore]:
    k = np.arange(WEEKS)
    raw = intensity(k + TREND_LEAD) * rng.lognormal(0, 0.2, WEEKS) + 15_000 * rng.random(WEEKS)
    scores = np.round(100 * raw / raw.max()).astype(int)
    out = [TrendScore(START + timedelta(weeks=int(w)), "Canada", int(s)) for w, s in zip(k, scores)]
    prov = np.round(100 * intensity(k + TREND_LEAD) * 0.3 / raw.max() * rng.lognormal(0, 0.3, WEEKS)).astype(int)
    out += [TrendScore(START + timedelta(weeks=int(w)), "Ontario", int(min(s, 100))) for w, s in zip(k, prov)]
    return out


def make_posts(rng: np.random.Generator) -> tuple[list[Post], dict[str, str]]:
    k = np.arange(WEEKS)
    lead = intensity(k + POST_LEAD)
    rel_rate = 3.0 + 110.0 * lead / lead.max()
    posts, truth = [], {}
    n = 0
    for wk in range(WEEKS):
        n_rel = rng.poisson(rel_rate[wk])
        n_irr = rng.poisson(15.0)
        for relevant in [True] * n_rel + [False] * n_irr:
            n += 1
            r = rng.random()
            if r < 0.62:
                loc = CANADA_PLACES[rng.integers(len(CANADA_PLACES))]
            elif r < 0.85:
                loc = OTHER_PLACES[rng.integers(len(OTHER_PLACES))]
            else:
                loc = VAGUE_PLACES[rng.integers(len(VAGUE_PLACES))]
            moment = datetime.combine(START + timedelta(weeks=wk), time(), tzinfo=timezone.utc) + timedelta(
                seconds=int(rng.integers(7 * 86400))
            )
            pid = f"p{n:06d}"
            body = text(rng, relevant, noise=0.08)
            posts.append(Post(pid, moment, body, "en", loc))
            truth[pid] = "relevant" if relevant else "irrelevant"
            if relevant and rng.random() < 0.05:
                # retweet of the post just made
                n += 1
                rt = f"p{n:06d}"
                posts.append(Post(rt, moment + timedelta(minutes=5), f"RT {body}", "en", loc))
                truth[rt] = truth[pid]
    return posts, truth


def make_corpus(rng: np.random.Generator) -> list[tuple[str, str]]:
    items = [(text(rng, True, noise=0.25), "relevant") for _ in range(1647)]
    items += [(text(rng, False, noise=0.25), "irrelevant") for _ in range(2552)]
    order = rng.permutation(len(items))
    return [items[i] for i in order]


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main() -> None:
    rng = np.random.default_rng(SEED)
    OUT.mkdir(parents=True, exist_ok=True)
    cases = make_cases(rng)
    data = write_case_reports(cases).decode()
    # one malformed row, dropped and reported by the lenient reader
    data += "2022-13-45,Canada,Ontario,10\n"
    (OUT / "cases.csv").write_text(data, encoding="utf-8")
    (OUT / "trends.csv").write_bytes(write_trend_scores(make_trends(rng)))
    posts, truth = make_posts(rng)
    (OUT / "posts.jsonl").write_bytes(write_posts(posts))
    flip = {"relevant": "irrelevant", "irrelevant": "relevant"}
    write_csv(
        OUT / "labels.csv",
        ("post_id", "label"),
        ((pid, flip[lab] if rng.random() < 0.05 else lab) for pid, lab in truth.items()),
    )
    write_csv(OUT / "corpus.csv", ("text", "label"), make_corpus(rng))
    write_csv(OUT / "waves_canada.csv", ("label", "start", "end"), OFFICIAL_WAVES)
    print(f"wrote sample bundle to {OUT}: {len(cases)} case rows, {len(posts)} posts")


if __name__ == "__main__":
    main()
