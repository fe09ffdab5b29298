"""Corpus ingestion: movie metadata records, validation, and stratified splits.

The on-disk corpus is UTF-8 JSON lines, one movie object per line, with
field names matching :class:`MovieRecord`. A helper is provided to merge
the three raw TMDB payloads (details / keywords / credits) into that shape.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

#: Closed set of 18 genre labels (TMDB movie genres minus "TV Movie").
GENRES = (
    "Action", "Adventure", "Animation", "Comedy", "Crime", "Documentary",
    "Drama", "Family", "Fantasy", "History", "Horror", "Music", "Mystery",
    "Romance", "Science Fiction", "Thriller", "War", "Western",
)

MPAA_RATINGS = ("G", "PG", "PG-13", "R", "NC17", "NotRated", "NA")
_MPAA_ALIASES = {"N.A.": "NA", "NC-17": "NC17", "Not Rated": "NotRated"}

GENDERS = ("male", "female", "unknown")

MAX_DIRECTORS = 2
MAX_WRITERS = 2
MAX_ACTORS = 3


@dataclass(frozen=True)
class PersonRef:
    person_id: str
    name: str


@dataclass(frozen=True)
class ActorRef:
    person: PersonRef
    gender: str = "unknown"
    birth_date: date | None = None


@dataclass
class MovieRecord:
    """One movie's raw metadata. ``revenue == 0`` or a missing release date

    makes the record pretrain-only (no regression target can be formed).
    """

    movie_id: str
    title: str
    budget: int
    revenue: int
    release_date: date | None
    genres: list[str] = field(default_factory=list)
    keywords: list[str] = field(default_factory=list)
    mpaa: str = "NA"
    production_company: str = ""
    distributor: str = ""
    franchise: bool = False
    collection_name: str | None = None
    directors: list[PersonRef] = field(default_factory=list)
    writers: list[PersonRef] = field(default_factory=list)
    actors: list[ActorRef] = field(default_factory=list)
    poster_ref: str | None = None
    copycat: bool = False

    @property
    def usable_for_finetune(self) -> bool:
        return self.revenue > 0 and self.release_date is not None

    def to_json_dict(self) -> dict:
        return {
            "movie_id": self.movie_id,
            "title": self.title,
            "budget": self.budget,
            "revenue": self.revenue,
            "release_date": self.release_date.isoformat() if self.release_date else None,
            "genres": list(self.genres),
            "keywords": list(self.keywords),
            "mpaa": self.mpaa,
            "production_company": self.production_company,
            "distributor": self.distributor,
            "franchise": self.franchise,
            "collection_name": self.collection_name,
            "directors": [{"person_id": p.person_id, "name": p.name} for p in self.directors],
            "writers": [{"person_id": p.person_id, "name": p.name} for p in self.writers],
            "actors": [
                {
                    "person_id": a.person.person_id,
                    "name": a.person.name,
                    "gender": a.gender,
                    "birth_date": a.birth_date.isoformat() if a.birth_date else None,
                }
                for a in self.actors
            ],
            "poster_ref": self.poster_ref,
            "copycat": self.copycat,
        }


@dataclass(frozen=True)
class SplitAssignment:
    movie_id: str
    split: str  # train | valid | test
    seed: int


def _parse_date(value) -> date | None:
    if value in (None, ""):
        return None
    return date.fromisoformat(value)


def _parse_person(obj) -> PersonRef:
    return PersonRef(person_id=str(obj["person_id"]), name=str(obj["name"]))


def _record_from_dict(obj: dict) -> MovieRecord:
    """Validate one JSON-lines object into a MovieRecord. Raises ValueError."""
    genres = [str(g) for g in obj.get("genres", [])]
    for g in genres:
        if g not in GENRES:
            raise ValueError(f"unknown genre: {g!r}")
    mpaa = str(obj.get("mpaa", "NA"))
    mpaa = _MPAA_ALIASES.get(mpaa, mpaa)
    if mpaa not in MPAA_RATINGS:
        raise ValueError(f"unknown MPAA rating: {mpaa!r}")

    budget = int(obj.get("budget", 0) or 0)
    revenue = int(obj.get("revenue", 0) or 0)
    if budget < 0:
        raise ValueError(f"negative budget: {budget}")
    if revenue < 0:
        raise ValueError(f"negative revenue: {revenue}")

    actors = []
    for a in obj.get("actors", []):
        gender = str(a.get("gender", "unknown"))
        if gender not in GENDERS:
            raise ValueError(f"unknown gender: {gender!r}")
        actors.append(
            ActorRef(
                person=PersonRef(str(a["person_id"]), str(a["name"])),
                gender=gender,
                birth_date=_parse_date(a.get("birth_date")),
            )
        )

    return MovieRecord(
        movie_id=str(obj["movie_id"]),
        title=str(obj.get("title", "")),
        budget=budget,
        revenue=revenue,
        release_date=_parse_date(obj.get("release_date")),
        genres=genres,
        keywords=[str(k) for k in obj.get("keywords", [])],
        mpaa=mpaa,
        production_company=str(obj.get("production_company", "") or ""),
        distributor=str(obj.get("distributor", "") or ""),
        franchise=bool(obj.get("franchise", False)),
        collection_name=obj.get("collection_name") or None,
        directors=[_parse_person(p) for p in obj.get("directors", [])][:MAX_DIRECTORS],
        writers=[_parse_person(p) for p in obj.get("writers", [])][:MAX_WRITERS],
        actors=actors[:MAX_ACTORS],
        poster_ref=obj.get("poster_ref") or None,
        copycat=bool(obj.get("copycat", False)),
    )


def parse_corpus(path, schema_version: int = SCHEMA_VERSION):
    """Parse a JSON-lines corpus file.

    Returns ``(records, errors)`` where ``errors`` is a list of
    ``(line_number, message)`` pairs for malformed lines. An unreadable file
    or unsupported schema version is fatal (:class:`DataError`).
    """
    if schema_version != SCHEMA_VERSION:
        raise DataError(f"unsupported schema version: {schema_version}")
    records: list[MovieRecord] = []
    errors: list[tuple[int, str]] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                records.append(_record_from_dict(obj))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append((lineno, str(exc)))
    return records, errors


def write_corpus(records, path) -> None:
    """Serialize records back to JSON lines (round-trips with parse_corpus)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# TMDB raw-payload merge pre-pass

_TMDB_GENDER = {0: "unknown", 1: "female", 2: "male"}


def merge_tmdb_payloads(details, keywords=None, credits=None) -> list[dict]:
    """Merge raw TMDB detail/keywords/credits payloads by ``id`` into the

    JSON-lines record shape. Cast is ordered by the TMDB ``order`` field and
    truncated to three leading actors; crew is scanned directors-first.
    """
    kw_by_id = {p["id"]: p for p in (keywords or [])}
    cr_by_id = {p["id"]: p for p in (credits or [])}
    out = []
    for det in details:
        mid = det["id"]
        kw = kw_by_id.get(mid, {})
        cr = cr_by_id.get(mid, {})

        cast = sorted(cr.get("cast", []), key=lambda m: m.get("order", 1 << 30))
        actors = [
            {
                "person_id": str(m["id"]),
                "name": m["name"],
                "gender": _TMDB_GENDER.get(m.get("gender", 0), "unknown"),
                "birth_date": m.get("birthday"),
            }
            for m in cast[:MAX_ACTORS]
        ]
        directors, writers = [], []
        for m in cr.get("crew", []):
            if m.get("job") == "Director" and len(directors) < MAX_DIRECTORS:
                directors.append({"person_id": str(m["id"]), "name": m["name"]})
        for m in cr.get("crew", []):
            if m.get("department") == "Writing" and len(writers) < MAX_WRITERS:
                writers.append({"person_id": str(m["id"]), "name": m["name"]})

        collection = det.get("belongs_to_collection") or None
        companies = det.get("production_companies", [])
        out.append(
            {
                "movie_id": str(mid),
                "title": det.get("title", ""),
                "budget": det.get("budget", 0),
                "revenue": det.get("revenue", 0),
                "release_date": det.get("release_date") or None,
                "genres": [g["name"] for g in det.get("genres", [])],
                "keywords": [k["name"] for k in kw.get("keywords", [])],
                "mpaa": det.get("mpaa", "NA"),
                "production_company": companies[0]["name"] if companies else "",
                "distributor": det.get("distributor", ""),
                "franchise": collection is not None,
                "collection_name": collection["name"] if collection else None,
                "directors": directors,
                "writers": writers,
                "actors": actors,
                "poster_ref": det.get("poster_path") or None,
            }
        )
    return out


# ---------------------------------------------------------------------------
# Stratified splitting

_SPLIT_NAMES = ("train", "valid", "test")


def _largest_remainder(n: int, targets) -> list[int]:
    """Integer allocation of ``n`` items to real-valued ``targets`` summing

    to ~n. Ties on fractional parts go to the earlier split (train first).
    """
    targets = [max(0.0, t) for t in targets]
    base = [min(n, math.floor(t)) for t in targets]
    short = n - sum(base)
    if short < 0:  # clamping overshoot; trim from the largest buckets
        order = sorted(range(len(base)), key=lambda i: (-base[i], i))
        for i in order:
            take = min(base[i], -short)
            base[i] -= take
            short += take
            if short == 0:
                break
    fracs = sorted(range(len(targets)), key=lambda i: (-(targets[i] - math.floor(targets[i])), i))
    k = 0
    while short > 0:
        base[fracs[k % len(fracs)]] += 1
        short -= 1
        k += 1
    return base


def stratified_split(records, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> list[SplitAssignment]:
    """Deterministic 70/10/20-style split stratified on the franchise flag.

    Within each stratum the ids are shuffled by a seeded generator and
    allocated by largest remainder; the first stratum's rounding error is
    carried into the next so the overall totals track the ratios. Strata
    with fewer than 3 members go wholly to train (with a warning).
    """
    if not records:
        raise DataError("stratified_split: empty record list")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"stratified_split: ratios must sum to 1.0, got {sum(ratios)}")

    strata = {False: [], True: []}
    for rec in records:
        strata[bool(rec.franchise)].append(rec.movie_id)

    assignments: list[SplitAssignment] = []
    carry = [0.0, 0.0, 0.0]
    for stratum_index, franchise in enumerate((False, True)):
        ids = strata[franchise]
        n = len(ids)
        if n == 0:
            continue
        if n < 3:
            logger.warning(
                "stratum franchise=%s has %d member(s); assigning all to train", franchise, n
            )
            assignments.extend(SplitAssignment(mid, "train", seed) for mid in ids)
            continue
        rng = np.random.default_rng([seed, stratum_index])
        perm = rng.permutation(n)
        quotas = [r * n for r in ratios]
        counts = _largest_remainder(n, [q - c for q, c in zip(quotas, carry)])
        counts = _repair_counts(counts, quotas)
        carry = [c + got - q for c, got, q in zip(carry, counts, quotas)]
        offset = 0
        for split_name, cnt in zip(_SPLIT_NAMES, counts):
            for k in range(offset, offset + cnt):
                assignments.append(SplitAssignment(ids[perm[k]], split_name, seed))
            offset += cnt
    return assignments


def _repair_counts(counts, quotas) -> list[int]:
    """Shift units between splits until every split is within 1 of its quota."""
    counts = list(counts)
    for _ in range(8):
        devs = [c - q for c, q in zip(counts, quotas)]
        hi = max(range(len(devs)), key=lambda i: devs[i])
        lo = min(range(len(devs)), key=lambda i: devs[i])
        if devs[hi] <= 1.0 or counts[hi] == 0:
            break
        counts[hi] -= 1
        counts[lo] += 1
    return counts


def split_index(assignments) -> dict[str, set]:
    """Map split name -> set of movie ids."""
    out: dict[str, set] = {name: set() for name in _SPLIT_NAMES}
    for a in assignments:
        out[a.split].add(a.movie_id)
    return out


def write_split_csv(assignments, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["movie_id", "split", "seed"])
        for a in assignments:
            writer.writerow([a.movie_id, a.split, a.seed])


def read_split_csv(path) -> list[SplitAssignment]:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read split file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["movie_id", "split", "seed"]:
            raise DataError(f"bad split file header: {header}")
        out = []
        for row in reader:
            if len(row) != 3 or row[1] not in _SPLIT_NAMES:
                raise DataError(f"bad split row: {row}")
            out.append(SplitAssignment(row[0], row[1], int(row[2])))
    return out
