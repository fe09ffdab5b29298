"""Feature engineering: MovieRecords -> fixed-slot token/numeral sequences.

Every movie is laid out on the same slot grid: a block of scalar/context
slots, then the [genres], [clusters], [Directors], [Writers] and [Actors]
groups. Discrete slots carry vocabulary token ids; numeral slots carry
normalized reals that the encoder expands with the prototype numeral
embedding.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .clustering import KeywordClusterMap
from .errors import DataError
from .records import GENDERS, GENRES, MAX_ACTORS, MAX_DIRECTORS, MAX_WRITERS, MPAA_RATINGS, MovieRecord

logger = logging.getLogger(__name__)

PAD_ID = 0
MASK_ID = 1

PAD_TOKEN = "[PAD]"
MASK_TOKEN = "[MASK]"
GROUP_MARKERS = ("[genres]", "[clusters]", "[Directors]", "[Writers]", "[Actors]")

#: Vocabulary groups, in global-id assignment order.
VOCAB_GROUPS = (
    "release_year", "release_month", "mpaa", "production_company", "distributor",
    "franchise", "copycat", "collection", "gender", "genres", "keyword_clusters",
    "crew_names", "cast_names",
)

OOV_TOKEN = "[OOV]"

MONTH_NAMES = (
    "January", "February", "March", "April", "May", "June", "July",
    "August", "September", "October", "November", "December",
)


# ---------------------------------------------------------------------------
# Numeral embedding (prototype kernel)


@dataclass(frozen=True)
class NumeralEmbedderConfig:
    """Prototype grid for the scalar -> vector numeral embedding.

    ``dim`` prototypes are evenly spaced over ``interval``; component i of
    the embedding is exp(-|x - q_i| / sigma_sq). The unsquared distance is a
    deliberate literal reading of the formula (a Laplace-type kernel).
    """

    dim: int = 512
    interval: tuple[float, float] = (-10.0, 10.0)
    sigma_sq: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("numeral embedding dim must be positive")
        if not self.interval[0] < self.interval[1]:
            raise ValueError("interval must satisfy lo < hi")
        if self.sigma_sq <= 0:
            raise ValueError("sigma_sq must be positive")

    def prototypes(self) -> np.ndarray:
        return np.linspace(self.interval[0], self.interval[1], self.dim)


def numeral_embed(x: float, cfg: NumeralEmbedderConfig) -> np.ndarray:
    """Embed a finite scalar as a vector of kernel responses in (0, 1]."""
    if not math.isfinite(x):
        raise ValueError(f"numeral_embed: non-finite input {x!r}")
    q = cfg.prototypes()
    return np.exp(-np.abs(x - q) / cfg.sigma_sq)


# ---------------------------------------------------------------------------
# Feature normalization

_LOG10_FEATURES = frozenset({"budget", "revenue", "prior_revenue_mean"})
_LN1P_FEATURES = frozenset(
    {"n_competitors", "prior_movie_count", "n_person", "n_man", "n_woman"}
)
_MINMAX_FEATURES = frozenset({"actor_age", "profitability"})
_IDENTITY_FEATURES = frozenset({"competitor_similarity"})


@dataclass
class FeatureStats:
    """Per-feature min/max bounds for the min-max-normalized features.

    Built from the training split only; serialized next to checkpoints so
    tokenization at inference reuses the exact same constants.
    """

    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {}
        for name in sorted(set(_LOG10_FEATURES | _LN1P_FEATURES | _IDENTITY_FEATURES)):
            out[name] = {"kind": _normalizer_kind(name)}
        for name, (lo, hi) in sorted(self.bounds.items()):
            out[name] = {"kind": "minmax", "min": lo, "max": hi}
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "FeatureStats":
        bounds = {
            name: (spec["min"], spec["max"])
            for name, spec in obj.items()
            if spec.get("kind") == "minmax"
        }
        return cls(bounds=bounds)


def _normalizer_kind(name: str) -> str:
    if name in _LOG10_FEATURES:
        return "log10"
    if name in _LN1P_FEATURES:
        return "ln1p"
    if name in _MINMAX_FEATURES:
        return "minmax"
    if name in _IDENTITY_FEATURES:
        return "identity"
    raise DataError(f"unknown feature name: {name!r}")


def normalize_feature(name: str, raw: float, corpus_stats: FeatureStats | None = None) -> float:
    """Normalize a raw feature value by that feature's documented rule:

    long-tail features take log10 (clamped at 1), count features take
    ln(1+n), bounded features are min-max scaled to [0, 1] with
    training-split constants.
    """
    kind = _normalizer_kind(name)
    if kind == "log10":
        return math.log10(max(raw, 1.0))
    if kind == "ln1p":
        return math.log1p(raw)
    if kind == "identity":
        return float(raw)
    if corpus_stats is None or name not in corpus_stats.bounds:
        raise DataError(f"min-max feature {name!r} needs corpus stats")
    lo, hi = corpus_stats.bounds[name]
    if hi <= lo:
        return 0.5
    return min(1.0, max(0.0, (raw - lo) / (hi - lo)))


# ---------------------------------------------------------------------------
# Star-power statistics


@dataclass(frozen=True)
class PersonStats:
    person_id: str
    experience: float
    profitability: float


def person_stats(person_id: str, history, as_of: date | None, corpus_stats: FeatureStats) -> PersonStats:
    """Experience and profitability of a person strictly before ``as_of``.

    ``history`` is an iterable of (release_date, revenue) pairs; entries on
    or after ``as_of`` are ignored so the current movie's own target can
    never leak into its features.
    """
    if as_of is None:
        return PersonStats(person_id, 0.0, 0.0)
    prior = [(d, r) for d, r in history if d is not None and d < as_of]
    experience = math.log1p(len(prior))
    revenues = [r for _, r in prior if r > 0]
    if not revenues:
        return PersonStats(person_id, experience, 0.0)
    mean_rev = sum(revenues) / len(revenues)
    log_mean = normalize_feature("prior_revenue_mean", mean_rev)
    profitability = normalize_feature("profitability", log_mean, corpus_stats)
    return PersonStats(person_id, experience, profitability)


class PersonHistory:
    """Per-person (release_date, revenue) credits, built from the training

    split only so that validation/test revenues never feed any feature.
    """

    def __init__(self):
        self._credits: dict[str, list[tuple[date, int]]] = {}

    @classmethod
    def from_records(cls, train_records) -> "PersonHistory":
        hist = cls()
        for rec in train_records:
            if rec.release_date is None:
                continue
            for person in hist._credited(rec):
                hist._credits.setdefault(person, []).append((rec.release_date, rec.revenue))
        for entries in hist._credits.values():
            entries.sort()
        return hist

    @staticmethod
    def _credited(rec: MovieRecord):
        for p in rec.directors:
            yield p.person_id
        for p in rec.writers:
            yield p.person_id
        for a in rec.actors:
            yield a.person.person_id

    def history(self, person_id: str) -> list[tuple[date, int]]:
        return self._credits.get(person_id, [])

    def stats(self, person_id: str, as_of: date | None, corpus_stats: FeatureStats) -> PersonStats:
        return person_stats(person_id, self.history(person_id), as_of, corpus_stats)


# ---------------------------------------------------------------------------
# Competition features


def _jaccard(a, b) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 0.0
    return len(sa & sb) / len(sa | sb)


def competition_features(movie: MovieRecord, corpus) -> tuple[float, float]:
    """(ln(1+competitor count), summed keyword Jaccard overlap).

    Competitors share at least one genre and released within 14 days either
    side of the movie; the movie itself is excluded.
    """
    if movie.release_date is None:
        return 0.0, 0.0
    genres = set(movie.genres)
    n = 0
    sim = 0.0
    for other in corpus:
        if other.movie_id == movie.movie_id or other.release_date is None:
            continue
        if abs((other.release_date - movie.release_date).days) > 14:
            continue
        if not genres & set(other.genres):
            continue
        n += 1
        sim += _jaccard(movie.keywords, other.keywords)
    return math.log1p(n), sim


# ---------------------------------------------------------------------------
# Vocabulary


class Vocabulary:
    """Per-group token tables sharing one dense global id space.

    Ids 0/1 are PAD/MASK, the five group markers follow, then each group's
    table prefixed by its own OOV token. Group tables are ordered by
    frequency (desc) then lexicographically, which keeps serialization
    stable.
    """

    def __init__(self, groups: dict[str, list[str]]):
        for g in groups:
            if g not in VOCAB_GROUPS:
                raise DataError(f"unknown vocabulary group: {g!r}")
        self.groups = {g: list(groups.get(g, [])) for g in VOCAB_GROUPS}
        self._token_to_id: dict[str, dict[str, int]] = {}
        self._id_to_token: list[tuple[str, str]] = [
            ("special", PAD_TOKEN), ("special", MASK_TOKEN)
        ] + [("special", m) for m in GROUP_MARKERS]
        self.marker_ids = {m: 2 + i for i, m in enumerate(GROUP_MARKERS)}
        next_id = len(self._id_to_token)
        self.oov_ids: dict[str, int] = {}
        for g in VOCAB_GROUPS:
            self.oov_ids[g] = next_id
            self._id_to_token.append((g, OOV_TOKEN))
            next_id += 1
            table = {}
            for tok in self.groups[g]:
                if tok in table:
                    raise DataError(f"duplicate token {tok!r} in group {g!r}")
                table[tok] = next_id
                self._id_to_token.append((g, tok))
                next_id += 1
            self._token_to_id[g] = table

    def __len__(self) -> int:
        return len(self._id_to_token)

    @property
    def size(self) -> int:
        return len(self._id_to_token)

    def id_for(self, group: str, token: str) -> int:
        return self._token_to_id[group].get(token, self.oov_ids[group])

    def contains(self, group: str, token: str) -> bool:
        return token in self._token_to_id[group]

    def token_at(self, token_id: int) -> tuple[str, str]:
        return self._id_to_token[token_id]

    def group_id_range(self, group: str) -> tuple[int, int]:
        """Global id range [start, end) covering a group's OOV + tokens."""
        start = self.oov_ids[group]
        return start, start + 1 + len(self.groups[group])

    def fingerprint(self) -> str:
        blob = json.dumps(self.groups, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json_dict(self) -> dict:
        return {g: list(toks) for g, toks in self.groups.items()}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Vocabulary":
        return cls(obj)


def _freq_ordered(counter: dict[str, int]) -> list[str]:
    return [tok for tok, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))]


def build_vocabulary(
    train_records,
    cluster_map: KeywordClusterMap | None = None,
    min_company_count: int = 10,
) -> Vocabulary:
    """Build per-group token tables from the training split.

    Production companies and distributors below ``min_company_count`` movies
    are grouped into "Others"; keyword-cluster tokens come from the cluster
    map (already in frequency order).
    """
    counters: dict[str, dict[str, int]] = {g: {} for g in VOCAB_GROUPS}

    def bump(group, token):
        if token:
            counters[group][token] = counters[group].get(token, 0) + 1

    for rec in train_records:
        if rec.release_date is not None:
            bump("release_year", str(rec.release_date.year))
            bump("release_month", MONTH_NAMES[rec.release_date.month - 1])
        bump("mpaa", rec.mpaa)
        bump("production_company", rec.production_company)
        bump("distributor", rec.distributor)
        bump("franchise", "yes" if rec.franchise else "no")
        bump("copycat", "yes" if rec.copycat else "no")
        if rec.collection_name:
            bump("collection", rec.collection_name)
        for g in rec.genres:
            bump("genres", g)
        for p in rec.directors + rec.writers:
            bump("crew_names", p.name)
        for a in rec.actors:
            bump("cast_names", a.person.name)
            bump("gender", a.gender)

    for comp_group in ("production_company", "distributor"):
        counts = counters[comp_group]
        kept, others = {}, 0
        for tok, c in counts.items():
            if c >= min_company_count:
                kept[tok] = c
            else:
                others += c
        if others or "Others" in kept:
            kept["Others"] = kept.get("Others", 0) + others
        counters[comp_group] = kept

    groups = {g: _freq_ordered(c) for g, c in counters.items()}
    # closed sets get their full table regardless of observed frequency
    groups["mpaa"] = list(dict.fromkeys(groups["mpaa"] + [m for m in MPAA_RATINGS]))
    groups["genres"] = list(dict.fromkeys(groups["genres"] + [g for g in GENRES]))
    groups["gender"] = list(dict.fromkeys(groups["gender"] + list(GENDERS)))
    groups["franchise"] = ["no", "yes"] if groups["franchise"][:1] != ["yes"] else ["yes", "no"]
    groups["copycat"] = ["no", "yes"] if groups["copycat"][:1] != ["yes"] else ["yes", "no"]
    if cluster_map is not None:
        groups["keyword_clusters"] = [c.representative for c in cluster_map.clusters]
    else:
        groups["keyword_clusters"] = []
    return Vocabulary(groups)


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(vocab.to_json_dict(), fh, indent=1, sort_keys=True)


def load_vocabulary(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as fh:
        return Vocabulary.from_json_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Slot layout


@dataclass(frozen=True)
class Slot:
    name: str
    kind: str  # "token" | "numeral" | "marker"
    group: str | None = None  # vocabulary group for token/marker slots
    maskable_group: str | None = None  # genres | clusters | crew | actors


@dataclass(frozen=True)
class LayoutConfig:
    max_genres: int = 8
    max_clusters: int = 16
    n_directors: int = MAX_DIRECTORS
    n_writers: int = MAX_WRITERS
    n_actors: int = MAX_ACTORS


MASKABLE_GROUPS = ("genres", "clusters", "crew", "actors")


class SlotLayout:
    """The fixed slot grid every TokenizedMovie shares."""

    def __init__(self, cfg: LayoutConfig = LayoutConfig()):
        self.cfg = cfg
        slots: list[Slot] = [
            Slot("release_year", "token", "release_year"),
            Slot("release_month", "token", "release_month"),
            Slot("mpaa", "token", "mpaa"),
            Slot("budget", "numeral"),
            Slot("producer", "token", "production_company"),
            Slot("distributor", "token", "distributor"),
            Slot("n_competitors", "numeral"),
            Slot("competitor_similarity", "numeral"),
            Slot("franchise", "token", "franchise"),
            Slot("collection", "token", "collection"),
            Slot("copycat", "token", "copycat"),
            Slot("n_person", "numeral"),
            Slot("n_man", "numeral"),
            Slot("n_woman", "numeral"),
        ]
        self.group_spans: dict[str, tuple[int, int]] = {}

        slots.append(Slot("[genres]", "marker"))
        start = len(slots)
        for i in range(cfg.max_genres):
            slots.append(Slot(f"genre_{i + 1}", "token", "genres", maskable_group="genres"))
        self.group_spans["genres"] = (start, len(slots))

        slots.append(Slot("[clusters]", "marker"))
        start = len(slots)
        for i in range(cfg.max_clusters):
            slots.append(Slot(f"cluster_{i + 1}", "token", "keyword_clusters", maskable_group="clusters"))
        self.group_spans["clusters"] = (start, len(slots))

        slots.append(Slot("[Directors]", "marker"))
        start = len(slots)
        for i in range(cfg.n_directors):
            slots.append(Slot(f"director{i + 1}_name", "token", "crew_names", maskable_group="crew"))
            slots.append(Slot(f"director{i + 1}_experience", "numeral"))
            slots.append(Slot(f"director{i + 1}_profitability", "numeral"))
        self.group_spans["directors"] = (start, len(slots))

        slots.append(Slot("[Writers]", "marker"))
        start = len(slots)
        for i in range(cfg.n_writers):
            slots.append(Slot(f"writer{i + 1}_name", "token", "crew_names", maskable_group="crew"))
            slots.append(Slot(f"writer{i + 1}_experience", "numeral"))
            slots.append(Slot(f"writer{i + 1}_profitability", "numeral"))
        self.group_spans["writers"] = (start, len(slots))

        slots.append(Slot("[Actors]", "marker"))
        start = len(slots)
        for i in range(cfg.n_actors):
            slots.append(Slot(f"actor{i + 1}_name", "token", "cast_names", maskable_group="actors"))
            slots.append(Slot(f"actor{i + 1}_gender", "token", "gender"))
            slots.append(Slot(f"actor{i + 1}_age", "numeral"))
            slots.append(Slot(f"actor{i + 1}_experience", "numeral"))
            slots.append(Slot(f"actor{i + 1}_profitability", "numeral"))
        self.group_spans["actors"] = (start, len(slots))

        self.slots = tuple(slots)
        self.n_slots = len(slots)
        self.index = {s.name: i for i, s in enumerate(slots)}
        self.numeral_mask = np.array([s.kind == "numeral" for s in slots], dtype=bool)
        self.maskable_slots = {
            g: tuple(i for i, s in enumerate(slots) if s.maskable_group == g)
            for g in MASKABLE_GROUPS
        }
        self.cluster_span = self.group_spans["clusters"]

    def marker_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.slots) if s.kind == "marker"]

    def to_json_dict(self) -> dict:
        c = self.cfg
        return {
            "max_genres": c.max_genres,
            "max_clusters": c.max_clusters,
            "n_directors": c.n_directors,
            "n_writers": c.n_writers,
            "n_actors": c.n_actors,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SlotLayout":
        return cls(LayoutConfig(**obj))


# ---------------------------------------------------------------------------
# Tokenized movie


@dataclass
class TokenizedMovie:
    """Fixed-slot token/numeral view of one movie.

    ``token_ids``/``numeral_values``/``attention_mask`` all have the
    layout's slot count; PAD slots carry attention mask 0.
    """

    movie_id: str
    token_ids: np.ndarray  # int64 (S,)
    numeral_values: np.ndarray  # float32 (S,)
    attention_mask: np.ndarray  # bool (S,)
    layout: SlotLayout
    vocab_hash: str
    target_log_revenue: float | None = None

    @property
    def group_spans(self) -> dict[str, tuple[int, int]]:
        return self.layout.group_spans

    def token_slots(self) -> list[tuple[str, int]]:
        return [
            (s.name, int(self.token_ids[i]))
            for i, s in enumerate(self.layout.slots)
            if s.kind in ("token", "marker")
        ]

    def numeral_slots(self) -> list[tuple[str, float]]:
        return [
            (s.name, float(self.numeral_values[i]))
            for i, s in enumerate(self.layout.slots)
            if s.kind == "numeral"
        ]

    def active_cluster_slots(self) -> list[int]:
        lo, hi = self.layout.cluster_span
        return [i for i in range(lo, hi) if self.attention_mask[i]]

    def copy(self) -> "TokenizedMovie":
        return TokenizedMovie(
            movie_id=self.movie_id,
            token_ids=self.token_ids.copy(),
            numeral_values=self.numeral_values.copy(),
            attention_mask=self.attention_mask.copy(),
            layout=self.layout,
            vocab_hash=self.vocab_hash,
            target_log_revenue=self.target_log_revenue,
        )


def build_feature_stats(train_records, history: PersonHistory) -> FeatureStats:
    """Min/max bounds for actor age and profitability from the train split."""
    ages: list[float] = []
    log_means: list[float] = []
    for rec in train_records:
        for a in rec.actors:
            age = _actor_age(a.birth_date, rec.release_date)
            if age is not None:
                ages.append(age)
        for pid in PersonHistory._credited(rec):
            revenues = [
                r
                for d, r in history.history(pid)
                if rec.release_date is not None and d < rec.release_date and r > 0
            ]
            if revenues:
                mean_rev = sum(revenues) / len(revenues)
                log_means.append(normalize_feature("prior_revenue_mean", mean_rev))
    bounds = {}
    bounds["actor_age"] = (min(ages), max(ages)) if ages else (0.0, 1.0)
    bounds["profitability"] = (min(log_means), max(log_means)) if log_means else (0.0, 1.0)
    return FeatureStats(bounds=bounds)


def _actor_age(birth: date | None, release: date | None) -> float | None:
    # year difference, not exact age: a 1990-08 actor in a 2012-03 release is 22
    if birth is None or release is None:
        return None
    return float(max(0, release.year - birth.year))


def tokenize(
    movie: MovieRecord,
    vocab: Vocabulary,
    cluster_map: KeywordClusterMap | None,
    stats: FeatureStats,
    history: PersonHistory,
    layout: SlotLayout,
    corpus=None,
) -> TokenizedMovie:
    """Lay a movie out on the fixed slot grid.

    Pure in all arguments: repeated calls return byte-identical arrays.
    ``corpus`` supplies the competitor scan; omit it to zero the
    competition slots.
    """
    S = layout.n_slots
    ids = np.zeros(S, dtype=np.int64)
    vals = np.zeros(S, dtype=np.float32)
    mask = np.zeros(S, dtype=bool)

    def put_token(slot_name: str, group: str, token: str | None):
        i = layout.index[slot_name]
        if token is None or token == "":
            return
        ids[i] = vocab.id_for(group, token)
        mask[i] = True

    def put_numeral(slot_name: str, value: float):
        i = layout.index[slot_name]
        vals[i] = np.float32(value)
        mask[i] = True

    rd = movie.release_date
    put_token("release_year", "release_year", str(rd.year) if rd else None)
    put_token("release_month", "release_month", MONTH_NAMES[rd.month - 1] if rd else None)
    put_token("mpaa", "mpaa", movie.mpaa)
    put_numeral("budget", normalize_feature("budget", movie.budget))
    put_token("producer", "production_company", _company_token(vocab, "production_company", movie.production_company))
    put_token("distributor", "distributor", _company_token(vocab, "distributor", movie.distributor))

    if corpus is not None:
        n_comp, comp_sim = competition_features(movie, corpus)
    else:
        n_comp, comp_sim = 0.0, 0.0
    put_numeral("n_competitors", n_comp)
    put_numeral("competitor_similarity", normalize_feature("competitor_similarity", comp_sim))

    put_token("franchise", "franchise", "yes" if movie.franchise else "no")
    put_token("collection", "collection", movie.collection_name)
    put_token("copycat", "copycat", "yes" if movie.copycat else "no")

    n_people = len(movie.directors) + len(movie.writers) + len(movie.actors)
    n_man = sum(1 for a in movie.actors if a.gender == "male")
    n_woman = sum(1 for a in movie.actors if a.gender == "female")
    put_numeral("n_person", normalize_feature("n_person", n_people))
    put_numeral("n_man", normalize_feature("n_man", n_man))
    put_numeral("n_woman", normalize_feature("n_woman", n_woman))

    for i in layout.marker_indices():
        ids[i] = vocab.marker_ids[layout.slots[i].name]
        mask[i] = True

    for k, genre in enumerate(movie.genres[: layout.cfg.max_genres]):
        put_token(f"genre_{k + 1}", "genres", genre)

    cluster_ids: list[int] = []
    if cluster_map is not None:
        seen: set[int] = set()
        for kw in movie.keywords:
            cid = cluster_map.cluster_of(kw)
            if cid is None:
                tid = vocab.oov_ids["keyword_clusters"]
            else:
                tid = vocab.id_for("keyword_clusters", cluster_map.clusters[cid].representative)
            if tid in seen:
                continue
            seen.add(tid)
            cluster_ids.append(tid)
    for k, tid in enumerate(cluster_ids[: layout.cfg.max_clusters]):
        i = layout.index[f"cluster_{k + 1}"]
        ids[i] = tid
        mask[i] = True

    def put_person(prefix: str, person_id: str, name: str):
        ps = history.stats(person_id, rd, stats)
        put_token(f"{prefix}_name", _crew_or_cast(prefix), name)
        put_numeral(f"{prefix}_experience", ps.experience)
        put_numeral(f"{prefix}_profitability", ps.profitability)

    def _crew_or_cast(prefix: str) -> str:
        return "cast_names" if prefix.startswith("actor") else "crew_names"

    for k, p in enumerate(movie.directors[: layout.cfg.n_directors]):
        put_person(f"director{k + 1}", p.person_id, p.name)
    for k, p in enumerate(movie.writers[: layout.cfg.n_writers]):
        put_person(f"writer{k + 1}", p.person_id, p.name)
    for k, a in enumerate(movie.actors[: layout.cfg.n_actors]):
        prefix = f"actor{k + 1}"
        put_person(prefix, a.person.person_id, a.person.name)
        put_token(f"{prefix}_gender", "gender", a.gender)
        age = _actor_age(a.birth_date, rd)
        if age is not None:
            put_numeral(f"{prefix}_age", normalize_feature("actor_age", age, stats))

    target = None
    if movie.usable_for_finetune:
        target = normalize_feature("revenue", movie.revenue)

    return TokenizedMovie(
        movie_id=movie.movie_id,
        token_ids=ids,
        numeral_values=vals,
        attention_mask=mask,
        layout=layout,
        vocab_hash=vocab.fingerprint(),
        target_log_revenue=target,
    )


def _company_token(vocab: Vocabulary, group: str, name: str) -> str | None:
    if not name:
        return None
    if vocab.contains(group, name):
        return name
    return "Others" if vocab.contains(group, "Others") else name
