"""Seeded synthetic corpus generator for desk-scale experiments.

The generator plants the structure the pipeline is supposed to exploit:
keywords group into true clusters, clusters group into latent topics,
log-revenue is a linear function of log-budget, summed cluster effects and
star quality plus noise, and each poster's object vectors are noisy copies
of its movie's cluster prototypes. Lexical vectors are noisy copies of
cluster lexical prototypes so the clustering stage can recover the planted
clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .pobj import PosterObjectSet
from .records import GENRES, ActorRef, MovieRecord, PersonRef

MPAA_CHOICES = ("G", "PG", "PG-13", "R")


@dataclass
class SyntheticSpec:
    n_movies: int = 512
    n_keywords: int = 120
    n_clusters_true: int = 20
    n_topics: int = 5
    n_people: int = 80
    poster_object_dim: int = 64
    lexical_dim: int = 300
    seed: int = 0
    budget_coef: float = 1.0
    star_sd: float = 0.05
    cluster_effect_sd: float = 0.12
    cluster_jitter_sd: float = 0.03
    rev_noise: float = 0.15
    poster_noise: float = 0.25
    lex_noise: float = 0.30
    poster_rate: float = 0.9
    objects_per_poster: int = 8
    franchise_rate: float = 0.25
    franchise_boost: float = 0.2
    pretrain_only_rate: float = 0.0

    def __post_init__(self):
        if self.n_topics * 2 > len(GENRES):
            raise ValueError("need two home genres per topic")
        if self.n_clusters_true < self.n_topics:
            raise ValueError("need at least one cluster per topic")


@dataclass
class SyntheticWorld:
    spec: SyntheticSpec
    records: list[MovieRecord]
    posters: list[PosterObjectSet]
    lexical_vectors: dict[str, np.ndarray]
    truth: dict = field(default_factory=dict)


def _keyword_name(j: int) -> str:
    return f"kw{j:03d}"


def generate(spec: SyntheticSpec) -> SyntheticWorld:
    rng = np.random.default_rng(spec.seed)
    n_cl, n_top = spec.n_clusters_true, spec.n_topics

    cluster_topic = np.arange(n_cl) % n_top
    topic_effect = rng.normal(0.0, spec.cluster_effect_sd, size=n_top)
    cluster_effect = topic_effect[cluster_topic] + rng.normal(
        0.0, spec.cluster_jitter_sd, size=n_cl
    )

    topic_obj = rng.normal(size=(n_top, spec.poster_object_dim))
    proto = rng.normal(size=(n_cl, spec.poster_object_dim)) + 0.5 * topic_obj[cluster_topic]
    proto /= np.linalg.norm(proto, axis=1, keepdims=True)

    topic_lex = rng.normal(size=(n_top, spec.lexical_dim))
    cluster_lex = rng.normal(size=(n_cl, spec.lexical_dim)) + 0.5 * topic_lex[cluster_topic]

    keyword_cluster = np.arange(spec.n_keywords) % n_cl
    lexical_vectors: dict[str, np.ndarray] = {}
    for j in range(spec.n_keywords):
        v = cluster_lex[keyword_cluster[j]] + spec.lex_noise * rng.normal(size=spec.lexical_dim)
        lexical_vectors[_keyword_name(j)] = v / np.linalg.norm(v)

    cluster_members: dict[int, list[int]] = {c: [] for c in range(n_cl)}
    for j in range(spec.n_keywords):
        cluster_members[int(keyword_cluster[j])].append(j)

    # people: first half crew, second half cast
    n_crew = spec.n_people // 2
    person_quality = rng.normal(0.0, spec.star_sd, size=spec.n_people)
    person_topic = np.arange(spec.n_people) % n_top
    cast_gender = ["male" if rng.random() < 0.5 else "female" for _ in range(spec.n_people)]
    birth_years = rng.integers(1940, 2001, size=spec.n_people)

    def pick_person(pool_lo: int, pool_hi: int, topic: int) -> int:
        if rng.random() < 0.7:
            pool = [p for p in range(pool_lo, pool_hi) if person_topic[p] == topic]
            if pool:
                return int(pool[rng.integers(len(pool))])
        return int(rng.integers(pool_lo, pool_hi))

    companies = [f"Studio {i}" for i in range(12)]
    distributors = [f"Dist {i}" for i in range(8)]

    records: list[MovieRecord] = []
    posters: list[PosterObjectSet] = []
    movie_truth = []
    for i in range(spec.n_movies):
        movie_id = f"m{i:05d}"
        topic = int(rng.integers(n_top))

        n_movie_clusters = int(rng.integers(2, 6))
        chosen: list[int] = []
        topic_pool = [c for c in range(n_cl) if cluster_topic[c] == topic]
        while len(chosen) < n_movie_clusters:
            if rng.random() < 0.8:
                c = int(topic_pool[rng.integers(len(topic_pool))])
            else:
                c = int(rng.integers(n_cl))
            if c not in chosen:
                chosen.append(c)

        keywords: list[str] = []
        for c in chosen:
            members = cluster_members[c]
            take = 1 + (rng.random() < 0.4)
            picked = rng.choice(members, size=min(take, len(members)), replace=False)
            keywords.extend(_keyword_name(int(j)) for j in picked)

        genres = [GENRES[2 * topic]]
        if rng.random() < 0.6:
            genres.append(GENRES[2 * topic + 1])
        if rng.random() < 0.2:
            extra = GENRES[int(rng.integers(len(GENRES)))]
            if extra not in genres:
                genres.append(extra)

        year = int(rng.integers(1980, 2020))
        release = date(year, int(rng.integers(1, 13)), int(rng.integers(1, 29)))

        n_dir = 1 + (rng.random() < 0.5)
        n_wri = 1 + (rng.random() < 0.5)
        n_act = 2 + (rng.random() < 0.7)
        dir_ids = [pick_person(0, n_crew, topic) for _ in range(n_dir)]
        wri_ids = [pick_person(0, n_crew, topic) for _ in range(n_wri)]
        act_ids = [pick_person(n_crew, spec.n_people, topic) for _ in range(n_act)]

        directors = [PersonRef(f"p{p:03d}", f"Person {p:03d}") for p in dir_ids]
        writers = [PersonRef(f"p{p:03d}", f"Person {p:03d}") for p in wri_ids]
        actors = [
            ActorRef(
                PersonRef(f"p{p:03d}", f"Person {p:03d}"),
                gender=cast_gender[p],
                birth_date=date(int(birth_years[p]), 6, 15),
            )
            for p in act_ids
        ]

        franchise = bool(rng.random() < spec.franchise_rate)
        budget_log = float(np.clip(rng.normal(7.0, 0.7), 5.0, 9.0))
        star = float(sum(person_quality[p] for p in dir_ids + wri_ids + act_ids))
        rev_log = (
            6.8
            + spec.budget_coef * (budget_log - 7.0)
            + float(sum(cluster_effect[c] for c in chosen))
            + star
            + (spec.franchise_boost if franchise else 0.0)
            + spec.rev_noise * float(rng.normal())
        )
        rev_log = float(np.clip(rev_log, 3.5, 10.5))
        revenue = int(round(10.0**rev_log))
        if rng.random() < spec.pretrain_only_rate:
            revenue = 0

        has_poster = rng.random() < spec.poster_rate
        if has_poster:
            # constant object count per poster: Eq.-2-style summed scores
            # would otherwise trivially favor object-rich posters
            n_obj = min(spec.objects_per_poster, 20)
            objs = [
                proto[chosen[k % len(chosen)]]
                + spec.poster_noise * rng.normal(size=spec.poster_object_dim)
                for k in range(n_obj)
            ]
            feats = np.asarray(objs, dtype=np.float32)
            posters.append(PosterObjectSet(movie_id=movie_id, features=feats))

        records.append(
            MovieRecord(
                movie_id=movie_id,
                title=f"Movie {i}",
                budget=int(round(10.0**budget_log)),
                revenue=revenue,
                release_date=release,
                genres=genres,
                keywords=keywords,
                mpaa=MPAA_CHOICES[int(rng.integers(len(MPAA_CHOICES)))],
                production_company=companies[_zipf_index(rng, len(companies))],
                distributor=distributors[_zipf_index(rng, len(distributors))],
                franchise=franchise,
                collection_name=f"Series {i % 40}_0" if franchise else None,
                directors=directors,
                writers=writers,
                actors=actors,
                poster_ref=movie_id if has_poster else None,
            )
        )
        movie_truth.append({"movie_id": movie_id, "topic": topic, "clusters": chosen})

    truth = {
        "keyword_cluster": {_keyword_name(j): int(keyword_cluster[j]) for j in range(spec.n_keywords)},
        "cluster_topic": cluster_topic.tolist(),
        "cluster_effect": cluster_effect.tolist(),
        "movies": movie_truth,
    }
    return SyntheticWorld(
        spec=spec,
        records=records,
        posters=posters,
        lexical_vectors=lexical_vectors,
        truth=truth,
    )


def _zipf_index(rng, n: int) -> int:
    weights = 1.0 / np.arange(1, n + 1)
    weights /= weights.sum()
    return int(rng.choice(n, p=weights))
