"""Keyword consolidation: TF-IDF co-occurrence embeddings + average-link

agglomerative clustering over concatenated lexical/co-occurrence vectors.

Keywords are canonically ordered by (document frequency desc, lexicographic)
before clustering, which makes the whole pipeline invariant to input
permutation; merge tie-breaks use the smallest cluster-id pair under that
canonical order, with merged clusters receiving fresh ids n, n+1, ...
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import DataError

logger = logging.getLogger(__name__)

_DENSE_SVD_LIMIT = 4000


@dataclass
class KeywordEmbedding:
    """Lexical + co-occurrence representation of one keyword; ``joint`` is

    their concatenation (each half L2-normalized by the build pipeline).
    """

    keyword: str
    lexical: np.ndarray
    cooc: np.ndarray
    joint: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.joint is None:
            self.joint = np.concatenate([self.lexical, self.cooc])


@dataclass
class Cluster:
    cluster_id: int
    representative: str
    members: list[str]


class KeywordClusterMap:
    """Partition of the keyword set into clusters, each named by its most

    frequent member.
    """

    def __init__(self, clusters: list[Cluster]):
        self.clusters = clusters
        self._index: dict[str, int] = {}
        for c in clusters:
            for kw in c.members:
                if kw in self._index:
                    raise DataError(f"keyword {kw!r} appears in two clusters")
                self._index[kw] = c.cluster_id

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def n_keywords(self) -> int:
        return len(self._index)

    def cluster_of(self, keyword: str) -> int | None:
        return self._index.get(keyword)

    def representative_of(self, keyword: str) -> str | None:
        cid = self._index.get(keyword)
        return None if cid is None else self.clusters[cid].representative

    def to_json_dict(self) -> dict:
        return {
            "clusters": [
                {
                    "cluster_id": c.cluster_id,
                    "representative": c.representative,
                    "members": list(c.members),
                }
                for c in self.clusters
            ]
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "KeywordClusterMap":
        clusters = [
            Cluster(c["cluster_id"], c["representative"], list(c["members"]))
            for c in obj["clusters"]
        ]
        clusters.sort(key=lambda c: c.cluster_id)
        return cls(clusters)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "KeywordClusterMap":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_json_dict(json.load(fh))
        except OSError as exc:
            raise DataError(f"cannot read cluster map {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# TF-IDF and co-occurrence embeddings


def canonical_keyword_order(corpus) -> tuple[list[str], dict[str, int]]:
    """Keywords by (document frequency desc, lexicographic), plus df map."""
    df: dict[str, int] = {}
    for _, keywords in corpus:
        for kw in set(keywords):
            df[kw] = df.get(kw, 0) + 1
    ordered = sorted(df, key=lambda k: (-df[k], k))
    return ordered, df


def build_tfidf(corpus):
    """Movie x keyword TF-IDF matrix (CSR) with binary term frequency.

    ``corpus`` is a list of (movie_id, keywords). Returns (matrix, keywords)
    with keyword columns in canonical order; entry = tf * ln(N / df).
    """
    corpus = list(corpus)
    if not corpus:
        raise DataError("build_tfidf: empty corpus")
    keywords, df = canonical_keyword_order(corpus)
    col = {kw: j for j, kw in enumerate(keywords)}
    n_movies = len(corpus)
    idf = np.array([math.log(n_movies / df[kw]) for kw in keywords])

    rows, cols, vals = [], [], []
    for i, (_, kws) in enumerate(corpus):
        for kw in sorted(set(kws)):
            j = col[kw]
            rows.append(i)
            cols.append(j)
            vals.append(idf[j])
    mat = scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(n_movies, len(keywords)), dtype=np.float64
    )
    return mat, keywords


def cooc_embed(tfidf, dims: int = 50, keywords=None):
    """Keyword co-occurrence vectors: rows of V * diag(sigma) from the SVD

    of the TF-IDF matrix, truncated to ``dims``. Per-component sign is fixed
    by forcing the largest-magnitude entry of each right singular vector
    non-negative. Components beyond the numerical rank are zeroed (with a
    warning).
    """
    n_movies, n_keywords = tfidf.shape
    if dims > min(n_movies, n_keywords):
        raise ValueError(
            f"cooc_embed: dims={dims} exceeds min matrix dimension {min(tfidf.shape)}"
        )
    if max(tfidf.shape) <= _DENSE_SVD_LIMIT:
        dense = tfidf.toarray() if scipy.sparse.issparse(tfidf) else np.asarray(tfidf, dtype=float)
        _, sigma, vt = scipy.linalg.svd(dense, full_matrices=False)
    else:
        k = min(dims, min(tfidf.shape) - 1)
        v0 = np.full(min(tfidf.shape), 1.0 / math.sqrt(min(tfidf.shape)))
        _, sigma, vt = scipy.sparse.linalg.svds(
            scipy.sparse.csr_matrix(tfidf, dtype=float), k=k, v0=v0
        )
        order = np.argsort(sigma)[::-1]
        sigma, vt = sigma[order], vt[order]

    sigma = sigma[:dims]
    vt = vt[:dims]
    tol = (sigma[0] if len(sigma) else 0.0) * max(tfidf.shape) * np.finfo(float).eps
    rank = int(np.sum(sigma > tol))
    if rank < dims:
        logger.warning("cooc_embed: dims=%d exceeds numerical rank %d; zero-padding", dims, rank)

    vectors = np.zeros((n_keywords, dims))
    for j in range(rank):
        v = vt[j]
        peak = int(np.argmax(np.abs(v)))
        if v[peak] < 0:
            v = -v
        vectors[:, j] = v * sigma[j]
    if keywords is not None:
        return {kw: vectors[i] for i, kw in enumerate(keywords)}
    return vectors


# ---------------------------------------------------------------------------
# Average-link (UPGMA) agglomerative clustering


def _cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    # zero vectors get cosine similarity 0 (distance 1) to everything
    norms = np.linalg.norm(vectors, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = vectors / safe[:, None]
    d = 1.0 - unit @ unit.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def upgma_merge_sequence(vectors: np.ndarray, n_clusters: int):
    """Run average-link merges on cosine distance until ``n_clusters`` remain.

    Points carry ids 0..n-1; the merge at step t creates cluster id n+t.
    Each step merges the active pair with minimal mean inter-cluster
    distance, ties broken by the smallest (i, j) id pair. Returns
    ``(merges, clusters)`` where merges is a list of (id_i, id_j, distance)
    and clusters is the final list of member-index lists (each sorted,
    ordered by smallest member).

    Cluster distances are tracked as exact pairwise-distance sums, so the
    mean for any candidate pair equals the direct average over all point
    pairs up to a single division.
    """
    n = len(vectors)
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters={n_clusters} out of range [1, {n}]")
    base = _cosine_distance_matrix(np.asarray(vectors, dtype=np.float64))

    # row r of the working matrices holds cluster `ids[r]`; sums[r, c] is the
    # total pairwise distance between the two clusters' members
    sums = base.copy()
    sizes = np.ones(n)
    ids = np.arange(n)
    active = np.ones(n, dtype=bool)
    members: dict[int, list[int]] = {i: [i] for i in range(n)}

    merges: list[tuple[int, int, float]] = []
    for step in range(n - n_clusters):
        rows = np.flatnonzero(active)
        sub = sums[np.ix_(rows, rows)] / np.outer(sizes[rows], sizes[rows])
        iu = np.triu_indices(len(rows), k=1)
        flat = sub[iu]
        m = flat.min()
        cand = np.flatnonzero(flat == m)
        best = None
        for c in cand:
            r1, r2 = rows[iu[0][c]], rows[iu[1][c]]
            pair = (min(ids[r1], ids[r2]), max(ids[r1], ids[r2]), r1, r2)
            if best is None or pair[:2] < best[:2]:
                best = pair
        id_i, id_j, ra, rb = best
        new_id = n + step
        merges.append((int(id_i), int(id_j), float(m)))

        keep = np.flatnonzero(active)
        sums[ra, keep] += sums[rb, keep]
        sums[keep, ra] = sums[ra, keep]
        sums[ra, ra] = 0.0
        sizes[ra] += sizes[rb]
        members[new_id] = sorted(members.pop(ids[ra]) + members.pop(ids[rb]))
        ids[ra] = new_id
        active[rb] = False

    final = [members[ids[r]] for r in np.flatnonzero(active)]
    final.sort(key=lambda ms: ms[0])
    return merges, final


def agglomerate(
    embeddings: list[KeywordEmbedding],
    n_clusters: int,
    metric: str = "cosine",
    frequencies: dict[str, int] | None = None,
) -> KeywordClusterMap:
    """Cluster keyword embeddings by UPGMA on cosine distance over the joint

    vectors. ``frequencies`` (keyword -> count) picks each cluster's
    representative and the final cluster ordering; without it, frequency
    ties make representatives lexicographic.
    """
    if metric != "cosine":
        raise ValueError(f"unsupported metric: {metric!r}")
    if not 1 <= n_clusters <= len(embeddings):
        raise ValueError(
            f"n_clusters={n_clusters} out of range [1, {len(embeddings)}]"
        )
    freq = frequencies or {}
    ordered = sorted(embeddings, key=lambda e: (-freq.get(e.keyword, 0), e.keyword))
    vectors = np.stack([e.joint for e in ordered])
    _, groups = upgma_merge_sequence(vectors, n_clusters)
    member_lists = [[ordered[i].keyword for i in g] for g in groups]
    return _finalize_clusters(member_lists, freq)


def _finalize_clusters(member_lists: list[list[str]], freq: dict[str, int]) -> KeywordClusterMap:
    decorated = []
    for members in member_lists:
        rep = sorted(members, key=lambda kw: (-freq.get(kw, 0), kw))[0]
        decorated.append((rep, sorted(members)))
    decorated.sort(key=lambda rm: (-freq.get(rm[0], 0), rm[0]))
    clusters = [Cluster(cid, rep, members) for cid, (rep, members) in enumerate(decorated)]
    return KeywordClusterMap(clusters)


# ---------------------------------------------------------------------------
# Lexical vectors (standard text word-vector format)


def read_word_vectors(path) -> dict[str, np.ndarray]:
    """Read a `count dim` header + `word v1 .. vD` lines into a dict."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read vector file {path}: {exc}") from exc
    with fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise DataError(f"{path}: bad vector-file header {header!r}")
        count, dim = int(header[0]), int(header[1])
        vectors: dict[str, np.ndarray] = {}
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise DataError(f"{path}: bad vector line for {parts[0]!r}")
            vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
    if len(vectors) != count:
        logger.warning("%s: header count %d != %d vectors read", path, count, len(vectors))
    return vectors


def write_word_vectors(vectors: dict[str, np.ndarray], path) -> None:
    items = list(vectors.items())
    dim = len(items[0][1]) if items else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(items)} {dim}\n")
        for word, vec in items:
            fh.write(word + " " + " ".join(f"{x:.6f}" for x in vec) + "\n")


def keyword_lexical_vector(keyword: str, word_vectors: dict[str, np.ndarray], dim: int) -> np.ndarray:
    """Lexical vector of a keyword: its own vector if present, else the mean

    of its words' vectors; all-missing keywords get zeros.
    """
    if keyword in word_vectors:
        return np.asarray(word_vectors[keyword], dtype=float)
    parts = [word_vectors[w] for w in keyword.split() if w in word_vectors]
    if not parts:
        return np.zeros(dim)
    return np.mean(parts, axis=0)


def _l2_normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


# ---------------------------------------------------------------------------
# End-to-end cluster-map construction


def build_cluster_map(
    corpus,
    word_vectors: dict[str, np.ndarray],
    n_clusters: int,
    cooc_dims: int = 50,
    min_df: int = 2,
) -> KeywordClusterMap:
    """Cluster a corpus's keywords into ``n_clusters`` clusters.

    ``corpus`` is a list of (movie_id, keywords). Keywords with document
    frequency below ``min_df`` are held out of the merge loop and attached
    post hoc to the cluster with the smallest mean cosine distance.
    """
    keywords, df = canonical_keyword_order(list(corpus))
    if not keywords:
        raise DataError("build_cluster_map: corpus has no keywords")

    tfidf, ordered = build_tfidf(corpus)
    cooc_dims = min(cooc_dims, min(tfidf.shape))
    cooc = cooc_embed(tfidf, dims=cooc_dims)
    lex_dim = len(next(iter(word_vectors.values()))) if word_vectors else 0

    joint = np.zeros((len(ordered), lex_dim + cooc_dims))
    for i, kw in enumerate(ordered):
        lex = _l2_normalize(keyword_lexical_vector(kw, word_vectors, lex_dim))
        joint[i] = np.concatenate([lex, _l2_normalize(cooc[i])])

    main_idx = [i for i, kw in enumerate(ordered) if df[kw] >= min_df]
    rare_idx = [i for i, kw in enumerate(ordered) if df[kw] < min_df]
    if len(main_idx) < n_clusters:
        logger.warning(
            "only %d keywords have df >= %d; clustering all %d keywords",
            len(main_idx), min_df, len(ordered),
        )
        main_idx, rare_idx = list(range(len(ordered))), []
    if not 1 <= n_clusters <= len(main_idx):
        raise ValueError(f"n_clusters={n_clusters} out of range [1, {len(main_idx)}]")

    _, groups = upgma_merge_sequence(joint[main_idx], n_clusters)
    member_lists = [[ordered[main_idx[i]] for i in g] for g in groups]
    group_vectors = [joint[[main_idx[i] for i in g]] for g in groups]

    base_norm = joint / np.maximum(np.linalg.norm(joint, axis=1, keepdims=True), 1e-30)
    for ri in rare_idx:
        v = base_norm[ri]
        best, best_dist = 0, math.inf
        for ci, gv in enumerate(group_vectors):
            gn = gv / np.maximum(np.linalg.norm(gv, axis=1, keepdims=True), 1e-30)
            dist = float(np.mean(1.0 - gn @ v))
            if dist < best_dist - 1e-15:
                best, best_dist = ci, dist
        member_lists[best].append(ordered[ri])

    return _finalize_clusters(member_lists, df)
