"""Poster retrieval by keyword-in-context similarity.

A query takes one keyword-cluster slot of a movie, encodes the movie, and
ranks every indexed poster by the summed exp-cosine between that slot's
contextual vector and the poster's projected object vectors. Brute-force
linear scan; the corpus scale makes that exact and fast enough.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .encoder import Checkpoint, encode_movies
from .errors import DataError
from .features import TokenizedMovie
from .pobj import PosterObjectSet

logger = logging.getLogger(__name__)


@dataclass
class RetrievalIndex:
    """Immutable per-poster object vectors, projected to encoder space."""

    movie_ids: list[str]
    object_sets: list[torch.Tensor]  # each (M_i, d_model)

    def __len__(self) -> int:
        return len(self.movie_ids)


def build_index(ckpt: Checkpoint, posters: list[PosterObjectSet]) -> RetrievalIndex:
    """Project every poster's raw object features with the checkpoint's

    visual-grounding projection. Posters with zero objects are skipped.
    """
    if ckpt.model.vg_proj is None:
        raise DataError("checkpoint has no visual-grounding projection; cannot build index")
    movie_ids: list[str] = []
    object_sets: list[torch.Tensor] = []
    with torch.no_grad():
        for rec in posters:
            if rec.num_objects == 0:
                logger.warning("skipping poster %r with zero objects", rec.movie_id)
                continue
            feats = torch.from_numpy(np.ascontiguousarray(rec.features, dtype=np.float32))
            object_sets.append(ckpt.model.vg_proj(feats))
            movie_ids.append(rec.movie_id)
    return RetrievalIndex(movie_ids=movie_ids, object_sets=object_sets)


def query(
    index: RetrievalIndex,
    movie: TokenizedMovie,
    keyword_cluster: int | str,
    ckpt: Checkpoint,
    top_k: int = 10,
) -> list[tuple[str, float]]:
    """Rank posters for one keyword cluster in the movie's full context.

    ``keyword_cluster`` is a cluster token id or its representative string;
    it must occupy one of the movie's cluster slots. Ties order by movie id.
    """
    if isinstance(keyword_cluster, str):
        token_id = ckpt.vocab.id_for("keyword_clusters", keyword_cluster)
    else:
        token_id = int(keyword_cluster)
    slots = [s for s in movie.active_cluster_slots() if movie.token_ids[s] == token_id]
    if not slots:
        raise DataError(
            f"keyword cluster {keyword_cluster!r} is not present in movie {movie.movie_id!r}"
        )
    out = encode_movies(ckpt.model, [movie], mode="eval")
    x = out.per_slot[0, slots[0]]
    xn = x / x.norm()

    scored: list[tuple[str, float]] = []
    with torch.no_grad():
        for mid, objs in zip(index.movie_ids, index.object_sets):
            zn = objs / objs.norm(dim=-1, keepdim=True)
            score = float(torch.exp(zn @ xn).sum())
            scored.append((mid, score))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[: max(0, top_k)]
