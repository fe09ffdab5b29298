"""End-to-end orchestration: records + split + cluster map -> tokenized

splits -> pretrain / finetune / evaluate, with all artifacts carried inside
checkpoints so later stages reuse the exact training-split vocabulary and
normalization constants.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .clustering import KeywordClusterMap
from .encoder import Checkpoint, EncoderConfig, MovieEncoder, init_params
from .errors import DataError
from .features import (
    FeatureStats,
    LayoutConfig,
    NumeralEmbedderConfig,
    PersonHistory,
    SlotLayout,
    TokenizedMovie,
    Vocabulary,
    build_feature_stats,
    build_vocabulary,
    tokenize,
)
from .finetune import FinetuneConfig, finetune
from .pobj import PosterObjectSet
from .pretrain import PretrainConfig, pretrain_loop
from .records import MovieRecord, SplitAssignment

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "valid", "test")


@dataclass
class Prepared:
    """Tokenized corpus plus the artifacts that produced it."""

    vocab: Vocabulary
    stats: FeatureStats
    history: PersonHistory
    layout: SlotLayout
    cluster_map: KeywordClusterMap | None
    tokenized: dict[str, list[TokenizedMovie]]
    records: list[MovieRecord] = field(default_factory=list)

    def finetunable(self, split: str) -> list[TokenizedMovie]:
        return [m for m in self.tokenized[split] if m.target_log_revenue is not None]

    def all_movies(self) -> list[TokenizedMovie]:
        return [m for split in SPLIT_NAMES for m in self.tokenized[split]]


def split_map_of(assignments: list[SplitAssignment]) -> dict[str, str]:
    return {a.movie_id: a.split for a in assignments}


def prepare(
    records: list[MovieRecord],
    split_map: dict[str, str],
    cluster_map: KeywordClusterMap | None,
    layout_cfg: LayoutConfig = LayoutConfig(),
    vocab: Vocabulary | None = None,
    stats: FeatureStats | None = None,
    min_company_count: int = 10,
) -> Prepared:
    """Tokenize a corpus. Vocabulary, normalization stats, and person

    histories are built from the training split only unless supplied (as
    when re-tokenizing against a checkpoint's artifacts).
    """
    train_records = [r for r in records if split_map.get(r.movie_id) == "train"]
    if not train_records:
        if vocab is None or stats is None:
            raise DataError("prepare: no records assigned to the train split")
        # inference-only tokenization against checkpoint artifacts: person
        # histories come from the supplied corpus
        train_records = records
    history = PersonHistory.from_records(train_records)
    if vocab is None:
        vocab = build_vocabulary(train_records, cluster_map, min_company_count)
    if stats is None:
        stats = build_feature_stats(train_records, history)
    layout = SlotLayout(layout_cfg)

    tokenized: dict[str, list[TokenizedMovie]] = {name: [] for name in SPLIT_NAMES}
    for rec in records:
        split = split_map.get(rec.movie_id)
        if split is None:
            continue
        tokenized[split].append(
            tokenize(rec, vocab, cluster_map, stats, history, layout, corpus=records)
        )
    return Prepared(
        vocab=vocab, stats=stats, history=history, layout=layout,
        cluster_map=cluster_map, tokenized=tokenized, records=records,
    )


def posters_by_movie(posters: list[PosterObjectSet]) -> dict[str, np.ndarray]:
    return {p.movie_id: p.features for p in posters}


def build_encoder(
    prepared: Prepared,
    encoder_cfg: EncoderConfig | None = None,
    numeral_cfg: NumeralEmbedderConfig | None = None,
    poster_dim: int | None = None,
    imported: dict[str, np.ndarray] | None = None,
    seed: int = 0,
) -> MovieEncoder:
    """Encoder sized to the prepared corpus; max_slots follows the layout."""
    if encoder_cfg is None:
        encoder_cfg = EncoderConfig(max_slots=prepared.layout.n_slots, seed=seed)
    elif encoder_cfg.max_slots < prepared.layout.n_slots:
        encoder_cfg = EncoderConfig(
            **{**encoder_cfg.to_json_dict(), "max_slots": prepared.layout.n_slots}
        )
    if numeral_cfg is None:
        numeral_cfg = NumeralEmbedderConfig(dim=encoder_cfg.d_model)
    return init_params(encoder_cfg, prepared.vocab, numeral_cfg, poster_dim, imported)


def make_checkpoint(prepared: Prepared, model: MovieEncoder, extra: dict | None = None) -> Checkpoint:
    return Checkpoint(
        model=model,
        vocab=prepared.vocab,
        layout=prepared.layout,
        stats=prepared.stats,
        cluster_map=prepared.cluster_map,
        extra=extra or {},
    )


def run_pretrain(
    prepared: Prepared,
    posters: list[PosterObjectSet] | None,
    model: MovieEncoder,
    cfg: PretrainConfig,
    metrics_path=None,
    checkpoint_fn=None,
) -> list[dict]:
    """Pretrain on the training split (movies without revenue included)."""
    poster_map = posters_by_movie(posters) if posters else {}
    return pretrain_loop(
        model, prepared.tokenized["train"], poster_map, cfg,
        metrics_path=metrics_path, checkpoint_fn=checkpoint_fn,
    )


def run_finetune(prepared: Prepared, base: MovieEncoder, cfg: FinetuneConfig):
    splits = {
        "train": prepared.finetunable("train"),
        "valid": prepared.finetunable("valid"),
        "test": prepared.finetunable("test"),
    }
    dropped = sum(
        len(prepared.tokenized[s]) - len(splits[s]) for s in SPLIT_NAMES
    )
    if dropped:
        logger.info("finetune: %d movies without revenue excluded", dropped)
    return finetune(base, splits, cfg)


def retokenize_with_checkpoint(
    records: list[MovieRecord],
    split_map: dict[str, str],
    ckpt: Checkpoint,
) -> Prepared:
    """Tokenize records using a checkpoint's vocabulary/stats/cluster map."""
    return prepare(
        records,
        split_map,
        ckpt.cluster_map,
        layout_cfg=ckpt.layout.cfg,
        vocab=ckpt.vocab,
        stats=ckpt.stats,
    )
