"""Transformer encoder over fixed-slot movie sequences, plus the checkpoint

archive codec.

Discrete slots enter as token + position embeddings; numeral slots enter as
prototype numeral embeddings + position embeddings; PAD slots are excluded
from attention and from the mean-pooled output. Blocks are post-layer-norm
(BERT lineage).
"""

from __future__ import annotations

import json
import logging
import math
import zipfile
import zlib
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .clustering import KeywordClusterMap
from .errors import DataError
from .features import (
    FeatureStats,
    NumeralEmbedderConfig,
    SlotLayout,
    TokenizedMovie,
    Vocabulary,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    n_layers: int = 4
    d_model: int = 512
    d_ff: int = 512
    n_heads: int = 4
    max_slots: int = 70
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    def to_json_dict(self) -> dict:
        return {
            "n_layers": self.n_layers, "d_model": self.d_model, "d_ff": self.d_ff,
            "n_heads": self.n_heads, "max_slots": self.max_slots,
            "dropout": self.dropout, "seed": self.seed,
        }


@dataclass
class ContextualOutput:
    per_slot: torch.Tensor  # (B, S, d_model)
    pooled: torch.Tensor  # (B, d_model), mean over mask=1 slots
    attention_mask: torch.Tensor  # (B, S) bool


class SelfAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor) -> torch.Tensor:
        B, S, _ = x.shape
        shape = (B, S, self.n_heads, self.d_head)
        q = self.q(x).view(shape).transpose(1, 2)
        k = self.k(x).view(shape).transpose(1, 2)
        v = self.v(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        scores = scores.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        probs = self.drop(torch.softmax(scores, dim=-1))
        ctx = (probs @ v).transpose(1, 2).reshape(B, S, -1)
        return self.out(ctx)


class EncoderBlock(nn.Module):
    """Post-LN transformer block: LN(x + attn), LN(x + ffn)."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, dropout: float):
        super().__init__()
        self.attn = SelfAttention(d_model, n_heads, dropout)
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.ff = nn.Sequential(nn.Linear(d_model, d_ff), nn.GELU(), nn.Linear(d_ff, d_model))
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor) -> torch.Tensor:
        x = self.norm1(x + self.drop(self.attn(x, key_padding_mask)))
        x = self.norm2(x + self.drop(self.ff(x)))
        return x


class MovieEncoder(nn.Module):
    """Encoder + the heads used across pretraining, finetuning, retrieval.

    ``poster_dim`` adds the visual-grounding projection (raw detector dims
    -> d_model); the regression head is always present and re-initialized at
    finetune time.
    """

    def __init__(
        self,
        cfg: EncoderConfig,
        vocab_size: int,
        numeral_cfg: NumeralEmbedderConfig | None = None,
        poster_dim: int | None = None,
    ):
        super().__init__()
        torch.manual_seed(cfg.seed)
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.numeral_cfg = numeral_cfg or NumeralEmbedderConfig(dim=cfg.d_model)
        self.poster_dim = poster_dim

        self.token_emb = nn.Embedding(vocab_size, cfg.d_model)
        self.pos_emb = nn.Embedding(cfg.max_slots, cfg.d_model)
        nn.init.normal_(self.token_emb.weight, std=0.02)
        nn.init.normal_(self.pos_emb.weight, std=0.02)

        lo, hi = self.numeral_cfg.interval
        self.register_buffer("numeral_prototypes", torch.linspace(lo, hi, self.numeral_cfg.dim))
        self.numeral_proj = (
            nn.Linear(self.numeral_cfg.dim, cfg.d_model)
            if self.numeral_cfg.dim != cfg.d_model
            else None
        )

        self.blocks = nn.ModuleList(
            EncoderBlock(cfg.d_model, cfg.n_heads, cfg.d_ff, cfg.dropout)
            for _ in range(cfg.n_layers)
        )
        self.mlm_bias = nn.Parameter(torch.zeros(vocab_size))
        self.vg_proj = nn.Linear(poster_dim, cfg.d_model) if poster_dim else None
        self.head = nn.Linear(cfg.d_model, 1)

    def numeral_vectors(self, values: torch.Tensor) -> torch.Tensor:
        """Prototype kernel embedding of a tensor of scalars (appends a dim)."""
        dist = torch.abs(values.unsqueeze(-1) - self.numeral_prototypes)
        ne = torch.exp(-dist / self.numeral_cfg.sigma_sq)
        if self.numeral_proj is not None:
            ne = self.numeral_proj(ne)
        return ne

    def forward(self, batch: dict) -> ContextualOutput:
        token_ids = batch["token_ids"]
        numerals = batch["numeral_values"]
        attn = batch["attention_mask"]
        numeral_slots = batch["numeral_slots"]  # (S,) bool
        B, S = token_ids.shape
        if S > self.cfg.max_slots:
            raise ValueError(f"sequence length {S} exceeds max_slots {self.cfg.max_slots}")
        active = attn.sum(dim=1)
        if int(active.min()) == 0:
            raise ValueError("movie with no active (non-PAD) slots cannot be encoded")

        x = self.token_emb(token_ids)
        num_idx = torch.nonzero(numeral_slots, as_tuple=True)[0]
        ne = self.numeral_vectors(numerals[:, num_idx])
        x = x.clone()
        x[:, num_idx, :] = ne.to(x.dtype)
        x = x + self.pos_emb.weight[:S].unsqueeze(0)

        key_padding_mask = ~attn
        for blk in self.blocks:
            x = blk(x, key_padding_mask)

        maskf = attn.unsqueeze(-1).to(x.dtype)
        pooled = (x * maskf).sum(dim=1) / maskf.sum(dim=1)
        return ContextualOutput(per_slot=x, pooled=pooled, attention_mask=attn)

    def mlm_logits(self, slot_vectors: torch.Tensor) -> torch.Tensor:
        """Tied-softmax logits over the unified vocabulary."""
        return slot_vectors @ self.token_emb.weight.t() + self.mlm_bias

    def predict_log_revenue(self, batch: dict) -> torch.Tensor:
        return self.head(self.forward(batch).pooled).squeeze(-1)


def collate(movies: list[TokenizedMovie]) -> dict:
    """Stack TokenizedMovies into a batch dict of tensors."""
    if not movies:
        raise ValueError("collate: empty movie list")
    layout = movies[0].layout
    token_ids = torch.from_numpy(np.stack([m.token_ids for m in movies]))
    numerals = torch.from_numpy(np.stack([m.numeral_values for m in movies]))
    attn = torch.from_numpy(np.stack([m.attention_mask for m in movies]))
    targets = torch.tensor(
        [m.target_log_revenue if m.target_log_revenue is not None else math.nan for m in movies],
        dtype=torch.float32,
    )
    return {
        "token_ids": token_ids.long(),
        "numeral_values": numerals.float(),
        "attention_mask": attn.bool(),
        "numeral_slots": torch.from_numpy(layout.numeral_mask),
        "targets": targets,
        "movie_ids": [m.movie_id for m in movies],
    }


def encode_movies(model: MovieEncoder, movies: list[TokenizedMovie], mode: str = "eval") -> ContextualOutput:
    """Forward a list of movies in the requested mode ("train" or "eval")."""
    was_training = model.training
    model.train(mode == "train")
    try:
        batch = collate(movies)
        if mode == "eval":
            with torch.no_grad():
                return model(batch)
        return model(batch)
    finally:
        model.train(was_training)


def init_params(
    cfg: EncoderConfig,
    vocab: Vocabulary,
    numeral_cfg: NumeralEmbedderConfig | None = None,
    poster_dim: int | None = None,
    imported: dict[str, np.ndarray] | None = None,
    projection: np.ndarray | None = None,
) -> MovieEncoder:
    """Build a seeded encoder; ``imported`` optionally overrides token

    embeddings from a word-vector table (multi-word tokens averaged over
    their words' vectors; uncovered tokens keep their random init).
    """
    model = MovieEncoder(cfg, vocab.size, numeral_cfg, poster_dim)
    if imported:
        covered = load_imported_embeddings(model, vocab, imported, projection)
        logger.info("imported embeddings cover %d/%d tokens", covered, vocab.size)
    return model


def load_imported_embeddings(
    model: MovieEncoder,
    vocab: Vocabulary,
    word_vectors: dict[str, np.ndarray],
    projection: np.ndarray | None = None,
) -> int:
    if not word_vectors:
        return 0
    dim = len(next(iter(word_vectors.values())))
    if dim != model.cfg.d_model and projection is None:
        raise DataError(
            f"imported embedding dim {dim} != d_model {model.cfg.d_model} "
            "and no projection configured"
        )
    covered = 0
    with torch.no_grad():
        for token_id in range(vocab.size):
            group, token = vocab.token_at(token_id)
            if group == "special" or token == "[OOV]":
                continue
            vec = _token_vector(token, word_vectors)
            if vec is None:
                continue
            if projection is not None:
                vec = vec @ projection
            model.token_emb.weight[token_id] = torch.from_numpy(
                np.asarray(vec, dtype=np.float32)
            )
            covered += 1
    return covered


def _token_vector(token: str, word_vectors: dict[str, np.ndarray]) -> np.ndarray | None:
    if token in word_vectors:
        return np.asarray(word_vectors[token], dtype=float)
    parts = [word_vectors[w] for w in token.split() if w in word_vectors]
    if not parts:
        return None
    return np.mean(parts, axis=0)


# ---------------------------------------------------------------------------
# Checkpoint archive: config.json + one raw float32 blob per parameter
# + manifest of names/shapes/checksums


@dataclass
class Checkpoint:
    model: MovieEncoder
    vocab: Vocabulary
    layout: SlotLayout
    stats: FeatureStats
    cluster_map: KeywordClusterMap | None = None
    extra: dict = field(default_factory=dict)

    @property
    def encoder_cfg(self) -> EncoderConfig:
        return self.model.cfg


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    model = ckpt.model
    config = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "encoder": model.cfg.to_json_dict(),
        "numeral": {
            "dim": model.numeral_cfg.dim,
            "interval": list(model.numeral_cfg.interval),
            "sigma_sq": model.numeral_cfg.sigma_sq,
        },
        "layout": ckpt.layout.to_json_dict(),
        "poster_dim": model.poster_dim,
        "vocab_size": model.vocab_size,
        "vocab_fingerprint": ckpt.vocab.fingerprint(),
        "extra": ckpt.extra,
    }
    manifest = []
    blobs: list[tuple[str, bytes]] = []
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().to(torch.float32).numpy().astype("<f4")
        blob = arr.tobytes(order="C")
        manifest.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": "float32",
                "crc32": zlib.crc32(blob) & 0xFFFFFFFF,
            }
        )
        blobs.append((name, blob))

    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("config.json", json.dumps(config, indent=1, sort_keys=True))
        zf.writestr("manifest.json", json.dumps(manifest, indent=1))
        zf.writestr("vocabulary.json", json.dumps(ckpt.vocab.to_json_dict(), sort_keys=True))
        zf.writestr("feature_stats.json", json.dumps(ckpt.stats.to_json_dict(), sort_keys=True))
        if ckpt.cluster_map is not None:
            zf.writestr("cluster_map.json", json.dumps(ckpt.cluster_map.to_json_dict(), sort_keys=True))
        for name, blob in blobs:
            zf.writestr(f"params/{name}.bin", blob)


def load_checkpoint(path) -> Checkpoint:
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as exc:
        raise DataError(f"cannot open checkpoint {path}: {exc}") from exc
    with zf:
        config = json.loads(zf.read("config.json"))
        if config.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise DataError(f"unsupported checkpoint format: {config.get('format_version')}")
        manifest = json.loads(zf.read("manifest.json"))
        vocab = Vocabulary.from_json_dict(json.loads(zf.read("vocabulary.json")))
        stats = FeatureStats.from_json_dict(json.loads(zf.read("feature_stats.json")))
        cluster_map = None
        if "cluster_map.json" in zf.namelist():
            cluster_map = KeywordClusterMap.from_json_dict(json.loads(zf.read("cluster_map.json")))

        numeral = config["numeral"]
        model = MovieEncoder(
            EncoderConfig(**config["encoder"]),
            vocab_size=config["vocab_size"],
            numeral_cfg=NumeralEmbedderConfig(
                dim=numeral["dim"],
                interval=tuple(numeral["interval"]),
                sigma_sq=numeral["sigma_sq"],
            ),
            poster_dim=config["poster_dim"],
        )
        state = {}
        for entry in manifest:
            blob = zf.read(f"params/{entry['name']}.bin")
            crc = zlib.crc32(blob) & 0xFFFFFFFF
            if crc != entry["crc32"]:
                raise DataError(f"checksum mismatch for parameter {entry['name']!r}")
            arr = np.frombuffer(blob, dtype="<f4").reshape(entry["shape"]).copy()
            state[entry["name"]] = torch.from_numpy(arr)
        missing = model.load_state_dict(state, strict=False)
        if missing.missing_keys:
            raise DataError(f"checkpoint missing parameters: {missing.missing_keys}")
        layout = SlotLayout.from_json_dict(config["layout"])
        return Checkpoint(
            model=model, vocab=vocab, layout=layout, stats=stats,
            cluster_map=cluster_map, extra=config.get("extra", {}),
        )


def read_param_blob(path, name: str) -> bytes:
    """Raw bytes of one parameter blob (for freeze/identity checks)."""
    with zipfile.ZipFile(path, "r") as zf:
        return zf.read(f"params/{name}.bin")
