"""Stage-1 self-supervised training: masked field prediction plus structured

visual grounding of keyword clusters in poster objects.

Masking hides exactly one token per non-empty maskable group (genres,
keyword clusters, director/writer names, actor names). Visual grounding
scores a movie's contextual keyword vectors against its poster's object
vectors with a summed exp-cosine set similarity and contrasts the true
pairing against in-batch mismatched posters.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .encoder import MovieEncoder, collate
from .errors import NumericError
from .features import MASK_ID, MASKABLE_GROUPS, TokenizedMovie

logger = logging.getLogger(__name__)


@dataclass
class MaskPlan:
    """Which slot was masked per group, with the original token ids."""

    movie_id: str
    masked_slots: dict[str, int]  # maskable group -> slot index
    original_ids: dict[int, int]  # slot index -> original token id
    seed: int


@dataclass
class PretrainConfig:
    mlm_weight: float = 1.0
    vg_weight: float = 1.0
    batch_mlm: int = 2048
    batch_vg: int = 326
    lr: float = 3e-4
    weight_decay: float = 1e-4
    steps: int = 1000
    seed: int = 0
    n_neg: int | None = None  # negatives per anchor; None = batch - 1
    max_keywords: int = 6
    max_objects: int = 20
    warmup_frac: float = 0.01
    checkpoint_interval: int | None = None

    def __post_init__(self):
        if self.mlm_weight < 0 or self.vg_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.mlm_weight == 0 and self.vg_weight == 0:
            raise ValueError("at least one loss weight must be positive")


def apply_mask(movie: TokenizedMovie, seed: int) -> tuple[TokenizedMovie, MaskPlan]:
    """Mask one uniformly chosen active slot per non-empty maskable group."""
    rng = np.random.default_rng(seed)
    masked = movie.copy()
    plan = MaskPlan(movie_id=movie.movie_id, masked_slots={}, original_ids={}, seed=seed)
    for group in MASKABLE_GROUPS:
        candidates = [
            i for i in movie.layout.maskable_slots[group] if movie.attention_mask[i]
        ]
        if not candidates:
            continue
        slot = int(candidates[rng.integers(len(candidates))])
        plan.masked_slots[group] = slot
        plan.original_ids[slot] = int(movie.token_ids[slot])
        masked.token_ids[slot] = MASK_ID
    return masked, plan


def mlm_loss(per_slot: torch.Tensor, plans: list[MaskPlan], model: MovieEncoder) -> torch.Tensor:
    """Mean cross-entropy over all masked slots in the batch.

    ``per_slot`` is the encoder output for the *masked* batch, row-aligned
    with ``plans``. A batch with zero masked slots yields 0 (warned).
    """
    rows, slots, targets = [], [], []
    for b, plan in enumerate(plans):
        for slot, original in plan.original_ids.items():
            rows.append(b)
            slots.append(slot)
            targets.append(original)
    if not rows:
        logger.warning("mlm_loss: batch contains no masked slots")
        return torch.zeros((), dtype=per_slot.dtype)
    vectors = per_slot[rows, slots]
    logits = model.mlm_logits(vectors)
    return torch.nn.functional.cross_entropy(
        logits, torch.tensor(targets, dtype=torch.long)
    )


def set_similarity(x: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Sum of exp(cosine) over the Cartesian product of two vector sets.

    ``x`` is (K, D), ``z`` is (M, D); the result lies in [K*M/e, K*M*e].
    """
    x = torch.as_tensor(x)
    z = torch.as_tensor(z)
    xn = x.norm(dim=-1)
    zn = z.norm(dim=-1)
    if (xn == 0).any() or (zn == 0).any():
        raise ValueError("set_similarity: zero-norm vector (cosine undefined)")
    cos = (x / xn.unsqueeze(-1)) @ (z / zn.unsqueeze(-1)).t()
    return torch.exp(cos).sum()


def _pairwise_set_similarity(xs: list[torch.Tensor], zs: list[torch.Tensor]) -> torch.Tensor:
    """(B, B) matrix of set similarities between all keyword/object sets."""
    B = len(xs)
    D = xs[0].shape[-1]
    K = max(t.shape[0] for t in xs)
    M = max(t.shape[0] for t in zs)
    dtype = xs[0].dtype
    xpad = torch.zeros(B, K, D, dtype=dtype)
    zpad = torch.zeros(B, M, D, dtype=dtype)
    xmask = torch.zeros(B, K, dtype=dtype)
    zmask = torch.zeros(B, M, dtype=dtype)
    for i, t in enumerate(xs):
        if (t.norm(dim=-1) == 0).any():
            raise ValueError("set_similarity: zero-norm keyword vector")
        xpad[i, : t.shape[0]] = t / t.norm(dim=-1, keepdim=True)
        xmask[i, : t.shape[0]] = 1.0
    for j, t in enumerate(zs):
        if (t.norm(dim=-1) == 0).any():
            raise ValueError("set_similarity: zero-norm object vector")
        zpad[j, : t.shape[0]] = t / t.norm(dim=-1, keepdim=True)
        zmask[j, : t.shape[0]] = 1.0
    cos = torch.einsum("ikd,jmd->ijkm", xpad, zpad)
    weights = xmask[:, None, :, None] * zmask[None, :, None, :]
    return (torch.exp(cos) * weights).sum(dim=(2, 3))


def vg_loss(
    pairs: list[tuple[torch.Tensor, torch.Tensor]],
    n_neg: int | None = None,
    seed: int | None = None,
) -> torch.Tensor:
    """Contrastive visual-grounding loss over a batch of (keywords, objects).

    Negatives for anchor i pair its keyword set with ``n_neg`` distinct
    other posters sampled without replacement (default: all others). Each
    term is -log(pos / (pos + sum(neg))).
    """
    if len(pairs) < 2:
        raise ValueError("vg_loss: need a batch of at least 2 movies for negatives")
    xs = [x for x, _ in pairs]
    zs = [z for _, z in pairs]
    B = len(pairs)
    if n_neg is None:
        n_neg = B - 1
    n_neg = min(n_neg, B - 1)

    sims = _pairwise_set_similarity(xs, zs)
    rng = np.random.default_rng(seed)
    terms = []
    for i in range(B):
        pos = sims[i, i]
        others = np.delete(np.arange(B), i)
        if n_neg < B - 1:
            others = rng.choice(others, size=n_neg, replace=False)
        neg_sum = sims[i, torch.from_numpy(np.sort(others))].sum() if len(others) else 0.0
        terms.append(-torch.log(pos / (pos + neg_sum)))
    return torch.stack(terms).mean()


@dataclass
class PretrainState:
    metrics: list[dict] = field(default_factory=list)


def _mask_seed(base_seed: int, step: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, step, index]).generate_state(1)[0])


def pretrain_loop(
    model: MovieEncoder,
    movies: list[TokenizedMovie],
    posters: dict[str, np.ndarray] | None,
    cfg: PretrainConfig,
    metrics_path=None,
    checkpoint_fn=None,
) -> list[dict]:
    """Joint MLM + VG optimization; returns the per-step metrics rows.

    Movies without posters (or with no keyword slots) contribute only to the
    MLM objective. Both objective batches share each optimizer step. A
    non-finite loss aborts with the offending batch ids.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    warmup = max(1, math.ceil(cfg.steps * cfg.warmup_frac))

    posters = posters or {}
    vg_eligible = [
        m for m in movies
        if m.movie_id in posters and len(m.active_cluster_slots()) > 0
        and posters[m.movie_id].shape[0] > 0
    ]
    vg_active = cfg.vg_weight > 0 and len(vg_eligible) >= 2
    if cfg.vg_weight > 0 and not vg_active:
        logger.warning("VG objective disabled: fewer than 2 movies with posters and keywords")

    metrics: list[dict] = []
    writer = None
    fh = None
    if metrics_path is not None:
        fh = open(metrics_path, "w", encoding="utf-8", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss_total", "loss_mlm", "loss_vg", "lr"])

    model.train()
    try:
        for step in range(cfg.steps):
            lr = cfg.lr * min(1.0, (step + 1) / warmup)
            for g in opt.param_groups:
                g["lr"] = lr
            opt.zero_grad()

            total = torch.zeros(())
            loss_mlm_val = 0.0
            loss_vg_val = 0.0
            batch_ids: list[str] = []

            if cfg.mlm_weight > 0:
                idx = rng.choice(len(movies), size=min(cfg.batch_mlm, len(movies)), replace=False)
                masked_movies, plans = [], []
                for k, i in enumerate(idx):
                    masked, plan = apply_mask(movies[i], _mask_seed(cfg.seed, step, k))
                    masked_movies.append(masked)
                    plans.append(plan)
                batch = collate(masked_movies)
                batch_ids += batch["movie_ids"]
                out = model(batch)
                l_mlm = mlm_loss(out.per_slot, plans, model)
                loss_mlm_val = float(l_mlm.detach())
                total = total + cfg.mlm_weight * l_mlm

            if vg_active:
                vidx = rng.choice(
                    len(vg_eligible), size=min(cfg.batch_vg, len(vg_eligible)), replace=False
                )
                vg_movies = [vg_eligible[i] for i in vidx]
                batch_ids += [m.movie_id for m in vg_movies]
                pairs = _vg_pairs(model, vg_movies, posters, cfg, rng)
                l_vg = vg_loss(pairs, n_neg=cfg.n_neg, seed=int(rng.integers(2**31)))
                loss_vg_val = float(l_vg.detach())
                total = total + cfg.vg_weight * l_vg

            if not torch.isfinite(total):
                raise NumericError(
                    f"non-finite loss at step {step}; batch movie ids: {sorted(set(batch_ids))}"
                )
            if total.requires_grad:
                total.backward()
                opt.step()

            row = {
                "step": step,
                "loss_total": float(total.detach()),
                "loss_mlm": loss_mlm_val,
                "loss_vg": loss_vg_val,
                "lr": lr,
            }
            metrics.append(row)
            if writer is not None:
                writer.writerow(
                    [step, f"{row['loss_total']:.6f}", f"{loss_mlm_val:.6f}", f"{loss_vg_val:.6f}", f"{lr:.8f}"]
                )
            if (
                checkpoint_fn is not None
                and cfg.checkpoint_interval
                and (step + 1) % cfg.checkpoint_interval == 0
            ):
                checkpoint_fn(step + 1)
    finally:
        if fh is not None:
            fh.close()
    model.eval()
    if checkpoint_fn is not None:
        checkpoint_fn(cfg.steps)
    return metrics


def _vg_pairs(model, vg_movies, posters, cfg, rng):
    """Contextual keyword sets and projected object sets for a VG batch."""
    if model.vg_proj is None:
        raise ValueError("encoder was built without a poster projection (poster_dim unset)")
    batch = collate(vg_movies)
    out = model(batch)
    pairs = []
    for i, movie in enumerate(vg_movies):
        slots = movie.active_cluster_slots()
        if len(slots) > cfg.max_keywords:
            slots = sorted(rng.choice(slots, size=cfg.max_keywords, replace=False).tolist())
        x = out.per_slot[i, slots]
        feats = posters[movie.movie_id]
        if feats.shape[0] > cfg.max_objects:
            rows = np.sort(rng.choice(feats.shape[0], size=cfg.max_objects, replace=False))
            feats = feats[rows]
        z = model.vg_proj(torch.from_numpy(np.ascontiguousarray(feats, dtype=np.float32)))
        pairs.append((x, z))
    return pairs
