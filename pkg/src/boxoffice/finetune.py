"""Stage-2 regression on log10 revenue: frozen embeddings, Huber loss,

grid-searched learning rate / batch size, evaluation and prediction.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from .encoder import Checkpoint, MovieEncoder, collate
from .errors import DataError, NumericError
from .features import TokenizedMovie

logger = logging.getLogger(__name__)


@dataclass
class FinetuneConfig:
    lr_grid: tuple[float, ...] = (1e-3, 3e-4, 1e-4)
    batch_grid: tuple[int, ...] = (328, 512, 1024)
    epochs: int = 50
    patience: int = 5
    weight_decay: float = 1e-4
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if not self.lr_grid or not self.batch_grid:
            raise ValueError("lr and batch grids must be nonempty")


@dataclass(frozen=True)
class Prediction:
    movie_id: str
    y_hat: float  # log10 USD
    y_hat_usd: float


def huber_tensor(residual: torch.Tensor) -> torch.Tensor:
    """Elementwise smooth-L1: 0.5 r^2 inside the unit interval, |r| - 0.5 out."""
    a = residual.abs()
    return torch.where(a < 1.0, 0.5 * residual * residual, a - 0.5)


def huber(y: float, y_hat: float) -> float:
    if not (math.isfinite(y) and math.isfinite(y_hat)):
        raise ValueError("huber: non-finite input")
    return float(huber_tensor(torch.tensor(y - y_hat, dtype=torch.float64)))


def _frozen_blobs(model: MovieEncoder) -> dict[str, bytes]:
    return {
        name: model.state_dict()[name].numpy().astype("<f4").tobytes()
        for name in ("token_emb.weight", "pos_emb.weight")
    }


def _train_cell(
    model: MovieEncoder,
    train: list[TokenizedMovie],
    valid: list[TokenizedMovie] | None,
    lr: float,
    batch_size: int,
    cfg: FinetuneConfig,
    cell_index: int,
) -> tuple[MovieEncoder, float, int]:
    """Train one grid cell; returns (model at best-validation state, best val

    Huber, steps run). Token and position embeddings stay frozen.
    """
    torch.manual_seed(cfg.seed * 1000 + cell_index)
    model.head.reset_parameters()
    model.token_emb.weight.requires_grad_(False)
    model.pos_emb.weight.requires_grad_(False)
    trainable = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(trainable, lr=lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, cell_index])

    best_val = math.inf
    best_state = None
    patience_left = cfg.patience
    steps = 0
    done = False
    for _ in range(cfg.epochs):
        model.train()
        perm = rng.permutation(len(train))
        for lo in range(0, len(train), batch_size):
            idx = perm[lo : lo + batch_size]
            batch = collate([train[i] for i in idx])
            pred = model.predict_log_revenue(batch)
            loss = huber_tensor(pred - batch["targets"]).mean()
            if not torch.isfinite(loss):
                raise NumericError(f"non-finite finetune loss at step {steps}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                done = True
                break
        if valid:
            val, _ = evaluate(model, valid)
            if val < best_val - 1e-12:
                best_val = val
                best_state = copy.deepcopy(model.state_dict())
                patience_left = cfg.patience
            else:
                patience_left -= 1
                if patience_left <= 0:
                    done = True
        if done:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    elif valid:
        best_val, _ = evaluate(model, valid)
    model.eval()
    return model, best_val, steps


def finetune(
    base: MovieEncoder,
    splits: dict[str, list[TokenizedMovie]],
    cfg: FinetuneConfig,
) -> tuple[MovieEncoder, list[dict]]:
    """Grid-search finetuning from a pretrained (or random) encoder.

    Returns the model from the grid cell with the lowest validation Huber
    plus the full grid report. The starting encoder is never mutated.
    """
    train = splits.get("train") or []
    if not train:
        raise DataError("finetune: empty train split")
    if any(m.target_log_revenue is None for m in train):
        raise DataError("finetune: train split contains movies without a revenue target")
    valid = splits.get("valid") or None
    test = splits.get("test") or None

    before = _frozen_blobs(base)
    report: list[dict] = []
    best: tuple[float, int, MovieEncoder] | None = None
    cell_index = 0
    for lr in cfg.lr_grid:
        for batch_size in cfg.batch_grid:
            model = copy.deepcopy(base)
            model, val_huber, steps = _train_cell(
                model, train, valid, lr, batch_size, cfg, cell_index
            )
            entry = {
                "lr": lr,
                "batch": batch_size,
                "val_huber": val_huber if valid else None,
                "steps": steps,
            }
            if test:
                entry["test_huber"] = evaluate(model, test)[0]
            report.append(entry)
            key = val_huber if valid else entry.get("test_huber") or 0.0
            if best is None or key < best[0]:
                best = (key, cell_index, model)
            cell_index += 1

    assert best is not None
    best_model = best[2]
    after = _frozen_blobs(best_model)
    if before != after:
        raise NumericError("finetune: frozen embedding tables changed")
    for i, entry in enumerate(report):
        entry["selected"] = i == best[1]
    return best_model, report


def evaluate(model: MovieEncoder, movies: list[TokenizedMovie], batch_size: int = 512):
    """Mean Huber loss over a split plus per-movie residual rows."""
    if not movies:
        raise DataError("evaluate: empty split")
    if any(m.target_log_revenue is None for m in movies):
        raise DataError("evaluate: split contains movies without a revenue target")
    model.eval()
    rows = []
    total = 0.0
    with torch.no_grad():
        for lo in range(0, len(movies), batch_size):
            chunk = movies[lo : lo + batch_size]
            batch = collate(chunk)
            pred = model.predict_log_revenue(batch)
            h = huber_tensor(pred - batch["targets"])
            total += float(h.sum())
            for m, p, hv in zip(chunk, pred.tolist(), h.tolist()):
                rows.append(
                    {
                        "movie_id": m.movie_id,
                        "target": m.target_log_revenue,
                        "prediction": p,
                        "residual": p - m.target_log_revenue,
                        "huber": hv,
                    }
                )
    return total / len(movies), rows


def predict(ckpt: Checkpoint, movies: list[TokenizedMovie], batch_size: int = 512) -> list[Prediction]:
    """Deterministic (eval-mode) predictions for tokenized movies."""
    fingerprint = ckpt.vocab.fingerprint()
    for m in movies:
        if m.vocab_hash != fingerprint:
            raise DataError(
                f"movie {m.movie_id!r} tokenized with a different vocabulary "
                f"({m.vocab_hash} != {fingerprint})"
            )
    model = ckpt.model
    model.eval()
    out: list[Prediction] = []
    with torch.no_grad():
        for lo in range(0, len(movies), batch_size):
            chunk = movies[lo : lo + batch_size]
            pred = model.predict_log_revenue(collate(chunk))
            for m, p in zip(chunk, pred.tolist()):
                out.append(Prediction(m.movie_id, p, float(10.0**p)))
    return out
