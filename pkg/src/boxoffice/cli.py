"""Command-line surface: one subcommand per pipeline stage.

Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure. Every
command that writes artifacts echoes its effective configuration into the
output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustering, pipeline, pobj, records, retrieval
from .synth import SyntheticSpec, generate as synth_generate
from .encoder import Checkpoint, EncoderConfig, load_checkpoint, save_checkpoint
from .errors import DataError, NumericError
from .features import LayoutConfig, NumeralEmbedderConfig
from .finetune import FinetuneConfig, evaluate, predict
from .pretrain import PretrainConfig

logger = logging.getLogger(__name__)


@dataclass
class ClusteringConfig:
    n_clusters: int = 1414
    cooc_dims: int = 50
    min_df: int = 2


@dataclass
class SplitConfig:
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0


@dataclass
class VocabConfig:
    min_company_count: int = 10


@dataclass
class RunConfig:
    """Nested configuration; defaults follow the published hyperparameters."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    numeral: NumeralEmbedderConfig | None = None
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    vocab: VocabConfig = field(default_factory=VocabConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    _SECTION_TYPES = {
        "encoder": EncoderConfig,
        "numeral": NumeralEmbedderConfig,
        "layout": LayoutConfig,
        "pretrain": PretrainConfig,
        "finetune": FinetuneConfig,
        "clustering": ClusteringConfig,
        "split": SplitConfig,
        "vocab": VocabConfig,
        "synth": SyntheticSpec,
    }

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        cfg = cls()
        if path is None:
            return cfg
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataError("config root must be a JSON object")
        for section, value in obj.items():
            sect_type = cls._SECTION_TYPES.get(section)
            if sect_type is None:
                raise DataError(f"unknown config section: {section!r}")
            if not isinstance(value, dict):
                raise DataError(f"config section {section!r} must be an object")
            known = {f.name for f in dataclasses.fields(sect_type)}
            unknown = set(value) - known
            if unknown:
                raise DataError(
                    f"unknown keys in config section {section!r}: {sorted(unknown)}"
                )
            coerced = {
                k: tuple(v) if isinstance(v, list) else v for k, v in value.items()
            }
            setattr(cfg, section, sect_type(**coerced))
        return cfg

    def to_json_dict(self) -> dict:
        out = {}
        for section, sect_type in self._SECTION_TYPES.items():
            value = getattr(self, section)
            if value is None:
                continue
            d = dataclasses.asdict(value)
            out[section] = {
                k: list(v) if isinstance(v, tuple) else v for k, v in d.items()
            }
        return out


def _echo_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_json_dict(), fh, indent=1, sort_keys=True)


def _replace(cfg_obj, **updates):
    updates = {k: v for k, v in updates.items() if v is not None}
    return dataclasses.replace(cfg_obj, **updates) if updates else cfg_obj


def _load_split(args, cfg: RunConfig, recs, out_dir: Path | None):
    """Read --split if given, else compute (and persist) a stratified split."""
    if getattr(args, "split", None):
        return records.read_split_csv(args.split)
    assignments = records.stratified_split(recs, cfg.split.ratios, cfg.split.seed)
    if out_dir is not None:
        records.write_split_csv(assignments, out_dir / "split.csv")
    return assignments


def _read_corpus(path):
    recs, errors = records.parse_corpus(path)
    for lineno, msg in errors:
        logger.warning("corpus line %d rejected: %s", lineno, msg)
    if not recs:
        raise DataError(f"corpus {path} contains no valid records")
    return recs


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg.synth = _replace(
        cfg.synth,
        n_movies=args.n_movies,
        n_keywords=args.n_keywords,
        n_clusters_true=args.n_clusters_true,
        n_people=args.n_people,
        poster_object_dim=args.poster_object_dim,
        seed=args.seed,
        poster_rate=args.poster_rate,
        pretrain_only_rate=args.pretrain_only_rate,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    world = synth_generate(cfg.synth)
    records.write_corpus(world.records, out_dir / "corpus.jsonl")
    pobj.write_pobj(world.posters, out_dir / "posters.pobj")
    clustering.write_word_vectors(world.lexical_vectors, out_dir / "vectors.txt")
    with open(out_dir / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(world.truth, fh, indent=1, sort_keys=True)
    _echo_config(cfg, out_dir)
    print(f"wrote {len(world.records)} movies, {len(world.posters)} posters to {out_dir}")
    return 0


def cmd_ingest(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg.split = _replace(cfg.split, seed=args.seed, ratios=tuple(args.ratios) if args.ratios else None)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs, errors = records.parse_corpus(args.corpus)
    with open(out_dir / "errors.csv", "w", encoding="utf-8") as fh:
        fh.write("line,error\n")
        for lineno, msg in errors:
            fh.write(f"{lineno},{json.dumps(msg)}\n")
    if not recs:
        raise DataError(f"corpus {args.corpus} contains no valid records")
    records.write_corpus(recs, out_dir / "records.jsonl")
    assignments = records.stratified_split(recs, cfg.split.ratios, cfg.split.seed)
    records.write_split_csv(assignments, out_dir / "split.csv")
    _echo_config(cfg, out_dir)
    unusable = sum(1 for r in recs if not r.usable_for_finetune)
    print(
        f"parsed {len(recs)} records ({len(errors)} rejected lines, "
        f"{unusable} pretrain-only); split written to {out_dir / 'split.csv'}"
    )
    return 0


def cmd_cluster(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg.clustering = _replace(
        cfg.clustering, n_clusters=args.n_clusters, cooc_dims=args.cooc_dims, min_df=args.min_df
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs = _read_corpus(args.corpus)
    if args.split:
        split_map = pipeline.split_map_of(records.read_split_csv(args.split))
        recs = [r for r in recs if split_map.get(r.movie_id) == "train"]
    vectors = clustering.read_word_vectors(args.vectors)
    cmap = clustering.build_cluster_map(
        [(r.movie_id, r.keywords) for r in recs],
        vectors,
        n_clusters=cfg.clustering.n_clusters,
        cooc_dims=cfg.clustering.cooc_dims,
        min_df=cfg.clustering.min_df,
    )
    cmap.save(out_dir / "cluster_map.json")
    _echo_config(cfg, out_dir)
    print(f"clustered {cmap.n_keywords} keywords into {len(cmap)} clusters")
    return 0


def cmd_pretrain(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg.pretrain = _replace(
        cfg.pretrain,
        steps=args.steps,
        seed=args.seed,
        mlm_weight=args.mlm_weight,
        vg_weight=args.vg_weight,
        batch_mlm=args.batch_mlm,
        batch_vg=args.batch_vg,
        lr=args.lr,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs = _read_corpus(args.corpus)
    assignments = _load_split(args, cfg, recs, out_dir)
    cmap = clustering.KeywordClusterMap.load(args.cluster_map) if args.cluster_map else None

    posters = pobj.read_pobj(args.posters) if args.posters else None
    poster_dim = posters[0].dim if posters else None

    prepared = pipeline.prepare(
        recs, pipeline.split_map_of(assignments), cmap,
        layout_cfg=cfg.layout, min_company_count=cfg.vocab.min_company_count,
    )
    imported = clustering.read_word_vectors(args.init_embeddings) if args.init_embeddings else None
    model = pipeline.build_encoder(
        prepared, cfg.encoder, cfg.numeral, poster_dim,
        imported=imported, seed=cfg.encoder.seed,
    )

    def checkpoint_fn(step):
        save_checkpoint(
            pipeline.make_checkpoint(prepared, model, extra={"pretrain_step": step}),
            out_dir / "checkpoint.ckpt",
        )

    pipeline.run_pretrain(
        prepared, posters, model, cfg.pretrain,
        metrics_path=out_dir / "metrics.csv", checkpoint_fn=checkpoint_fn,
    )
    _echo_config(cfg, out_dir)
    print(f"pretrained {cfg.pretrain.steps} steps; checkpoint at {out_dir / 'checkpoint.ckpt'}")
    return 0


def cmd_finetune(args) -> int:
    cfg = RunConfig.load(args.config)
    lr_grid = tuple(args.lr_grid) if args.lr_grid else None
    batch_grid = tuple(args.batch_grid) if args.batch_grid else None
    cfg.finetune = _replace(
        cfg.finetune,
        epochs=args.epochs,
        seed=args.seed,
        max_steps=args.max_steps,
        lr_grid=lr_grid,
        batch_grid=batch_grid,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs = _read_corpus(args.corpus)
    assignments = _load_split(args, cfg, recs, out_dir)
    ckpt = load_checkpoint(args.checkpoint)
    prepared = pipeline.retokenize_with_checkpoint(recs, pipeline.split_map_of(assignments), ckpt)
    best_model, report = pipeline.run_finetune(prepared, ckpt.model, cfg.finetune)
    save_checkpoint(
        pipeline.make_checkpoint(prepared, best_model, extra={"finetuned": True}),
        out_dir / "best.ckpt",
    )
    with open(out_dir / "grid_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    _echo_config(cfg, out_dir)
    selected = next(e for e in report if e["selected"])
    print(
        f"best cell lr={selected['lr']} batch={selected['batch']} "
        f"val_huber={selected['val_huber']}"
    )
    return 0


def _tokenized_subset(args, recs, ckpt: Checkpoint, which: str | None):
    if getattr(args, "split", None):
        assignments = records.read_split_csv(args.split)
        split_map = pipeline.split_map_of(assignments)
    else:
        split_map = {r.movie_id: "test" for r in recs}
        which = "test"
    prepared = pipeline.retokenize_with_checkpoint(recs, split_map, ckpt)
    if which:
        return prepared.finetunable(which) if args.require_target else prepared.tokenized[which]
    return prepared.all_movies()


def cmd_evaluate(args) -> int:
    cfg = RunConfig.load(args.config)
    out_dir = Path(args.out_dir) if args.out_dir else None
    recs = _read_corpus(args.corpus)
    ckpt = load_checkpoint(args.checkpoint)
    args.require_target = True
    movies = _tokenized_subset(args, recs, ckpt, args.which)
    mean_huber, rows = evaluate(ckpt.model, movies)
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "residuals.csv", "w", encoding="utf-8") as fh:
            fh.write("movie_id,target,prediction,residual,huber\n")
            for r in rows:
                fh.write(
                    f"{r['movie_id']},{r['target']:.6f},{r['prediction']:.6f},"
                    f"{r['residual']:.6f},{r['huber']:.6f}\n"
                )
        _echo_config(cfg, out_dir)
    print(f"{mean_huber:.6g}")
    return 0


def cmd_predict(args) -> int:
    recs = _read_corpus(args.corpus)
    ckpt = load_checkpoint(args.checkpoint)
    args.require_target = False
    movies = _tokenized_subset(args, recs, ckpt, args.which)
    preds = predict(ckpt, movies)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("movie_id,y_hat_log10,y_hat_usd\n")
        for p in preds:
            fh.write(f"{p.movie_id},{p.y_hat:.6f},{p.y_hat_usd:.2f}\n")
    print(f"wrote {len(preds)} predictions to {out}")
    return 0


def cmd_retrieve(args) -> int:
    recs = _read_corpus(args.corpus)
    ckpt = load_checkpoint(args.checkpoint)
    posters = pobj.read_pobj(args.posters)
    index = retrieval.build_index(ckpt, posters)
    split_map = {r.movie_id: "test" for r in recs}
    prepared = pipeline.retokenize_with_checkpoint(recs, split_map, ckpt)
    by_id = {m.movie_id: m for m in prepared.tokenized["test"]}
    movie = by_id.get(args.movie_id)
    if movie is None:
        raise DataError(f"movie {args.movie_id!r} not found in corpus")
    keyword = args.keyword
    if ckpt.cluster_map is not None:
        rep = ckpt.cluster_map.representative_of(keyword)
        if rep is not None:
            keyword = rep
    ranked = retrieval.query(index, movie, keyword, ckpt, top_k=args.top_k)
    report = [
        {"rank": i + 1, "movie_id": mid, "score": score}
        for i, (mid, score) in enumerate(ranked)
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
    print(f"wrote top-{len(report)} retrieval report to {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxoffice",
        description="Box-office prediction: pretraining, finetuning, retrieval.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration", default=None)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-movies", type=int, default=None)
    p.add_argument("--n-keywords", type=int, default=None)
    p.add_argument("--n-clusters-true", type=int, default=None)
    p.add_argument("--n-people", type=int, default=None)
    p.add_argument("--poster-object-dim", type=int, default=None)
    p.add_argument("--poster-rate", type=float, default=None)
    p.add_argument("--pretrain-only-rate", type=float, default=None)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("ingest", help="parse + validate a corpus and write a stratified split")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=None)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("cluster", help="build the keyword cluster map")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True, help="lexical word-vector file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default=None, help="restrict to the train split")
    p.add_argument("--n-clusters", type=int, default=None)
    p.add_argument("--cooc-dims", type=int, default=None)
    p.add_argument("--min-df", type=int, default=None)
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("pretrain", help="masked-field + visual-grounding pretraining")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--cluster-map", default=None)
    p.add_argument("--posters", default=None)
    p.add_argument("--init-embeddings", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--mlm-weight", type=float, default=None)
    p.add_argument("--vg-weight", type=float, default=None)
    p.add_argument("--batch-mlm", type=int, default=None)
    p.add_argument("--batch-vg", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(handler=cmd_pretrain)

    p = sub.add_parser("finetune", help="Huber-loss regression finetuning with grid search")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--lr-grid", type=float, nargs="+", default=None)
    p.add_argument("--batch-grid", type=int, nargs="+", default=None)
    p.set_defaults(handler=cmd_finetune)

    p = sub.add_parser("evaluate", help="mean Huber loss of a checkpoint on a split")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--which", choices=("train", "valid", "test"), default="test")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("predict", help="write predictions CSV for a corpus")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--which", choices=("train", "valid", "test"), default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("retrieve", help="rank posters for a keyword in a movie's context")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--posters", required=True)
    p.add_argument("--movie-id", required=True)
    p.add_argument("--keyword", required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_retrieve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
