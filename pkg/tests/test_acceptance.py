"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
lines as they complete. The heavyweight synthetic-pretraining experiment
(criteria 6 and 7) is computed once and shared.
"""

import json
import math
import statistics
import time

import numpy as np
import pytest
import torch

from boxoffice.cli import main as cli_main
from boxoffice.clustering import KeywordClusterMap, Cluster, agglomerate, build_cluster_map
from boxoffice.encoder import EncoderConfig, MovieEncoder, collate, load_checkpoint, read_param_blob, save_checkpoint
from boxoffice.features import (
    MASKABLE_GROUPS,
    NumeralEmbedderConfig,
    numeral_embed,
)
from boxoffice.finetune import FinetuneConfig, evaluate, finetune, huber
from boxoffice.pipeline import (
    Prepared,
    build_encoder,
    make_checkpoint,
    prepare,
    run_finetune,
    run_pretrain,
    split_map_of,
)
from boxoffice.pretrain import PretrainConfig, apply_mask, mlm_loss, set_similarity, vg_loss
from boxoffice.records import stratified_split
from boxoffice.retrieval import build_index, query
from boxoffice.synth import SyntheticSpec, generate

from .clone_records import strip_groups
from .oracles import upgma_oracle


def report(criterion: str, ok: bool, detail: str, elapsed: float):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail} ({elapsed:.1f}s)"
    print(flush=True)
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. Formula suite: Eq. 1 / Eq. 2 / Eq. 4 against float64 scalar oracles


def test_c01_formula_suite():
    t0 = time.time()
    TOL = 1e-6

    # Eq. 1: prototype numeral embedding
    cfg = NumeralEmbedderConfig(dim=5, interval=(-10, 10), sigma_sq=1.0)
    got = numeral_embed(0.0, cfg)
    oracle = [math.exp(-abs(0.0 - q) / 1.0) for q in (-10.0, -5.0, 0.0, 5.0, 10.0)]
    assert max(abs(a - b) for a, b in zip(got, oracle)) < TOL
    assert got[2] == 1.0
    cfg2 = NumeralEmbedderConfig(dim=3, interval=(0, 2), sigma_sq=2.0)
    got2 = numeral_embed(0.5, cfg2)
    oracle2 = [math.exp(-abs(0.5 - q) / 2.0) for q in (0.0, 1.0, 2.0)]
    assert max(abs(a - b) for a, b in zip(got2, oracle2)) < TOL
    for i, q in enumerate(NumeralEmbedderConfig(dim=7, interval=(-3, 3), sigma_sq=0.7).prototypes()):
        ne = numeral_embed(float(q), NumeralEmbedderConfig(dim=7, interval=(-3, 3), sigma_sq=0.7))
        assert abs(ne[i] - 1.0) < TOL and ne.max() == ne[i]

    # Eq. 2: summed exp-cosine set similarity
    u = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
    v = torch.tensor([[0.0, 1.0, 0.0]], dtype=torch.float64)
    assert abs(float(set_similarity(u, u)) - math.e) < TOL
    assert abs(float(set_similarity(u, v)) - 1.0) < TOL
    rng = np.random.default_rng(1)
    x = torch.tensor(rng.normal(size=(3, 6)), dtype=torch.float64)
    z = torch.tensor(rng.normal(size=(4, 6)), dtype=torch.float64)
    brute = 0.0
    for i in range(3):
        for j in range(4):
            xv, zv = x[i].numpy(), z[j].numpy()
            brute += math.exp(float(xv @ zv) / (np.linalg.norm(xv) * np.linalg.norm(zv)))
    assert abs(float(set_similarity(x, z)) - brute) < TOL
    k, m = 3, 4
    assert k * m / math.e - TOL <= brute <= k * m * math.e + TOL

    # Eq. 4: Huber
    assert huber(5.0, 5.0) == 0.0
    assert abs(huber(5.0, 4.5) - 0.125) < TOL
    assert abs(huber(5.0, 3.0) - 1.5) < TOL
    for r in np.linspace(-3, 3, 61):
        oracle_h = 0.5 * r * r if abs(r) < 1 else abs(r) - 0.5
        assert abs(huber(float(r), 0.0) - oracle_h) < TOL

    elapsed = time.time() - t0
    report("1 (formula suite)", elapsed < 5.0, "Eq.1/Eq.2/Eq.4 match float64 oracles at 1e-6", elapsed)


# ---------------------------------------------------------------------------
# 2. Eq. 3 gradient check


def test_c02_vg_loss_gradient_check():
    t0 = time.time()
    torch.manual_seed(3)
    K, M, B, D = 2, 2, 3, 10
    xs = [torch.randn(K, D, dtype=torch.float64, requires_grad=True) for _ in range(B)]
    zs = [torch.randn(M, D, dtype=torch.float64, requires_grad=True) for _ in range(B)]

    def loss_fn():
        return vg_loss([(xs[i], zs[i]) for i in range(B)])

    loss = loss_fn()
    grads = torch.autograd.grad(loss, xs + zs)

    eps = 1e-6
    checked = 0
    worst = 0.0
    for tensor, grad in zip(xs + zs, grads):
        flat = tensor.data.view(-1)
        gflat = grad.view(-1)
        for k in range(flat.numel()):
            orig = float(flat[k])
            flat[k] = orig + eps
            hi = float(loss_fn().detach())
            flat[k] = orig - eps
            lo = float(loss_fn().detach())
            flat[k] = orig
            fd = (hi - lo) / (2 * eps)
            rel = abs(float(gflat[k]) - fd) / max(abs(float(gflat[k])), abs(fd), 1e-8)
            worst = max(worst, rel)
            checked += 1
    elapsed = time.time() - t0
    ok = checked >= 100 and worst <= 1e-3 and elapsed < 30.0
    report(
        "2 (Eq. 3 gradients)", ok,
        f"{checked} coordinates, worst relative error {worst:.2e}", elapsed,
    )


# ---------------------------------------------------------------------------
# 3. Masking invariants over 1,000 random synthetic movies


def test_c03_masking_invariants():
    t0 = time.time()
    world = generate(
        SyntheticSpec(
            n_movies=1000, n_keywords=60, n_clusters_true=12, n_topics=4,
            n_people=60, poster_object_dim=8, lexical_dim=8, seed=21,
        )
    )
    records = strip_groups(world.records, seed=22)
    kws = sorted({kw for r in records for kw in r.keywords})
    cmap = KeywordClusterMap([Cluster(i, kw, [kw]) for i, kw in enumerate(kws)])
    smap = {r.movie_id: "train" for r in records}
    prepared = prepare(records, smap, cmap)

    violations = 0
    empty_movies = []
    for i, tm in enumerate(prepared.tokenized["train"]):
        masked, plan = apply_mask(tm, seed=1000 + i)
        diff = np.flatnonzero(masked.token_ids != tm.token_ids)
        planned = sorted(plan.masked_slots.values())
        if sorted(diff.tolist()) != planned:
            violations += 1
            continue
        if masked.numeral_values.tobytes() != tm.numeral_values.tobytes():
            violations += 1
            continue
        for group in MASKABLE_GROUPS:
            active = [s for s in tm.layout.maskable_slots[group] if tm.attention_mask[s]]
            n_masks = sum(
                1 for s in tm.layout.maskable_slots[group] if masked.token_ids[s] == 1
            )
            expected = 1 if active else 0
            if n_masks != expected:
                violations += 1
                break
        if not plan.masked_slots:
            empty_movies.append((masked, plan))

    assert len(prepared.tokenized["train"]) == 1000
    # movies with no maskable tokens contribute exactly 0 to the MLM loss
    assert empty_movies, "fixture must include empty-group movies"
    cfg = EncoderConfig(n_layers=1, d_model=8, d_ff=8, n_heads=2,
                        max_slots=prepared.layout.n_slots, seed=0)
    model = MovieEncoder(cfg, prepared.vocab.size, NumeralEmbedderConfig(dim=8))
    batch = collate([m for m, _ in empty_movies[:8]])
    out = model(batch)
    zero_loss = float(mlm_loss(out.per_slot, [p for _, p in empty_movies[:8]], model).detach())

    elapsed = time.time() - t0
    ok = violations == 0 and zero_loss == 0.0 and elapsed < 10.0
    report(
        "3 (masking invariants)", ok,
        f"1000 movies, {violations} violations, {len(empty_movies)} empty-group movies at L_CE=0",
        elapsed,
    )


# ---------------------------------------------------------------------------
# 4. Clustering oracle


def test_c04_clustering_oracle():
    t0 = time.time()
    from boxoffice.clustering import upgma_merge_sequence

    mismatches = 0
    for seed, n, k in [(0, 6, 2), (1, 8, 3), (2, 10, 4), (3, 10, 1), (4, 9, 5), (5, 10, 2)]:
        rng = np.random.default_rng(seed)
        vectors = rng.normal(size=(n, 5))
        merges, final = upgma_merge_sequence(vectors, k)
        o_merges, o_final = upgma_oracle(vectors, k)
        if [(i, j) for i, j, _ in merges] != [(i, j) for i, j, _ in o_merges] or final != o_final:
            mismatches += 1

    # planted-synonym fixture: 20 groups x 5 near-synonyms
    from boxoffice.clustering import KeywordEmbedding

    rng = np.random.default_rng(12)
    embs = []
    for g in range(20):
        e = np.zeros(20)
        e[g] = 1.0
        for mbr in range(5):
            v = e + 0.03 * rng.normal(size=20)
            embs.append(KeywordEmbedding(f"g{g:02d}s{mbr}", v / np.linalg.norm(v), np.zeros(0)))
    cmap = agglomerate(embs, n_clusters=20)
    recovered = {frozenset(c.members) for c in cmap.clusters}
    expected = {frozenset(f"g{g:02d}s{mbr}" for mbr in range(5)) for g in range(20)}
    n_recovered = len(recovered & expected)

    elapsed = time.time() - t0
    ok = mismatches == 0 and n_recovered == 20 and elapsed < 10.0
    report(
        "4 (clustering oracle)", ok,
        f"merge sequences exact on 6 fixtures; {n_recovered}/20 synonym groups recovered",
        elapsed,
    )


# ---------------------------------------------------------------------------
# 5. Overfit check


def test_c05_overfit():
    t0 = time.time()
    spec = SyntheticSpec(
        n_movies=64, n_keywords=40, n_clusters_true=8, n_topics=4,
        n_people=24, poster_object_dim=16, lexical_dim=16, seed=0,
    )
    world = generate(spec)
    smap = {r.movie_id: "train" for r in world.records}
    prepared = prepare(world.records, smap, None)
    enc = EncoderConfig(
        n_layers=2, d_model=32, d_ff=64, n_heads=2,
        max_slots=prepared.layout.n_slots, dropout=0.0, seed=0,
    )
    model = build_encoder(prepared, enc, NumeralEmbedderConfig(dim=32), seed=0)
    train = prepared.finetunable("train")
    cfg = FinetuneConfig(
        lr_grid=(1e-3,), batch_grid=(64,), epochs=10**9,
        seed=0, max_steps=1000, patience=10**9,
    )
    best, rep = finetune(model, {"train": train}, cfg)
    loss, _ = evaluate(best, train)
    elapsed = time.time() - t0
    ok = loss < 0.02 and rep[0]["steps"] <= 2000 and elapsed < 60.0
    report(
        "5 (overfit)", ok,
        f"train Huber {loss:.5f} after {rep[0]['steps']} steps on 64 movies", elapsed,
    )


# ---------------------------------------------------------------------------
# Shared synthetic pretraining experiment (criteria 6 and 7)

SEEDS = (0, 1, 2)
EXP_SPEC = dict(
    n_movies=512, n_topics=8, n_clusters_true=64, n_keywords=192, poster_noise=0.1,
)
PRETRAIN_STEPS = 450


def _experiment_seed(seed: int) -> dict:
    """One seed of the pretraining-benefit experiment; returns results and

    per-stage wall-clock times.
    """
    times = {}
    t = time.time()
    spec = SyntheticSpec(seed=seed, **EXP_SPEC)
    world = generate(spec)
    assignments = stratified_split(world.records, (0.7, 0.1, 0.2), seed=seed)
    smap = split_map_of(assignments)
    train = [r for r in world.records if smap[r.movie_id] == "train"]
    cmap = build_cluster_map(
        [(r.movie_id, r.keywords) for r in train], world.lexical_vectors,
        n_clusters=spec.n_clusters_true,
    )
    prepared = prepare(world.records, smap, cmap)
    enc = EncoderConfig(
        n_layers=2, d_model=64, d_ff=64, n_heads=4,
        max_slots=prepared.layout.n_slots, dropout=0.0, seed=seed,
    )
    ncfg = NumeralEmbedderConfig(dim=64)
    times["prep"] = time.time() - t

    def fresh():
        return build_encoder(prepared, enc, ncfg, poster_dim=spec.poster_object_dim, seed=seed)

    t = time.time()
    vg_model = fresh()
    run_pretrain(
        prepared, world.posters, vg_model,
        PretrainConfig(steps=PRETRAIN_STEPS, batch_mlm=64, batch_vg=96, seed=seed),
    )
    times["pretrain_vg"] = time.time() - t

    # retrieval recall@1 among 100 candidate posters
    t = time.time()
    ckpt = make_checkpoint(prepared, vg_model)
    poster_map = {p.movie_id: p for p in world.posters}
    candidates = [
        m for m in prepared.tokenized["test"]
        if m.movie_id in poster_map and m.active_cluster_slots()
    ][:100]
    index = build_index(ckpt, [poster_map[m.movie_id] for m in candidates])
    rng = np.random.default_rng(seed)
    hits = 0
    for m in candidates:
        slots = m.active_cluster_slots()
        token = int(m.token_ids[slots[rng.integers(len(slots))]])
        hits += query(index, m, token, ckpt, top_k=1)[0][0] == m.movie_id
    recall = hits / len(candidates)
    times["retrieval"] = time.time() - t

    t = time.time()
    mlm_model = fresh()
    run_pretrain(
        prepared, world.posters, mlm_model,
        PretrainConfig(steps=PRETRAIN_STEPS, batch_mlm=64, batch_vg=96, seed=seed, vg_weight=0.0),
    )
    times["pretrain_mlm"] = time.time() - t

    t = time.time()
    fcfg = FinetuneConfig(lr_grid=(1e-3,), batch_grid=(64,), epochs=12, patience=5, seed=seed)
    test = [m for m in prepared.tokenized["test"] if m.target_log_revenue is not None]
    hubers = {}
    for arm, model in (("mlm_vg", vg_model), ("mlm", mlm_model), ("random", fresh())):
        best, _ = run_finetune(prepared, model, fcfg)
        hubers[arm] = evaluate(best, test)[0]
    times["finetune"] = time.time() - t

    print(
        f"  [experiment seed {seed}] recall@1={recall:.3f} "
        + " ".join(f"{k}={v:.4f}" for k, v in hubers.items()),
        flush=True,
    )
    return {"recall": recall, "huber": hubers, "times": times, "n_candidates": len(candidates)}


@pytest.fixture(scope="session")
def experiment():
    print("\nrunning 3-seed synthetic pretraining experiment (several minutes)", flush=True)
    return [_experiment_seed(seed) for seed in SEEDS]


def test_c06_vg_retrieval_lift(experiment):
    recalls = [r["recall"] for r in experiment]
    med = statistics.median(recalls)
    elapsed = sum(r["times"]["prep"] + r["times"]["pretrain_vg"] + r["times"]["retrieval"]
                  for r in experiment)
    ok = med >= 0.10 and all(r["n_candidates"] == 100 for r in experiment) and elapsed < 600
    report(
        "6 (VG retrieval lift)", ok,
        f"recall@1 per seed {[round(r, 3) for r in recalls]}, median {med:.3f} vs 0.01 random",
        elapsed,
    )


def test_c07_directional_pretraining_benefit(experiment):
    med = {
        arm: statistics.median(r["huber"][arm] for r in experiment)
        for arm in ("mlm_vg", "mlm", "random")
    }
    margin = (med["random"] - med["mlm_vg"]) / med["random"]
    elapsed = sum(
        r["times"]["prep"] + r["times"]["pretrain_vg"] + r["times"]["pretrain_mlm"]
        + r["times"]["finetune"]
        for r in experiment
    )
    ok = (
        med["mlm_vg"] <= med["mlm"] <= med["random"]
        and margin >= 0.01
        and elapsed < 1200
    )
    report(
        "7 (pretraining benefit)", ok,
        f"median test Huber mlm_vg={med['mlm_vg']:.4f} <= mlm={med['mlm']:.4f} "
        f"<= random={med['random']:.4f}, extreme margin {margin * 100:.2f}%",
        elapsed,
    )


# ---------------------------------------------------------------------------
# 8. Freeze check


def test_c08_embedding_freeze(tmp_path):
    t0 = time.time()
    spec = SyntheticSpec(
        n_movies=48, n_keywords=30, n_clusters_true=6, n_topics=3,
        n_people=20, poster_object_dim=8, lexical_dim=8, seed=4,
    )
    world = generate(spec)
    assignments = stratified_split(world.records, (0.7, 0.1, 0.2), seed=4)
    prepared = prepare(world.records, split_map_of(assignments), None)
    enc = EncoderConfig(n_layers=1, d_model=16, d_ff=16, n_heads=2,
                        max_slots=prepared.layout.n_slots, seed=4)
    model = build_encoder(prepared, enc, NumeralEmbedderConfig(dim=16), seed=4)

    before_path = tmp_path / "before.ckpt"
    save_checkpoint(make_checkpoint(prepared, model), before_path)
    loaded = load_checkpoint(before_path)
    best, _ = run_finetune(
        prepared, loaded.model,
        FinetuneConfig(lr_grid=(1e-2,), batch_grid=(16,), epochs=4, seed=4),
    )
    after_path = tmp_path / "after.ckpt"
    save_checkpoint(make_checkpoint(prepared, best), after_path)

    same_tok = read_param_blob(before_path, "token_emb.weight") == read_param_blob(after_path, "token_emb.weight")
    same_pos = read_param_blob(before_path, "pos_emb.weight") == read_param_blob(after_path, "pos_emb.weight")
    changed = read_param_blob(before_path, "head.weight") != read_param_blob(after_path, "head.weight")
    elapsed = time.time() - t0
    ok = same_tok and same_pos and changed
    report(
        "8 (embedding freeze)", ok,
        "token/position blobs byte-identical across finetuning; head trained", elapsed,
    )


# ---------------------------------------------------------------------------
# 9. Split check


def test_c09_split_check():
    t0 = time.time()
    world = generate(
        SyntheticSpec(
            n_movies=1000, n_keywords=60, n_clusters_true=12, n_topics=4,
            n_people=60, poster_object_dim=8, lexical_dim=8, seed=30,
        )
    )
    assignments = stratified_split(world.records, (0.7, 0.1, 0.2), seed=30)
    smap = split_map_of(assignments)
    franchise = {r.movie_id: r.franchise for r in world.records}

    ok = True
    detail = []
    for stratum in (False, True):
        ids = [r.movie_id for r in world.records if r.franchise == stratum]
        n = len(ids)
        for split, ratio in (("train", 0.7), ("valid", 0.1), ("test", 0.2)):
            got = sum(1 for i in ids if smap[i] == split)
            if abs(got - ratio * n) > 1.0:
                ok = False
                detail.append(f"stratum {stratum} {split}: {got} vs {ratio * n:.1f}")

    corpus_frac = sum(franchise.values()) / len(franchise)
    for split in ("train", "valid", "test"):
        ids = [i for i, s in smap.items() if s == split]
        frac = sum(franchise[i] for i in ids) / len(ids)
        if abs(frac - corpus_frac) > 0.02:
            ok = False
            detail.append(f"{split} franchise fraction {frac:.3f} vs {corpus_frac:.3f}")

    elapsed = time.time() - t0
    report(
        "9 (split check)", ok,
        "70/10/20 within +-1 per stratum, franchise fraction within 2 points"
        + ("; " + "; ".join(detail) if detail else ""),
        elapsed,
    )


# ---------------------------------------------------------------------------
# 10. Reproducibility


PIPELINE_CONFIG = {
    "encoder": {"n_layers": 1, "d_model": 16, "d_ff": 16, "n_heads": 2,
                "max_slots": 70, "dropout": 0.1, "seed": 0},
    "numeral": {"dim": 16, "interval": [-10, 10], "sigma_sq": 1.0},
    "pretrain": {"steps": 6, "batch_mlm": 16, "batch_vg": 8, "seed": 0},
    "finetune": {"lr_grid": [1e-3], "batch_grid": [16], "epochs": 2, "seed": 0},
    "clustering": {"n_clusters": 6, "cooc_dims": 8, "min_df": 2},
    "synth": {"n_movies": 48, "n_keywords": 30, "n_clusters_true": 6, "n_topics": 3,
              "n_people": 20, "poster_object_dim": 12, "lexical_dim": 16, "seed": 3},
}


def _run_pipeline(root, config_path) -> dict:
    root.mkdir(parents=True, exist_ok=True)
    data = root / "data"
    assert cli_main(["synth", "--config", config_path, "--out-dir", str(data)]) == 0
    corpus = str(data / "corpus.jsonl")
    assert cli_main([
        "ingest", "--config", config_path, "--corpus", corpus, "--out-dir", str(root / "ing"),
    ]) == 0
    split = str(root / "ing" / "split.csv")
    assert cli_main([
        "cluster", "--config", config_path, "--corpus", corpus,
        "--vectors", str(data / "vectors.txt"), "--split", split,
        "--out-dir", str(root / "cl"),
    ]) == 0
    assert cli_main([
        "pretrain", "--config", config_path, "--corpus", corpus, "--split", split,
        "--cluster-map", str(root / "cl" / "cluster_map.json"),
        "--posters", str(data / "posters.pobj"), "--out-dir", str(root / "pre"),
    ]) == 0
    assert cli_main([
        "finetune", "--config", config_path, "--corpus", corpus, "--split", split,
        "--checkpoint", str(root / "pre" / "checkpoint.ckpt"), "--out-dir", str(root / "ft"),
    ]) == 0
    assert cli_main([
        "evaluate", "--config", config_path, "--corpus", corpus, "--split", split,
        "--checkpoint", str(root / "ft" / "best.ckpt"), "--which", "test",
        "--out-dir", str(root / "ev"),
    ]) == 0
    assert cli_main([
        "predict", "--corpus", corpus, "--split", split, "--which", "test",
        "--checkpoint", str(root / "ft" / "best.ckpt"), "--out", str(root / "predictions.csv"),
    ]) == 0
    return {
        "metrics": (root / "pre" / "metrics.csv").read_bytes(),
        "grid": (root / "ft" / "grid_report.json").read_bytes(),
        "residuals": (root / "ev" / "residuals.csv").read_bytes(),
        "predictions": (root / "predictions.csv").read_bytes(),
        "split": (root / "ing" / "split.csv").read_bytes(),
    }


def test_c10_reproducibility(tmp_path):
    t0 = time.time()
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(PIPELINE_CONFIG))
    a = _run_pipeline(tmp_path / "run1", str(config_path))
    b = _run_pipeline(tmp_path / "run2", str(config_path))
    mismatched = [k for k in a if a[k] != b[k]]
    elapsed = time.time() - t0
    report(
        "10 (reproducibility)", not mismatched,
        "seeded pipeline run twice: metrics, grid report, residuals, predictions identical"
        + (f"; mismatches: {mismatched}" if mismatched else ""),
        elapsed,
    )
