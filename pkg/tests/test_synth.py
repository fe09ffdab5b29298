import numpy as np

from boxoffice.records import parse_corpus, write_corpus
from boxoffice.synth import SyntheticSpec, generate


def spec(**kw):
    base = dict(
        n_movies=40, n_keywords=30, n_clusters_true=6, n_topics=3,
        n_people=20, poster_object_dim=12, lexical_dim=16, seed=5,
    )
    base.update(kw)
    return SyntheticSpec(**base)


def test_generation_deterministic():
    a = generate(spec())
    b = generate(spec())
    assert a.records == b.records
    assert [p.movie_id for p in a.posters] == [p.movie_id for p in b.posters]
    for pa, pb in zip(a.posters, b.posters):
        np.testing.assert_array_equal(pa.features, pb.features)
    for k in a.lexical_vectors:
        np.testing.assert_array_equal(a.lexical_vectors[k], b.lexical_vectors[k])
    assert generate(spec(seed=6)).records != a.records


def test_records_pass_real_ingest(tmp_path):
    world = generate(spec())
    path = tmp_path / "synth.jsonl"
    write_corpus(world.records, path)
    records, errors = parse_corpus(path)
    assert errors == []
    assert len(records) == 40
    assert records == world.records


def test_poster_refs_consistent():
    world = generate(spec())
    poster_ids = {p.movie_id for p in world.posters}
    for rec in world.records:
        if rec.poster_ref is not None:
            assert rec.poster_ref in poster_ids
        else:
            assert rec.movie_id not in poster_ids
    for p in world.posters:
        assert 1 <= p.num_objects <= 20
        assert p.dim == 12


def test_truth_structure_and_keyword_clusters():
    world = generate(spec())
    truth = world.truth
    assert set(truth["keyword_cluster"]) == set(world.lexical_vectors)
    assert len(truth["cluster_effect"]) == 6
    for m in truth["movies"]:
        assert all(0 <= c < 6 for c in m["clusters"])
    # keywords from one planted cluster have similar lexical vectors
    by_cluster = {}
    for kw, c in truth["keyword_cluster"].items():
        by_cluster.setdefault(c, []).append(world.lexical_vectors[kw])
    for c, vecs in by_cluster.items():
        vecs = np.stack(vecs)
        cos = vecs @ vecs.T
        assert cos[np.triu_indices(len(vecs), 1)].mean() > 0.5


def test_pretrain_only_rate():
    world = generate(spec(pretrain_only_rate=0.5, n_movies=200))
    zero_rev = sum(1 for r in world.records if r.revenue == 0)
    assert 60 <= zero_rev <= 140


def test_revenue_depends_on_budget():
    world = generate(spec(n_movies=300, rev_noise=0.05))
    logs = np.array([(np.log10(max(r.budget, 1)), np.log10(max(r.revenue, 1))) for r in world.records])
    corr = np.corrcoef(logs[:, 0], logs[:, 1])[0, 1]
    assert corr > 0.5
