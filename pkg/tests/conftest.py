import numpy as np
import pytest

from boxoffice.clustering import build_cluster_map
from boxoffice.pipeline import prepare, split_map_of
from boxoffice.records import stratified_split
from boxoffice.synth import SyntheticSpec, generate


@pytest.fixture(scope="session")
def small_world():
    """A 80-movie synthetic world shared by feature/encoder tests."""
    spec = SyntheticSpec(
        n_movies=80, n_keywords=40, n_clusters_true=8, n_topics=4,
        n_people=30, poster_object_dim=16, lexical_dim=24, seed=11,
    )
    return generate(spec)


@pytest.fixture(scope="session")
def small_prepared(small_world):
    world = small_world
    assignments = stratified_split(world.records, (0.7, 0.1, 0.2), seed=5)
    smap = split_map_of(assignments)
    train = [r for r in world.records if smap[r.movie_id] == "train"]
    cmap = build_cluster_map(
        [(r.movie_id, r.keywords) for r in train], world.lexical_vectors, n_clusters=8
    )
    return prepare(world.records, smap, cmap)


def rng_vectors(seed, n, d):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d))
