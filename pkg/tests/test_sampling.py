import numpy as np
import pytest

from eigenmesh.mesh import Mesh, MeshError
from eigenmesh.sampling import build_sampling_hierarchy, quadric_sample
from eigenmesh.synthetic import SynthConfig, make_template


def test_target_size_arithmetic(small_dataset):
    template = small_dataset.template
    level = quadric_sample(template, 4)
    assert level.coarse_topology.vertex_count == int(np.ceil(template.vertex_count / 4))


def test_pool_rows_select_kept_vertices(small_dataset):
    level = quadric_sample(small_dataset.template, 4)
    pool = level.pool.toarray()
    assert np.all(pool.sum(axis=1) == 1)
    assert np.all((pool == 0) | (pool == 1))


def test_unpool_restores_kept_vertices_exactly(small_dataset):
    template = small_dataset.template
    level = quadric_sample(template, 4)
    rec = level.unpool @ (level.pool @ template.vertices)
    assert np.array_equal(rec[level.kept_indices], template.vertices[level.kept_indices])


def test_unpool_rows_sum_to_one(small_dataset):
    level = quadric_sample(small_dataset.template, 4)
    sums = np.asarray(level.unpool.sum(axis=1)).ravel()
    assert np.abs(sums - 1.0).max() < 1e-12
    assert level.unpool.min() >= 0.0  # barycentric weights are non-negative


def test_mean_shape_reconstruction_error():
    # one down-4 level at realistic resolution keeps every vertex within
    # 5% of the bounding-box diagonal
    template, _ = make_template(SynthConfig(subdivisions=3))
    level = quadric_sample(template, 4)
    x = template.vertices
    rec = level.unpool @ (level.pool @ x)
    err = np.linalg.norm(rec - x, axis=1)
    bbox = np.linalg.norm(x.max(axis=0) - x.min(axis=0))
    assert err.max() < 0.05 * bbox


def test_hierarchy_resolutions(small_dataset):
    levels = build_sampling_hierarchy(small_dataset.template, (4, 2, 2, 2))
    sizes = [lv.coarse_topology.vertex_count for lv in levels]
    assert sizes == [41, 21, 11, 6]


def test_factor_below_two_rejected(small_dataset):
    with pytest.raises(MeshError):
        quadric_sample(small_dataset.template, 1)


def test_coarse_mesh_is_valid_topology(small_dataset):
    level = quadric_sample(small_dataset.template, 4)
    topo = level.coarse_topology
    # Topology constructor enforces edge-manifoldness; spot-check coverage
    assert topo.faces.min() >= 0
    assert topo.faces.max() < topo.vertex_count
    assert len(np.unique(topo.faces)) == topo.vertex_count  # no orphan vertices
