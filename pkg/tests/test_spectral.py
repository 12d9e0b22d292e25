import numpy as np
import pytest

from eigenmesh.mesh import AttributeSegmentation, DatasetStats, Topology, standardize
from eigenmesh.spectral import (
    SpectralError,
    attribute_laplacian,
    eigendecompose,
    eigenprojection_distribution,
    fit_spectral_basis,
    local_eigenproject,
    signed_distance,
    signed_distance_standardized,
    tutte_laplacian,
)


def _two_attr_topology():
    # 3-cycle (attribute 0) bridged to a 2-path (attribute 1)
    faces = np.array([[0, 1, 2], [2, 1, 3], [3, 1, 4]])
    topo = Topology(faces, 5)
    seg = AttributeSegmentation.from_labels(np.array([0, 0, 0, 1, 1]), topo)
    return topo, seg


def test_three_cycle_laplacian():
    topo, seg = _two_attr_topology()
    lap = attribute_laplacian(topo, seg, 0)
    k = lap.kirchoff.toarray()
    assert np.array_equal(k, [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


def test_two_vertex_path_laplacian():
    topo, seg = _two_attr_topology()
    lap = attribute_laplacian(topo, seg, 1)
    assert np.array_equal(lap.kirchoff.toarray(), [[1, -1], [-1, 1]])


def test_invalid_attribute():
    topo, seg = _two_attr_topology()
    with pytest.raises(SpectralError):
        attribute_laplacian(topo, seg, 5)


def test_laplacian_properties_random_attributes(small_dataset):
    topo = small_dataset.template.topology
    seg = small_dataset.segmentation
    for w in range(seg.attribute_count):
        k = attribute_laplacian(topo, seg, w).kirchoff
        dense = k.toarray()
        assert np.abs(dense - dense.T).max() == 0.0
        assert np.abs(dense.sum(axis=1)).max() < 1e-12
        assert np.linalg.eigvalsh(dense).min() > -1e-8


def test_path_eigendecomposition():
    topo, seg = _two_attr_topology()
    basis = eigendecompose(attribute_laplacian(topo, seg, 1), 2)
    assert np.allclose(basis.eigenvalues, [0.0, 2.0], atol=1e-12)
    s = 1 / np.sqrt(2)
    assert np.allclose(basis.eigenvectors[:, 0], [s, s]) or np.allclose(
        basis.eigenvectors[:, 0], [-s, -s]
    )
    # sign convention: first entry above threshold is positive
    assert np.allclose(basis.eigenvectors[:, 1], [s, -s])
    assert basis.eigenvectors[0, 0] > 0


def test_three_cycle_eigenvalues():
    # hand eigensolve: K = 3I - ones, eigenvalues {0, 3, 3}
    topo, seg = _two_attr_topology()
    basis = eigendecompose(attribute_laplacian(topo, seg, 0), 3)
    assert np.allclose(basis.eigenvalues, [0.0, 3.0, 3.0], atol=1e-9)
    assert np.allclose(basis.eigenvectors[:, 0], np.ones(3) / np.sqrt(3))


def test_eigendecompose_orthonormal_and_residuals(small_dataset):
    topo = small_dataset.template.topology
    seg = small_dataset.segmentation
    for w in range(seg.attribute_count):
        lap = attribute_laplacian(topo, seg, w)
        basis = eigendecompose(lap, 10)
        u = basis.eigenvectors
        assert np.abs(u.T @ u - np.eye(10)).max() < 1e-6
        knorm = np.abs(lap.kirchoff).sum(axis=1).max()  # inf-norm bound
        for i in range(10):
            res = lap.kirchoff @ u[:, i] - basis.eigenvalues[i] * u[:, i]
            assert np.linalg.norm(res) < 1e-6 * knorm
        # connected attribute: exactly one near-zero eigenvalue
        assert np.sum(basis.eigenvalues < 1e-8) == 1


def test_signed_distance_along_normals(small_stats):
    m, n = small_stats.mean, small_stats.normals
    assert np.allclose(signed_distance(m, small_stats), 0.0)
    assert np.allclose(signed_distance(m + 0.1 * n, small_stats), 0.1)
    assert np.allclose(signed_distance(m - 0.1 * n, small_stats), -0.1)


def test_signed_distance_formulations_agree(small_dataset, small_stats):
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = small_dataset.vertices[rng.integers(len(small_dataset.vertices))]
        raw = signed_distance(x, small_stats)
        std = signed_distance_standardized(standardize(x, small_stats), small_stats)
        assert np.abs(raw - std).max() < 1e-9


def test_fit_selects_max_variance_component(small_dataset, small_stats):
    ds = small_dataset
    topo = ds.template.topology
    basis = fit_spectral_basis(
        ds.vertices, ds.segmentation, small_stats, topo, num_modes=20, kappa=3
    )
    # brute-force oracle: project the whole set and rank variances
    sd = signed_distance(ds.vertices, small_stats)
    for w in range(ds.segmentation.attribute_count):
        lap = attribute_laplacian(topo, ds.segmentation, w)
        full = eigendecompose(lap, 20)
        proj = sd[:, lap.vertex_indices] @ full.eigenvectors
        var = proj.var(axis=0)
        expect = np.lexsort((np.arange(20), -var))[:3]
        assert np.array_equal(basis.selected[w], expect)


def test_fit_variance_concentrated_on_one_component(small_stats, small_dataset):
    ds = small_dataset
    topo = ds.template.topology
    seg = ds.segmentation
    lap = attribute_laplacian(topo, seg, 0)
    target = eigendecompose(lap, 8).eigenvectors[:, 5]
    rng = np.random.default_rng(0)
    n = 40
    verts = np.tile(small_stats.mean, (n, 1, 1))
    coeff = rng.standard_normal(n)
    # sd varies along eigen-component 5 of attribute 0, plus tiny noise so
    # no attribute is fully degenerate
    field = np.zeros(ds.template.vertex_count)
    field[lap.vertex_indices] = target
    sd_signal = coeff[:, None] * field + 1e-4 * rng.standard_normal((n, len(field)))
    verts += sd_signal[:, :, None] * small_stats.normals
    basis = fit_spectral_basis(verts, seg, small_stats, topo, num_modes=8, kappa=1)
    assert basis.selected[0][0] == 5


def test_fit_constant_set_degenerate(small_stats, small_dataset):
    ds = small_dataset
    verts = np.tile(small_stats.mean, (5, 1, 1))
    with pytest.raises(SpectralError, match="degenerate attribute"):
        fit_spectral_basis(
            verts, ds.segmentation, small_stats, ds.template.topology, num_modes=8, kappa=2
        )


def test_first_k_selection(small_dataset, small_stats):
    ds = small_dataset
    basis = fit_spectral_basis(
        ds.vertices, ds.segmentation, small_stats, ds.template.topology,
        num_modes=10, kappa=4, selection="first_k",
    )
    for w in range(ds.segmentation.attribute_count):
        assert np.array_equal(basis.selected[w], np.arange(4))


def test_local_eigenproject_matches_loop_oracle(small_dataset, small_basis, small_stats):
    x = small_dataset.vertices[13]
    z = local_eigenproject(x, small_basis)
    assert z.shape == (small_basis.latent_size,)
    # naive per-attribute loop oracle
    sd = signed_distance(x, small_stats)
    expected = []
    seg = small_basis.segmentation
    for w in range(seg.attribute_count):
        raw = small_basis.vectors[w].T @ sd[seg.indices[w]]
        expected.extend((raw - small_basis.mean[w]) / small_basis.std[w])
    assert np.abs(z - np.array(expected)).max() < 1e-9


def test_local_eigenproject_at_mean(small_basis, small_stats):
    z = local_eigenproject(small_stats.mean, small_basis)
    expected = -np.concatenate(small_basis.mean) / np.concatenate(small_basis.std)
    assert np.abs(z - expected).max() < 1e-12


def test_projection_standardized_by_construction(small_dataset, small_basis):
    z = local_eigenproject(small_dataset.vertices, small_basis)
    assert np.abs(z.mean(axis=0)).max() < 1e-6
    assert np.abs(z.std(axis=0) - 1).max() < 1e-6


def test_projection_affine_in_sd(small_dataset, small_basis, small_stats):
    # projecting an affine combination of sd signals equals the affine
    # combination of raw projections (pre-standardization linearity)
    ds = small_dataset
    n = small_stats.normals
    sd1 = np.full(ds.template.vertex_count, 0.05)
    sd2 = np.linspace(-0.02, 0.06, ds.template.vertex_count)
    a, b = 0.7, -1.3
    x = small_stats.mean + ((a * sd1 + b * sd2))[:, None] * n
    z_mix = local_eigenproject(x, small_basis)
    z1 = local_eigenproject(small_stats.mean + sd1[:, None] * n, small_basis)
    z2 = local_eigenproject(small_stats.mean + sd2[:, None] * n, small_basis)
    s = np.concatenate(small_basis.std)
    m = np.concatenate(small_basis.mean)
    raw_mix, raw1, raw2 = (z * s + m for z in (z_mix, z1, z2))
    assert np.abs(raw_mix - (a * raw1 + b * raw2)).max() < 1e-9


def test_distribution_moments(small_dataset, small_basis):
    report = eigenprojection_distribution(small_dataset.vertices, small_basis)
    assert len(report["components"]) == small_basis.latent_size
    for comp in report["components"]:
        assert abs(comp["mean"]) < 1e-6
        assert abs(comp["std"] - 1) < 1e-6
        assert sum(comp["histogram"]) <= len(small_dataset.vertices)


def test_distribution_insufficient_samples(small_dataset, small_basis):
    with pytest.raises(SpectralError, match="insufficient"):
        eigenprojection_distribution(small_dataset.vertices[:5], small_basis)


def test_tutte_laplacian_three_cycle():
    topo = Topology(np.array([[0, 1, 2]]), 3)
    t = tutte_laplacian(topo).toarray()
    assert np.allclose(np.diag(t), 1.0)
    assert np.allclose(t.sum(axis=1), 0.0, atol=1e-12)
    assert np.allclose(sorted(t[0]), [-0.5, -0.5, 1.0])


def test_tutte_annihilates_constants(small_dataset):
    t = tutte_laplacian(small_dataset.template.topology)
    c = np.full(small_dataset.template.vertex_count, 3.7)
    assert np.abs(t @ c).max() < 1e-12


def test_tutte_matches_dense_oracle(small_dataset):
    topo = small_dataset.template.topology
    t = tutte_laplacian(topo).toarray()
    n = topo.vertex_count
    adj = np.zeros((n, n))
    for a, b in topo.edges:
        adj[a, b] = adj[b, a] = 1.0
    dense = np.eye(n) - adj / adj.sum(axis=1, keepdims=True)
    assert np.abs(t - dense).max() < 1e-12
