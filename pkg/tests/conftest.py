import numpy as np
import pytest

from eigenmesh.mesh import Mesh, Topology, stats_from_vertices
from eigenmesh.spectral import fit_spectral_basis
from eigenmesh.synthetic import SynthConfig, generate_dataset


@pytest.fixture(scope="session")
def small_dataset():
    """Level-2 icosphere (N=162), 4 attributes, 120 samples."""
    return generate_dataset(SynthConfig(subdivisions=2, sample_count=120, seed=11))


@pytest.fixture(scope="session")
def small_stats(small_dataset):
    return stats_from_vertices(small_dataset.vertices, small_dataset.template.topology)


@pytest.fixture(scope="session")
def small_basis(small_dataset, small_stats):
    return fit_spectral_basis(
        small_dataset.vertices,
        small_dataset.segmentation,
        small_stats,
        small_dataset.template.topology,
        num_modes=20,
        kappa=3,
    )


@pytest.fixture()
def triangle_mesh():
    """Single CCW triangle in the z=0 plane."""
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    topo = Topology(np.array([[0, 1, 2]]), 3)
    return Mesh(verts, topo)
