"""Per-attribute PCA bundle baseline and its seam-discontinuity diagnostic.

Each attribute gets its own PCA model over flattened vertex coordinates;
sampling assembles independently drawn attributes into one mesh with no
blending, which is exactly the failure mode the diagnostic quantifies:
relative stretch of edges that cross attribute boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import AttributeSegmentation, Topology


class PcaError(ValueError):
    pass


SIGN_EPS = 1e-10


@dataclass(frozen=True)
class PcaBundle:
    """Attribute-wise PCA models sharing one segmentation."""

    segmentation: AttributeSegmentation
    means: tuple[np.ndarray, ...]        # per attribute, (3 * N_w,)
    directions: tuple[np.ndarray, ...]   # per attribute, (k, 3 * N_w), orthonormal rows
    scales: tuple[np.ndarray, ...]       # per attribute, (k,) component std devs
    components: int
    vertex_count: int


def _canonical_rows(rows: np.ndarray) -> np.ndarray:
    rows = rows.copy()
    for i, row in enumerate(rows):
        nz = np.flatnonzero(np.abs(row) > SIGN_EPS)
        if nz.size and row[nz[0]] < 0:
            rows[i] = -row
    return rows


def fit_pca_bundle(
    train_vertices: np.ndarray, segmentation: AttributeSegmentation, components: int
) -> PcaBundle:
    """Per-attribute PCA over the training set's flattened coordinates."""
    train_vertices = np.asarray(train_vertices, dtype=np.float64)
    n_train = train_vertices.shape[0]
    means, directions, scales = [], [], []
    for w in range(segmentation.attribute_count):
        idx = segmentation.indices[w]
        flat = train_vertices[:, idx, :].reshape(n_train, -1)
        if components > min(flat.shape):
            raise PcaError(
                f"attribute {w}: {components} components exceed min(3N_w, n_train)"
                f" = {min(flat.shape)}"
            )
        mean = flat.mean(axis=0)
        centered = flat - mean
        _, singular, vt = np.linalg.svd(centered, full_matrices=False)
        means.append(mean)
        directions.append(_canonical_rows(vt[:components]))
        # population convention matches the rest of the pipeline
        scales.append(singular[:components] / np.sqrt(n_train))
    return PcaBundle(
        segmentation=segmentation,
        means=tuple(means),
        directions=tuple(directions),
        scales=tuple(scales),
        components=components,
        vertex_count=train_vertices.shape[1],
    )


def reconstruct_attribute(bundle: PcaBundle, attribute: int, flat: np.ndarray) -> np.ndarray:
    """Project one attribute's flattened coordinates onto the model."""
    centered = flat - bundle.means[attribute]
    coeff = centered @ bundle.directions[attribute].T
    return bundle.means[attribute] + coeff @ bundle.directions[attribute]


def sample_pca_bundle(bundle: PcaBundle, seed: int, n: int = 1) -> np.ndarray:
    """Assemble meshes from independent per-attribute Gaussian draws.

    No seam blending on purpose: the baseline must exhibit the
    discontinuities a joint model avoids. Returns (n, N, 3).
    """
    rng = np.random.default_rng(seed)
    out = np.zeros((n, bundle.vertex_count, 3))
    for w in range(bundle.segmentation.attribute_count):
        idx = bundle.segmentation.indices[w]
        coeff = rng.standard_normal((n, bundle.components)) * bundle.scales[w]
        flat = bundle.means[w] + coeff @ bundle.directions[w]
        out[:, idx, :] = flat.reshape(n, len(idx), 3)
    return out


def seam_discontinuity(
    vertices: np.ndarray,
    template_vertices: np.ndarray,
    segmentation: AttributeSegmentation,
    topology: Topology,
) -> float:
    """Mean relative stretch of cross-attribute edges vs. the template."""
    vertices = np.asarray(vertices, dtype=np.float64)
    labels = segmentation.labels
    e = topology.edges
    cross = labels[e[:, 0]] != labels[e[:, 1]]
    if not np.any(cross):
        raise PcaError("segmentation has no cross-attribute edges")
    ce = e[cross]
    lengths = np.linalg.norm(vertices[ce[:, 0]] - vertices[ce[:, 1]], axis=1)
    ref = np.linalg.norm(template_vertices[ce[:, 0]] - template_vertices[ce[:, 1]], axis=1)
    return float(np.mean(np.abs(lengths - ref) / ref))
