"""Per-attribute graph Laplacians, signed distance, and spectral bases.

The pipeline: build the Kirchoff Laplacian K = D - A of each attribute's
induced vertex subgraph, eigendecompose it, project the per-vertex signed
distance of every training mesh onto the eigenvectors, and keep the
highest-variance spectral components together with their standardization
statistics. Projecting a new mesh through the selected basis yields the
spectral descriptor the generative models tie their latent blocks to.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .mesh import AttributeSegmentation, DatasetStats, Topology, standardize

log = logging.getLogger(__name__)

DENSE_EIGH_LIMIT = 2000
SIGN_EPS = 1e-10
VARIANCE_FLOOR = 1e-16
STD_FLOOR = 1e-8


class SpectralError(ValueError):
    """Raised on spectral-pipeline contract violations."""


@dataclass(frozen=True)
class AttributeLaplacian:
    """Kirchoff Laplacian K = D - A of one attribute's vertex subgraph.

    Rows/columns follow ``vertex_indices`` (global vertex ids, ascending).
    """

    attribute: int
    vertex_indices: np.ndarray
    adjacency: sp.csr_matrix
    degrees: np.ndarray
    kirchoff: sp.csr_matrix

    @property
    def size(self) -> int:
        return len(self.vertex_indices)


def attribute_laplacian(
    topology: Topology, segmentation: AttributeSegmentation, attribute: int
) -> AttributeLaplacian:
    """Build the Laplacian of the subgraph induced by one attribute."""
    if not 0 <= attribute < segmentation.attribute_count:
        raise SpectralError(f"invalid attribute {attribute}")
    idx = segmentation.indices[attribute]
    local = -np.ones(topology.vertex_count, dtype=np.int64)
    local[idx] = np.arange(len(idx))
    e = topology.edges
    keep = (local[e[:, 0]] >= 0) & (local[e[:, 1]] >= 0)
    rows = local[e[keep, 0]]
    cols = local[e[keep, 1]]
    n = len(idx)
    data = np.ones(len(rows), dtype=np.float64)
    adj = sp.coo_matrix(
        (np.concatenate([data, data]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    ).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        log.warning(
            "attribute %d has %d isolated vertex/vertices (zero Laplacian rows)",
            attribute,
            isolated.size,
        )
    kirchoff = (sp.diags(deg) - adj).tocsr()
    return AttributeLaplacian(attribute, idx, adj, deg, kirchoff)


@dataclass(frozen=True)
class EigenBasis:
    """Ascending eigenpairs of one attribute Laplacian, sign-canonicalized."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (N_w, K), column-orthonormal


def _canonicalize_signs(vectors: np.ndarray) -> np.ndarray:
    vectors = vectors.copy()
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        nz = np.flatnonzero(np.abs(col) > SIGN_EPS)
        if nz.size and col[nz[0]] < 0:
            vectors[:, j] = -col
    return vectors


def eigendecompose(lap: AttributeLaplacian, count: int) -> EigenBasis:
    """Smallest ``count`` eigenpairs of the Kirchoff Laplacian.

    Dense solver below DENSE_EIGH_LIMIT vertices, shift-invert Lanczos
    above. The deterministic sign convention makes the first entry above
    SIGN_EPS of each eigenvector positive.
    """
    n = lap.size
    if count > n:
        raise SpectralError(f"requested {count} eigenpairs from {n}-vertex attribute")
    if n <= DENSE_EIGH_LIMIT:
        values, vectors = eigh(lap.kirchoff.toarray(), subset_by_index=(0, count - 1))
    else:
        try:
            # K is singular (lambda_0 = 0), shift slightly below the spectrum
            values, vectors = eigsh(
                lap.kirchoff, k=count, sigma=-1e-2, which="LM", v0=np.ones(n) / np.sqrt(n)
            )
        except ArpackNoConvergence as exc:
            residuals = "" if exc.eigenvalues is None else f" ({len(exc.eigenvalues)} converged)"
            raise SpectralError(
                f"eigensolver failed to converge for attribute {lap.attribute}{residuals}"
            ) from exc
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
    return EigenBasis(values, _canonicalize_signs(vectors))


def signed_distance(vertices: np.ndarray, stats: DatasetStats) -> np.ndarray:
    """Per-vertex distance to the mean shape, signed by the template normal.

    Accepts a single (N, 3) mesh or a (B, N, 3) batch; sign(0) counts as +1.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.shape[-2:] != stats.mean.shape:
        raise SpectralError(f"shape mismatch: {vertices.shape} vs {stats.mean.shape}")
    delta = vertices - stats.mean
    dist = np.linalg.norm(delta, axis=-1)
    gamma = np.where(np.einsum("...nk,nk->...n", delta, stats.normals) >= 0, 1.0, -1.0)
    return gamma * dist


def signed_distance_standardized(std_vertices: np.ndarray, stats: DatasetStats) -> np.ndarray:
    """Signed distance computed directly from standardized coordinates."""
    std_vertices = np.asarray(std_vertices, dtype=np.float64)
    if std_vertices.shape[-2:] != stats.mean.shape:
        raise SpectralError(f"shape mismatch: {std_vertices.shape} vs {stats.mean.shape}")
    delta = std_vertices * stats.std
    dist = np.linalg.norm(delta, axis=-1)
    gamma = np.where(np.einsum("...nk,nk->...n", delta, stats.normals) >= 0, 1.0, -1.0)
    return gamma * dist


@dataclass(frozen=True)
class SpectralBasis:
    """Selected eigenvectors and projection statistics of every attribute.

    ``vectors[w]`` holds the kappa selected eigenvector columns of attribute
    w, ``selected[w]`` their component indices in the full basis, and
    ``mean[w]`` / ``std[w]`` the training-set statistics of the projections.
    """

    segmentation: AttributeSegmentation
    stats: DatasetStats
    vectors: tuple[np.ndarray, ...]
    selected: tuple[np.ndarray, ...]
    mean: tuple[np.ndarray, ...]
    std: tuple[np.ndarray, ...]
    eigenvalues: tuple[np.ndarray, ...]
    kappa: int
    num_modes: int
    selection: str

    @property
    def attribute_count(self) -> int:
        return self.segmentation.attribute_count

    @property
    def latent_size(self) -> int:
        return self.attribute_count * self.kappa

    def block(self, attribute: int) -> slice:
        """Latent index range owned by one attribute."""
        return slice(attribute * self.kappa, (attribute + 1) * self.kappa)


def fit_spectral_basis(
    train_vertices: np.ndarray,
    segmentation: AttributeSegmentation,
    stats: DatasetStats,
    topology: Topology,
    num_modes: int = 50,
    kappa: int = 5,
    selection: str = "max_variance",
) -> SpectralBasis:
    """Select each attribute's spectral components from a training set.

    ``selection='max_variance'`` keeps the kappa components whose training
    projections vary most (ties to the lower index); ``'first_k'`` keeps
    components 0..kappa-1 instead.
    """
    if selection not in ("max_variance", "first_k"):
        raise SpectralError(f"unknown selection mode {selection!r}")
    train_vertices = np.asarray(train_vertices, dtype=np.float64)
    if train_vertices.ndim != 3 or train_vertices.shape[0] < 2:
        raise SpectralError("need a (n>=2, N, 3) training array")
    if kappa > num_modes:
        raise SpectralError(f"kappa={kappa} exceeds num_modes={num_modes}")
    sd = signed_distance(train_vertices, stats)  # (n, N)
    vectors, selected, means, stds, eigvals = [], [], [], [], []
    for w in range(segmentation.attribute_count):
        lap = attribute_laplacian(topology, segmentation, w)
        k = min(num_modes, lap.size)
        basis = eigendecompose(lap, k)
        proj = sd[:, lap.vertex_indices] @ basis.eigenvectors  # (n, k)
        var = proj.var(axis=0)
        if var.max() < VARIANCE_FLOOR:
            raise SpectralError(f"degenerate attribute {w}: all projection variances zero")
        if selection == "max_variance":
            # stable sort on (-variance, index) keeps ties at the lower index
            order = np.lexsort((np.arange(k), -var))
            sel = order[:kappa]
        else:
            sel = np.arange(kappa)
        vectors.append(basis.eigenvectors[:, sel])
        selected.append(sel)
        means.append(proj[:, sel].mean(axis=0))
        stds.append(np.maximum(proj[:, sel].std(axis=0), STD_FLOOR))
        eigvals.append(basis.eigenvalues[sel])
    return SpectralBasis(
        segmentation=segmentation,
        stats=stats,
        vectors=tuple(vectors),
        selected=tuple(selected),
        mean=tuple(means),
        std=tuple(stds),
        eigenvalues=tuple(eigvals),
        kappa=kappa,
        num_modes=num_modes,
        selection=selection,
    )


def local_eigenproject(vertices: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    """Standardized local eigenprojection z* of one mesh or a (B, N, 3) batch."""
    sd = signed_distance(vertices, basis.stats)
    seg = basis.segmentation
    parts = []
    for w in range(seg.attribute_count):
        proj = sd[..., seg.indices[w]] @ basis.vectors[w]
        parts.append((proj - basis.mean[w]) / basis.std[w])
    return np.concatenate(parts, axis=-1)


def eigenprojection_distribution(
    train_vertices: np.ndarray,
    basis: SpectralBasis,
    bins: int = 64,
    value_range: tuple[float, float] = (-4.0, 4.0),
) -> dict:
    """Histogram and moments of the standardized projections, per component.

    Returns a JSON-serializable dict keyed by latent component.
    """
    train_vertices = np.asarray(train_vertices, dtype=np.float64)
    if train_vertices.ndim != 3 or train_vertices.shape[0] < 10:
        raise SpectralError("insufficient samples: need at least 10 meshes")
    z = local_eigenproject(train_vertices, basis)  # (n, F*kappa)
    edges = np.linspace(value_range[0], value_range[1], bins + 1)
    components = []
    for j in range(z.shape[1]):
        col = z[:, j]
        mu = col.mean()
        sigma = col.std()
        centered = col - mu
        m2 = np.mean(centered**2)
        skew = np.mean(centered**3) / m2**1.5 if m2 > 0 else 0.0
        kurt = np.mean(centered**4) / m2**2 - 3.0 if m2 > 0 else 0.0
        hist, _ = np.histogram(col, bins=edges)
        components.append(
            {
                "attribute": j // basis.kappa,
                "component": int(basis.selected[j // basis.kappa][j % basis.kappa]),
                "mean": float(mu),
                "std": float(sigma),
                "skewness": float(skew),
                "excess_kurtosis": float(kurt),
                "histogram": hist.tolist(),
            }
        )
    return {
        "bins": bins,
        "range": list(value_range),
        "bin_edges": edges.tolist(),
        "samples": int(z.shape[0]),
        "components": components,
    }


def tutte_laplacian(topology: Topology) -> sp.csr_matrix:
    """Row-normalized Laplacian T = I - D^-1 A of the full mesh."""
    e = topology.edges
    n = topology.vertex_count
    data = np.ones(len(e), dtype=np.float64)
    adj = sp.coo_matrix(
        (
            np.concatenate([data, data]),
            (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]])),
        ),
        shape=(n, n),
    ).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    if np.any(deg == 0):
        raise SpectralError(f"isolated vertices: {np.flatnonzero(deg == 0).tolist()[:20]}")
    return (sp.eye(n, format="csr") - sp.diags(1.0 / deg) @ adj).tocsr()
