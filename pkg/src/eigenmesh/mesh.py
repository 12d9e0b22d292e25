"""Fixed-topology triangle meshes, attribute segmentations, dataset statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised on invalid mesh data or contract violations."""


class Topology:
    """Shared connectivity of a family of meshes in dense correspondence.

    Edges are derived from the faces as unique undirected vertex pairs,
    canonically ordered (min index first) and lexicographically sorted, so
    loading the same file twice yields identical edge arrays.

    Parameters
    ----------
    faces : (F, 3) int array
        Triangle vertex indices.
    vertex_count : int
        Number of vertices the faces index into.
    """

    def __init__(self, faces: np.ndarray, vertex_count: int):
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must be (F, 3), got {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= vertex_count):
            raise MeshError("face index out of range [0, N)")
        if np.any(
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        ):
            raise MeshError("degenerate face (repeated vertex index)")
        self.faces = faces
        self.vertex_count = int(vertex_count)
        self.edges = self._derive_edges(faces)
        self.faces.setflags(write=False)
        self.edges.setflags(write=False)

    @staticmethod
    def _derive_edges(faces: np.ndarray) -> np.ndarray:
        halfedges = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        halfedges = np.sort(halfedges, axis=1)
        edges, counts = np.unique(halfedges, axis=0, return_counts=True)
        if np.any(counts > 2):
            bad = edges[counts > 2]
            raise MeshError(f"non-manifold edge(s) bordering >2 faces: {bad[:5].tolist()}")
        return edges

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def degrees(self) -> np.ndarray:
        """Vertex degrees in the edge graph."""
        deg = np.zeros(self.vertex_count, dtype=np.int64)
        np.add.at(deg, self.edges.ravel(), 1)
        return deg

    def adjacency_lists(self) -> list[list[int]]:
        """Sorted neighbor lists per vertex."""
        nbrs: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for a, b in self.edges:
            nbrs[a].append(int(b))
            nbrs[b].append(int(a))
        for lst in nbrs:
            lst.sort()
        return nbrs

    def equals(self, other: "Topology") -> bool:
        """Index-for-index equality (dense correspondence check)."""
        return (
            self.vertex_count == other.vertex_count
            and self.faces.shape == other.faces.shape
            and np.array_equal(self.faces, other.faces)
        )

    def __repr__(self) -> str:
        return (
            f"Topology(N={self.vertex_count}, edges={self.edge_count}, "
            f"faces={self.face_count})"
        )


class Mesh:
    """Vertex positions bound to a shared :class:`Topology`."""

    def __init__(self, vertices: np.ndarray, topology: Topology):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (N, 3), got {vertices.shape}")
        if vertices.shape[0] != topology.vertex_count:
            raise MeshError(
                f"vertex count {vertices.shape[0]} != topology vertex count "
                f"{topology.vertex_count}"
            )
        if not np.all(np.isfinite(vertices)):
            raise MeshError("non-finite vertex coordinates")
        self.vertices = vertices
        self.topology = topology
        self.vertices.setflags(write=False)

    @property
    def vertex_count(self) -> int:
        return self.vertices.shape[0]

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        return Mesh(vertices, self.topology)

    def __repr__(self) -> str:
        return f"Mesh(N={self.vertex_count})"


def vertex_normals(vertices: np.ndarray, topology: Topology) -> np.ndarray:
    """Area-weighted per-vertex unit normals.

    Face normals weighted by face area are accumulated on each incident
    vertex and the sums normalized. A vertex whose incident faces are all
    degenerate (zero area) has no defined normal and trips an error.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = topology.faces
    v0, v1, v2 = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    # cross product magnitude = 2 * face area, so this is area weighting
    fn = np.cross(v1 - v0, v2 - v0)
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, faces[:, k], fn)
    norms = np.linalg.norm(acc, axis=1)
    bad = np.flatnonzero(norms < 1e-300)
    if bad.size:
        raise MeshError(f"vertices with degenerate normals: {bad.tolist()[:20]}")
    return acc / norms[:, None]


@dataclass(frozen=True)
class AttributeSegmentation:
    """Partition of the vertices into F labeled attributes.

    Labels must be contiguous integers 0..F-1; every attribute non-empty.
    """

    labels: np.ndarray
    attribute_count: int
    indices: tuple[np.ndarray, ...] = field(repr=False, default=())

    @staticmethod
    def from_labels(labels: np.ndarray, topology: Topology | None = None) -> "AttributeSegmentation":
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if labels.ndim != 1:
            raise MeshError("labels must be a flat integer array")
        if topology is not None and len(labels) != topology.vertex_count:
            raise MeshError(
                f"label count mismatch: {len(labels)} labels for "
                f"{topology.vertex_count} vertices"
            )
        if labels.min(initial=0) < 0:
            raise MeshError("negative attribute label")
        count = int(labels.max()) + 1 if len(labels) else 0
        indices = []
        for w in range(count):
            idx = np.flatnonzero(labels == w)
            if idx.size == 0:
                raise MeshError(f"empty attribute {w}")
            indices.append(idx)
        labels.setflags(write=False)
        return AttributeSegmentation(labels, count, tuple(indices))

    def attribute_size(self, attribute: int) -> int:
        return len(self.indices[attribute])

    def names(self) -> list[str]:
        return [f"attribute_{w}" for w in range(self.attribute_count)]


def load_segmentation(path: str | Path, topology: Topology) -> AttributeSegmentation:
    """Read one integer label per vertex (whitespace-separated or JSON array)."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        values = json.loads(text)
    else:
        values = text.split()
    try:
        labels = np.array([int(v) for v in values], dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise MeshError(f"segmentation file {path}: non-integer label") from exc
    return AttributeSegmentation.from_labels(labels, topology)


def save_segmentation(seg: AttributeSegmentation, path: str | Path) -> None:
    Path(path).write_text(" ".join(str(v) for v in seg.labels.tolist()), encoding="utf-8")


SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class DatasetStats:
    """Per-vertex mean/std of a training set plus mean-shape normals.

    ``std`` is the population standard deviation floored at ``SIGMA_FLOOR``
    so constant vertices never blow up the standardization.
    """

    mean: np.ndarray
    std: np.ndarray
    normals: np.ndarray

    @property
    def vertex_count(self) -> int:
        return self.mean.shape[0]


def dataset_stats(meshes) -> DatasetStats:
    """Compute :class:`DatasetStats` over ≥2 meshes sharing one topology."""
    meshes = list(meshes)
    if len(meshes) < 2:
        raise MeshError("dataset_stats needs at least 2 meshes")
    topo = meshes[0].topology
    for m in meshes[1:]:
        if m.topology is not topo and not m.topology.equals(topo):
            raise MeshError("topology mismatch across dataset")
    stack = np.stack([m.vertices for m in meshes])
    mean = stack.mean(axis=0)
    std = np.maximum(stack.std(axis=0), SIGMA_FLOOR)
    normals = vertex_normals(mean, topo)
    for a in (mean, std, normals):
        a.setflags(write=False)
    return DatasetStats(mean=mean, std=std, normals=normals)


def stats_from_vertices(vertices: np.ndarray, topology: Topology) -> DatasetStats:
    """Same as :func:`dataset_stats` but over an (n, N, 3) vertex array."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.ndim != 3 or vertices.shape[0] < 2:
        raise MeshError("expected (n>=2, N, 3) vertex array")
    mean = vertices.mean(axis=0)
    std = np.maximum(vertices.std(axis=0), SIGMA_FLOOR)
    normals = vertex_normals(mean, topology)
    for a in (mean, std, normals):
        a.setflags(write=False)
    return DatasetStats(mean=mean, std=std, normals=normals)


def standardize(vertices: np.ndarray, stats: DatasetStats) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.shape[-2:] != stats.mean.shape:
        raise MeshError(f"shape mismatch: {vertices.shape} vs stats {stats.mean.shape}")
    return (vertices - stats.mean) / stats.std


def destandardize(vertices: np.ndarray, stats: DatasetStats) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.shape[-2:] != stats.mean.shape:
        raise MeshError(f"shape mismatch: {vertices.shape} vs stats {stats.mean.shape}")
    return vertices * stats.std + stats.mean
