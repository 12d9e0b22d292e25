"""Procedural fixed-topology dataset with known per-attribute factors.

A subdivided icosphere is stretched into a head-like ellipsoid and split
into angular attribute regions. Samples displace vertices along the
template normals by Gaussian-weighted smooth mode fields, each supported
on one attribute plus a narrow cosine falloff band, so the true generative
factors are known per attribute and the resulting eigenprojections are
Gaussian by construction.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .mesh import AttributeSegmentation, Mesh, Topology, vertex_normals

# unit icosahedron
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
        (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
        (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)

# head-like ellipsoid axes applied to the unit sphere (x=front, z=up)
_ELLIPSOID_AXES = np.array([1.0, 0.85, 1.15])

_DEFAULT_ATTRIBUTE_NAMES = ("nose cap", "left lobe", "right lobe", "base")
_DEFAULT_ANCHORS = np.array(
    [
        (1.0, 0.0, 0.15),   # nose cap: front
        (-0.2, 1.0, 0.2),   # left lobe
        (-0.2, -1.0, 0.2),  # right lobe
        (-0.6, 0.0, -0.8),  # base: lower back
    ]
)


def icosphere(subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere via loop subdivision of an icosahedron."""
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS[0])
    faces = _ICO_FACES.copy()
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}
        new_verts = [verts]
        next_id = len(verts)

        def mid(a: int, b: int) -> int:
            nonlocal next_id
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                midpoint[key] = next_id
                next_id += 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        mids = np.empty((len(midpoint), 3))
        for (a, b), i in midpoint.items():
            mids[i - len(verts)] = verts[a] + verts[b]
        new_verts.append(mids / np.linalg.norm(mids, axis=1, keepdims=True))
        verts = np.concatenate(new_verts)
        faces = np.array(new_faces, dtype=np.int64)
    return verts, faces


def _fibonacci_directions(count: int) -> np.ndarray:
    i = np.arange(count, dtype=np.float64) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(1.0 - z**2)
    theta = 2.0 * np.pi * i * (1.0 - 1.0 / _PHI)
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


@dataclass(frozen=True)
class SynthConfig:
    subdivisions: int = 3            # 2 -> N=162, 3 -> N=642, 4 -> N=2562
    attribute_count: int = 4
    modes_per_attribute: int = 3
    amplitude: float = 0.08          # displacement scale in model units
    falloff_rings: int = 2           # seam band width in graph rings
    noise_std: float = 0.0           # per-vertex normal-direction detail noise
    sample_count: int = 2000
    seed: int = 7


@dataclass(frozen=True)
class SynthDataset:
    """Generated meshes plus the ground-truth factors that produced them."""

    config: SynthConfig
    template: Mesh
    segmentation: AttributeSegmentation
    vertices: np.ndarray        # (n, N, 3)
    factors: np.ndarray         # (n, F * modes)
    mode_fields: np.ndarray = field(repr=False, default=None)  # (F * modes, N)
    template_normals: np.ndarray = field(repr=False, default=None)

    def meshes(self) -> list[Mesh]:
        return [Mesh(v, self.template.topology) for v in self.vertices]


def make_template(config: SynthConfig) -> tuple[Mesh, AttributeSegmentation]:
    """Deterministic template mesh and angular attribute segmentation."""
    sphere, faces = icosphere(config.subdivisions)
    topology = Topology(faces, len(sphere))
    if config.attribute_count == 4:
        anchors = _DEFAULT_ANCHORS.copy()
    else:
        anchors = _fibonacci_directions(config.attribute_count)
    anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)
    # nearest-anchor (spherical Voronoi) cells are geodesically convex
    labels = np.argmax(sphere @ anchors.T, axis=1).astype(np.int64)
    segmentation = AttributeSegmentation.from_labels(labels, topology)
    template = Mesh(sphere * _ELLIPSOID_AXES, topology)
    return template, segmentation


def attribute_names(config: SynthConfig) -> list[str]:
    if config.attribute_count == 4:
        return list(_DEFAULT_ATTRIBUTE_NAMES)
    return [f"region_{w}" for w in range(config.attribute_count)]


def _ring_distances(topology: Topology, seed_vertices: np.ndarray, max_rings: int) -> np.ndarray:
    """Graph distance (in rings, capped) from a vertex set, BFS."""
    nbrs = topology.adjacency_lists()
    dist = np.full(topology.vertex_count, max_rings + 1, dtype=np.int64)
    dist[seed_vertices] = 0
    queue = deque(int(v) for v in seed_vertices)
    while queue:
        v = queue.popleft()
        if dist[v] >= max_rings:
            continue
        for u in nbrs[v]:
            if dist[u] > dist[v] + 1:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def _mode_fields(
    template: Mesh, segmentation: AttributeSegmentation, config: SynthConfig, rng: np.random.Generator
) -> np.ndarray:
    """Smooth scalar fields, one per (attribute, mode), unit RMS on support."""
    sphere = template.vertices / _ELLIPSOID_AXES
    band = config.falloff_rings
    fields = []
    for w in range(segmentation.attribute_count):
        dist = _ring_distances(template.topology, segmentation.indices[w], band)
        envelope = np.where(
            dist <= band, 0.5 * (1.0 + np.cos(np.pi * dist / (band + 1))), 0.0
        )
        for j in range(config.modes_per_attribute):
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            frequency = 1.0 + 0.9 * j
            phase = rng.uniform(0.0, 2.0 * np.pi)
            pattern = np.cos(frequency * np.pi * (sphere @ direction) + phase)
            g = envelope * pattern
            rms = np.sqrt(np.mean(g[segmentation.indices[w]] ** 2))
            fields.append(g / max(rms, 1e-12))
    return np.stack(fields)


def generate_dataset(config: SynthConfig) -> SynthDataset:
    """Sample meshes with per-attribute Gaussian factors (pure in config)."""
    template, segmentation = make_template(config)
    rng = np.random.default_rng(config.seed)
    fields = _mode_fields(template, segmentation, config, rng)
    normals = vertex_normals(template.vertices, template.topology)
    factors = rng.standard_normal((config.sample_count, fields.shape[0]))
    displacement = config.amplitude * (factors @ fields)  # (n, N)
    if config.noise_std > 0:
        # unstructured per-vertex detail: variation no small latent space
        # can capture, like the residual identity detail of real scans
        displacement += config.noise_std * rng.standard_normal(displacement.shape)
    vertices = template.vertices + displacement[:, :, None] * normals
    return SynthDataset(
        config=config,
        template=template,
        segmentation=segmentation,
        vertices=vertices,
        factors=factors,
        mode_fields=fields,
        template_normals=normals,
    )


class OracleGenerator:
    """Disentangled-by-construction generator over the true factors.

    ``strict`` truncates each mode field to its attribute's own vertices, so
    traversing one factor block moves that attribute's vertices and no
    others — the ideal reference for disentanglement metrics.
    """

    def __init__(self, dataset: SynthDataset, strict: bool = True):
        fields = dataset.mode_fields.copy()
        if strict:
            seg = dataset.segmentation
            m = dataset.config.modes_per_attribute
            for w in range(seg.attribute_count):
                mask = np.zeros(fields.shape[1])
                mask[seg.indices[w]] = 1.0
                fields[w * m : (w + 1) * m] *= mask
        self._fields = fields
        self._template = dataset.template.vertices
        self._normals = dataset.template_normals
        self._amplitude = dataset.config.amplitude
        self.latent_size = fields.shape[0]
        self.kappa = dataset.config.modes_per_attribute
        self.attribute_count = dataset.segmentation.attribute_count

    def generate(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        disp = self._amplitude * (z @ self._fields)
        return self._template + disp[..., :, None] * self._normals


class ConstantGenerator:
    """Degenerate generator ignoring its latent (metrics edge cases)."""

    def __init__(self, vertices: np.ndarray, latent_size: int, kappa: int = 1):
        self._vertices = np.asarray(vertices, dtype=np.float64)
        self.latent_size = latent_size
        self.kappa = kappa
        self.attribute_count = latent_size // kappa

    def generate(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            return self._vertices.copy()
        return np.broadcast_to(self._vertices, (z.shape[0],) + self._vertices.shape).copy()
