"""Quadric-error mesh coarsening and the pooling/unpooling operators.

Applied once to the training mean shape: edges are contracted in order of
increasing quadric error (keeping one endpoint's position) until the target
vertex count is reached. Pooling selects kept vertices; unpooling restores
removed vertices through barycentric coordinates in their nearest coarse
triangle, so unpooling rows sum to 1 and kept vertices round-trip exactly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, MeshError, Topology


@dataclass(frozen=True)
class SamplingLevel:
    """One coarsening step: fine resolution -> coarse resolution."""

    pool: sp.csr_matrix       # (n_coarse, n_fine), one 1 per row
    unpool: sp.csr_matrix     # (n_fine, n_coarse), rows sum to 1
    coarse_topology: Topology
    kept_indices: np.ndarray  # fine-resolution ids of kept vertices
    coarse_vertices: np.ndarray


def _face_quadrics(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v0, v1, v2 = (vertices[faces[:, k]] for k in range(3))
    n = np.cross(v1 - v0, v2 - v0)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.maximum(norm, 1e-300)
    d = -np.einsum("ij,ij->i", n, v0)
    p = np.concatenate([n, d[:, None]], axis=1)  # (F, 4)
    return p[:, :, None] * p[:, None, :]  # (F, 4, 4)


def _pair_error(q: np.ndarray, position: np.ndarray) -> float:
    h = np.append(position, 1.0)
    return float(h @ q @ h)


def quadric_sample(mesh: Mesh, factor: int) -> SamplingLevel:
    """Contract lowest-error edges until ceil(N / factor) vertices remain."""
    if factor < 2:
        raise MeshError("sampling factor must be >= 2")
    topo = mesh.topology
    n = topo.vertex_count
    target = int(np.ceil(n / factor))
    vertices = mesh.vertices

    quadrics = np.zeros((n, 4, 4))
    fq = _face_quadrics(vertices, topo.faces)
    for k in range(3):
        np.add.at(quadrics, topo.faces[:, k], fq)

    neighbors: list[set[int]] = [set() for _ in range(n)]
    for a, b in topo.edges:
        neighbors[a].add(int(b))
        neighbors[b].add(int(a))

    alive = np.ones(n, dtype=bool)
    stamp = np.zeros(n, dtype=np.int64)
    parent = np.arange(n)

    def push(a: int, b: int):
        if a > b:
            a, b = b, a
        qsum = quadrics[a] + quadrics[b]
        err_a = _pair_error(qsum, vertices[a])  # keep a
        err_b = _pair_error(qsum, vertices[b])  # keep b
        # ties keep the smaller index
        err, keep = (err_a, a) if err_a <= err_b else (err_b, b)
        heapq.heappush(heap, (err, a, b, keep, stamp[a], stamp[b]))

    heap: list = []
    for a, b in topo.edges:
        push(int(a), int(b))

    remaining = n
    while remaining > target:
        if not heap:
            raise MeshError("quadric sampling: no valid contraction pair remains")
        err, a, b, keep, sa, sb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or stamp[a] != sa or stamp[b] != sb:
            continue
        if b not in neighbors[a]:
            continue
        common = neighbors[a] & neighbors[b]
        if len(common) > 2:
            continue  # contraction would pinch the surface
        removed = b if keep == a else a
        kept = keep
        alive[removed] = False
        parent[removed] = kept
        quadrics[kept] += quadrics[removed]
        for u in neighbors[removed]:
            neighbors[u].discard(removed)
            if u != kept:
                neighbors[u].add(kept)
                neighbors[kept].add(u)
        neighbors[kept].discard(kept)
        neighbors[removed] = set()
        stamp[kept] += 1
        remaining -= 1
        for u in neighbors[kept]:
            push(kept, u)

    def representative(v: int) -> int:
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    kept_indices = np.flatnonzero(alive)
    coarse_of = -np.ones(n, dtype=np.int64)
    coarse_of[kept_indices] = np.arange(len(kept_indices))

    mapped = np.array(
        [[coarse_of[representative(int(v))] for v in face] for face in topo.faces]
    )
    valid = (
        (mapped[:, 0] != mapped[:, 1])
        & (mapped[:, 1] != mapped[:, 2])
        & (mapped[:, 0] != mapped[:, 2])
    )
    seen: set[tuple[int, ...]] = set()
    coarse_faces = []
    for face in mapped[valid]:
        key = tuple(sorted(face))
        if key not in seen:
            seen.add(key)
            coarse_faces.append(face)
    coarse_topology = Topology(np.array(coarse_faces, dtype=np.int64), len(kept_indices))
    coarse_vertices = vertices[kept_indices]

    n_coarse = len(kept_indices)
    pool = sp.csr_matrix(
        (np.ones(n_coarse), (np.arange(n_coarse), kept_indices)), shape=(n_coarse, n)
    )

    rows, cols, weights = [], [], []
    tri = coarse_vertices[coarse_topology.faces]  # (Fc, 3, 3)
    for v in range(n):
        if alive[v]:
            rows.append(v)
            cols.append(int(coarse_of[v]))
            weights.append(1.0)
        else:
            dist2, bary = _closest_triangle(vertices[v], tri)
            f = int(np.argmin(dist2))
            for k in range(3):
                rows.append(v)
                cols.append(int(coarse_topology.faces[f, k]))
                weights.append(float(bary[f, k]))
    unpool = sp.csr_matrix((weights, (rows, cols)), shape=(n, n_coarse))
    return SamplingLevel(
        pool=pool,
        unpool=unpool,
        coarse_topology=coarse_topology,
        kept_indices=kept_indices,
        coarse_vertices=coarse_vertices,
    )


def _closest_triangle(p: np.ndarray, tri: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Squared distance and barycentric coords of the closest point on each
    triangle (Ericson's region-based algorithm, vectorized over triangles)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    bary = np.empty((len(tri), 3))
    denom = va + vb + vc
    safe = np.where(np.abs(denom) > 1e-300, denom, 1.0)
    v = vb / safe
    w = vc / safe
    bary[:, 0] = 1.0 - v - w
    bary[:, 1] = v
    bary[:, 2] = w

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.clip(d1 / (d1 - d3), 0.0, 1.0)
        t_ac = np.clip(d2 / (d2 - d6), 0.0, 1.0)
        denom_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.clip((d4 - d3) / np.where(denom_bc != 0, denom_bc, 1.0), 0.0, 1.0)

    region_a = (d1 <= 0) & (d2 <= 0)
    region_b = (d3 >= 0) & (d4 <= d3)
    region_c = (d6 >= 0) & (d5 <= d6)
    region_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    region_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    region_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)

    # apply edge/vertex regions in priority order (later assignments win,
    # so list interior-first and vertices last)
    for mask, values in (
        (region_bc, np.stack([np.zeros_like(t_bc), 1 - t_bc, t_bc], axis=1)),
        (region_ac, np.stack([1 - t_ac, np.zeros_like(t_ac), t_ac], axis=1)),
        (region_ab, np.stack([1 - t_ab, t_ab, np.zeros_like(t_ab)], axis=1)),
        (region_c, np.tile([0.0, 0.0, 1.0], (len(tri), 1))),
        (region_b, np.tile([0.0, 1.0, 0.0], (len(tri), 1))),
        (region_a, np.tile([1.0, 0.0, 0.0], (len(tri), 1))),
    ):
        bary[mask] = values[mask]

    closest = bary[:, 0:1] * a + bary[:, 1:2] * b + bary[:, 2:3] * c
    dist2 = np.einsum("ij,ij->i", p - closest, p - closest)
    return dist2, bary


def build_sampling_hierarchy(template: Mesh, factors) -> list[SamplingLevel]:
    """Chain of coarsening levels driven by per-level factors."""
    levels = []
    current = template
    for factor in factors:
        level = quadric_sample(current, factor)
        levels.append(level)
        current = Mesh(level.coarse_vertices, level.coarse_topology)
    return levels
