"""Precomputed spiral neighbor sequences for mesh convolutions.

Each vertex gets a fixed-length index sequence starting at itself, walking
its one-ring in the rotation direction given by the face winding, then the
following rings. The starting neighbor is the adjacent vertex with the
smallest index; exhausted spirals (boundary vertices, tiny meshes) are
padded by repeating the center vertex. Dilation keeps every d-th entry of
a proportionally longer walk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, Topology


@dataclass(frozen=True)
class SpiralIndex:
    indices: np.ndarray  # (N, L) int64, row v starts at v
    length: int
    dilation: int


def _ring_successors(topology: Topology) -> list[dict[int, int]]:
    """Per vertex: neighbor -> next neighbor in winding order."""
    succ: list[dict[int, int]] = [dict() for _ in range(topology.vertex_count)]
    for a, b, c in topology.faces:
        for v, frm, to in ((a, b, c), (b, c, a), (c, a, b)):
            ring = succ[v]
            if frm in ring:
                raise MeshError(f"non-manifold vertex {v}: inconsistent winding")
            ring[int(frm)] = int(to)
    return succ


def _ordered_ring(v: int, succ: dict[int, int]) -> list[int]:
    """One-ring of v in winding order, anchored at the smallest neighbor."""
    if not succ:
        return []
    incoming = set(succ.values())
    open_starts = [u for u in succ if u not in incoming]
    if len(open_starts) > 1:
        raise MeshError(f"non-manifold vertex {v}: multiple ring boundaries")
    start = open_starts[0] if open_starts else min(succ)
    ring = [start]
    seen = {start}
    cur = start
    while cur in succ:
        cur = succ[cur]
        if cur in seen:
            break
        ring.append(cur)
        seen.add(cur)
    if len(ring) < len(set(succ) | set(succ.values())):
        raise MeshError(f"non-manifold vertex {v}: disconnected ring")
    if not open_starts:
        # closed ring: rotate so the smallest neighbor comes first
        lo = ring.index(min(ring))
        ring = ring[lo:] + ring[:lo]
    return ring


def compute_spirals(topology: Topology, length: int, dilation: int = 1) -> SpiralIndex:
    """Deterministic spiral index array for every vertex."""
    if length < 1 or dilation < 1:
        raise MeshError("spiral length and dilation must be >= 1")
    succ = _ring_successors(topology)
    rings = [_ordered_ring(v, s) for v, s in enumerate(succ)]
    raw_len = (length - 1) * dilation + 1
    out = np.empty((topology.vertex_count, length), dtype=np.int64)
    for v in range(topology.vertex_count):
        walk = [v]
        seen = {v}
        frontier = [u for u in rings[v] if u not in seen]
        while frontier and len(walk) < raw_len:
            walk.extend(frontier)
            seen.update(frontier)
            nxt: list[int] = []
            for r in frontier:
                for u in rings[r]:
                    if u not in seen:
                        nxt.append(u)
                        seen.add(u)
            frontier = nxt
        spiral = walk[::dilation][:length]
        spiral += [v] * (length - len(spiral))
        out[v] = spiral
    return SpiralIndex(indices=out, length=length, dilation=dilation)
