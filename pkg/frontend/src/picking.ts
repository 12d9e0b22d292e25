/**
 * Vertex picking: a raycast hits a face; the selection snaps to the
 * nearest vertex of that face, matching vertex-level manipulation.
 */

export interface FaceHit {
  faceIndex: number;
  point: [number, number, number];
}

export function nearestVertexOfFace(
  hit: FaceHit,
  faces: Uint32Array,
  positions: Float32Array,
): number {
  const base = hit.faceIndex * 3;
  let best = -1;
  let bestDist = Infinity;
  for (let k = 0; k < 3; k++) {
    const v = faces[base + k];
    const dx = positions[v * 3] - hit.point[0];
    const dy = positions[v * 3 + 1] - hit.point[1];
    const dz = positions[v * 3 + 2] - hit.point[2];
    const d = dx * dx + dy * dy + dz * dz;
    if (d < bestDist) {
      bestDist = d;
      best = v;
    }
  }
  return best;
}
