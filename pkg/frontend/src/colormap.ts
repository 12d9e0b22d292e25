/**
 * Diverging blue-white-red colormap for per-vertex displacement magnitudes.
 * The scale is fixed once per session so successive edits are visually
 * comparable; zero displacement renders as the neutral base color.
 */

const NEUTRAL: [number, number, number] = [0.92, 0.92, 0.92];
const HOT: [number, number, number] = [0.85, 0.1, 0.12];
const COLD: [number, number, number] = [0.12, 0.3, 0.85];

function lerp(a: [number, number, number], b: [number, number, number], t: number) {
  return [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t] as [
    number,
    number,
    number,
  ];
}

/** Map t in [-1, 1] to an RGB triple (negative cold, positive hot). */
export function divergingColor(t: number): [number, number, number] {
  const clamped = Math.min(1, Math.max(-1, t));
  return clamped >= 0 ? lerp(NEUTRAL, HOT, clamped) : lerp(NEUTRAL, COLD, -clamped);
}

export class DisplacementColormap {
  /** @param scale displacement (model units) that saturates the map */
  constructor(public readonly scale: number) {
    if (!(scale > 0)) throw new Error("colormap scale must be positive");
  }

  /** Per-vertex RGB buffer (N*3) for non-negative displacement magnitudes. */
  colorize(displacement: ArrayLike<number>): Float32Array {
    const out = new Float32Array(displacement.length * 3);
    for (let i = 0; i < displacement.length; i++) {
      const [r, g, b] = divergingColor(displacement[i] / this.scale);
      out[i * 3] = r;
      out[i * 3 + 1] = g;
      out[i * 3 + 2] = b;
    }
    return out;
  }
}
