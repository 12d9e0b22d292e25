/**
 * REST client for the inference service.
 *
 * Vertex payloads travel as base64-encoded little-endian float32 arrays
 * (vertex-major x,y,z) inside JSON envelopes; the template arrives as a
 * binary PLY with double-precision vertex properties and
 * uchar-count + 3x int32 face rows.
 */

export interface VertexPayload {
  dtype: string;
  byte_order: string;
  shape: number[];
  data: string;
}

export interface Info {
  attribute_count: number;
  kappa: number;
  latent_size: number;
  attribute_names: string[];
  vertex_count: number;
  template_url: string;
  segmentation_url: string;
  traversal_range: [number, number];
}

export interface ShapeResponse {
  session?: string;
  latent: number[];
  vertices: Float32Array;
  displacement?: number[];
  residuals?: number[];
  initial_residual?: number;
}

export interface TemplateMesh {
  positions: Float32Array; // N*3
  faces: Uint32Array; // F*3
}

export function bytesFromBase64(data: string): Uint8Array {
  if (typeof atob === "function") {
    const text = atob(data);
    const out = new Uint8Array(text.length);
    for (let i = 0; i < text.length; i++) out[i] = text.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(data, "base64"));
}

export function base64FromBytes(bytes: Uint8Array): string {
  if (typeof btoa === "function") {
    let text = "";
    for (let i = 0; i < bytes.length; i++) text += String.fromCharCode(bytes[i]);
    return btoa(text);
  }
  return Buffer.from(bytes).toString("base64");
}

export function decodeVertexPayload(payload: VertexPayload): Float32Array {
  if (payload.dtype !== "float32" || payload.byte_order !== "little") {
    throw new Error(`unsupported payload encoding ${payload.dtype}/${payload.byte_order}`);
  }
  const bytes = bytesFromBase64(payload.data);
  const expected = payload.shape.reduce((a, b) => a * b, 1) * 4;
  if (bytes.byteLength !== expected) {
    throw new Error(`payload size ${bytes.byteLength} != expected ${expected}`);
  }
  // wire format is little-endian; typed arrays on LE platforms map directly
  return new Float32Array(bytes.buffer, bytes.byteOffset, expected / 4).slice();
}

export function encodeVertexPayload(vertices: Float32Array, shape: number[]): VertexPayload {
  const bytes = new Uint8Array(vertices.buffer, vertices.byteOffset, vertices.byteLength);
  return {
    dtype: "float32",
    byte_order: "little",
    shape,
    data: base64FromBytes(bytes),
  };
}

/** Parse the service's binary PLY layout (double x/y/z, triangle faces). */
export function parseBinaryPly(buffer: ArrayBuffer): TemplateMesh {
  const bytes = new Uint8Array(buffer);
  const headerEnd = findHeaderEnd(bytes);
  const header = new TextDecoder("ascii").decode(bytes.subarray(0, headerEnd));
  const lines = header.split("\n");
  let vertexCount = 0;
  let faceCount = 0;
  for (const line of lines) {
    const tokens = line.trim().split(/\s+/);
    if (tokens[0] === "format" && tokens[1] !== "binary_little_endian") {
      throw new Error(`unsupported PLY format ${tokens[1]}`);
    }
    if (tokens[0] === "element" && tokens[1] === "vertex") vertexCount = Number(tokens[2]);
    if (tokens[0] === "element" && tokens[1] === "face") faceCount = Number(tokens[2]);
  }
  if (!vertexCount || !faceCount) throw new Error("PLY missing vertex or face element");
  const view = new DataView(buffer, headerEnd);
  const positions = new Float32Array(vertexCount * 3);
  let offset = 0;
  for (let v = 0; v < vertexCount * 3; v++) {
    positions[v] = view.getFloat64(offset, true);
    offset += 8;
  }
  const faces = new Uint32Array(faceCount * 3);
  for (let f = 0; f < faceCount; f++) {
    const n = view.getUint8(offset);
    offset += 1;
    if (n !== 3) throw new Error(`non-triangle face with ${n} vertices`);
    for (let k = 0; k < 3; k++) {
      faces[f * 3 + k] = view.getInt32(offset, true);
      offset += 4;
    }
  }
  return { positions, faces };
}

function findHeaderEnd(bytes: Uint8Array): number {
  const marker = "end_header\n";
  const text = new TextDecoder("ascii").decode(bytes.subarray(0, Math.min(bytes.length, 4096)));
  const at = text.indexOf(marker);
  if (at < 0) throw new Error("PLY header terminator not found");
  return at + marker.length;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.base + path);
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as T;
  }

  info(): Promise<Info> {
    return this.getJson<Info>("/api/info");
  }

  async template(): Promise<TemplateMesh> {
    const resp = await this.fetchImpl(this.base + "/api/template");
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return parseBinaryPly(await resp.arrayBuffer());
  }

  segmentation(): Promise<{ labels: number[]; attribute_count: number }> {
    return this.getJson("/api/template/segmentation");
  }

  private shaped(raw: {
    session?: string;
    latent: number[];
    vertices: VertexPayload;
    displacement?: number[];
    residuals?: number[];
    initial_residual?: number;
  }): ShapeResponse {
    return { ...raw, vertices: decodeVertexPayload(raw.vertices) };
  }

  async generate(req: { latent?: number[]; seed?: number; truncation?: number }): Promise<ShapeResponse> {
    return this.shaped(await this.postJson("/api/generate", req));
  }

  async traverse(req: { session?: string; latent?: number[]; dim: number; value: number }): Promise<ShapeResponse> {
    return this.shaped(await this.postJson("/api/traverse", req));
  }

  async randomizeAttribute(req: { session?: string; latent?: number[]; attribute: number }): Promise<ShapeResponse> {
    return this.shaped(await this.postJson("/api/randomize-attribute", req));
  }

  async manipulate(req: {
    session?: string;
    latent?: number[];
    vertex_ids: number[];
    targets: number[][];
    iterations?: number;
    lr?: number;
  }): Promise<ShapeResponse> {
    return this.shaped(await this.postJson("/api/manipulate", req));
  }
}
