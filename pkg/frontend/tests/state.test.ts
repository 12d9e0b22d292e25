import { describe, expect, it, vi } from "vitest";

import { encodeVertexPayload, type Info, ApiClient } from "../src/api.js";
import { EditorController, EditorState, UpdateQueue } from "../src/state.js";

const INFO: Info = {
  attribute_count: 2,
  kappa: 3,
  latent_size: 6,
  attribute_names: ["nose", "base"],
  vertex_count: 4,
  template_url: "/api/template",
  segmentation_url: "/api/template/segmentation",
  traversal_range: [-3, 3],
};

/** In-memory stand-in for the inference service (linear "generator"). */
class FakeServer {
  session = "tok-1";
  latent = new Array(INFO.latent_size).fill(0);
  start: Float32Array | null = null;

  shape(latent: number[]): Float32Array {
    const out = new Float32Array(INFO.vertex_count * 3);
    for (let v = 0; v < INFO.vertex_count; v++) {
      for (let k = 0; k < 3; k++) {
        out[v * 3 + k] = latent.reduce((acc, z, j) => acc + z * (j + 1) * (v + k + 1), 0);
      }
    }
    return out;
  }

  respond(latent: number[]) {
    const vertices = this.shape(latent);
    if (!this.start) this.start = vertices.slice();
    const displacement: number[] = [];
    for (let v = 0; v < INFO.vertex_count; v++) {
      let d = 0;
      for (let k = 0; k < 3; k++) d += (vertices[v * 3 + k] - this.start[v * 3 + k]) ** 2;
      displacement.push(Math.sqrt(d));
    }
    this.latent = latent.slice();
    return {
      session: this.session,
      latent: latent.slice(),
      vertices: encodeVertexPayload(vertices, [INFO.vertex_count, 3]),
      displacement,
    };
  }

  client(): ApiClient {
    const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
      const body = init?.body ? JSON.parse(init.body as string) : {};
      if (url.endsWith("/api/generate")) {
        return jsonResponse(this.respond(body.latent ?? this.latent));
      }
      if (url.endsWith("/api/traverse")) {
        const latent = this.latent.slice();
        latent[body.dim] = body.value;
        return jsonResponse(this.respond(latent));
      }
      if (url.endsWith("/api/randomize-attribute")) {
        const latent = this.latent.slice();
        for (let j = 0; j < INFO.kappa; j++) latent[body.attribute * INFO.kappa + j] = 0.5 + j;
        return jsonResponse(this.respond(latent));
      }
      if (url.endsWith("/api/manipulate")) {
        const latent = this.latent.map((z, i) => (i < INFO.kappa ? z + 0.25 : z));
        return jsonResponse({ ...this.respond(latent), residuals: [4, 2, 1, 0.5] });
      }
      throw new Error(`unexpected url ${url}`);
    };
    return new ApiClient("", fetchImpl);
  }
}

function jsonResponse(payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status: 200,
    headers: { "Content-Type": "application/json" },
  });
}

describe("EditorState", () => {
  it("clamps slider values to the traversal range", () => {
    const state = new EditorState(INFO);
    expect(state.clamp(5)).toBe(3);
    expect(state.clamp(-7)).toBe(-3);
    expect(state.clamp(1.25)).toBe(1.25);
  });

  it("maps dims to attribute blocks", () => {
    const state = new EditorState(INFO);
    expect(state.blockOf(0)).toBe(0);
    expect(state.blockOf(5)).toBe(1);
  });
});

describe("EditorController", () => {
  async function makeController() {
    const server = new FakeServer();
    const controller = new EditorController(new EditorState(INFO), server.client());
    let updates = 0;
    controller.onUpdate = () => {
      updates += 1;
    };
    const settled = async (count: number) => {
      await vi.waitFor(() => expect(updates).toBeGreaterThanOrEqual(count));
    };
    await controller.startSession();
    return { server, controller, settled };
  }

  it("reconciles sliders exactly with server responses", async () => {
    const { controller, settled } = await makeController();
    controller.setSlider(2, 1.7);
    await settled(2);
    // server value is authoritative, element-for-element
    expect(controller.state.latent).toEqual([0, 0, 1.7, 0, 0, 0]);
  });

  it("returns an all-zero displacement map at session-start values", async () => {
    const { controller, settled } = await makeController();
    controller.setSlider(1, 2.0);
    await settled(2);
    expect(Math.max(...controller.state.displacement!)).toBeGreaterThan(0);
    controller.setSlider(1, 0.0); // back to the session-start value
    await settled(3);
    expect(Math.max(...controller.state.displacement!)).toBe(0);
  });

  it("randomize touches only the requested block", async () => {
    const { controller } = await makeController();
    await controller.randomizeAttribute(1);
    expect(controller.state.latent.slice(0, 3)).toEqual([0, 0, 0]);
    expect(controller.state.latent.slice(3)).not.toEqual([0, 0, 0]);
  });

  it("drag-manipulate applies the returned latent and residuals", async () => {
    const { controller } = await makeController();
    await controller.manipulate([0], [[0, 0, 0]]);
    expect(controller.state.latent.slice(0, 3)).toEqual([0.25, 0.25, 0.25]);
    expect(controller.state.residuals).toEqual([4, 2, 1, 0.5]);
    // residual trend is non-increasing on a trained model
    const r = controller.state.residuals!;
    expect(r.every((v, i) => i === 0 || v <= r[i - 1])).toBe(true);
  });

  it("network failure keeps state and reports a toast", async () => {
    const failing = new ApiClient("", async () => {
      throw new Error("connection refused");
    });
    const controller = new EditorController(new EditorState(INFO), failing);
    const errors: string[] = [];
    controller.onError = (m) => errors.push(m);
    const before = controller.state.latent.slice();
    await controller.randomizeAttribute(0);
    expect(errors.length).toBe(1);
    expect(controller.state.latent).toEqual(before);
  });
});

describe("UpdateQueue", () => {
  it("debounces and keeps only the last write", async () => {
    vi.useFakeTimers();
    const ran: number[] = [];
    const queue = new UpdateQueue(80);
    queue.submit(async () => {
      ran.push(1);
    });
    queue.submit(async () => {
      ran.push(2);
    });
    queue.submit(async () => {
      ran.push(3);
    });
    await vi.advanceTimersByTimeAsync(79);
    expect(ran).toEqual([]);
    await vi.advanceTimersByTimeAsync(2);
    expect(ran).toEqual([3]); // last write wins
    vi.useRealTimers();
  });

  it("runs a submission that arrives while one is in flight", async () => {
    vi.useFakeTimers();
    const ran: string[] = [];
    const queue = new UpdateQueue(10);
    let release: () => void = () => {};
    queue.submit(
      () =>
        new Promise<void>((resolve) => {
          ran.push("first");
          release = resolve;
        }),
    );
    await vi.advanceTimersByTimeAsync(11);
    expect(ran).toEqual(["first"]);
    queue.submit(async () => {
      ran.push("second");
    });
    release();
    await vi.advanceTimersByTimeAsync(1);
    expect(ran).toEqual(["first", "second"]);
    vi.useRealTimers();
  });
});
