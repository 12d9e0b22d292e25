/**
 * Editor state: the latent sliders, the server session, and the
 * displacement field against the session-start shape. The server is the
 * single source of truth; every response reconciles local state exactly.
 */

import type { ApiClient, Info, ShapeResponse } from "./api.js";

export class EditorState {
  latent: number[];
  session: string | null = null;
  vertices: Float32Array | null = null;
  displacement: number[] | null = null;
  residuals: number[] | null = null;

  constructor(public info: Info) {
    this.latent = new Array(info.latent_size).fill(0);
  }

  /** Slider values clamp to the traversal range. */
  clamp(value: number): number {
    const [lo, hi] = this.info.traversal_range;
    return Math.min(hi, Math.max(lo, value));
  }

  blockOf(dim: number): number {
    return Math.floor(dim / this.info.kappa);
  }

  blockSliders(attribute: number): number[] {
    const start = attribute * this.info.kappa;
    return this.latent.slice(start, start + this.info.kappa);
  }

  /** Server responses win: sliders take the returned latent verbatim. */
  applyResponse(resp: ShapeResponse): void {
    this.latent = resp.latent.slice();
    this.vertices = resp.vertices;
    if (resp.session) this.session = resp.session;
    if (resp.displacement) this.displacement = resp.displacement;
    if (resp.residuals) this.residuals = resp.residuals;
  }
}

/**
 * Single in-flight request per session with trailing debounce:
 * rapid submissions collapse to the most recent one (last write wins).
 */
export class UpdateQueue {
  private pending: (() => Promise<void>) | null = null;
  private inFlight = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private debounceMs: number = 80) {}

  submit(task: () => Promise<void>): void {
    this.pending = task;
    if (this.timer === null && !this.inFlight) {
      this.timer = setTimeout(() => {
        this.timer = null;
        void this.drain();
      }, this.debounceMs);
    }
  }

  private async drain(): Promise<void> {
    while (this.pending !== null) {
      const task = this.pending;
      this.pending = null;
      this.inFlight = true;
      try {
        await task();
      } finally {
        this.inFlight = false;
      }
    }
  }
}

/** High-level editor actions shared by the UI widgets. */
export class EditorController {
  readonly queue = new UpdateQueue();
  onUpdate: (state: EditorState) => void = () => {};
  onError: (message: string) => void = () => {};

  constructor(
    public state: EditorState,
    private client: ApiClient,
  ) {}

  private async guarded(task: () => Promise<void>): Promise<void> {
    try {
      await task();
      this.onUpdate(this.state);
    } catch (err) {
      // network failure: surface a toast, keep current state
      this.onError(err instanceof Error ? err.message : String(err));
    }
  }

  async startSession(seed?: number): Promise<void> {
    await this.guarded(async () => {
      const resp = await this.client.generate(
        seed === undefined ? { latent: this.state.latent } : { seed, truncation: 0.9 },
      );
      this.state.applyResponse(resp);
      this.state.displacement = new Array(this.state.info.vertex_count).fill(0);
    });
  }

  setSlider(dim: number, rawValue: number): void {
    const value = this.state.clamp(rawValue);
    this.state.latent[dim] = value; // optimistic; reconciled by the response
    this.queue.submit(() =>
      this.guarded(async () => {
        const resp = await this.client.traverse({
          session: this.state.session ?? undefined,
          latent: this.state.session ? undefined : this.state.latent,
          dim,
          value,
        });
        this.state.applyResponse(resp);
      }),
    );
  }

  async randomizeAttribute(attribute: number): Promise<void> {
    await this.guarded(async () => {
      const resp = await this.client.randomizeAttribute({
        session: this.state.session ?? undefined,
        latent: this.state.session ? undefined : this.state.latent,
        attribute,
      });
      this.state.applyResponse(resp);
    });
  }

  async manipulate(vertexIds: number[], targets: number[][]): Promise<void> {
    await this.guarded(async () => {
      const resp = await this.client.manipulate({
        session: this.state.session ?? undefined,
        latent: this.state.session ? undefined : this.state.latent,
        vertex_ids: vertexIds,
        targets,
      });
      this.state.applyResponse(resp);
    });
  }
}
