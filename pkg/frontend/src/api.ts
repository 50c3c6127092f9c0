/** Typed client for the generation service. */

import type {
  ChordRef,
  Conditions,
  GenerateRequest,
  GenerateResponse,
  ModelInfo,
  NoteSongJson,
  VocabInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly category: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return;
  let category = "HttpError";
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as { detail?: { category?: string; message?: string } };
    if (body.detail?.category) category = body.detail.category;
    if (body.detail?.message) message = body.detail.message;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(resp.status, category, message);
}

/**
 * Build the conditions object from sidebar fields. Blank fields are
 * omitted entirely — the request never carries nulls or empty lists.
 */
export function buildConditions(fields: {
  instruments?: number[] | null;
  chords?: ChordRef[] | null;
  mean_tempo?: number | null;
  mean_pitch?: number | null;
  mean_velocity?: number | null;
  mean_duration?: number | null;
}): Conditions {
  const out: Conditions = {};
  if (fields.instruments != null && fields.instruments.length > 0) {
    out.instruments = [...fields.instruments].sort((a, b) => a - b);
  }
  if (fields.chords != null && fields.chords.length > 0) {
    out.chords = fields.chords.map((c) => ({ root: c.root, quality: c.quality }));
  }
  if (fields.mean_tempo != null && Number.isFinite(fields.mean_tempo)) {
    out.mean_tempo = fields.mean_tempo;
  }
  if (fields.mean_pitch != null && Number.isFinite(fields.mean_pitch)) {
    out.mean_pitch = fields.mean_pitch;
  }
  if (fields.mean_velocity != null && Number.isFinite(fields.mean_velocity)) {
    out.mean_velocity = fields.mean_velocity;
  }
  if (fields.mean_duration != null && Number.isFinite(fields.mean_duration)) {
    out.mean_duration = fields.mean_duration;
  }
  return out;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path);
    await raiseForStatus(resp);
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    await raiseForStatus(resp);
    return (await resp.json()) as T;
  }

  health(): Promise<{ ready: boolean }> {
    return this.getJson("/api/health");
  }

  vocab(): Promise<VocabInfo> {
    return this.getJson("/api/vocab");
  }

  modelInfo(): Promise<ModelInfo> {
    return this.getJson("/api/model-info");
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.postJson("/api/generate", req);
  }

  /** Render an edited song to a standard MIDI file (raw bytes). */
  async render(notes: NoteSongJson, repetitions: number): Promise<Blob> {
    const resp = await this.fetchImpl(this.baseUrl + "/api/render", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ notes, repetitions }),
    });
    await raiseForStatus(resp);
    return resp.blob();
  }
}
