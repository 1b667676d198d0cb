/** Typed client for the refinement service; the UI talks to the server only
 * through these calls and never mutates masks locally. */

export interface PolygonJson {
  closed: boolean;
  vertices: [number, number][];
}

export interface EvolutionParams {
  lambda: number;
  c: number;
  mu: number;
  balloon_threshold: number;
}

export interface SessionResponse {
  session_id: string;
  step: number;
  contours: PolygonJson[];
  params: EvolutionParams;
}

export interface StepResponse {
  step: number;
  contours: PolygonJson[];
  changed: boolean;
}

export interface SessionState {
  session_id: string;
  map_id: string;
  step: number;
  params: EvolutionParams;
  contours: PolygonJson[];
  collapsed: boolean;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    throw new ApiError(resp.status, `${resp.status}: ${await resp.text()}`);
  }
  return (await resp.json()) as T;
}

export class RefineClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  async uploadMap(data: ArrayBuffer | Uint8Array): Promise<string> {
    const body = data instanceof Uint8Array
      ? data.buffer.slice(data.byteOffset, data.byteOffset + data.byteLength) as ArrayBuffer
      : data;
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/maps`, {
      method: "POST",
      body,
    });
    const payload = await expectJson<{ map_id: string }>(resp);
    return payload.map_id;
  }

  async fetchMap(mapId: string): Promise<{ bytes: Uint8Array; format: string }> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/maps/${mapId}`);
    if (!resp.ok) {
      throw new ApiError(resp.status, `${resp.status}: map ${mapId}`);
    }
    const format = resp.headers.get("X-Map-Format") ?? "unknown";
    return { bytes: new Uint8Array(await resp.arrayBuffer()), format };
  }

  async createSession(
    mapId: string,
    polygon: PolygonJson,
    params?: Partial<EvolutionParams>,
  ): Promise<SessionResponse> {
    const body: Record<string, unknown> = {
      prob_map_id: mapId,
      init_polygon: polygon,
    };
    if (params !== undefined) {
      body.params = params;
    }
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return expectJson<SessionResponse>(resp);
  }

  async step(sessionId: string, steps: number): Promise<StepResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/sessions/${sessionId}/step`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ steps }),
    });
    return expectJson<StepResponse>(resp);
  }

  async getSession(sessionId: string): Promise<SessionState> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/sessions/${sessionId}`);
    return expectJson<SessionState>(resp);
  }

  async reset(sessionId: string, polygon: PolygonJson): Promise<SessionResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1/sessions/${sessionId}/reset`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(polygon),
    });
    return expectJson<SessionResponse>(resp);
  }
}
