/** Wires the annotation stage together: map upload/display, polygon drawing,
 * session lifecycle and the step/run controls.  The service is the single
 * source of truth; this file only forwards events and redraws responses. */

import { EvolutionParams, PolygonJson, RefineClient, StepResponse } from "./api.js";
import { decodeRaster, Raster } from "./decoders.js";
import { PolygonDraft, ViewTransform } from "./geometry.js";
import { drawContours, drawDraft, drawRaster } from "./render.js";
import { RunLoop } from "./runloop.js";

interface UiSession {
  id: string;
  step: number;
  contours: PolygonJson[];
  params: EvolutionParams;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export class AnnotatorApp {
  private client: RefineClient;
  private canvas = el<HTMLCanvasElement>("stage");
  private ctx = this.canvas.getContext("2d")!;
  private status = el<HTMLSpanElement>("status");
  private stepCounter = el<HTMLSpanElement>("step-counter");
  private vertexCounter = el<HTMLSpanElement>("vertex-counter");

  private transform = new ViewTransform();
  private draft = new PolygonDraft();
  private image: Raster | null = null;
  private overlay: Raster | null = null;
  private mapId: string | null = null;
  private session: UiSession | null = null;
  private loop: RunLoop | null = null;
  private lastPolygon: PolygonJson | null = null;

  constructor(baseUrl: string) {
    this.client = new RefineClient(baseUrl);
    this.bind();
    this.resize();
  }

  private say(message: string): void {
    this.status.textContent = message;
  }

  private params(): Partial<EvolutionParams> {
    return {
      lambda: Number(el<HTMLInputElement>("param-lambda").value),
      c: Number(el<HTMLInputElement>("param-c").value),
      mu: Number(el<HTMLInputElement>("param-mu").value),
      balloon_threshold: Number(el<HTMLInputElement>("param-threshold").value),
    };
  }

  private bind(): void {
    el<HTMLInputElement>("map-file").addEventListener("change", (e) => {
      const file = (e.target as HTMLInputElement).files?.[0];
      if (file) void this.uploadMap(file);
    });
    this.canvas.addEventListener("click", (e) => {
      const rect = this.canvas.getBoundingClientRect();
      const point = this.transform.toImage({
        x: e.clientX - rect.left,
        y: e.clientY - rect.top,
      });
      const out = this.draft.addClick(point);
      if (out.kind === "warning") this.say(out.message);
      this.vertexCounter.textContent = String(this.draft.vertexCount);
      this.redraw();
    });
    this.canvas.addEventListener("dblclick", () => this.closeDraft());
    window.addEventListener("keydown", (e) => {
      if (e.key === "Enter") this.closeDraft();
      if (e.key === "Escape") {
        this.draft.cancel();
        this.vertexCounter.textContent = "0";
        this.say("polygon cancelled");
        this.redraw();
      }
    });
    el<HTMLButtonElement>("btn-create").addEventListener("click", () => void this.createSession());
    el<HTMLButtonElement>("btn-step-1").addEventListener("click", () => void this.loop?.step(1));
    el<HTMLButtonElement>("btn-step-10").addEventListener("click", () => void this.loop?.step(10));
    el<HTMLButtonElement>("btn-run").addEventListener("click", () => {
      const interval = Number(el<HTMLInputElement>("run-interval").value);
      void this.loop?.run(interval);
    });
    el<HTMLButtonElement>("btn-pause").addEventListener("click", () => this.loop?.pause());
    el<HTMLButtonElement>("btn-reset").addEventListener("click", () => void this.resetSession());
    el<HTMLInputElement>("overlay-opacity").addEventListener("input", () => this.redraw());
    for (const id of ["param-lambda", "param-c", "param-mu", "param-threshold"]) {
      // a slider change re-initializes the session with the new parameters
      el<HTMLInputElement>(id).addEventListener("change", () => void this.recreateWithParams());
    }
    window.addEventListener("resize", () => {
      this.resize();
      this.redraw();
    });
  }

  private resize(): void {
    this.canvas.width = this.canvas.clientWidth;
    this.canvas.height = this.canvas.clientHeight;
    if (this.image) {
      this.transform = ViewTransform.fit(
        this.image.width,
        this.image.height,
        this.canvas.width,
        this.canvas.height,
      );
    }
  }

  private async uploadMap(file: File): Promise<void> {
    const bytes = new Uint8Array(await file.arrayBuffer());
    this.mapId = await this.client.uploadMap(bytes);
    const stored = await this.client.fetchMap(this.mapId);
    const raster = decodeRaster(stored.bytes, stored.format);
    this.image = raster;
    this.overlay = raster.channels === 1 ? raster : null;
    this.session = null;
    this.resize();
    this.say(`map ${this.mapId} (${raster.width}x${raster.height})`);
    this.redraw();
  }

  private closeDraft(): void {
    const out = this.draft.close();
    if (out.kind === "warning") {
      this.say(out.message);
      return;
    }
    if (out.kind === "closed") {
      this.lastPolygon = out.polygon;
      this.vertexCounter.textContent = "0";
      this.say(`polygon ready (${out.polygon.vertices.length} clicks); create a session`);
      this.redraw();
    }
  }

  private applySession(resp: { session_id: string; step: number; contours: PolygonJson[]; params: EvolutionParams }): void {
    this.session = {
      id: resp.session_id,
      step: resp.step,
      contours: resp.contours,
      params: resp.params,
    };
    this.stepCounter.textContent = String(resp.step);
    this.loop = new RunLoop((n) => this.client.step(resp.session_id, n), {
      onUpdate: (r: StepResponse) => this.applyStep(r),
      onHalt: () => this.say("evolution halted (no change)"),
      onError: (e) => this.say(String(e)),
    });
    this.redraw();
  }

  private applyStep(r: StepResponse): void {
    if (!this.session) return;
    this.session.step = r.step;
    this.session.contours = r.contours;
    this.stepCounter.textContent = String(r.step);
    this.redraw();
  }

  private async createSession(): Promise<void> {
    if (!this.mapId || !this.lastPolygon) {
      this.say("upload a map and draw a closed polygon first");
      return;
    }
    const resp = await this.client.createSession(this.mapId, this.lastPolygon, this.params());
    this.applySession(resp);
    this.say(`session ${resp.session_id.slice(0, 8)} created`);
  }

  private async resetSession(): Promise<void> {
    if (!this.session || !this.lastPolygon) return;
    const resp = await this.client.reset(this.session.id, this.lastPolygon);
    this.applySession(resp);
    this.say("session reset");
  }

  private async recreateWithParams(): Promise<void> {
    if (!this.mapId || !this.lastPolygon || !this.session) return;
    const resp = await this.client.createSession(this.mapId, this.lastPolygon, this.params());
    this.applySession(resp);
    this.say("session re-created with new parameters");
  }

  private redraw(): void {
    this.ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image) {
      drawRaster(this.ctx, this.image, this.transform, null);
    }
    if (this.overlay) {
      const opacity = Number(el<HTMLInputElement>("overlay-opacity").value);
      if (opacity > 0) drawRaster(this.ctx, this.overlay, this.transform, opacity);
    }
    if (this.session) {
      drawContours(this.ctx, this.session.contours, this.transform);
    }
    drawDraft(this.ctx, this.draft.vertices, this.transform);
  }
}

const base = new URLSearchParams(window.location.search).get("service")
  ?? "http://127.0.0.1:8080";
new AnnotatorApp(base);
