/** View transform and polygon drafting, kept DOM-free so they are testable. */

import type { PolygonJson } from "./api.js";

export interface Point {
  x: number;
  y: number;
}

/** Maps image pixel-center coordinates to screen coordinates (zoom + pan).
 * Contours arrive from the server in image coordinates; rendering applies
 * exactly this transform and nothing else. */
export class ViewTransform {
  constructor(
    public scale = 1,
    public offsetX = 0,
    public offsetY = 0,
  ) {}

  toScreen(p: Point): Point {
    return { x: p.x * this.scale + this.offsetX, y: p.y * this.scale + this.offsetY };
  }

  toImage(p: Point): Point {
    return { x: (p.x - this.offsetX) / this.scale, y: (p.y - this.offsetY) / this.scale };
  }

  /** Fit a width x height image into the given viewport, centered. */
  static fit(width: number, height: number, viewW: number, viewH: number): ViewTransform {
    const scale = Math.min(viewW / width, viewH / height);
    return new ViewTransform(
      scale,
      (viewW - width * scale) / 2,
      (viewH - height * scale) / 2,
    );
  }
}

export type DraftEvent =
  | { kind: "vertex"; point: Point }
  | { kind: "closed"; polygon: PolygonJson }
  | { kind: "cancelled" }
  | { kind: "warning"; message: string };

/** Click-to-vertex polygon drafting: click adds a vertex, Enter or
 * double-click closes, Escape cancels. Closing with fewer than 3 vertices
 * only warns and keeps the draft open. */
export class PolygonDraft {
  private points: Point[] = [];

  get vertexCount(): number {
    return this.points.length;
  }

  get vertices(): readonly Point[] {
    return this.points;
  }

  get active(): boolean {
    return this.points.length > 0;
  }

  addClick(p: Point): DraftEvent {
    const last = this.points[this.points.length - 1];
    if (last !== undefined && last.x === p.x && last.y === p.y) {
      return { kind: "warning", message: "duplicate vertex ignored" };
    }
    this.points.push({ x: p.x, y: p.y });
    return { kind: "vertex", point: p };
  }

  close(): DraftEvent {
    if (this.points.length < 3) {
      return { kind: "warning", message: "a polygon needs at least 3 vertices" };
    }
    const polygon: PolygonJson = {
      closed: true,
      vertices: this.points.map((p) => [p.x, p.y] as [number, number]),
    };
    this.points = [];
    return { kind: "closed", polygon };
  }

  cancel(): DraftEvent {
    this.points = [];
    return { kind: "cancelled" };
  }
}

/** Screen-space vertex lists for a set of contours under a transform; this is
 * exactly what the contour layer draws. */
export function projectContours(
  contours: PolygonJson[],
  transform: ViewTransform,
): Point[][] {
  return contours.map((c) =>
    c.vertices.map(([x, y]) => transform.toScreen({ x, y })),
  );
}
