/** Canvas drawing for the annotation stage: image layer, probability heat
 * overlay, the polygon being drawn, and server-reported contours. */

import { PolygonJson } from "./api.js";
import { heatRgba, Raster, rasterToRgba } from "./decoders.js";
import { Point, projectContours, ViewTransform } from "./geometry.js";

export function drawRaster(
  ctx: CanvasRenderingContext2D,
  raster: Raster,
  transform: ViewTransform,
  opacity: number | null,
): void {
  const rgba = opacity === null ? rasterToRgba(raster) : heatRgba(raster, opacity);
  const image = new ImageData(raster.width, raster.height);
  image.data.set(rgba);
  const buffer = document.createElement("canvas");
  buffer.width = raster.width;
  buffer.height = raster.height;
  buffer.getContext("2d")!.putImageData(image, 0, 0);
  ctx.save();
  ctx.imageSmoothingEnabled = false;
  ctx.setTransform(transform.scale, 0, 0, transform.scale, transform.offsetX, transform.offsetY);
  ctx.drawImage(buffer, 0, 0);
  ctx.restore();
}

function tracePath(ctx: CanvasRenderingContext2D, points: Point[], close: boolean): void {
  ctx.beginPath();
  points.forEach((p, i) => (i === 0 ? ctx.moveTo(p.x, p.y) : ctx.lineTo(p.x, p.y)));
  if (close) ctx.closePath();
}

/** Draw the server contours and return the exact screen-space vertices used,
 * so tests can hold the rendered geometry against the transform. */
export function drawContours(
  ctx: CanvasRenderingContext2D,
  contours: PolygonJson[],
  transform: ViewTransform,
): Point[][] {
  const projected = projectContours(contours, transform);
  ctx.save();
  ctx.strokeStyle = "#1ec9ff";
  ctx.lineWidth = 2;
  for (const points of projected) {
    tracePath(ctx, points, true);
    ctx.stroke();
  }
  ctx.restore();
  return projected;
}

export function drawDraft(
  ctx: CanvasRenderingContext2D,
  vertices: readonly Point[],
  transform: ViewTransform,
): void {
  if (vertices.length === 0) return;
  const pts = vertices.map((p) => transform.toScreen(p));
  ctx.save();
  ctx.strokeStyle = "#ffd21e";
  ctx.fillStyle = "#ffd21e";
  ctx.lineWidth = 1.5;
  tracePath(ctx, pts, false);
  ctx.stroke();
  for (const p of pts) {
    ctx.beginPath();
    ctx.arc(p.x, p.y, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.restore();
}
