/** Client-side decoders for the service's raster formats (PGM/PPM/FPM1), so
 * the canvas can display whatever bytes the map store returns. */

export interface Raster {
  width: number;
  height: number;
  channels: number;
  /** channel-major, row-major, values in [0, 1] */
  data: Float32Array;
}

function headerTokens(bytes: Uint8Array, start: number, count: number): { tokens: string[]; end: number } {
  const tokens: string[] = [];
  let i = start;
  while (tokens.length < count) {
    while (i < bytes.length && /\s/.test(String.fromCharCode(bytes[i]))) i++;
    if (bytes[i] === 0x23) {
      // comment until newline
      while (i < bytes.length && bytes[i] !== 0x0a) i++;
      continue;
    }
    let j = i;
    while (j < bytes.length && !/\s/.test(String.fromCharCode(bytes[j]))) j++;
    if (j === i) throw new Error("truncated netpbm header");
    tokens.push(new TextDecoder().decode(bytes.slice(i, j)));
    i = j;
  }
  return { tokens, end: i + 1 };
}

export function decodePgm(bytes: Uint8Array): Raster {
  if (bytes[0] !== 0x50 || bytes[1] !== 0x35) throw new Error("not a P5 PGM");
  const { tokens, end } = headerTokens(bytes, 2, 3);
  const [width, height, maxval] = tokens.map(Number);
  const data = new Float32Array(width * height);
  for (let i = 0; i < width * height; i++) data[i] = bytes[end + i] / maxval;
  return { width, height, channels: 1, data };
}

export function decodePpm(bytes: Uint8Array): Raster {
  if (bytes[0] !== 0x50 || bytes[1] !== 0x36) throw new Error("not a P6 PPM");
  const { tokens, end } = headerTokens(bytes, 2, 3);
  const [width, height, maxval] = tokens.map(Number);
  const n = width * height;
  const data = new Float32Array(3 * n);
  for (let i = 0; i < n; i++) {
    data[i] = bytes[end + 3 * i] / maxval;
    data[n + i] = bytes[end + 3 * i + 1] / maxval;
    data[2 * n + i] = bytes[end + 3 * i + 2] / maxval;
  }
  return { width, height, channels: 3, data };
}

export function decodeFpm(bytes: Uint8Array): Raster {
  const magic = new TextDecoder().decode(bytes.slice(0, 5));
  if (magic !== "FPM1\n") throw new Error("not an FPM1 raster");
  let nl = 5;
  while (nl < bytes.length && bytes[nl] !== 0x0a) nl++;
  const dims = new TextDecoder().decode(bytes.slice(5, nl)).trim().split(/\s+/).map(Number);
  if (dims.length !== 3 || dims.some((d) => !Number.isInteger(d) || d < 1)) {
    throw new Error("bad FPM1 dimensions");
  }
  const [width, height, channels] = dims;
  const count = width * height * channels;
  const view = new DataView(bytes.buffer, bytes.byteOffset + nl + 1);
  if (view.byteLength < 4 * count) throw new Error("truncated FPM1 payload");
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = Math.min(1, Math.max(0, view.getFloat32(4 * i, true)));
  }
  return { width, height, channels, data };
}

export function decodeRaster(bytes: Uint8Array, format: string): Raster {
  if (format === "pgm") return decodePgm(bytes);
  if (format === "ppm") return decodePpm(bytes);
  if (format === "fpm") return decodeFpm(bytes);
  // fall back to sniffing
  if (bytes[0] === 0x50 && bytes[1] === 0x35) return decodePgm(bytes);
  if (bytes[0] === 0x50 && bytes[1] === 0x36) return decodePpm(bytes);
  return decodeFpm(bytes);
}

/** Grayscale/RGB raster as RGBA bytes for a canvas ImageData buffer. */
export function rasterToRgba(r: Raster): Uint8ClampedArray {
  const n = r.width * r.height;
  const out = new Uint8ClampedArray(4 * n);
  for (let i = 0; i < n; i++) {
    const red = r.data[i];
    const green = r.channels >= 3 ? r.data[n + i] : red;
    const blue = r.channels >= 3 ? r.data[2 * n + i] : red;
    out[4 * i] = red * 255;
    out[4 * i + 1] = green * 255;
    out[4 * i + 2] = blue * 255;
    out[4 * i + 3] = 255;
  }
  return out;
}

/** Probability channel as a translucent heat layer (alpha follows value). */
export function heatRgba(r: Raster, opacity: number): Uint8ClampedArray {
  const n = r.width * r.height;
  const out = new Uint8ClampedArray(4 * n);
  for (let i = 0; i < n; i++) {
    const v = r.data[i];
    out[4 * i] = 255;
    out[4 * i + 1] = 64 + 128 * (1 - v);
    out[4 * i + 2] = 0;
    out[4 * i + 3] = 255 * v * opacity;
  }
  return out;
}
