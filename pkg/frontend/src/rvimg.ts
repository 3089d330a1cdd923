/** Binary codecs for the RVIMG1 range-image and RVPTS1 point-cloud formats.
 *
 * Both formats are little-endian. RVIMG1: magic "RVIMG1", u32 H, u32 W,
 * u32 channel count, f32 inclination bounds, length-prefixed UTF-8 channel
 * names (u32 lengths), per-channel H*W f32 grids in row-major order, then
 * the validity mask as packed bits (row-major, most significant bit first,
 * zero-padded to a byte). RVPTS1: magic "RVPTS1", u32 point count, u32
 * column count (4 or 5), then f32 rows of x, y, z, intensity[, elongation].
 */

import type { RangeImageData, RangeImageSpec } from "./types.js";

const RVIMG_MAGIC = "RVIMG1";
const RVPTS_MAGIC = "RVPTS1";

export class FormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FormatError";
  }
}

class Reader {
  private offset = 0;

  constructor(private readonly view: DataView, private readonly buf: Uint8Array) {}

  bytes(n: number, what: string): Uint8Array {
    if (this.offset + n > this.buf.length) {
      throw new FormatError(`truncated file while reading ${what}`);
    }
    const out = this.buf.subarray(this.offset, this.offset + n);
    this.offset += n;
    return out;
  }

  u32(what: string): number {
    if (this.offset + 4 > this.buf.length) {
      throw new FormatError(`truncated file while reading ${what}`);
    }
    const v = this.view.getUint32(this.offset, true);
    this.offset += 4;
    return v;
  }

  f32(what: string): number {
    if (this.offset + 4 > this.buf.length) {
      throw new FormatError(`truncated file while reading ${what}`);
    }
    const v = this.view.getFloat32(this.offset, true);
    this.offset += 4;
    return v;
  }
}

function expectMagic(r: Reader, magic: string): void {
  const raw = r.bytes(magic.length, "magic");
  if (new TextDecoder().decode(raw) !== magic) {
    throw new FormatError(`not an ${magic} file (bad magic)`);
  }
}

export function readRangeImage(data: Uint8Array): RangeImageData {
  const r = new Reader(new DataView(data.buffer, data.byteOffset, data.byteLength), data);
  expectMagic(r, RVIMG_MAGIC);
  const height = r.u32("height");
  const width = r.u32("width");
  const channelCount = r.u32("channel count");
  if (height < 1 || width < 1 || height * width > 1 << 28) {
    throw new FormatError(`implausible image shape ${height}x${width}`);
  }
  if (channelCount < 1 || channelCount > 1024) {
    throw new FormatError(`implausible channel count ${channelCount}`);
  }
  const inclinationMin = r.f32("inclination_min");
  const inclinationMax = r.f32("inclination_max");
  const names: string[] = [];
  for (let i = 0; i < channelCount; i++) {
    const len = r.u32(`channel ${i} name length`);
    if (len > 4096) throw new FormatError(`implausible channel name length ${len}`);
    names.push(new TextDecoder("utf-8", { fatal: true }).decode(r.bytes(len, "channel name")));
  }

  const channels: Record<string, number[][]> = {};
  for (const name of names) {
    const raw = r.bytes(4 * height * width, `channel ${name} data`);
    const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
    const grid: number[][] = [];
    let k = 0;
    for (let row = 0; row < height; row++) {
      const line = new Array<number>(width);
      for (let col = 0; col < width; col++, k += 4) {
        line[col] = view.getFloat32(k, true);
      }
      grid.push(line);
    }
    channels[name] = grid;
  }

  const maskBytes = r.bytes(Math.ceil((height * width) / 8), "validity mask");
  const valid: boolean[][] = [];
  for (let row = 0; row < height; row++) {
    const line = new Array<boolean>(width);
    for (let col = 0; col < width; col++) {
      const bit = row * width + col;
      line[col] = ((maskBytes[bit >> 3]! >> (7 - (bit & 7))) & 1) === 1;
    }
    valid.push(line);
  }

  const spec: RangeImageSpec = {
    height,
    width,
    inclination_min: inclinationMin,
    inclination_max: inclinationMax,
    channels: names,
  };
  return { spec, channels, valid, dropped_points: 0 };
}

export function writeRangeImage(image: RangeImageData): Uint8Array {
  const { spec } = image;
  const pixels = spec.height * spec.width;
  const nameBytes = spec.channels.map((n) => new TextEncoder().encode(n));
  const size =
    RVIMG_MAGIC.length +
    12 +
    8 +
    nameBytes.reduce((acc, b) => acc + 4 + b.length, 0) +
    4 * pixels * spec.channels.length +
    Math.ceil(pixels / 8);
  const out = new Uint8Array(size);
  const view = new DataView(out.buffer);
  let o = 0;
  out.set(new TextEncoder().encode(RVIMG_MAGIC), o);
  o += RVIMG_MAGIC.length;
  view.setUint32(o, spec.height, true);
  view.setUint32(o + 4, spec.width, true);
  view.setUint32(o + 8, spec.channels.length, true);
  o += 12;
  view.setFloat32(o, spec.inclination_min, true);
  view.setFloat32(o + 4, spec.inclination_max, true);
  o += 8;
  for (const raw of nameBytes) {
    view.setUint32(o, raw.length, true);
    o += 4;
    out.set(raw, o);
    o += raw.length;
  }
  for (const name of spec.channels) {
    const grid = image.channels[name];
    if (!grid) throw new FormatError(`image is missing channel ${name}`);
    for (let row = 0; row < spec.height; row++) {
      for (let col = 0; col < spec.width; col++, o += 4) {
        view.setFloat32(o, grid[row]![col]!, true);
      }
    }
  }
  for (let bit = 0; bit < pixels; bit++) {
    const row = Math.floor(bit / spec.width);
    const col = bit % spec.width;
    if (image.valid[row]![col]!) {
      const idx = o + (bit >> 3);
      out[idx] = out[idx]! | (1 << (7 - (bit & 7)));
    }
  }
  return out;
}

/** Point rows of x, y, z, intensity[, elongation]. */
export function readPoints(data: Uint8Array): number[][] {
  const r = new Reader(new DataView(data.buffer, data.byteOffset, data.byteLength), data);
  expectMagic(r, RVPTS_MAGIC);
  const count = r.u32("point count");
  const cols = r.u32("column count");
  if (cols !== 4 && cols !== 5) {
    throw new FormatError(`point files carry 4 or 5 columns, got ${cols}`);
  }
  const raw = r.bytes(4 * count * cols, "point data");
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const out: number[][] = [];
  let k = 0;
  for (let i = 0; i < count; i++) {
    const row = new Array<number>(cols);
    for (let j = 0; j < cols; j++, k += 4) {
      row[j] = view.getFloat32(k, true);
    }
    out.push(row);
  }
  return out;
}

export function writePoints(points: number[][]): Uint8Array {
  const cols = points.length > 0 ? points[0]!.length : 4;
  if (cols !== 4 && cols !== 5) {
    throw new FormatError("point rows must have 4 or 5 columns");
  }
  const out = new Uint8Array(RVPTS_MAGIC.length + 8 + 4 * points.length * cols);
  const view = new DataView(out.buffer);
  out.set(new TextEncoder().encode(RVPTS_MAGIC), 0);
  view.setUint32(RVPTS_MAGIC.length, points.length, true);
  view.setUint32(RVPTS_MAGIC.length + 4, cols, true);
  let o = RVPTS_MAGIC.length + 8;
  for (const row of points) {
    if (row.length !== cols) throw new FormatError("inconsistent column count");
    for (const v of row) {
      view.setFloat32(o, v, true);
      o += 4;
    }
  }
  return out;
}
