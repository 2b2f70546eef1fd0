/** Minimal NPY (numpy array file) reader/writer.
 *
 * Supports versions 1.0/2.0, C-ordered little-endian float32/float64
 * payloads, which covers what training checkpoints store. Everything
 * is surfaced as float32.
 */

export interface Tensor {
  shape: number[];
  data: Float32Array;
}

const MAGIC = Buffer.from("\x93NUMPY", "latin1");

export function parseNpy(buf: Buffer): Tensor {
  if (buf.length < 10 || !buf.subarray(0, 6).equals(MAGIC)) {
    throw new Error("not an NPY array (bad magic)");
  }
  const major = buf[6];
  let headerLen: number;
  let offset: number;
  if (major === 1) {
    headerLen = buf.readUInt16LE(8);
    offset = 10;
  } else if (major === 2) {
    headerLen = buf.readUInt32LE(8);
    offset = 12;
  } else {
    throw new Error(`unsupported NPY version ${major}`);
  }
  const header = buf.subarray(offset, offset + headerLen).toString("latin1");
  const descr = /'descr'\s*:\s*'([^']+)'/.exec(header)?.[1];
  const fortran = /'fortran_order'\s*:\s*(True|False)/.exec(header)?.[1];
  const shapeText = /'shape'\s*:\s*\(([^)]*)\)/.exec(header)?.[1];
  if (!descr || !fortran || shapeText === undefined) {
    throw new Error(`malformed NPY header: ${header.trim()}`);
  }
  if (fortran === "True") {
    throw new Error("Fortran-ordered NPY arrays are not supported");
  }
  const shape = shapeText
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => parseInt(s, 10));
  const count = shape.reduce((a, b) => a * b, 1);
  const payload = buf.subarray(offset + headerLen);
  let data: Float32Array;
  if (descr === "<f4") {
    if (payload.length < 4 * count) throw new Error("truncated NPY payload");
    data = new Float32Array(count);
    for (let i = 0; i < count; i++) data[i] = payload.readFloatLE(4 * i);
  } else if (descr === "<f8") {
    if (payload.length < 8 * count) throw new Error("truncated NPY payload");
    data = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      data[i] = Math.fround(payload.readDoubleLE(8 * i));
    }
  } else {
    throw new Error(`unsupported NPY dtype ${descr} (need <f4 or <f8)`);
  }
  return { shape, data };
}

export function buildNpy(tensor: Tensor): Buffer {
  const shapeText =
    tensor.shape.length === 1
      ? `(${tensor.shape[0]},)`
      : `(${tensor.shape.join(", ")})`;
  let header =
    `{'descr': '<f4', 'fortran_order': False, 'shape': ${shapeText}, }`;
  const unpadded = MAGIC.length + 4 + header.length + 1;
  const pad = (64 - (unpadded % 64)) % 64;
  header = header + " ".repeat(pad) + "\n";
  const head = Buffer.alloc(MAGIC.length + 4 + header.length);
  MAGIC.copy(head, 0);
  head[6] = 1;
  head[7] = 0;
  head.writeUInt16LE(header.length, 8);
  head.write(header, 10, "latin1");
  const payload = Buffer.alloc(4 * tensor.data.length);
  for (let i = 0; i < tensor.data.length; i++) {
    payload.writeFloatLE(tensor.data[i], 4 * i);
  }
  return Buffer.concat([head, payload]);
}
