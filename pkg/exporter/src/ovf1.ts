/** OVF1 matrix dumps: 16-byte header {magic "OVF1", u32 rows, u32
 * cols, u32 reserved=0} + row-major little-endian f32 payload. */

export interface Matrix {
  rows: number;
  cols: number;
  data: Float32Array;
}

export function buildOvf1(m: Matrix): Buffer {
  if (m.data.length !== m.rows * m.cols) {
    throw new Error(
      `payload ${m.data.length} != ${m.rows}x${m.cols}`);
  }
  const out = Buffer.alloc(16 + 4 * m.data.length);
  out.write("OVF1", 0, "latin1");
  out.writeUInt32LE(m.rows, 4);
  out.writeUInt32LE(m.cols, 8);
  out.writeUInt32LE(0, 12);
  for (let i = 0; i < m.data.length; i++) {
    out.writeFloatLE(m.data[i], 16 + 4 * i);
  }
  return out;
}

export function parseOvf1(buf: Buffer): Matrix {
  if (buf.length < 16 || buf.subarray(0, 4).toString("latin1") !== "OVF1") {
    throw new Error("not an OVF1 matrix dump");
  }
  const rows = buf.readUInt32LE(4);
  const cols = buf.readUInt32LE(8);
  if (buf.length !== 16 + 4 * rows * cols) {
    throw new Error("OVF1 payload length mismatch");
  }
  const data = new Float32Array(rows * cols);
  for (let i = 0; i < data.length; i++) {
    data[i] = buf.readFloatLE(16 + 4 * i);
  }
  return { rows, cols, data };
}
