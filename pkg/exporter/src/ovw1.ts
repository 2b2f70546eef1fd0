/** OVW1 weight container writer/reader.
 *
 * Layout (little-endian): magic "OVW1", u32 version=1, u32 tensor
 * count, per tensor {u16 name length, UTF-8 name, u8 dtype (0 = f32,
 * 1 = raw bytes), u8 ndim, ndim x u32 dims, row-major payload}, then
 * u32 CRC32 over all preceding bytes. The "__config__" raw tensor
 * carries the model configuration JSON.
 */

import { crc32 } from "./crc32";
import { Tensor } from "./npy";

export const CONFIG_TENSOR = "__config__";

export interface OvwTensor {
  name: string;
  tensor?: Tensor;
  raw?: Buffer;
}

export function buildOvw1(tensors: OvwTensor[]): Buffer {
  const parts: Buffer[] = [];
  const head = Buffer.alloc(12);
  head.write("OVW1", 0, "latin1");
  head.writeUInt32LE(1, 4);
  head.writeUInt32LE(tensors.length, 8);
  parts.push(head);
  for (const { name, tensor, raw } of tensors) {
    const nameBuf = Buffer.from(name, "utf8");
    const prefix = Buffer.alloc(2 + nameBuf.length + 2);
    prefix.writeUInt16LE(nameBuf.length, 0);
    nameBuf.copy(prefix, 2);
    if (raw !== undefined) {
      prefix.writeUInt8(1, 2 + nameBuf.length); // dtype raw
      prefix.writeUInt8(1, 3 + nameBuf.length); // ndim
      const dims = Buffer.alloc(4);
      dims.writeUInt32LE(raw.length, 0);
      parts.push(prefix, dims, raw);
    } else if (tensor !== undefined) {
      prefix.writeUInt8(0, 2 + nameBuf.length); // dtype f32
      prefix.writeUInt8(tensor.shape.length, 3 + nameBuf.length);
      const dims = Buffer.alloc(4 * tensor.shape.length);
      tensor.shape.forEach((d, i) => dims.writeUInt32LE(d, 4 * i));
      const payload = Buffer.alloc(4 * tensor.data.length);
      for (let i = 0; i < tensor.data.length; i++) {
        payload.writeFloatLE(tensor.data[i], 4 * i);
      }
      parts.push(prefix, dims, payload);
    } else {
      throw new Error(`tensor ${name}: neither data nor raw bytes`);
    }
  }
  const body = Buffer.concat(parts);
  const trailer = Buffer.alloc(4);
  trailer.writeUInt32LE(crc32(body), 0);
  return Buffer.concat([body, trailer]);
}

export interface OvwFile {
  config: string;
  tensors: Map<string, Tensor>;
  layout: string[];
}

export function parseOvw1(buf: Buffer): OvwFile {
  if (buf.length < 16 || buf.subarray(0, 4).toString("latin1") !== "OVW1") {
    throw new Error("not an OVW1 file");
  }
  const stored = buf.readUInt32LE(buf.length - 4);
  const actual = crc32(buf.subarray(0, buf.length - 4));
  if (stored !== actual) throw new Error("OVW1 CRC mismatch");
  const version = buf.readUInt32LE(4);
  if (version !== 1) throw new Error(`unsupported OVW1 version ${version}`);
  const count = buf.readUInt32LE(8);
  let pos = 12;
  let config = "";
  const tensors = new Map<string, Tensor>();
  const layout: string[] = [];
  for (let i = 0; i < count; i++) {
    const nameLen = buf.readUInt16LE(pos);
    const name = buf.subarray(pos + 2, pos + 2 + nameLen).toString("utf8");
    pos += 2 + nameLen;
    const dtype = buf.readUInt8(pos);
    const ndim = buf.readUInt8(pos + 1);
    pos += 2;
    const dims: number[] = [];
    for (let d = 0; d < ndim; d++) {
      dims.push(buf.readUInt32LE(pos));
      pos += 4;
    }
    const countElems = dims.reduce((a, b) => a * b, 1);
    if (dtype === 1) {
      config = buf.subarray(pos, pos + countElems).toString("utf8");
      pos += countElems;
    } else if (dtype === 0) {
      const data = new Float32Array(countElems);
      for (let e = 0; e < countElems; e++) {
        data[e] = buf.readFloatLE(pos + 4 * e);
      }
      pos += 4 * countElems;
      tensors.set(name, { shape: dims, data });
    } else {
      throw new Error(`tensor ${name}: unknown dtype ${dtype}`);
    }
    layout.push(name);
  }
  return { config, tensors, layout };
}
