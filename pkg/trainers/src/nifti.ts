/**
 * Minimal NIfTI-1 reader: single-file .nii or .nii.gz volumes, the handful
 * of datatypes brain exports actually use, and scl_slope/scl_inter scaling.
 * Axial slices are taken along the third dimension (dim[3]).
 */

import * as fs from "node:fs";
import * as zlib from "node:zlib";

export interface Volume {
  dims: [number, number, number]; // nx, ny, nz
  voxels: Float32Array; // x fastest, then y, then z (NIfTI order)
}

const NIFTI1_HEADER_BYTES = 348;

const DATATYPES: Record<number, { bytes: number; read: (b: Buffer, off: number) => number }> = {
  2: { bytes: 1, read: (b, o) => b.readUInt8(o) }, // uint8
  4: { bytes: 2, read: (b, o) => b.readInt16LE(o) }, // int16
  8: { bytes: 4, read: (b, o) => b.readInt32LE(o) }, // int32
  16: { bytes: 4, read: (b, o) => b.readFloatLE(o) }, // float32
  64: { bytes: 8, read: (b, o) => b.readDoubleLE(o) }, // float64
  512: { bytes: 2, read: (b, o) => b.readUInt16LE(o) }, // uint16
};

export function readNifti(file: string): Volume {
  let buf = fs.readFileSync(file);
  if (file.endsWith(".gz") || (buf.length >= 2 && buf[0] === 0x1f && buf[1] === 0x8b)) {
    buf = zlib.gunzipSync(buf);
  }
  if (buf.length < NIFTI1_HEADER_BYTES) {
    throw new Error(`${file}: too short for a NIfTI-1 header`);
  }
  const sizeofHdr = buf.readInt32LE(0);
  if (sizeofHdr !== NIFTI1_HEADER_BYTES) {
    throw new Error(`${file}: not a little-endian NIfTI-1 file (sizeof_hdr=${sizeofHdr})`);
  }
  const magic = buf.toString("ascii", 344, 347);
  if (magic !== "n+1" && magic !== "ni1") {
    throw new Error(`${file}: bad NIfTI magic ${JSON.stringify(magic)}`);
  }
  if (magic === "ni1") {
    throw new Error(`${file}: detached .hdr/.img pairs are not supported`);
  }
  const ndim = buf.readInt16LE(40);
  if (ndim < 3) {
    throw new Error(`${file}: expected a 3D volume, header says dim=${ndim}`);
  }
  const nx = buf.readInt16LE(42);
  const ny = buf.readInt16LE(44);
  const nz = buf.readInt16LE(46);
  for (let d = 4; d <= ndim; d++) {
    const extent = buf.readInt16LE(40 + 2 * d);
    if (extent > 1) {
      throw new Error(`${file}: 4D+ volumes are not supported (dim[${d}]=${extent})`);
    }
  }
  const datatype = buf.readInt16LE(70);
  const spec = DATATYPES[datatype];
  if (!spec) {
    throw new Error(`${file}: unsupported NIfTI datatype ${datatype}`);
  }
  let sclSlope = buf.readFloatLE(112);
  const sclInter = buf.readFloatLE(116);
  if (!Number.isFinite(sclSlope) || sclSlope === 0) sclSlope = 1;
  const voxOffset = buf.readFloatLE(108);
  const offset = Math.max(NIFTI1_HEADER_BYTES, Math.round(voxOffset));
  const count = nx * ny * nz;
  if (buf.length < offset + count * spec.bytes) {
    throw new Error(`${file}: voxel payload truncated`);
  }
  const voxels = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    voxels[i] = spec.read(buf, offset + i * spec.bytes) * sclSlope + sclInter;
  }
  return { dims: [nx, ny, nz], voxels };
}

/** Extract the axial slice at index z as a row-major (ny x nx) image. */
export function axialSlice(volume: Volume, z: number): { height: number; width: number; pixels: Float32Array } {
  const [nx, ny, nz] = volume.dims;
  if (z < 0 || z >= nz) throw new Error(`slice index ${z} out of range 0..${nz - 1}`);
  const pixels = new Float32Array(nx * ny);
  const zBase = z * nx * ny;
  for (let y = 0; y < ny; y++) {
    for (let x = 0; x < nx; x++) {
      pixels[y * nx + x] = volume.voxels[zBase + y * nx + x];
    }
  }
  return { height: ny, width: nx, pixels };
}

/** Build a single-file NIfTI-1 buffer; used by tests and fixtures. */
export function buildNifti(volume: Volume, datatype: 16 | 2 = 16): Buffer {
  const [nx, ny, nz] = volume.dims;
  const bytesPer = datatype === 16 ? 4 : 1;
  const buf = Buffer.alloc(352 + volume.voxels.length * bytesPer);
  buf.writeInt32LE(NIFTI1_HEADER_BYTES, 0);
  buf.writeInt16LE(3, 40); // ndim
  buf.writeInt16LE(nx, 42);
  buf.writeInt16LE(ny, 44);
  buf.writeInt16LE(nz, 46);
  buf.writeInt16LE(1, 48);
  buf.writeInt16LE(datatype, 70);
  buf.writeInt16LE(8 * bytesPer, 72); // bitpix
  buf.writeFloatLE(352, 108); // vox_offset
  buf.writeFloatLE(datatype === 2 ? 1 / 255 : 1, 112); // scl_slope recovers [0,1]
  buf.writeFloatLE(0, 116); // scl_inter
  buf.write("n+1\0", 344, 4, "ascii");
  for (let i = 0; i < volume.voxels.length; i++) {
    if (datatype === 16) buf.writeFloatLE(volume.voxels[i], 352 + 4 * i);
    else buf.writeUInt8(Math.round(volume.voxels[i] * 255), 352 + i);
  }
  return buf;
}
