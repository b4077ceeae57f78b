/**
 * RFV1 raw-frame file reading and the engine's default frame sampling.
 *
 * Layout: bytes 0-3 ASCII "RFV1"; 4-7 width (u32 LE); 8-11 height;
 * 12-15 frame count; 16-19 fps (f32 LE); then frame_count rasters of
 * width*height*3 bytes, interleaved RGB, row-major.
 */

import { readFileSync } from 'node:fs';

export interface Clip {
  width: number;
  height: number;
  frameCount: number;
  fps: number;
  /** One Uint8Array of width*height*3 bytes per frame. */
  frames: Uint8Array[];
}

const HEADER_SIZE = 20;
const MAGIC = 'RFV1';

export function decodeRfv1(data: Buffer): Clip {
  if (data.length < HEADER_SIZE) {
    throw new Error(`truncated RFV1 header (${data.length} bytes)`);
  }
  const magic = data.toString('ascii', 0, 4);
  if (magic !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(magic)}, expected "RFV1"`);
  }
  const width = data.readUInt32LE(4);
  const height = data.readUInt32LE(8);
  const frameCount = data.readUInt32LE(12);
  const fps = data.readFloatLE(16);
  if (width < 1 || height < 1 || frameCount < 1 || !(fps > 0)) {
    throw new Error(`invalid RFV1 header ${width}x${height}x${frameCount}@${fps}`);
  }
  const frameBytes = width * height * 3;
  const expected = HEADER_SIZE + frameBytes * frameCount;
  if (data.length !== expected) {
    throw new Error(
      `truncated payload, expected ${expected - HEADER_SIZE} bytes, got ${data.length - HEADER_SIZE}`,
    );
  }
  const frames: Uint8Array[] = [];
  for (let i = 0; i < frameCount; i++) {
    const start = HEADER_SIZE + i * frameBytes;
    frames.push(new Uint8Array(data.subarray(start, start + frameBytes)));
  }
  return { width, height, frameCount, fps, frames };
}

export function readRfv1(path: string): Clip {
  return decodeRfv1(readFileSync(path));
}

/** Default sampling: stride max(1, floor(n/64)), capped at 64 frames. */
export function sampleFrames(clip: Clip, maxFrames = 64): Clip {
  const stride = Math.max(1, Math.floor(clip.frameCount / maxFrames));
  const frames: Uint8Array[] = [];
  for (let i = 0; i < clip.frameCount && frames.length < maxFrames; i += stride) {
    frames.push(clip.frames[i]);
  }
  return { ...clip, frameCount: frames.length, frames };
}
