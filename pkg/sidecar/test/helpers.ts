import { Clip } from '../src/rfv1.js';

/** Encode frames into an RFV1 buffer (test-side writer). */
export function encodeRfv1(clip: Clip): Buffer {
  const frameBytes = clip.width * clip.height * 3;
  const out = Buffer.alloc(20 + frameBytes * clip.frameCount);
  out.write('RFV1', 0, 'ascii');
  out.writeUInt32LE(clip.width, 4);
  out.writeUInt32LE(clip.height, 8);
  out.writeUInt32LE(clip.frameCount, 12);
  out.writeFloatLE(clip.fps, 16);
  clip.frames.forEach((frame, i) => {
    out.set(frame, 20 + i * frameBytes);
  });
  return out;
}

export function solidFrame(width: number, height: number, rgb: [number, number, number]): Uint8Array {
  const frame = new Uint8Array(width * height * 3);
  for (let p = 0; p < frame.length; p += 3) {
    frame[p] = rgb[0];
    frame[p + 1] = rgb[1];
    frame[p + 2] = rgb[2];
  }
  return frame;
}

/** Deterministic xorshift texture; integer pixels, no dependency on seeds elsewhere. */
export function noiseFrame(width: number, height: number, seed: number): Uint8Array {
  const frame = new Uint8Array(width * height * 3);
  let state = seed >>> 0 || 1;
  for (let i = 0; i < frame.length; i++) {
    state ^= state << 13;
    state >>>= 0;
    state ^= state >> 17;
    state ^= state << 5;
    state >>>= 0;
    frame[i] = state & 0xff;
  }
  return frame;
}

/** Roll a frame by (dx, dy) pixels on the torus. */
export function rollFrame(
  frame: Uint8Array,
  width: number,
  height: number,
  dx: number,
  dy: number,
): Uint8Array {
  const out = new Uint8Array(frame.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const sy = (((y - dy) % height) + height) % height;
      const sx = (((x - dx) % width) + width) % width;
      for (let c = 0; c < 3; c++) {
        out[(y * width + x) * 3 + c] = frame[(sy * width + sx) * 3 + c];
      }
    }
  }
  return out;
}

export function makeClip(width: number, height: number, frames: Uint8Array[], fps = 8): Clip {
  return { width, height, frameCount: frames.length, fps, frames };
}
