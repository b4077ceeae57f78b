/**
 * Loopback scorers: deterministic re-implementations of the engine's
 * reference metrics, for conformance testing without model weights.
 *
 * Pixel-level math mirrors the engine exactly: fixed-point Rec.601 luma,
 * 8x8x8 color histograms, area-resampled 16x16 luma grids, exhaustive
 * +/-8 px SAD block matching, and Laplacian variance over interior pixels.
 */

import { Clip, sampleFrames } from './rfv1.js';

const HIST_SIZE = 512;
const LUMA_GRID = 16;
const MOTION_BLOCK = 16;
const MOTION_RADIUS = 8;
const MOTION_MAX_DIM = 256;

export type MetricName = 'aesthetics' | 'temporal_consistency' | 'motion' | 'clarity';

export const METRIC_NAMES: MetricName[] = [
  'aesthetics',
  'temporal_consistency',
  'motion',
  'clarity',
];

/** Integer Rec.601 luma per pixel: (77R + 150G + 29B) >> 8. */
export function lumaPlane(frame: Uint8Array, width: number, height: number): Int32Array {
  const out = new Int32Array(width * height);
  for (let i = 0, p = 0; i < out.length; i++, p += 3) {
    out[i] = (77 * frame[p] + 150 * frame[p + 1] + 29 * frame[p + 2]) >> 8;
  }
  return out;
}

export function colorHistogram(frame: Uint8Array): Float64Array {
  const hist = new Float64Array(HIST_SIZE);
  const pixels = frame.length / 3;
  for (let p = 0; p < frame.length; p += 3) {
    hist[((frame[p] >> 5) << 6) | ((frame[p + 1] >> 5) << 3) | (frame[p + 2] >> 5)] += 1;
  }
  for (let i = 0; i < HIST_SIZE; i++) hist[i] /= pixels;
  return hist;
}

/** Exact area-overlap resampling weights; each output row sums to 1. */
function areaWeights(nOut: number, nIn: number): Float64Array[] {
  const rows: Float64Array[] = [];
  for (let i = 0; i < nOut; i++) {
    const row = new Float64Array(nIn);
    const lo = (i * nIn) / nOut;
    const hi = ((i + 1) * nIn) / nOut;
    for (let r = Math.floor(lo); r < Math.min(nIn, Math.ceil(hi)); r++) {
      const overlap = Math.min(hi, r + 1) - Math.max(lo, r);
      if (overlap > 0) row[r] = (overlap * nOut) / nIn;
    }
    rows.push(row);
  }
  return rows;
}

/** L2-normalized 16x16 area-downsampled luma; zero vector when all-black. */
export function lumaGrid(
  luma: Int32Array,
  width: number,
  height: number,
): { grid: Float64Array; degenerate: boolean } {
  const wr = areaWeights(LUMA_GRID, height);
  const wc = areaWeights(LUMA_GRID, width);
  // rows = wr @ luma, shape (16, width)
  const rows = new Float64Array(LUMA_GRID * width);
  for (let i = 0; i < LUMA_GRID; i++) {
    const weights = wr[i];
    for (let y = 0; y < height; y++) {
      const w = weights[y];
      if (w === 0) continue;
      for (let x = 0; x < width; x++) {
        rows[i * width + x] += w * luma[y * width + x];
      }
    }
  }
  const grid = new Float64Array(LUMA_GRID * LUMA_GRID);
  for (let i = 0; i < LUMA_GRID; i++) {
    for (let j = 0; j < LUMA_GRID; j++) {
      let acc = 0;
      const weights = wc[j];
      for (let x = 0; x < width; x++) acc += rows[i * width + x] * weights[x];
      grid[i * LUMA_GRID + j] = acc;
    }
  }
  let sq = 0;
  for (const v of grid) sq += v * v;
  const norm = Math.sqrt(sq);
  if (norm === 0) return { grid, degenerate: true };
  for (let i = 0; i < grid.length; i++) grid[i] /= norm;
  return { grid, degenerate: false };
}

function dot(a: Float64Array, b: Float64Array): number {
  let acc = 0;
  for (let i = 0; i < a.length; i++) acc += a[i] * b[i];
  return acc;
}

function mean(values: number[]): number {
  let acc = 0;
  for (const v of values) acc += v;
  return acc / values.length;
}

/** Population variance from exact integer sums (inputs are integers). */
function intVariance(values: Int32Array): number {
  let sum = 0;
  let sumSq = 0;
  for (const v of values) {
    sum += v;
    sumSq += v * v;
  }
  const m = sum / values.length;
  return sumSq / values.length - m * m;
}

export function laplacianVariance(luma: Int32Array, width: number, height: number): number {
  if (width < 3 || height < 3) return 0;
  const resp = new Int32Array((width - 2) * (height - 2));
  let k = 0;
  for (let y = 1; y < height - 1; y++) {
    for (let x = 1; x < width - 1; x++) {
      resp[k++] =
        luma[(y - 1) * width + x] +
        luma[(y + 1) * width + x] +
        luma[y * width + x - 1] +
        luma[y * width + x + 1] -
        4 * luma[y * width + x];
    }
  }
  return intVariance(resp);
}

export function scoreClarity(clip: Clip): number {
  if (clip.width < 3 || clip.height < 3) {
    throw new Error(`clarity needs frames of at least 3x3, got ${clip.width}x${clip.height}`);
  }
  const values = clip.frames.map((f) =>
    laplacianVariance(lumaPlane(f, clip.width, clip.height), clip.width, clip.height),
  );
  return mean(values);
}

const clamp01 = (v: number) => Math.min(1, Math.max(0, v));

export function scoreAesthetics(clip: Clip): number {
  const values = clip.frames.map((frame) => {
    const n = frame.length / 3;
    let sumRg = 0;
    let sumRgSq = 0;
    let sumYb = 0;
    let sumYbSq = 0;
    for (let p = 0; p < frame.length; p += 3) {
      const rg = frame[p] - frame[p + 1];
      const yb = 0.5 * (frame[p] + frame[p + 1]) - frame[p + 2];
      sumRg += rg;
      sumRgSq += rg * rg;
      sumYb += yb;
      sumYbSq += yb * yb;
    }
    const meanRg = sumRg / n;
    const meanYb = sumYb / n;
    const varRg = sumRgSq / n - meanRg * meanRg;
    const varYb = sumYbSq / n - meanYb * meanYb;
    const colorfulness =
      Math.sqrt(varRg + varYb) + 0.3 * Math.sqrt(meanRg * meanRg + meanYb * meanYb);
    const luma = lumaPlane(frame, clip.width, clip.height);
    const contrast = Math.sqrt(intVariance(luma));
    const sharpness = laplacianVariance(luma, clip.width, clip.height);
    return (
      10 *
      (0.4 * clamp01(colorfulness / 150) +
        0.3 * clamp01(contrast / 64) +
        0.3 * clamp01(Math.log1p(sharpness) / Math.log1p(2000)))
    );
  });
  return mean(values);
}

export function scoreTemporalConsistency(clip: Clip): number {
  if (clip.frameCount < 2) {
    throw new Error('temporal consistency needs at least two frames');
  }
  const feats = clip.frames.map((frame) => {
    const hist = colorHistogram(frame);
    const { grid } = lumaGrid(lumaPlane(frame, clip.width, clip.height), clip.width, clip.height);
    return { hist, grid };
  });
  const cosines: number[] = [];
  for (let i = 0; i + 1 < feats.length; i++) {
    const a = feats[i];
    const b = feats[i + 1];
    const num = dot(a.hist, b.hist) + dot(a.grid, b.grid);
    const sqA = dot(a.hist, a.hist) + dot(a.grid, a.grid);
    const sqB = dot(b.hist, b.hist) + dot(b.grid, b.grid);
    const den = Math.sqrt(sqA * sqB);
    cosines.push(den === 0 ? 0 : num / den);
  }
  return mean(cosines);
}

interface Candidate {
  dy: number;
  dx: number;
  mag: number;
  boundary: boolean;
}

const CANDIDATES: Candidate[] = (() => {
  const out: Candidate[] = [];
  for (let dy = -MOTION_RADIUS; dy <= MOTION_RADIUS; dy++) {
    for (let dx = -MOTION_RADIUS; dx <= MOTION_RADIUS; dx++) {
      out.push({
        dy,
        dx,
        mag: Math.sqrt(dy * dy + dx * dx),
        boundary: Math.abs(dy) === MOTION_RADIUS || Math.abs(dx) === MOTION_RADIUS,
      });
    }
  }
  // Tie-break order: smallest magnitude, then dy, then dx.
  out.sort((a, b) => a.dy * a.dy + a.dx * a.dx - (b.dy * b.dy + b.dx * b.dx) || a.dy - b.dy || a.dx - b.dx);
  return out;
})();

/** Luma at analysis scale: integer-factor box decimation to <= 256 px. */
function analysisLuma(
  frame: Uint8Array,
  width: number,
  height: number,
): { data: Float64Array; width: number; height: number } {
  const luma = lumaPlane(frame, width, height);
  const factor = Math.ceil(Math.max(width, height) / MOTION_MAX_DIM);
  if (factor <= 1) {
    return { data: Float64Array.from(luma), width, height };
  }
  const ww = Math.floor(width / factor);
  const hh = Math.floor(height / factor);
  const data = new Float64Array(ww * hh);
  for (let y = 0; y < hh; y++) {
    for (let x = 0; x < ww; x++) {
      let acc = 0;
      for (let sy = 0; sy < factor; sy++) {
        for (let sx = 0; sx < factor; sx++) {
          acc += luma[(y * factor + sy) * width + (x * factor + sx)];
        }
      }
      // fround mirrors the engine's float32 analysis plane
      data[y * ww + x] = Math.fround(acc / (factor * factor));
    }
  }
  return { data, width: ww, height: hh };
}

function pairMotion(
  prev: Float64Array,
  curr: Float64Array,
  width: number,
  height: number,
): { mag: number; boundaryFrac: number } | null {
  const nbh = Math.floor((height - 2 * MOTION_RADIUS) / MOTION_BLOCK);
  const nbw = Math.floor((width - 2 * MOTION_RADIUS) / MOTION_BLOCK);
  if (nbh < 1 || nbw < 1) return null;
  const r = MOTION_RADIUS;
  let magSum = 0;
  let boundarySum = 0;
  for (let by = 0; by < nbh; by++) {
    for (let bx = 0; bx < nbw; bx++) {
      const y0 = r + by * MOTION_BLOCK;
      const x0 = r + bx * MOTION_BLOCK;
      let best = Infinity;
      let winner = CANDIDATES[0];
      for (const cand of CANDIDATES) {
        let sad = 0;
        for (let y = 0; y < MOTION_BLOCK; y++) {
          const rowA = (y0 + y) * width + x0;
          const rowB = (y0 + y + cand.dy) * width + x0 + cand.dx;
          for (let x = 0; x < MOTION_BLOCK; x++) {
            sad += Math.abs(prev[rowA + x] - curr[rowB + x]);
          }
        }
        if (sad < best) {
          best = sad;
          winner = cand;
        }
      }
      magSum += winner.mag;
      boundarySum += winner.boundary ? 1 : 0;
    }
  }
  const blocks = nbh * nbw;
  return { mag: magSum / blocks, boundaryFrac: boundarySum / blocks };
}

export function scoreMotion(clip: Clip): number {
  if (clip.frameCount < 2) {
    throw new Error('motion needs at least two frames');
  }
  const planes = clip.frames.map((f) => analysisLuma(f, clip.width, clip.height));
  const pairValues: number[] = [];
  for (let i = 0; i + 1 < planes.length; i++) {
    const result = pairMotion(
      planes[i].data,
      planes[i + 1].data,
      planes[i].width,
      planes[i].height,
    );
    if (result !== null) pairValues.push(result.mag);
  }
  if (pairValues.length === 0) return 0;
  return mean(pairValues);
}

export function scoreMetric(metric: MetricName, clip: Clip): number {
  const sampled = sampleFrames(clip);
  switch (metric) {
    case 'aesthetics':
      return scoreAesthetics(sampled);
    case 'temporal_consistency':
      return scoreTemporalConsistency(sampled);
    case 'motion':
      return scoreMotion(sampled);
    case 'clarity':
      return scoreClarity(sampled);
  }
}
