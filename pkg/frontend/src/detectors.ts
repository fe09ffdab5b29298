/** Detector implementations behind the pluggable `Detector` boundary.
 *
 * The pinned default proposes regions by local gradient energy: multi-scale
 * sliding windows scored by mean edge energy relative to the image average,
 * pruned by non-maximum suppression. It is fully self-contained and
 * deterministic; swap in any pretrained network by registering another
 * `Detector`.
 */

import { gradientMagnitude } from "./image.js";
import type { BoundingBox, DetectedObject, Detector, RasterImage } from "./types.js";

function iou(a: BoundingBox, b: BoundingBox): number {
  const x1 = Math.max(a.x, b.x);
  const y1 = Math.max(a.y, b.y);
  const x2 = Math.min(a.x + a.width, b.x + b.width);
  const y2 = Math.min(a.y + a.height, b.y + b.height);
  const inter = Math.max(0, x2 - x1) * Math.max(0, y2 - y1);
  const union = a.width * a.height + b.width * b.height - inter;
  return union > 0 ? inter / union : 0;
}

export class EdgeEnergyDetector implements Detector {
  readonly name = "edge-energy-proposals";
  readonly version = "1";

  constructor(
    private readonly scales: number[] = [0.5, 0.33, 0.25],
    private readonly nmsThreshold = 0.3,
  ) {}

  detect(image: RasterImage): DetectedObject[] {
    const { width, height } = image;
    const energy = gradientMagnitude(image);

    // summed-area table for O(1) window sums
    const sat = new Float64Array((width + 1) * (height + 1));
    for (let y = 0; y < height; y++) {
      let rowSum = 0;
      for (let x = 0; x < width; x++) {
        rowSum += energy[y * width + x];
        sat[(y + 1) * (width + 1) + (x + 1)] = sat[y * (width + 1) + (x + 1)] + rowSum;
      }
    }
    const windowSum = (bx: number, by: number, bw: number, bh: number) =>
      sat[(by + bh) * (width + 1) + (bx + bw)]
      - sat[by * (width + 1) + (bx + bw)]
      - sat[(by + bh) * (width + 1) + bx]
      + sat[by * (width + 1) + bx];

    const globalMean = windowSum(0, 0, width, height) / (width * height) + 1e-9;
    const candidates: DetectedObject[] = [];
    for (const scale of this.scales) {
      const side = Math.max(4, Math.round(Math.min(width, height) * scale));
      if (side > width || side > height) continue;
      const stride = Math.max(2, Math.round(side / 2));
      for (let y = 0; y + side <= height; y += stride) {
        for (let x = 0; x + side <= width; x += stride) {
          const mean = windowSum(x, y, side, side) / (side * side);
          const ratio = mean / globalMean;
          // squash the energy ratio into (0, 1); ratio 1 = average region
          const confidence = ratio / (1 + ratio);
          candidates.push({ bbox: { x, y, width: side, height: side }, confidence });
        }
      }
    }
    candidates.sort(
      (a, b) => b.confidence - a.confidence || a.bbox.y - b.bbox.y || a.bbox.x - b.bbox.x,
    );

    const kept: DetectedObject[] = [];
    for (const cand of candidates) {
      if (kept.every((k) => iou(k.bbox, cand.bbox) < this.nmsThreshold)) {
        kept.push(cand);
      }
    }
    return kept;
  }
}

/** Trivial detector: the whole frame as a single maximal-confidence object.
 * Used in tests to demonstrate the pluggable boundary. */
export class FullFrameDetector implements Detector {
  readonly name = "full-frame";
  readonly version = "1";

  detect(image: RasterImage): DetectedObject[] {
    return [
      { bbox: { x: 0, y: 0, width: image.width, height: image.height }, confidence: 1.0 },
    ];
  }
}

const REGISTRY: Record<string, () => Detector> = {
  "edge-energy-proposals": () => new EdgeEnergyDetector(),
  "full-frame": () => new FullFrameDetector(),
};

export function makeDetector(name: string): Detector {
  const factory = REGISTRY[name];
  if (!factory) {
    throw new Error(
      `unknown detector ${JSON.stringify(name)}; available: ${Object.keys(REGISTRY).join(", ")}`,
    );
  }
  return factory();
}

export const DEFAULT_DETECTOR = "edge-energy-proposals";
