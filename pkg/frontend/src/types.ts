/** Shared types for the poster feature extractor. */

/** Decoded raster image, RGBA interleaved, 8 bits per channel. */
export interface RasterImage {
  width: number;
  height: number;
  /** length = width * height * 4 */
  data: Uint8Array;
}

export interface BoundingBox {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface DetectedObject {
  bbox: BoundingBox;
  /** confidence in [0, 1]; detections are kept highest-confidence first */
  confidence: number;
  label?: string;
}

/**
 * The pluggable detector boundary. The default implementation is a
 * self-contained region proposer; any pretrained object detector can be
 * wired in by implementing this interface.
 */
export interface Detector {
  readonly name: string;
  readonly version: string;
  detect(image: RasterImage): DetectedObject[];
}

export interface ManifestRow {
  movieId: string;
  imagePath: string;
}

export interface ExtractionOptions {
  maxObjects: number;
  minConfidence: number;
  poolGrid: number; // pooled feature maps are poolGrid x poolGrid per channel
}

export interface ImageLogEntry {
  movie_id: string;
  image_path: string;
  status: "ok" | "unreadable" | "no_detections";
  objects: number;
  error?: string;
}

export interface ExtractionLog {
  detector: { name: string; version: string };
  options: ExtractionOptions;
  feature_dim: number;
  images: ImageLogEntry[];
}
