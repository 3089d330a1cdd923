/** Typed client over the native rangeview pipeline.
 *
 * Every method delegates 1:1 to the native implementation through the
 * rangeview-ops endpoint; nothing is recomputed on this side. Inputs are
 * never mutated.
 */

import { OpsBridge, type BridgeOptions, NativeError } from "./bridge.js";
import type {
  DenseOutputData,
  EvalReportData,
  FrameTargetsData,
  GroundTruthRecord,
  LossResult,
  ProposalRecord,
  RangeImageData,
  RangeImageSpec,
  SupervisionConfigData,
  VflConfigData,
  WnmsConfigData,
} from "./types.js";

export { NativeError, OpsBridge } from "./bridge.js";
export { FormatError, readPoints, readRangeImage, writePoints, writeRangeImage } from "./rvimg.js";
export { readDetections, readGroundTruth, writeDetections, writeGroundTruth } from "./jsonl.js";
export type * from "./types.js";

export class RangeviewClient {
  private readonly bridge: OpsBridge;

  constructor(options: BridgeOptions = {}) {
    this.bridge = new OpsBridge(options);
  }

  /** Native library version; this package mirrors it. */
  version(): string {
    return (this.bridge.run("version", {}) as { version: string }).version;
  }

  project(points: number[][], spec: RangeImageSpec): RangeImageData {
    return (this.bridge.run("project", { points, spec }) as { image: RangeImageData }).image;
  }

  simulate(configText?: string, seed?: number): {
    image: RangeImageData;
    ground_truth: (GroundTruthRecord & ProposalRecord)[];
    categories: string[];
  } {
    const payload: Record<string, unknown> = {};
    if (configText !== undefined) payload["config_text"] = configText;
    if (seed !== undefined) payload["seed"] = seed;
    return this.bridge.run("simulate", payload) as ReturnType<RangeviewClient["simulate"]>;
  }

  encodeFrame(image: RangeImageData, groundTruth: GroundTruthRecord[]): FrameTargetsData {
    return this.bridge.run("encode_frame", {
      image,
      ground_truth: groundTruth,
    }) as FrameTargetsData;
  }

  perfectDense(
    image: RangeImageData,
    groundTruth: GroundTruthRecord[],
    categories: string[],
  ): DenseOutputData {
    return this.bridge.run("perfect_dense", {
      image,
      ground_truth: groundTruth,
      categories,
    }) as DenseOutputData;
  }

  computeTargets(
    dense: DenseOutputData,
    image: RangeImageData,
    gtIndex: number[][],
    groundTruth: GroundTruthRecord[],
    config: SupervisionConfigData = {},
  ): number[][] {
    return (
      this.bridge.run("compute_targets", {
        dense,
        image,
        gt_index: gtIndex,
        ground_truth: groundTruth,
        config,
      }) as { q: number[][] }
    ).q;
  }

  classificationLoss(
    dense: DenseOutputData,
    q: number[][],
    categoryGrid: number[][],
    config: VflConfigData = {},
  ): LossResult {
    return this.bridge.run("classification_loss", {
      dense,
      q,
      category_grid: categoryGrid,
      config,
    }) as LossResult;
  }

  regressionLoss(
    dense: DenseOutputData,
    targets: number[][][],
    gtIndex: number[][],
  ): LossResult {
    return this.bridge.run("regression_loss", {
      dense,
      targets,
      gt_index: gtIndex,
    }) as LossResult;
  }

  rss(
    proposals: ProposalRecord[],
    partitions = "0:8,30:2,50:1",
  ): { kept_indices: number[]; proposals: ProposalRecord[] } {
    return this.bridge.run("rss", { proposals, partitions }) as {
      kept_indices: number[];
      proposals: ProposalRecord[];
    };
  }

  wnms(proposals: ProposalRecord[], config: WnmsConfigData = {}): ProposalRecord[] {
    return (
      this.bridge.run("wnms", { proposals, config }) as { detections: ProposalRecord[] }
    ).detections;
  }

  evaluate(
    detections: ProposalRecord[],
    groundTruth: GroundTruthRecord[],
    style: "av2" | "waymo" = "av2",
    categories?: string[],
  ): EvalReportData {
    const payload: Record<string, unknown> = {
      detections,
      ground_truth: groundTruth,
      style,
    };
    if (categories) payload["categories"] = categories;
    return (this.bridge.run("evaluate", payload) as { report: EvalReportData }).report;
  }
}
