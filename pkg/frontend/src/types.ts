/** Wire types shared with the native op endpoint and file formats. */

export interface RangeImageSpec {
  height: number;
  width: number;
  inclination_min: number;
  inclination_max: number;
  channels: string[];
}

export interface RangeImageData {
  spec: RangeImageSpec;
  /** channel name -> H x W grid */
  channels: Record<string, number[][]>;
  valid: boolean[][];
  dropped_points: number;
}

/** Detection / proposal record; `anchor_range` is absent in detection files. */
export interface ProposalRecord {
  category: string;
  x: number;
  y: number;
  z: number;
  l: number;
  w: number;
  h: number;
  yaw: number;
  score: number;
  anchor_range?: number;
  frame_id?: string;
}

export interface GroundTruthRecord {
  category: string;
  x: number;
  y: number;
  z: number;
  l: number;
  w: number;
  h: number;
  yaw: number;
  num_interior_points: number;
  frame_id?: string;
}

export interface DenseOutputData {
  /** H x W x K pre-sigmoid category logits */
  logits: number[][][];
  /** H x W x 8 regression channels */
  regression: number[][][];
  categories: string[];
}

export interface SupervisionConfigData {
  mode?: "centerness_3d" | "iou_bev";
  sigma?: number;
}

export interface VflConfigData {
  alpha?: number;
  gamma?: number;
}

export interface WnmsConfigData {
  iou_threshold?: number;
  score_threshold?: number;
  max_outputs?: number;
}

export interface FrameTargetsData {
  targets: number[][][];
  gt_index: number[][];
  fg: boolean[][];
}

export interface LossResult {
  value: number;
  grad: number[][][];
}

export interface CategoryReportData {
  num_gts: number;
  num_dets: number;
  ap: number | null;
  ate: number | null;
  ase: number | null;
  aoe: number | null;
  cds: number | null;
  ap_l1: number | null;
  matches: Record<string, unknown>[];
}

export interface EvalReportData {
  style: string;
  mean_ap: number | null;
  mean_cds: number | null;
  categories: Record<string, CategoryReportData>;
}
