/** JSON-lines codecs for detection and ground-truth box files. */

import type { GroundTruthRecord, ProposalRecord } from "./types.js";

function parseLines(text: string): Record<string, unknown>[] {
  const out: Record<string, unknown>[] = [];
  for (const [i, line] of text.split("\n").entries()) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    let rec: unknown;
    try {
      rec = JSON.parse(trimmed);
    } catch (e) {
      throw new Error(`line ${i + 1}: invalid JSON: ${String(e)}`);
    }
    if (typeof rec !== "object" || rec === null || Array.isArray(rec)) {
      throw new Error(`line ${i + 1}: expected a JSON object`);
    }
    out.push(rec as Record<string, unknown>);
  }
  return out;
}

export function readDetections(text: string): ProposalRecord[] {
  return parseLines(text) as unknown as ProposalRecord[];
}

export function readGroundTruth(text: string): GroundTruthRecord[] {
  return parseLines(text) as unknown as GroundTruthRecord[];
}

export function writeDetections(records: ProposalRecord[]): string {
  return records
    .map((r) =>
      JSON.stringify({
        frame_id: r.frame_id ?? "frame0",
        category: r.category,
        x: r.x,
        y: r.y,
        z: r.z,
        l: r.l,
        w: r.w,
        h: r.h,
        yaw: r.yaw,
        score: r.score,
      }),
    )
    .join("\n") + (records.length ? "\n" : "");
}

export function writeGroundTruth(records: GroundTruthRecord[]): string {
  return records
    .map((r) =>
      JSON.stringify({
        frame_id: r.frame_id ?? "frame0",
        category: r.category,
        x: r.x,
        y: r.y,
        z: r.z,
        l: r.l,
        w: r.w,
        h: r.h,
        yaw: r.yaw,
        num_interior_points: r.num_interior_points,
      }),
    )
    .join("\n") + (records.length ? "\n" : "");
}
