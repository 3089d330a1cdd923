/** Subprocess bridge to the native `rangeview-ops` JSON endpoint.
 *
 * Each call spawns one endpoint process, writes a single request object on
 * stdin and reads the response from stdout. Numbers cross the boundary in
 * shortest round-trip JSON on both sides, so bridged results are numerically
 * identical to in-process native calls.
 */

import { spawnSync } from "node:child_process";

/** Error raised by the native side, preserving its exception type name. */
export class NativeError extends Error {
  readonly type: string;

  constructor(type: string, message: string) {
    super(`${type}: ${message}`);
    this.name = "NativeError";
    this.type = type;
  }
}

export interface BridgeOptions {
  /** Command that starts the op endpoint. Defaults to
   * `[$RANGEVIEW_PYTHON ?? "python3", "-m", "rangeview.ops"]`. */
  command?: string[];
  /** Response size cap in bytes (default 512 MiB). */
  maxBuffer?: number;
}

interface OkResponse {
  ok: true;
  result: unknown;
}

interface ErrResponse {
  ok: false;
  error: { type: string; message: string };
}

export class OpsBridge {
  private readonly command: string[];
  private readonly maxBuffer: number;

  constructor(options: BridgeOptions = {}) {
    this.command = options.command ?? [
      process.env["RANGEVIEW_PYTHON"] ?? "python3",
      "-m",
      "rangeview.ops",
    ];
    this.maxBuffer = options.maxBuffer ?? 512 * 1024 * 1024;
  }

  run(op: string, payload: unknown): unknown {
    const [cmd, ...args] = this.command;
    if (!cmd) throw new Error("empty bridge command");
    const proc = spawnSync(cmd, args, {
      input: JSON.stringify({ op, payload }),
      encoding: "utf-8",
      maxBuffer: this.maxBuffer,
    });
    if (proc.error) throw proc.error;
    if (!proc.stdout) {
      throw new Error(`op endpoint produced no output (stderr: ${proc.stderr})`);
    }
    let response: OkResponse | ErrResponse;
    try {
      response = JSON.parse(proc.stdout) as OkResponse | ErrResponse;
    } catch (e) {
      throw new Error(`op endpoint returned invalid JSON: ${String(e)}`);
    }
    if (!response.ok) {
      throw new NativeError(response.error.type, response.error.message);
    }
    return response.result;
  }
}
