import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";

export const FLOAT_TOL = 1e-12;

export function loadFixtures(): Record<string, any> {
  const path = fileURLToPath(new URL("../fixtures/fixtures.json", import.meta.url));
  return JSON.parse(readFileSync(path, "utf-8"));
}

/** Deep parity check: floats within 1e-12 (abs or rel), all else exact. */
export function assertParity(actual: unknown, expected: unknown, path = "$"): void {
  if (typeof expected === "number" && typeof actual === "number") {
    if (Number.isInteger(expected) && Number.isInteger(actual) && expected === actual) return;
    const diff = Math.abs(actual - expected);
    if (diff <= FLOAT_TOL || diff <= FLOAT_TOL * Math.abs(expected)) return;
    throw new Error(`${path}: ${actual} != ${expected} (diff ${diff})`);
  }
  if (Array.isArray(expected)) {
    if (!Array.isArray(actual) || actual.length !== expected.length) {
      throw new Error(`${path}: array shape mismatch`);
    }
    expected.forEach((v, i) => assertParity((actual as unknown[])[i], v, `${path}[${i}]`));
    return;
  }
  if (expected !== null && typeof expected === "object") {
    if (actual === null || typeof actual !== "object" || Array.isArray(actual)) {
      throw new Error(`${path}: expected an object`);
    }
    const eKeys = Object.keys(expected as object).sort();
    const aKeys = Object.keys(actual as object).sort();
    if (eKeys.join(",") !== aKeys.join(",")) {
      throw new Error(`${path}: key mismatch ${aKeys} != ${eKeys}`);
    }
    for (const k of eKeys) {
      assertParity(
        (actual as Record<string, unknown>)[k],
        (expected as Record<string, unknown>)[k],
        `${path}.${k}`,
      );
    }
    return;
  }
  if (actual !== expected) {
    throw new Error(`${path}: ${String(actual)} !== ${String(expected)}`);
  }
}
