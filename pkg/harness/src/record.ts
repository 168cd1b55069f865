/**
 * The metrics record: one JSON object per harness run, the only thing the
 * harness ever writes to stdout. Schema shared with the evaluation engine's
 * subprocess backend.
 */

export const RECORD_SCHEMA = "accelbench.metrics_record/v1";

export type RunStatus = "ok" | "runtime_failure";

export interface MetricsRecord {
  schema: typeof RECORD_SCHEMA;
  status: RunStatus;
  latency_s: number[];
  quality: number[];
  failure_text: string | null;
  hardware_tag: string;
  seed: number;
}

export function okRecord(
  latencies: number[],
  quality: number[],
  hardwareTag: string,
  seed: number,
): MetricsRecord {
  return {
    schema: RECORD_SCHEMA,
    status: "ok",
    latency_s: latencies,
    quality,
    failure_text: null,
    hardware_tag: hardwareTag,
    seed,
  };
}

export function failureRecord(
  failureText: string,
  hardwareTag: string,
  seed: number,
): MetricsRecord {
  return {
    schema: RECORD_SCHEMA,
    status: "runtime_failure",
    latency_s: [],
    quality: [],
    failure_text: failureText,
    hardware_tag: hardwareTag,
    seed,
  };
}

/** Structural validation mirroring the consumer-side parser. */
export function validateRecord(record: MetricsRecord): string | null {
  if (record.schema !== RECORD_SCHEMA) {
    return `unexpected schema ${record.schema}`;
  }
  if (record.status === "ok") {
    if (record.latency_s.length === 0 || record.quality.length === 0) {
      return "ok records need non-empty latency and quality lists";
    }
    if (record.latency_s.length !== record.quality.length) {
      return "latency and quality lists must have equal length";
    }
  } else if (record.status === "runtime_failure") {
    if (!record.failure_text) {
      return "runtime_failure records need failure text";
    }
  } else {
    return `unknown status ${(record as { status: string }).status}`;
  }
  return null;
}

export function serializeRecord(record: MetricsRecord): string {
  const problem = validateRecord(record);
  if (problem) {
    throw new Error(`refusing to emit invalid record: ${problem}`);
  }
  return JSON.stringify(record);
}
