/**
 * Drives the persistent Python execution shim: one child process per
 * candidate, one untimed warm-up pass, then wall-clock timing around each
 * generation request.
 */

import { spawn, type ChildProcessByStdio } from "node:child_process";
import { once } from "node:events";
import { createInterface, type Interface } from "node:readline";
import type { Readable, Writable } from "node:stream";
import { fileURLToPath } from "node:url";

import { failureRecord, okRecord, type MetricsRecord } from "./record.js";
import type { Scorer } from "./scorer.js";

const DRIVER_PATH = fileURLToPath(new URL("../driver.py", import.meta.url));

export class HarnessError extends Error {}

interface DriverReply {
  event?: string;
  ok?: boolean;
  artifact_b64?: string;
  traceback?: string;
}

class Driver {
  private child: ChildProcessByStdio<Writable, Readable, null>;
  private lines: Interface;
  private queue: Array<(reply: DriverReply) => void> = [];
  private exited = false;

  constructor(candidatePath: string, python: string) {
    this.child = spawn(python, [DRIVER_PATH, candidatePath], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    this.child.on("exit", () => {
      this.exited = true;
      for (const pending of this.queue.splice(0)) {
        pending({ ok: false, traceback: "driver exited unexpectedly" });
      }
    });
    this.lines = createInterface({ input: this.child.stdout });
    this.lines.on("line", (line) => {
      const pending = this.queue.shift();
      if (pending) {
        pending(JSON.parse(line) as DriverReply);
      }
    });
  }

  next(): Promise<DriverReply> {
    if (this.exited) {
      return Promise.resolve({ ok: false, traceback: "driver exited unexpectedly" });
    }
    return new Promise((resolve) => this.queue.push(resolve));
  }

  send(request: object): Promise<DriverReply> {
    const reply = this.next();
    this.child.stdin.write(JSON.stringify(request) + "\n");
    return reply;
  }

  async close(): Promise<void> {
    if (!this.exited) {
      try {
        this.child.stdin.write(JSON.stringify({ op: "shutdown" }) + "\n");
        this.child.stdin.end();
      } catch {
        // already gone
      }
      const timeout = setTimeout(() => this.child.kill("SIGKILL"), 2000);
      await once(this.child, "exit");
      clearTimeout(timeout);
    }
  }
}

export interface RunOptions {
  candidatePath: string;
  prompts: string[];
  sampleCount: number;
  seed: number;
  scorer: Scorer;
  hardwareTag: string;
  python?: string;
}

/**
 * Execute the candidate for sampleCount prompts and produce the metrics
 * record. Candidate-side failures come back as runtime_failure records;
 * only harness-side problems throw.
 */
export async function runCandidate(options: RunOptions): Promise<MetricsRecord> {
  const { candidatePath, prompts, sampleCount, seed, scorer, hardwareTag } = options;
  if (prompts.length < sampleCount) {
    throw new HarnessError(
      `prompt set has ${prompts.length} entries, need at least ${sampleCount}`,
    );
  }
  const driver = new Driver(candidatePath, options.python ?? "python3");
  try {
    const hello = await driver.next();
    if (hello.event !== "ready") {
      return failureRecord(
        hello.traceback ?? "candidate failed to load",
        hardwareTag,
        seed,
      );
    }

    // untimed warm-up: model-load and first-call costs stay out of the metrics
    const warmup = await driver.send({ op: "warmup", prompt: prompts[0], seed });
    if (!warmup.ok) {
      return failureRecord(warmup.traceback ?? "warm-up failed", hardwareTag, seed);
    }

    const latencies: number[] = [];
    const artifacts: string[] = [];
    for (let i = 0; i < sampleCount; i++) {
      const started = process.hrtime.bigint();
      const reply = await driver.send({
        op: "generate",
        prompt: prompts[i],
        seed: seed + i,
      });
      const elapsed = Number(process.hrtime.bigint() - started) / 1e9;
      if (!reply.ok) {
        return failureRecord(reply.traceback ?? "generation failed", hardwareTag, seed);
      }
      latencies.push(elapsed);
      artifacts.push(reply.artifact_b64 ?? "");
    }

    const quality: number[] = [];
    for (let i = 0; i < sampleCount; i++) {
      quality.push(await scorer.score(prompts[i], artifacts[i]));
    }
    return okRecord(latencies, quality, hardwareTag, seed);
  } finally {
    await driver.close();
  }
}
