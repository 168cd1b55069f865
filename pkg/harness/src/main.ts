/**
 * CLI entry: accelbench-harness <candidate.py> <prompts.txt> --n N --seed S
 *            [--scorer module.js] [--hardware tag] [--python exe]
 *
 * Prints exactly one metrics record on stdout. Exit code is nonzero only
 * for harness-side failures; a crashing candidate still yields a clean
 * runtime_failure record and exit code 0.
 */

import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { serializeRecord } from "./record.js";
import { HarnessError, runCandidate } from "./runner.js";
import { loadScorer } from "./scorer.js";

function usage(): never {
  process.stderr.write(
    "usage: accelbench-harness <candidate.py> <prompts.txt> --n N --seed S " +
      "[--scorer module.js] [--hardware tag] [--python exe]\n",
  );
  process.exit(2);
}

export async function main(argv: string[]): Promise<number> {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        n: { type: "string" },
        seed: { type: "string" },
        scorer: { type: "string" },
        hardware: { type: "string", default: "local" },
        python: { type: "string", default: process.env.ACCELBENCH_PYTHON ?? "python3" },
      },
    });
  } catch (err) {
    process.stderr.write(`${(err as Error).message}\n`);
    return 2;
  }
  const [candidatePath, promptsPath] = parsed.positionals;
  if (!candidatePath || !promptsPath || !parsed.values.n || !parsed.values.seed) {
    usage();
  }
  const sampleCount = Number(parsed.values.n);
  const seed = Number(parsed.values.seed);
  if (!Number.isInteger(sampleCount) || sampleCount < 1 || !Number.isInteger(seed)) {
    process.stderr.write("--n must be a positive integer and --seed an integer\n");
    return 2;
  }

  let prompts: string[];
  try {
    prompts = readFileSync(promptsPath, "utf-8")
      .split("\n")
      .map((line) => line.trim())
      .filter(Boolean);
  } catch (err) {
    process.stderr.write(`cannot read prompt set: ${(err as Error).message}\n`);
    return 2;
  }

  try {
    const scorer = await loadScorer(parsed.values.scorer);
    const record = await runCandidate({
      candidatePath,
      prompts,
      sampleCount,
      seed,
      scorer,
      hardwareTag: parsed.values.hardware ?? "local",
      python: parsed.values.python,
    });
    process.stdout.write(serializeRecord(record) + "\n");
    return 0;
  } catch (err) {
    if (err instanceof HarnessError) {
      process.stderr.write(`harness error: ${err.message}\n`);
      return 2;
    }
    process.stderr.write(`harness internal error: ${(err as Error).stack}\n`);
    return 3;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");

if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
