/**
 * Quality scoring hook. The default scorer is a deterministic lexical
 * stand-in for an image-text similarity model: it embeds the prompt's
 * tokens and the artifact's bytes into small hashed vectors and returns
 * their cosine similarity squashed into [0, 1]. Real deployments replace
 * it (--scorer) with a module backed by an actual similarity model.
 */

import { pathToFileURL } from "node:url";

export interface Scorer {
  score(prompt: string, artifactB64: string): number | Promise<number>;
}

const DIMS = 64;

function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

function embedTokens(tokens: string[]): Float64Array {
  const vec = new Float64Array(DIMS);
  for (const token of tokens) {
    const h = fnv1a(token.toLowerCase());
    vec[h % DIMS] += 1 + (h % 7) / 7;
  }
  return vec;
}

function embedBytes(bytes: Buffer): Float64Array {
  const vec = new Float64Array(DIMS);
  for (let i = 0; i < bytes.length; i++) {
    vec[(bytes[i] + i) % DIMS] += 1;
  }
  return vec;
}

function cosine(a: Float64Array, b: Float64Array): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < DIMS; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na === 0 || nb === 0) {
    return 0;
  }
  return dot / (Math.sqrt(na) * Math.sqrt(nb));
}

export const defaultScorer: Scorer = {
  score(prompt: string, artifactB64: string): number {
    const promptVec = embedTokens(prompt.split(/\s+/).filter(Boolean));
    const artifactVec = embedBytes(Buffer.from(artifactB64, "base64"));
    // both embeddings are non-negative, so cosine already lands in [0, 1]
    return cosine(promptVec, artifactVec);
  },
};

export async function loadScorer(modulePath: string | undefined): Promise<Scorer> {
  if (!modulePath) {
    return defaultScorer;
  }
  const mod = await import(pathToFileURL(modulePath).href);
  const candidate = mod.default ?? mod;
  if (typeof candidate.score !== "function") {
    throw new Error(`scorer module ${modulePath} must export a score() function`);
  }
  return candidate as Scorer;
}
