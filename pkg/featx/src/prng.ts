/** Deterministic PRNG (mulberry32) so the backbone weights are reproducible constants. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Uniform samples in [-bound, bound] as float32, from a fixed seed. */
export function uniformWeights(count: number, bound: number, seed: number): Float32Array {
  const next = mulberry32(seed)
  const out = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    out[i] = Math.fround((next() * 2 - 1) * bound)
  }
  return out
}
