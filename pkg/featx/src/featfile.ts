import { readFileSync, writeFileSync } from 'fs'

/**
 * The FEAT0001 binary layout: 8 magic bytes, u32 LE row count, u32 LE
 * dimension, then count*dim little-endian float32 values.  Row order matches
 * the sidecar "<path>.index" file (one image filename per line, LF).
 */
export const FEATURE_MAGIC = 'FEAT0001'

export function writeFeatureFile(path: string, names: string[], rows: Float32Array[]): void {
  if (names.length !== rows.length) {
    throw new Error(`${names.length} names for ${rows.length} feature rows`)
  }
  const dim = rows.length > 0 ? rows[0].length : 0
  const buffer = Buffer.alloc(16 + rows.length * dim * 4)
  buffer.write(FEATURE_MAGIC, 0, 'ascii')
  buffer.writeUInt32LE(rows.length, 8)
  buffer.writeUInt32LE(dim, 12)
  let offset = 16
  for (const row of rows) {
    if (row.length !== dim) {
      throw new Error(`feature row of length ${row.length}, expected ${dim}`)
    }
    for (let i = 0; i < dim; i++) {
      buffer.writeFloatLE(row[i], offset)
      offset += 4
    }
  }
  writeFileSync(path, buffer)
  writeFileSync(`${path}.index`, names.map(n => `${n}\n`).join(''), 'utf-8')
}

export function readFeatureFile(path: string): { count: number; dim: number; rows: Float32Array[] } {
  const buffer = readFileSync(path)
  if (buffer.subarray(0, 8).toString('ascii') !== FEATURE_MAGIC) {
    throw new Error(`${path}: bad feature file magic`)
  }
  const count = buffer.readUInt32LE(8)
  const dim = buffer.readUInt32LE(12)
  if (buffer.length !== 16 + count * dim * 4) {
    throw new Error(`${path}: holds ${buffer.length} bytes, expected ${16 + count * dim * 4}`)
  }
  const rows: Float32Array[] = []
  for (let r = 0; r < count; r++) {
    const row = new Float32Array(dim)
    for (let i = 0; i < dim; i++) {
      row[i] = buffer.readFloatLE(16 + (r * dim + i) * 4)
    }
    rows.push(row)
  }
  return { count, dim, rows }
}

export function readFeatureIndex(path: string): string[] {
  const text = readFileSync(`${path}.index`, 'utf-8')
  const lines = text.split('\n')
  if (lines.length > 0 && lines[lines.length - 1] === '') lines.pop()
  return lines
}
