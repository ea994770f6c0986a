import assert from 'node:assert/strict'
import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import test from 'node:test'

import { FEATURE_MAGIC, readFeatureFile, readFeatureIndex, writeFeatureFile } from '../src/featfile.js'

function tempPath(name: string): string {
  return join(mkdtempSync(join(tmpdir(), 'featx-')), name)
}

test('round trips rows and names', () => {
  const path = tempPath('features.bin')
  const rows = [new Float32Array([1.5, -2.25, 3]), new Float32Array([0, 0.1, -0.5])]
  writeFeatureFile(path, ['a.jpg', 'b.jpg'], rows)
  const back = readFeatureFile(path)
  assert.equal(back.count, 2)
  assert.equal(back.dim, 3)
  assert.deepEqual(back.rows, rows)
  assert.deepEqual(readFeatureIndex(path), ['a.jpg', 'b.jpg'])
})

test('header layout is magic + u32 count + u32 dim, little endian', () => {
  const path = tempPath('features.bin')
  writeFeatureFile(path, ['x'], [new Float32Array(7)])
  const raw = readFileSync(path)
  assert.equal(raw.subarray(0, 8).toString('ascii'), FEATURE_MAGIC)
  assert.equal(raw.readUInt32LE(8), 1)
  assert.equal(raw.readUInt32LE(12), 7)
  assert.equal(raw.length, 16 + 7 * 4)
})

test('rejects mismatched names and rows', () => {
  const path = tempPath('features.bin')
  assert.throws(() => writeFeatureFile(path, ['a'], []), /names for/)
})

test('reader rejects truncated files', () => {
  const path = tempPath('features.bin')
  writeFeatureFile(path, ['a'], [new Float32Array(4)])
  const raw = readFileSync(path)
  const clippedPath = tempPath('clipped.bin')
  writeFileSync(clippedPath, raw.subarray(0, raw.length - 3))
  assert.throws(() => readFeatureFile(clippedPath), /expected/)
})
