import assert from 'node:assert/strict'
import { mkdtempSync, readFileSync, writeFileSync, existsSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import test from 'node:test'

import { extract } from '../src/extract.js'
import { readFeatureFile, readFeatureIndex } from '../src/featfile.js'
import { FEATURE_DIM, buildBackbone, extractFeatures } from '../src/net.js'
import { prepare } from '../src/image.js'
import { gradientPainter, makeJpeg, makePng } from './helpers.js'

function makeImagesDir(): string {
  const dir = mkdtempSync(join(tmpdir(), 'featx-images-'))
  writeFileSync(join(dir, 'one.png'), makePng(240, 180, gradientPainter(3, 5)))
  writeFileSync(join(dir, 'two.png'), makePng(224, 224, gradientPainter(9, 2)))
  writeFileSync(join(dir, 'three.jpg'), makeJpeg(260, 240, gradientPainter(5, 7)))
  return dir
}

test('backbone output is 4096-d, finite, and reproducible', () => {
  const backbone = buildBackbone()
  const pixels = prepare(makePng(230, 230, gradientPainter(4, 4)), 'x.png')
  const first = extractFeatures(backbone, pixels)
  const second = extractFeatures(buildBackbone(), pixels)
  assert.equal(first.length, FEATURE_DIM)
  assert.ok(first.every(v => Number.isFinite(v)))
  assert.ok(first.some(v => v !== 0))
  assert.deepEqual(first, second)
})

test('different images give different features', () => {
  const backbone = buildBackbone()
  const a = extractFeatures(backbone, prepare(makePng(224, 224, gradientPainter(3, 5)), 'a.png'))
  const b = extractFeatures(backbone, prepare(makePng(224, 224, gradientPainter(11, 1)), 'b.png'))
  assert.notDeepEqual(a, b)
})

test('extract writes one row per manifest image with an exact byte length', () => {
  const dir = makeImagesDir()
  const manifest = join(dir, 'manifest.txt')
  writeFileSync(manifest, 'one.png\ntwo.png\nthree.jpg\n')
  const out = join(dir, 'features.bin')
  const result = extract({ imagesDir: dir, manifestPath: manifest, outPath: out })
  assert.deepEqual(result.written, ['one.png', 'two.png', 'three.jpg'])
  assert.equal(result.failed.length, 0)

  const raw = readFileSync(out)
  assert.equal(raw.readUInt32LE(8), 3)
  assert.equal(raw.readUInt32LE(12), FEATURE_DIM)
  assert.equal(raw.length, 16 + 3 * FEATURE_DIM * 4)
  assert.deepEqual(readFeatureIndex(out), ['one.png', 'two.png', 'three.jpg'])
})

test('repeated extraction is bit-identical', () => {
  const dir = makeImagesDir()
  const manifest = join(dir, 'manifest.txt')
  writeFileSync(manifest, 'one.png\ntwo.png\nthree.jpg\n')
  const first = join(dir, 'first.bin')
  const second = join(dir, 'second.bin')
  extract({ imagesDir: dir, manifestPath: manifest, outPath: first })
  extract({ imagesDir: dir, manifestPath: manifest, outPath: second })
  assert.deepEqual(readFileSync(first), readFileSync(second))
})

test('the same image listed twice produces bit-identical rows', () => {
  const dir = makeImagesDir()
  const manifest = join(dir, 'manifest.txt')
  writeFileSync(manifest, 'one.png\none.png\n')
  const out = join(dir, 'features.bin')
  extract({ imagesDir: dir, manifestPath: manifest, outPath: out })
  const { rows } = readFeatureFile(out)
  assert.deepEqual(rows[0], rows[1])
})

test('unreadable images are listed in the errors sidecar and the run continues', () => {
  const dir = makeImagesDir()
  writeFileSync(join(dir, 'broken.png'), Buffer.from('this is not an image'))
  const manifest = join(dir, 'manifest.txt')
  writeFileSync(manifest, 'one.png\nbroken.png\nmissing.png\ntwo.png\n')
  const out = join(dir, 'features.bin')
  const result = extract({ imagesDir: dir, manifestPath: manifest, outPath: out })
  assert.deepEqual(result.written, ['one.png', 'two.png'])
  assert.equal(result.failed.length, 2)
  const sidecar = readFileSync(`${out}.errors`, 'utf-8')
  assert.ok(sidecar.includes('broken.png\t'))
  assert.ok(sidecar.includes('missing.png\t'))
  assert.deepEqual(readFeatureIndex(out), ['one.png', 'two.png'])
})

test('a clean rerun clears a stale errors sidecar', () => {
  const dir = makeImagesDir()
  const manifest = join(dir, 'manifest.txt')
  const out = join(dir, 'features.bin')
  writeFileSync(manifest, 'one.png\nmissing.png\n')
  extract({ imagesDir: dir, manifestPath: manifest, outPath: out })
  assert.ok(existsSync(`${out}.errors`))
  writeFileSync(manifest, 'one.png\n')
  extract({ imagesDir: dir, manifestPath: manifest, outPath: out })
  assert.ok(!existsSync(`${out}.errors`))
})
