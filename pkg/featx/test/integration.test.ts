import assert from 'node:assert/strict'
import { spawnSync } from 'node:child_process'
import { mkdtempSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import test from 'node:test'

import { extract } from '../src/extract.js'
import { gradientPainter, makePng } from './helpers.js'

function pythonAvailable(): boolean {
  const probe = spawnSync('python3', ['-c', 'import caprnn'], { encoding: 'utf-8' })
  return probe.status === 0
}

test('the primary data module parses an extracted feature file', { skip: !pythonAvailable() }, () => {
  const dir = mkdtempSync(join(tmpdir(), 'featx-integration-'))
  for (const name of ['a.png', 'b.png', 'c.png']) {
    writeFileSync(join(dir, name), makePng(225, 225, gradientPainter(name.length, 3)))
  }
  const manifest = join(dir, 'manifest.txt')
  writeFileSync(manifest, 'a.png\nb.png\nc.png\n')
  const out = join(dir, 'features.bin')
  extract({ imagesDir: dir, manifestPath: manifest, outPath: out })

  const script = [
    'import json, sys',
    'from caprnn.data import read_feature_file, read_feature_index, normalize_feature',
    'feats = read_feature_file(sys.argv[1])',
    'names = read_feature_index(sys.argv[1])',
    'unit = normalize_feature(feats[0])',
    'print(json.dumps({"shape": list(feats.shape), "names": names,',
    '                  "norm": float((unit ** 2).sum())}))',
  ].join('\n')
  const run = spawnSync('python3', ['-c', script, out], { encoding: 'utf-8' })
  assert.equal(run.status, 0, run.stderr)
  const parsed = JSON.parse(run.stdout)
  assert.deepEqual(parsed.shape, [3, 4096])
  assert.deepEqual(parsed.names, ['a.png', 'b.png', 'c.png'])
  assert.ok(Math.abs(parsed.norm - 1.0) < 1e-5)
})
