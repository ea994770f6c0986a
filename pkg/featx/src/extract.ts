import { readFileSync, writeFileSync, rmSync, existsSync } from 'fs'
import { join } from 'path'

import { writeFeatureFile } from './featfile.js'
import { prepare } from './image.js'
import { Backbone, buildBackbone, extractFeatures } from './net.js'

export interface ExtractOptions {
  imagesDir: string
  manifestPath: string
  outPath: string
  backbone?: Backbone
}

export interface ExtractResult {
  outPath: string
  written: string[]
  failed: { name: string; reason: string }[]
}

export function readManifest(path: string): string[] {
  const lines = readFileSync(path, 'utf-8').split('\n')
  return lines.map(l => l.trim()).filter(l => l.length > 0)
}

/**
 * Extract one 4096-d feature row per manifest image, in manifest order.
 * Unreadable images are listed in "<out>.errors" and the run continues; the
 * index sidecar names exactly the rows that were written.
 */
export function extract(options: ExtractOptions): ExtractResult {
  const backbone = options.backbone ?? buildBackbone()
  const names = readManifest(options.manifestPath)
  const written: string[] = []
  const rows: Float32Array[] = []
  const failed: { name: string; reason: string }[] = []
  for (const name of names) {
    try {
      const pixels = prepare(readFileSync(join(options.imagesDir, name)), name)
      rows.push(extractFeatures(backbone, pixels))
      written.push(name)
    } catch (err) {
      failed.push({ name, reason: err instanceof Error ? err.message : String(err) })
    }
  }
  writeFeatureFile(options.outPath, written, rows)
  const errorsPath = `${options.outPath}.errors`
  if (failed.length > 0) {
    writeFileSync(errorsPath, failed.map(f => `${f.name}\t${f.reason}\n`).join(''), 'utf-8')
  } else if (existsSync(errorsPath)) {
    rmSync(errorsPath)
  }
  return { outPath: options.outPath, written, failed }
}
