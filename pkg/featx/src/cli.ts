#!/usr/bin/env node
import { extract } from './extract.js'

function usage(): never {
  console.error('usage: featx --images DIR --manifest FILE --out FILE')
  process.exit(2)
}

function parseArgs(argv: string[]): { imagesDir: string; manifestPath: string; outPath: string } {
  const values: Record<string, string> = {}
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    const value = argv[i + 1]
    if (!key.startsWith('--') || value === undefined) usage()
    values[key.slice(2)] = value
  }
  if (!values.images || !values.manifest || !values.out) usage()
  return { imagesDir: values.images, manifestPath: values.manifest, outPath: values.out }
}

const options = parseArgs(process.argv.slice(2))
const result = extract(options)
console.log(`wrote ${result.written.length} feature rows to ${result.outPath}`)
if (result.failed.length > 0) {
  console.error(`${result.failed.length} image(s) failed; see ${result.outPath}.errors`)
}
