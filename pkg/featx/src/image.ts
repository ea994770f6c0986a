import jpeg from 'jpeg-js'
import { PNG } from 'pngjs'

/** RGB pixels in [0, 1], row-major, channel-interleaved. */
export interface RgbImage {
  width: number
  height: number
  data: Float32Array
}

const PNG_MAGIC = Buffer.from([0x89, 0x50, 0x4e, 0x47])
const JPEG_MAGIC = Buffer.from([0xff, 0xd8])

export function decodeImage(buffer: Buffer, name: string): RgbImage {
  let rgba: { width: number; height: number; data: Uint8Array | Buffer }
  if (buffer.subarray(0, 4).equals(PNG_MAGIC)) {
    rgba = PNG.sync.read(buffer)
  } else if (buffer.subarray(0, 2).equals(JPEG_MAGIC)) {
    rgba = jpeg.decode(buffer, { useTArray: true })
  } else {
    throw new Error(`${name}: not a PNG or JPEG file`)
  }
  const { width, height } = rgba
  const data = new Float32Array(width * height * 3)
  for (let p = 0; p < width * height; p++) {
    data[p * 3] = rgba.data[p * 4] / 255
    data[p * 3 + 1] = rgba.data[p * 4 + 1] / 255
    data[p * 3 + 2] = rgba.data[p * 4 + 2] / 255
  }
  return { width, height, data }
}

export function resizeBilinear(img: RgbImage, width: number, height: number): RgbImage {
  const out = new Float32Array(width * height * 3)
  const xScale = img.width / width
  const yScale = img.height / height
  for (let y = 0; y < height; y++) {
    const sy = Math.min(img.height - 1, (y + 0.5) * yScale - 0.5)
    const y0 = Math.max(0, Math.floor(sy))
    const y1 = Math.min(img.height - 1, y0 + 1)
    const fy = sy - y0
    for (let x = 0; x < width; x++) {
      const sx = Math.min(img.width - 1, (x + 0.5) * xScale - 0.5)
      const x0 = Math.max(0, Math.floor(sx))
      const x1 = Math.min(img.width - 1, x0 + 1)
      const fx = sx - x0
      for (let c = 0; c < 3; c++) {
        const p00 = img.data[(y0 * img.width + x0) * 3 + c]
        const p01 = img.data[(y0 * img.width + x1) * 3 + c]
        const p10 = img.data[(y1 * img.width + x0) * 3 + c]
        const p11 = img.data[(y1 * img.width + x1) * 3 + c]
        const top = p00 + (p01 - p00) * fx
        const bottom = p10 + (p11 - p10) * fx
        out[(y * width + x) * 3 + c] = Math.fround(top + (bottom - top) * fy)
      }
    }
  }
  return { width, height, data: out }
}

export function centerCrop(img: RgbImage, size: number): RgbImage {
  if (img.width < size || img.height < size) {
    throw new Error(`cannot center-crop ${img.width}x${img.height} to ${size}`)
  }
  const left = Math.floor((img.width - size) / 2)
  const top = Math.floor((img.height - size) / 2)
  const out = new Float32Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      for (let c = 0; c < 3; c++) {
        out[(y * size + x) * 3 + c] = img.data[((y + top) * img.width + (x + left)) * 3 + c]
      }
    }
  }
  return { width: size, height: size, data: out }
}

/**
 * Deterministic inference preprocessing: bilinear resize of the shorter side
 * to `size`, then a center crop of size x size.
 */
export function prepare(buffer: Buffer, name: string, size = 224): Float32Array {
  const img = decodeImage(buffer, name)
  const scale = size / Math.min(img.width, img.height)
  const resized = resizeBilinear(
    img,
    Math.max(size, Math.round(img.width * scale)),
    Math.max(size, Math.round(img.height * scale)),
  )
  return centerCrop(resized, size).data
}
