import { uniformWeights } from './prng.js'

/**
 * A VGG-style convolutional backbone with fixed, procedurally generated
 * weights: 3x3 convolutions with ReLU and 2x2 max pooling down to 7x7,
 * then two fully connected layers.  The extracted feature is the 4096-unit
 * activation of the last fully connected layer.  Weights are constants
 * derived from a fixed seed, so extraction is bit-reproducible; swap in real
 * pretrained weights via `buildBackbone({ weightsSeed })` variants if a
 * trained checkpoint becomes available.
 */

export const INPUT_SIZE = 224
export const FEATURE_DIM = 4096

export interface ConvLayer {
  inChannels: number
  outChannels: number
  weights: Float32Array // [out][in][3][3]
  bias: Float32Array
}

export interface DenseLayer {
  inSize: number
  outSize: number
  weights: Float32Array // [out][in]
  bias: Float32Array
}

export interface Backbone {
  convs: ConvLayer[]
  fc1: DenseLayer
  fc2: DenseLayer
}

const CONV_CHANNELS = [3, 8, 16, 16, 16, 16]
const FC1_SIZE = 1024

function xavierBound(fanIn: number, fanOut: number): number {
  return Math.sqrt(6 / (fanIn + fanOut))
}

export function buildBackbone(weightsSeed = 0x56474746): Backbone {
  let seed = weightsSeed
  const convs: ConvLayer[] = []
  for (let i = 0; i + 1 < CONV_CHANNELS.length; i++) {
    const [cin, cout] = [CONV_CHANNELS[i], CONV_CHANNELS[i + 1]]
    convs.push({
      inChannels: cin,
      outChannels: cout,
      weights: uniformWeights(cout * cin * 9, xavierBound(cin * 9, cout * 9), seed++),
      bias: new Float32Array(cout),
    })
  }
  const spatial = INPUT_SIZE / 2 ** convs.length // 224 -> 7 after five pools
  const flat = spatial * spatial * CONV_CHANNELS[CONV_CHANNELS.length - 1]
  const fc1: DenseLayer = {
    inSize: flat,
    outSize: FC1_SIZE,
    weights: uniformWeights(flat * FC1_SIZE, xavierBound(flat, FC1_SIZE), seed++),
    bias: new Float32Array(FC1_SIZE),
  }
  const fc2: DenseLayer = {
    inSize: FC1_SIZE,
    outSize: FEATURE_DIM,
    weights: uniformWeights(FC1_SIZE * FEATURE_DIM, xavierBound(FC1_SIZE, FEATURE_DIM), seed++),
    bias: new Float32Array(FEATURE_DIM),
  }
  return { convs, fc1, fc2 }
}

/** 3x3 same-padding convolution plus ReLU, channel-interleaved layout. */
function convRelu(layer: ConvLayer, input: Float32Array, size: number): Float32Array {
  const { inChannels, outChannels, weights, bias } = layer
  const out = new Float32Array(size * size * outChannels)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      for (let oc = 0; oc < outChannels; oc++) {
        let acc = bias[oc]
        const wBase = oc * inChannels * 9
        for (let ky = -1; ky <= 1; ky++) {
          const sy = y + ky
          if (sy < 0 || sy >= size) continue
          for (let kx = -1; kx <= 1; kx++) {
            const sx = x + kx
            if (sx < 0 || sx >= size) continue
            const pBase = (sy * size + sx) * inChannels
            const kBase = wBase + ((ky + 1) * 3 + (kx + 1))
            for (let ic = 0; ic < inChannels; ic++) {
              acc += input[pBase + ic] * weights[kBase + ic * 9]
            }
          }
        }
        out[(y * size + x) * outChannels + oc] = acc > 0 ? Math.fround(acc) : 0
      }
    }
  }
  return out
}

function maxPool2(input: Float32Array, size: number, channels: number): Float32Array {
  const half = size / 2
  const out = new Float32Array(half * half * channels)
  for (let y = 0; y < half; y++) {
    for (let x = 0; x < half; x++) {
      for (let c = 0; c < channels; c++) {
        const a = input[((2 * y) * size + 2 * x) * channels + c]
        const b = input[((2 * y) * size + 2 * x + 1) * channels + c]
        const d = input[((2 * y + 1) * size + 2 * x) * channels + c]
        const e = input[((2 * y + 1) * size + 2 * x + 1) * channels + c]
        out[(y * half + x) * channels + c] = Math.max(a, b, d, e)
      }
    }
  }
  return out
}

function denseRelu(layer: DenseLayer, input: Float32Array): Float32Array {
  const out = new Float32Array(layer.outSize)
  for (let o = 0; o < layer.outSize; o++) {
    let acc = layer.bias[o]
    const base = o * layer.inSize
    for (let i = 0; i < layer.inSize; i++) {
      acc += input[i] * layer.weights[base + i]
    }
    out[o] = acc > 0 ? Math.fround(acc) : 0
  }
  return out
}

/** Run the backbone over prepared 224x224x3 pixels; returns the 4096-d activation. */
export function extractFeatures(backbone: Backbone, pixels: Float32Array): Float32Array {
  if (pixels.length !== INPUT_SIZE * INPUT_SIZE * 3) {
    throw new Error(`expected ${INPUT_SIZE}x${INPUT_SIZE}x3 pixels, got ${pixels.length} values`)
  }
  let activations = pixels
  let size = INPUT_SIZE
  for (const conv of backbone.convs) {
    activations = convRelu(conv, activations, size)
    activations = maxPool2(activations, size, conv.outChannels)
    size /= 2
  }
  return denseRelu(backbone.fc2, denseRelu(backbone.fc1, activations))
}
