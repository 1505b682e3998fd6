/** Client-side face frame preparation.
 *
 * Frames are cropped to the on-screen guide box, box-filtered down to
 * 64x64, converted to grayscale, and encoded as binary PGM (P5, maxval
 * 255) — byte-for-byte the format the server's loader reads back
 * pixel-identically.
 */

export const FACE_SIZE = 64;

const PGM_HEADER = `P5\n${FACE_SIZE} ${FACE_SIZE}\n255\n`;

export interface CropBox {
  x: number;
  y: number;
  size: number;
}

/** RGBA canvas pixels to 8-bit grayscale (Rec. 601 luma). */
export function rgbaToGray(
  rgba: Uint8ClampedArray,
  width: number,
  height: number,
): Uint8Array {
  if (rgba.length !== width * height * 4) {
    throw new Error(`expected ${width * height * 4} RGBA bytes, got ${rgba.length}`);
  }
  const gray = new Uint8Array(width * height);
  for (let i = 0; i < gray.length; i++) {
    const r = rgba[i * 4];
    const g = rgba[i * 4 + 1];
    const b = rgba[i * 4 + 2];
    gray[i] = Math.round(0.299 * r + 0.587 * g + 0.114 * b);
  }
  return gray;
}

/** Crop a square region and box-average it down to 64x64. */
export function cropAndScale(
  gray: Uint8Array,
  width: number,
  height: number,
  box: CropBox,
): Uint8Array {
  if (
    box.size < FACE_SIZE ||
    box.x < 0 ||
    box.y < 0 ||
    box.x + box.size > width ||
    box.y + box.size > height
  ) {
    throw new Error(
      `crop box ${box.size}px at (${box.x}, ${box.y}) does not fit a ${width}x${height} frame`,
    );
  }
  const out = new Uint8Array(FACE_SIZE * FACE_SIZE);
  for (let dy = 0; dy < FACE_SIZE; dy++) {
    const y0 = box.y + Math.floor((dy * box.size) / FACE_SIZE);
    const y1 = box.y + Math.floor(((dy + 1) * box.size) / FACE_SIZE);
    for (let dx = 0; dx < FACE_SIZE; dx++) {
      const x0 = box.x + Math.floor((dx * box.size) / FACE_SIZE);
      const x1 = box.x + Math.floor(((dx + 1) * box.size) / FACE_SIZE);
      let sum = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) {
          sum += gray[y * width + x];
        }
      }
      out[dy * FACE_SIZE + dx] = Math.round(sum / ((y1 - y0) * (x1 - x0)));
    }
  }
  return out;
}

/** 64x64 grayscale pixels to binary PGM bytes. */
export function encodePgm(pixels: Uint8Array): Uint8Array {
  if (pixels.length !== FACE_SIZE * FACE_SIZE) {
    throw new Error(`expected ${FACE_SIZE * FACE_SIZE} pixels, got ${pixels.length}`);
  }
  const header = new TextEncoder().encode(PGM_HEADER);
  const out = new Uint8Array(header.length + pixels.length);
  out.set(header, 0);
  out.set(pixels, header.length);
  return out;
}

/** Bytes to base64 without blowing the call stack on large frames. */
export function toBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

/** One camera frame, already grayscale-converted, as a base64 PGM payload. */
export function frameToPayload(
  gray: Uint8Array,
  width: number,
  height: number,
  box: CropBox,
): string {
  return toBase64(encodePgm(cropAndScale(gray, width, height, box)));
}
