// Box-literal scanning and crop-rectangle math.
//
// Mirrors the pipeline's conventions: a box literal is '[' immediately
// followed by a digit, four comma-separated unsigned decimals, ']' with
// no nested bracket; coordinates are fractions of width/height. Pixel
// rects use floor on the min corner and ceil on the max corner, computed
// on the literal's decimal digits so 0.702 * 1000 lands on 702 exactly.

import type { Box } from "./types.js";

const NUMBER = /^(?:[0-9]+(?:\.[0-9]+)?|\.[0-9]+)$/;

export function scanBoxes(text: string): Box[] {
  const out: Box[] = [];
  let i = 0;
  while (i < text.length) {
    if (text[i] === "[" && i + 1 < text.length && isDigit(text[i + 1]!)) {
      let j = i + 1;
      let closed = false;
      while (j < text.length) {
        const ch = text[j]!;
        if (ch === "[") break;
        if (ch === "]") {
          closed = true;
          break;
        }
        j += 1;
      }
      if (!closed) {
        i = j < text.length ? j : text.length;
        continue;
      }
      const parts = text
        .slice(i + 1, j)
        .split(",")
        .map((p) => p.trim());
      if (parts.length === 4 && parts.every((p) => NUMBER.test(p))) {
        const values = parts.map(Number) as [number, number, number, number];
        const [x1, y1, x2, y2] = values;
        const inRange = values.every((v) => v >= 0 && v <= 1);
        if (inRange && x1 < x2 && y1 < y2) {
          out.push({ x1, y1, x2, y2, raw: parts as Box["raw"] });
        }
      }
      i = j + 1;
      continue;
    }
    i += 1;
  }
  return out;
}

function isDigit(ch: string): boolean {
  return ch >= "0" && ch <= "9";
}

interface Decimal {
  numerator: number;
  denominator: number;
}

export function parseDecimal(text: string): Decimal {
  const dot = text.indexOf(".");
  if (dot < 0) return { numerator: Number(text), denominator: 1 };
  const fraction = text.slice(dot + 1);
  const digits = text.slice(0, dot) + fraction;
  return { numerator: Number(digits || "0"), denominator: 10 ** fraction.length };
}

/** floor/ceil crop rectangle in pixel space, exact over the decimal text. */
export function boxToPixels(
  box: Box,
  width: number,
  height: number,
): { left: number; top: number; right: number; bottom: number } {
  const [x1, y1, x2, y2] = box.raw.map(parseDecimal);
  return {
    left: Math.floor((x1!.numerator * width) / x1!.denominator),
    top: Math.floor((y1!.numerator * height) / y1!.denominator),
    right: Math.ceil((x2!.numerator * width) / x2!.denominator),
    bottom: Math.ceil((y2!.numerator * height) / y2!.denominator),
  };
}

/** Percentage CSS for an overlay div; tracks any displayed size. */
export function overlayStyle(box: Box): {
  left: string;
  top: string;
  width: string;
  height: string;
} {
  const pct = (v: number) => `${(v * 100).toFixed(4)}%`;
  return {
    left: pct(box.x1),
    top: pct(box.y1),
    width: pct(box.x2 - box.x1),
    height: pct(box.y2 - box.y1),
  };
}
