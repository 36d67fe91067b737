import { describe, expect, it } from "vitest";

import { boxToPixels, overlayStyle, parseDecimal, scanBoxes } from "../src/boxes.js";

describe("scanBoxes", () => {
  it("finds a plain box literal", () => {
    const boxes = scanBoxes("the region [0.064,0.277,0.406,0.586] in image");
    expect(boxes).toHaveLength(1);
    expect(boxes[0]).toMatchObject({ x1: 0.064, y1: 0.277, x2: 0.406, y2: 0.586 });
  });

  it("tolerates spaces after commas", () => {
    const boxes = scanBoxes("[0.2, 0.05, 0.8, 0.95]");
    expect(boxes).toHaveLength(1);
    expect(boxes[0]!.raw).toEqual(["0.2", "0.05", "0.8", "0.95"]);
  });

  it("ignores prose brackets, points and malformed literals", () => {
    expect(scanBoxes("none here [see fig] [0.5,0.5] [1,2,3]")).toHaveLength(0);
  });

  it("skips out-of-range and degenerate boxes rather than overlaying them", () => {
    expect(scanBoxes("[1.2,0.0,1.5,0.5]")).toHaveLength(0);
    expect(scanBoxes("[0.9,0.2,0.1,0.5]")).toHaveLength(0);
  });

  it("finds several boxes with offsets intact", () => {
    const text = "a [0.1,0.1,0.4,0.4] b [0.5,0.5,0.9,0.9] c";
    expect(scanBoxes(text)).toHaveLength(2);
  });
});

describe("parseDecimal", () => {
  it("keeps trailing zeros significant", () => {
    expect(parseDecimal("0.320")).toEqual({ numerator: 320, denominator: 1000 });
    expect(parseDecimal("1")).toEqual({ numerator: 1, denominator: 1 });
    expect(parseDecimal("0.05")).toEqual({ numerator: 5, denominator: 100 });
  });
});

describe("boxToPixels", () => {
  it("matches the pipeline's floor/ceil rule on reference values", () => {
    const box = scanBoxes("[0.320,0.283,0.702,0.635]")[0]!;
    expect(boxToPixels(box, 1000, 800)).toEqual({ left: 320, top: 226, right: 702, bottom: 508 });
  });

  it("handles the full-image box", () => {
    const box = scanBoxes("[0.000,0.000,1.000,1.000]")[0]!;
    expect(boxToPixels(box, 640, 480)).toEqual({ left: 0, top: 0, right: 640, bottom: 480 });
  });

  it("is exact where float multiplication would drift", () => {
    const box = scanBoxes("[0.005,0.332,0.249,0.984]")[0]!;
    expect(boxToPixels(box, 100, 100)).toEqual({ left: 0, top: 33, right: 25, bottom: 99 });
  });
});

describe("overlayStyle", () => {
  it("scales with the displayed size within one pixel of the crop rect", () => {
    const box = scanBoxes("[0.320,0.283,0.702,0.635]")[0]!;
    const style = overlayStyle(box);
    const natural = { width: 1000, height: 800 };
    const rect = boxToPixels(box, natural.width, natural.height);
    const left = (parseFloat(style.left) / 100) * natural.width;
    const top = (parseFloat(style.top) / 100) * natural.height;
    const right = left + (parseFloat(style.width) / 100) * natural.width;
    const bottom = top + (parseFloat(style.height) / 100) * natural.height;
    expect(Math.abs(left - rect.left)).toBeLessThanOrEqual(1);
    expect(Math.abs(top - rect.top)).toBeLessThanOrEqual(1);
    expect(Math.abs(right - rect.right)).toBeLessThanOrEqual(1);
    expect(Math.abs(bottom - rect.bottom)).toBeLessThanOrEqual(1);
  });
});
