// Batch-file loading: header line, then one sample record per line.

import { scanBoxes } from "./boxes.js";
import type { BatchHeader, Box, ReviewItem, SampleRecord } from "./types.js";

export class BatchFormatError extends Error {
  constructor(message: string, readonly recordIndex: number) {
    super(`record ${recordIndex}: ${message}`);
  }
}

export interface LoadedBatch {
  header: BatchHeader;
  items: ReviewItem[];
}

export function parseBatch(content: string, imageBase = ""): LoadedBatch {
  const lines = content
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  if (lines.length === 0) throw new BatchFormatError("empty batch file", 0);

  let header: BatchHeader;
  try {
    header = JSON.parse(lines[0]!) as BatchHeader;
  } catch (error) {
    throw new BatchFormatError(`bad header JSON: ${error}`, 0);
  }
  if (header.kind !== "eval_batch") {
    throw new BatchFormatError("missing eval_batch header", 0);
  }

  const items: ReviewItem[] = [];
  lines.slice(1).forEach((line, index) => {
    let record: SampleRecord;
    try {
      record = JSON.parse(line) as SampleRecord;
    } catch (error) {
      throw new BatchFormatError(`bad sample JSON: ${error}`, index + 1);
    }
    if (!record.id || !record.image || !Array.isArray(record.turns)) {
      throw new BatchFormatError("sample missing id/image/turns", index + 1);
    }
    const boxes: Box[] = [];
    for (const turn of record.turns) {
      boxes.push(...scanBoxes(turn.question), ...scanBoxes(turn.answer));
    }
    items.push({
      sample: record,
      imageUrl: imageBase ? `${imageBase.replace(/\/$/, "")}/${record.image}` : record.image,
      boxes,
      judgment: null,
    });
  });
  if (header.n !== undefined && header.n !== items.length) {
    throw new BatchFormatError(
      `header declares ${header.n} samples but file has ${items.length}`,
      0,
    );
  }
  return { header, items };
}
