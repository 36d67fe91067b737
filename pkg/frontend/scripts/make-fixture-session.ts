// Regenerates fixtures/exported-session.jsonl by driving the queue and
// exporter over the committed review batch, with a fixed clock so the
// output is stable. The pipeline's acceptance suite ingests this file.

import { readFileSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { parseBatch } from "../src/batch.js";
import { exportSession, newQueue, submitJudgment } from "../src/session.js";
import { QUESTION_TYPES } from "../src/types.js";

const root = join(dirname(fileURLToPath(import.meta.url)), "..", "..");
const batchPath = join(root, "fixtures", "review-batch.jsonl");
const sessionPath = join(root, "fixtures", "exported-session.jsonl");

const batch = parseBatch(readFileSync(batchPath, "utf-8"));
let queue = newQueue(batch);
queue.items.forEach((_, index) => {
  const type = QUESTION_TYPES[index % QUESTION_TYPES.length]!;
  const correct = index % 3 !== 2;
  queue = submitJudgment(queue, index, type, correct, () => `fixture-t${index}`);
});

writeFileSync(sessionPath, exportSession(queue, "ui-fixture-annotator", "ui-fixture-session"));
console.log(`wrote ${sessionPath}`);
