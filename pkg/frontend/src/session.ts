// Review-queue state and session-file export.
//
// Judgments live in memory (autosaved to storage by the app shell) until
// every item is judged; export then produces the session file the
// pipeline's aggregation step ingests verbatim.

import type { Judgment, QuestionType, ReviewItem } from "./types.js";

export const SESSION_SCHEMA_VERSION = 1;

export interface QueueState {
  batchId: string;
  items: ReviewItem[];
  cursor: number;
}

export function newQueue(batch: { header: { batch_id: string }; items: ReviewItem[] }): QueueState {
  return { batchId: batch.header.batch_id, items: batch.items, cursor: 0 };
}

export function judgedCount(queue: QueueState): number {
  return queue.items.filter((item) => item.judgment !== null).length;
}

export function isComplete(queue: QueueState): boolean {
  return queue.items.length > 0 && judgedCount(queue) === queue.items.length;
}

export function progressLabel(queue: QueueState): string {
  return `${judgedCount(queue)}/${queue.items.length}`;
}

export function submitJudgment(
  queue: QueueState,
  index: number,
  type: QuestionType,
  correct: boolean,
  now: () => string = isoNow,
): QueueState {
  const item = queue.items[index];
  if (!item) throw new RangeError(`no item at index ${index}`);
  const items = queue.items.slice();
  items[index] = { ...item, judgment: { type, correct, timestamp: now() } };
  return { ...queue, items, cursor: Math.min(index + 1, items.length - 1) };
}

export function unjudgedCount(queue: QueueState): number {
  return queue.items.length - judgedCount(queue);
}

export class ExportBlockedError extends Error {
  constructor(readonly remaining: number) {
    super(`${remaining} remaining`);
  }
}

export function exportSession(
  queue: QueueState,
  annotatorId: string,
  sessionId: string,
): string {
  const remaining = unjudgedCount(queue);
  if (remaining > 0) throw new ExportBlockedError(remaining);
  const lines = [
    JSON.stringify({
      kind: "eval_session",
      schema_version: SESSION_SCHEMA_VERSION,
      session_id: sessionId,
      annotator: annotatorId,
      batch_ref: queue.batchId,
    }),
  ];
  for (const item of queue.items) {
    const judgment = item.judgment!;
    lines.push(
      JSON.stringify({
        sample_id: item.sample.id,
        type: judgment.type,
        correct: judgment.correct,
        timestamp: judgment.timestamp,
      }),
    );
  }
  return lines.join("\n") + "\n";
}

function isoNow(): string {
  return new Date().toISOString();
}

// ---------------------------------------------------------------------
// Autosave. Storage is injectable so tests can use a plain Map.

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

interface SavedJudgments {
  [sampleId: string]: Judgment;
}

export function saveJudgments(queue: QueueState, store: KeyValueStore): void {
  const saved: SavedJudgments = {};
  for (const item of queue.items) {
    if (item.judgment) saved[item.sample.id] = item.judgment;
  }
  store.setItem(`review-ui/${queue.batchId}`, JSON.stringify(saved));
}

export function restoreJudgments(queue: QueueState, store: KeyValueStore): QueueState {
  const raw = store.getItem(`review-ui/${queue.batchId}`);
  if (!raw) return queue;
  let saved: SavedJudgments;
  try {
    saved = JSON.parse(raw) as SavedJudgments;
  } catch {
    return queue;
  }
  const items = queue.items.map((item) =>
    saved[item.sample.id] ? { ...item, judgment: saved[item.sample.id]! } : item,
  );
  return { ...queue, items };
}
