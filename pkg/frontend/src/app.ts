// DOM shell: load a batch file, page through items with box overlays,
// capture judgments via buttons or keyboard, export the session file.
//
// Keyboard map: 1..7 pick the question type (order of QUESTION_TYPES),
// then C = correct, X = incorrect records the judgment. Arrows navigate.

import { parseBatch } from "./batch.js";
import { overlayStyle } from "./boxes.js";
import {
  QueueState,
  exportSession,
  isComplete,
  newQueue,
  progressLabel,
  restoreJudgments,
  saveJudgments,
  submitJudgment,
  unjudgedCount,
} from "./session.js";
import { QUESTION_TYPES, QUESTION_TYPE_LABELS, QuestionType } from "./types.js";

interface AppState {
  queue: QueueState | null;
  pendingType: QuestionType | null;
  annotator: string;
}

const state: AppState = { queue: null, pendingType: null, annotator: "annotator" };

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

export function boot(): void {
  const fileInput = $("batch-file") as HTMLInputElement;
  fileInput.addEventListener("change", async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const imageBase = ($("image-base") as HTMLInputElement).value.trim();
    try {
      const batch = parseBatch(await file.text(), imageBase);
      state.queue = restoreJudgments(newQueue(batch), window.localStorage);
      render();
    } catch (error) {
      $("status").textContent = String(error);
    }
  });
  ($("annotator") as HTMLInputElement).addEventListener("input", (event) => {
    state.annotator = (event.target as HTMLInputElement).value || "annotator";
  });
  $("prev").addEventListener("click", () => move(-1));
  $("next").addEventListener("click", () => move(1));
  $("export").addEventListener("click", doExport);
  document.addEventListener("keydown", onKey);
  renderTypeButtons();
  render();
}

function move(delta: number): void {
  if (!state.queue) return;
  const next = state.queue.cursor + delta;
  if (next >= 0 && next < state.queue.items.length) {
    state.queue = { ...state.queue, cursor: next };
    state.pendingType = null;
    render();
  }
}

function onKey(event: KeyboardEvent): void {
  if (!state.queue) return;
  if (event.key >= "1" && event.key <= "7") {
    state.pendingType = QUESTION_TYPES[Number(event.key) - 1] ?? null;
    render();
  } else if (event.key.toLowerCase() === "c" || event.key.toLowerCase() === "x") {
    judge(event.key.toLowerCase() === "c");
  } else if (event.key === "ArrowLeft") {
    move(-1);
  } else if (event.key === "ArrowRight") {
    move(1);
  }
}

function judge(correct: boolean): void {
  if (!state.queue || !state.pendingType) return;
  state.queue = submitJudgment(state.queue, state.queue.cursor, state.pendingType, correct);
  saveJudgments(state.queue, window.localStorage);
  state.pendingType = null;
  render();
}

function doExport(): void {
  if (!state.queue) return;
  try {
    const content = exportSession(
      state.queue,
      state.annotator,
      `session-${state.queue.batchId}`,
    );
    const blob = new Blob([content], { type: "application/jsonl" });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = `session-${state.queue.batchId}.jsonl`;
    link.click();
    URL.revokeObjectURL(link.href);
  } catch (error) {
    $("status").textContent = `export blocked: ${error}`;
  }
}

function renderTypeButtons(): void {
  const host = $("type-buttons");
  host.textContent = "";
  QUESTION_TYPES.forEach((type, index) => {
    const button = document.createElement("button");
    button.textContent = `${index + 1} ${QUESTION_TYPE_LABELS[type]}`;
    button.dataset.type = type;
    button.addEventListener("click", () => {
      state.pendingType = type;
      render();
    });
    host.appendChild(button);
  });
  $("mark-correct").addEventListener("click", () => judge(true));
  $("mark-incorrect").addEventListener("click", () => judge(false));
}

export function render(): void {
  const queue = state.queue;
  $("progress").textContent = queue ? progressLabel(queue) : "no batch loaded";
  const exportButton = $("export") as HTMLButtonElement;
  exportButton.disabled = !queue || !isComplete(queue);
  if (queue && !isComplete(queue)) {
    exportButton.title = `${unjudgedCount(queue)} remaining`;
  }
  const stage = $("stage");
  stage.textContent = "";
  if (!queue || queue.items.length === 0) {
    $("status").textContent = queue ? "empty batch" : "load a batch file to begin";
    return;
  }
  const item = queue.items[queue.cursor]!;
  $("status").textContent = state.pendingType
    ? `type set to ${QUESTION_TYPE_LABELS[state.pendingType]}; press C or X`
    : item.judgment
      ? `judged: ${QUESTION_TYPE_LABELS[item.judgment.type]}, ${item.judgment.correct ? "correct" : "incorrect"}`
      : "pick a type (1-7), then C correct / X incorrect";

  const frame = document.createElement("div");
  frame.className = "frame";
  const image = document.createElement("img");
  image.src = item.imageUrl;
  image.alt = item.sample.image;
  image.addEventListener("error", () => {
    image.replaceWith(placeholder(item.sample.image));
  });
  frame.appendChild(image);
  for (const box of item.boxes) {
    const overlay = document.createElement("div");
    overlay.className = "overlay";
    Object.assign(overlay.style, overlayStyle(box));
    frame.appendChild(overlay);
  }
  stage.appendChild(frame);

  const qa = document.createElement("dl");
  for (const turn of item.sample.turns) {
    const q = document.createElement("dt");
    q.textContent = turn.question;
    const a = document.createElement("dd");
    a.textContent = turn.answer;
    qa.append(q, a);
  }
  stage.appendChild(qa);
}

function placeholder(name: string): HTMLElement {
  const div = document.createElement("div");
  div.className = "missing-image";
  div.textContent = `image unavailable: ${name}`;
  return div;
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  // loaded as a module script at the end of the body
  try {
    boot();
  } catch {
    // test environments mount their own DOM before calling boot()
  }
}
