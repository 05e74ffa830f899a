/**
 * DOM construction for the current task. All state lives in the queue;
 * this module only draws it and forwards clicks, so everything it does
 * has a keyboard twin in app.ts.
 */

import { AnnotationQueue } from "./queue.js";
import { AttributionTask, ExtractionTask, Task, TriplePayload, slotCount } from "./schema.js";

export interface RenderCallbacks {
  onLabel(slot: number, value: boolean): void;
  onSelectSlot(slot: number): void;
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function tripleText(t: TriplePayload): string {
  return `(${t.subject} | ${t.predicate} | ${t.object})`;
}

function slotRow(
  label: string,
  value: boolean | undefined,
  slot: number,
  active: boolean,
  cb: RenderCallbacks
): HTMLElement {
  const row = el("div", active ? "slot active" : "slot");
  row.addEventListener("click", () => cb.onSelectSlot(slot));

  const state = value === undefined ? "?" : value ? "yes" : "no";
  const badgeClass = value === undefined ? "badge" : value ? "badge yes" : "badge no";
  row.appendChild(el("span", "slot-num", String(slot + 1)));
  row.appendChild(el("span", badgeClass, state));
  row.appendChild(el("span", "slot-label", label));

  for (const [text, v] of [["yes", true], ["no", false]] as const) {
    const button = el("button", "label-btn", text);
    button.addEventListener("click", (event) => {
      event.stopPropagation();
      cb.onLabel(slot, v);
    });
    row.appendChild(button);
  }
  return row;
}

function renderExtraction(
  task: ExtractionTask,
  queue: AnnotationQueue,
  activeSlot: number,
  cb: RenderCallbacks
): HTMLElement {
  const root = el("div", "task");
  root.appendChild(el("h2", "task-title", `Is each triple faithful to this ${task.source} text?`));
  root.appendChild(el("pre", "source-text", task.source_text));
  const list = el("div", "slots");
  task.triples.forEach((triple, i) => {
    list.appendChild(
      slotRow(tripleText(triple), queue.getLabel(task.task_id, i), i, i === activeSlot, cb)
    );
  });
  root.appendChild(list);
  return root;
}

function renderAttribution(
  task: AttributionTask,
  queue: AnnotationQueue,
  activeSlot: number,
  cb: RenderCallbacks
): HTMLElement {
  const root = el("div", "task");
  root.appendChild(el("h2", "task-title", "Does each candidate state this generated claim?"));
  root.appendChild(el("pre", "source-text", tripleText(task.generated)));
  const list = el("div", "slots");
  let lastSource = "";
  task.candidates.forEach((candidate, i) => {
    if (candidate.source !== lastSource) {
      list.appendChild(el("div", "source-group", `from ${candidate.source}`));
      lastSource = candidate.source;
    }
    list.appendChild(
      slotRow(tripleText(candidate), queue.getLabel(task.task_id, i), i, i === activeSlot, cb)
    );
  });
  root.appendChild(list);
  return root;
}

export function renderTask(
  task: Task,
  queue: AnnotationQueue,
  activeSlot: number,
  cb: RenderCallbacks
): HTMLElement {
  return task.kind === "extraction"
    ? renderExtraction(task, queue, activeSlot, cb)
    : renderAttribution(task, queue, activeSlot, cb);
}

export function renderProgress(queue: AnnotationQueue): string {
  const p = queue.progress();
  const pos = queue.tasks.length === 0 ? 0 : queue.index + 1;
  return `task ${pos}/${p.totalTasks} · ${p.labeledSlots}/${p.totalSlots} slots labeled`;
}

export { slotCount };
