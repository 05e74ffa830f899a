/**
 * Page wiring: file input -> queue -> task view -> label file download.
 * Progress persists to localStorage per task-file fingerprint, so a
 * reload mid-session lands back where the annotator left off.
 */

import { isEditableTarget, resolveKey } from "./keyboard.js";
import { AnnotationQueue, IncompleteError } from "./queue.js";
import { renderProgress, renderTask } from "./render.js";
import { Task, TaskFileError, parseTasks, serializeLabels, slotCount } from "./schema.js";
import { fileFingerprint, loadProgress, saveProgress } from "./storage.js";

interface Session {
  queue: AnnotationQueue;
  fingerprint: string;
  activeSlot: number;
}

let session: Session | null = null;

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node;
}

function setStatus(text: string, isError = false): void {
  const status = byId("status");
  status.textContent = text;
  status.className = isError ? "status error" : "status";
}

function currentTask(): Task | undefined {
  return session?.queue.current();
}

function redraw(): void {
  const view = byId("task-view");
  view.textContent = "";
  if (session === null) return;

  const task = currentTask();
  byId("progress").textContent = renderProgress(session.queue);
  if (task === undefined) {
    view.appendChild(document.createTextNode("no tasks loaded"));
    return;
  }
  view.appendChild(
    renderTask(task, session.queue, session.activeSlot, {
      onLabel: (slot, value) => label(slot, value),
      onSelectSlot: (slot) => {
        if (session === null) return;
        session.activeSlot = slot;
        redraw();
      },
    })
  );
  const submit = byId("submit") as HTMLButtonElement;
  submit.disabled = session.queue.incompleteTaskIds().length > 0;
}

function persist(): void {
  if (session === null) return;
  try {
    saveProgress(window.localStorage, session.fingerprint, session.queue);
  } catch {
    // storage full or unavailable; the session still works, resume won't
  }
}

function label(slot: number, value: boolean): void {
  const task = currentTask();
  if (session === null || task === undefined) return;
  if (slot < 0 || slot >= slotCount(task)) return;
  session.queue.setLabel(task.task_id, slot, value);
  // auto-advance within the task, then hold on the last slot
  session.activeSlot = Math.min(slot + 1, slotCount(task) - 1);
  persist();
  redraw();
}

function moveSlot(delta: number): void {
  const task = currentTask();
  if (session === null || task === undefined) return;
  const next = session.activeSlot + delta;
  if (next >= 0 && next < slotCount(task)) {
    session.activeSlot = next;
    redraw();
  }
}

function moveTask(how: (queue: AnnotationQueue) => void): void {
  if (session === null) return;
  how(session.queue);
  session.activeSlot = 0;
  persist();
  redraw();
}

function submit(): void {
  if (session === null) return;
  let rows;
  try {
    rows = session.queue.exportLabels();
  } catch (err) {
    if (err instanceof IncompleteError) {
      setStatus(`cannot export: ${err.message}`, true);
      return;
    }
    throw err;
  }
  const blob = new Blob([serializeLabels(rows)], { type: "application/jsonl" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = "labels.jsonl";
  link.click();
  URL.revokeObjectURL(link.href);
  setStatus(`exported ${rows.length} labels`);
}

function loadFile(file: File): void {
  file.text().then((text) => {
    let tasks: Task[];
    try {
      tasks = parseTasks(text);
    } catch (err) {
      if (err instanceof TaskFileError) {
        setStatus(`${file.name}: ${err.message}`, true);
        return;
      }
      throw err;
    }
    const queue = new AnnotationQueue(tasks);
    const fingerprint = fileFingerprint(text);
    let resumed = false;
    try {
      resumed = loadProgress(window.localStorage, fingerprint, queue);
    } catch {
      // unreadable snapshot; start clean
    }
    session = { queue, fingerprint, activeSlot: 0 };
    if (resumed) queue.goToFirstIncomplete();
    setStatus(
      resumed
        ? `resumed ${file.name}: ${queue.progress().labeledSlots} slots already labeled`
        : `loaded ${file.name}: ${tasks.length} tasks`
    );
    redraw();
  });
}

export function init(): void {
  const input = byId("task-file") as HTMLInputElement;
  input.addEventListener("change", () => {
    const file = input.files?.[0];
    if (file !== undefined) loadFile(file);
  });
  byId("submit").addEventListener("click", submit);

  document.addEventListener("keydown", (event) => {
    if (isEditableTarget(event.target) || session === null) return;
    const action = resolveKey(event.key);
    if (action === null) return;
    event.preventDefault();
    switch (action.type) {
      case "select-slot": {
        const task = currentTask();
        if (task !== undefined && action.index < slotCount(task)) {
          session.activeSlot = action.index;
          redraw();
        }
        break;
      }
      case "move-slot":
        moveSlot(action.delta);
        break;
      case "label":
        label(session.activeSlot, action.value);
        break;
      case "label-all": {
        const task = currentTask();
        if (task !== undefined) {
          for (let i = 0; i < slotCount(task); i++) {
            session.queue.setLabel(task.task_id, i, action.value);
          }
          persist();
          redraw();
        }
        break;
      }
      case "next-task":
        moveTask((q) => q.next());
        break;
      case "prev-task":
        moveTask((q) => q.prev());
        break;
      case "first-incomplete":
        moveTask((q) => q.goToFirstIncomplete());
        break;
      case "submit":
        submit();
        break;
    }
  });
}

init();
