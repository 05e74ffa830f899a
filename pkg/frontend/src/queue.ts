/**
 * The annotation session: tasks in export order, one boolean per slot.
 *
 * A slot is one triple of an extraction task or one candidate of an
 * attribution task. Labels live in a flat map keyed by (task, slot) so
 * partial progress serializes trivially for resume.
 */

import { LabelRow, Task, slotCount } from "./schema.js";

const KEY_SEP = "";

function slotKey(taskId: string, index: number): string {
  return `${taskId}${KEY_SEP}${index}`;
}

export class IncompleteError extends Error {
  readonly taskIds: string[];

  constructor(taskIds: string[]) {
    super(`labels missing for ${taskIds.length} task(s): ${taskIds.join(", ")}`);
    this.name = "IncompleteError";
    this.taskIds = taskIds;
  }
}

export interface Progress {
  labeledSlots: number;
  totalSlots: number;
  completeTasks: number;
  totalTasks: number;
}

export class AnnotationQueue {
  readonly tasks: Task[];
  private position = 0;
  private labels = new Map<string, boolean>();

  constructor(tasks: Task[]) {
    this.tasks = tasks;
  }

  get index(): number {
    return this.position;
  }

  current(): Task | undefined {
    return this.tasks[this.position];
  }

  goTo(index: number): void {
    if (index < 0 || index >= this.tasks.length) return;
    this.position = index;
  }

  next(): void {
    this.goTo(this.position + 1);
  }

  prev(): void {
    this.goTo(this.position - 1);
  }

  /** Jump to the first task with an unlabeled slot; no-op when done. */
  goToFirstIncomplete(): void {
    for (let i = 0; i < this.tasks.length; i++) {
      if (!this.isComplete(this.tasks[i]!)) {
        this.position = i;
        return;
      }
    }
  }

  setLabel(taskId: string, slot: number, value: boolean): void {
    this.labels.set(slotKey(taskId, slot), value);
  }

  getLabel(taskId: string, slot: number): boolean | undefined {
    return this.labels.get(slotKey(taskId, slot));
  }

  isComplete(task: Task): boolean {
    for (let i = 0; i < slotCount(task); i++) {
      if (this.getLabel(task.task_id, i) === undefined) return false;
    }
    return true;
  }

  incompleteTaskIds(): string[] {
    return this.tasks.filter((t) => !this.isComplete(t)).map((t) => t.task_id);
  }

  progress(): Progress {
    let labeledSlots = 0;
    let totalSlots = 0;
    let completeTasks = 0;
    for (const task of this.tasks) {
      const slots = slotCount(task);
      totalSlots += slots;
      for (let i = 0; i < slots; i++) {
        if (this.getLabel(task.task_id, i) !== undefined) labeledSlots++;
      }
      if (this.isComplete(task)) completeTasks++;
    }
    return { labeledSlots, totalSlots, completeTasks, totalTasks: this.tasks.length };
  }

  /**
   * All labels as import-schema rows, in task order then slot order.
   * Refuses while any slot is missing: a partial label file scores as an
   * annotator error downstream, so it must never be exportable.
   */
  exportLabels(): LabelRow[] {
    const missing = this.incompleteTaskIds();
    if (missing.length > 0) throw new IncompleteError(missing);
    const rows: LabelRow[] = [];
    for (const task of this.tasks) {
      for (let i = 0; i < slotCount(task); i++) {
        const value = this.getLabel(task.task_id, i)!;
        rows.push(
          task.kind === "extraction"
            ? { task_id: task.task_id, triple_index: i, faithful: value }
            : { task_id: task.task_id, candidate_index: i, supported: value }
        );
      }
    }
    return rows;
  }

  /** Snapshot for resume: labels plus cursor, JSON-safe. */
  snapshot(): { position: number; labels: [string, boolean][] } {
    return { position: this.position, labels: [...this.labels.entries()] };
  }

  restore(snap: { position: number; labels: [string, boolean][] }): void {
    this.labels = new Map(snap.labels);
    this.position = Math.min(Math.max(0, snap.position), Math.max(0, this.tasks.length - 1));
  }
}
