/**
 * Scripted annotator for headless runs and tests.
 *
 * Extraction slots are accepted as faithful; attribution slots are
 * labeled supported exactly when the candidate states the generated
 * triple verbatim (same subject, predicate, object). On the offline
 * fixture corpus this reproduces the pipeline's own judgments, which is
 * what the round-trip check needs.
 */

import { AnnotationQueue } from "./queue.js";
import { Task, slotCount } from "./schema.js";

export function autoLabelValue(task: Task, slot: number): boolean {
  if (task.kind === "extraction") return true;
  const candidate = task.candidates[slot];
  if (candidate === undefined) throw new RangeError(`${task.task_id}: no candidate ${slot}`);
  const g = task.generated;
  return (
    candidate.subject === g.subject &&
    candidate.predicate === g.predicate &&
    candidate.object === g.object
  );
}

export function autoFill(queue: AnnotationQueue): void {
  for (const task of queue.tasks) {
    for (let slot = 0; slot < slotCount(task); slot++) {
      queue.setLabel(task.task_id, slot, autoLabelValue(task, slot));
    }
  }
}
