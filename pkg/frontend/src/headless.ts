#!/usr/bin/env node
/**
 * Drive a whole annotation session without a browser.
 *
 *   node dist/headless.js <tasks.jsonl> <labels-out.jsonl>
 *
 * Loads the task export through the same parse/queue/serialize path the
 * page uses, fills every slot with the scripted annotator, and writes
 * the label file. Exits 1 with the offending line number on a malformed
 * export, 2 on usage errors.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { autoFill } from "./autofill.js";
import { AnnotationQueue } from "./queue.js";
import { TaskFileError, parseTasks, serializeLabels } from "./schema.js";

function main(argv: string[]): number {
  const [tasksPath, outPath] = argv;
  if (tasksPath === undefined || outPath === undefined) {
    console.error("usage: headless.js <tasks.jsonl> <labels-out.jsonl>");
    return 2;
  }

  let queue: AnnotationQueue;
  try {
    queue = new AnnotationQueue(parseTasks(readFileSync(tasksPath, "utf-8")));
  } catch (err) {
    if (err instanceof TaskFileError) {
      console.error(`${tasksPath}: ${err.message}`);
      return 1;
    }
    throw err;
  }

  autoFill(queue);
  const missing = queue.incompleteTaskIds();
  if (missing.length > 0) {
    // autoFill covers every slot; reaching this means the queue is broken
    console.error(`internal error: unlabeled tasks remain: ${missing.join(", ")}`);
    return 1;
  }

  const rows = queue.exportLabels();
  writeFileSync(outPath, serializeLabels(rows));
  const p = queue.progress();
  console.log(
    `labeled ${p.labeledSlots} slots across ${p.totalTasks} tasks -> ${outPath}`
  );
  return 0;
}

process.exit(main(process.argv.slice(2)));
