import { describe, expect, it } from "vitest";

import { KeyAction, resolveKey } from "../src/keyboard.js";
import { AnnotationQueue } from "../src/queue.js";
import { parseTasks, slotCount } from "../src/schema.js";
import { defaultTaskFile } from "./helpers.js";

describe("resolveKey", () => {
  it("maps digits to zero-based slots", () => {
    expect(resolveKey("1")).toEqual({ type: "select-slot", index: 0 });
    expect(resolveKey("9")).toEqual({ type: "select-slot", index: 8 });
    expect(resolveKey("0")).toBeNull();
  });

  it("maps label, navigation, and submit keys", () => {
    expect(resolveKey("y")).toEqual({ type: "label", value: true });
    expect(resolveKey("n")).toEqual({ type: "label", value: false });
    expect(resolveKey("a")).toEqual({ type: "label-all", value: true });
    expect(resolveKey("j")).toEqual({ type: "move-slot", delta: 1 });
    expect(resolveKey("ArrowUp")).toEqual({ type: "move-slot", delta: -1 });
    expect(resolveKey(" ")).toEqual({ type: "next-task" });
    expect(resolveKey("Backspace")).toEqual({ type: "prev-task" });
    expect(resolveKey("g")).toEqual({ type: "first-incomplete" });
    expect(resolveKey("s")).toEqual({ type: "submit" });
  });

  it("leaves unbound keys alone", () => {
    for (const key of ["q", "Escape", "Enter", "F5", "Meta"]) {
      expect(resolveKey(key)).toBeNull();
    }
  });
});

// A queue driven exclusively through resolved key actions must reach a
// complete, exportable state: the keyboard path covers every label action.
describe("keyboard-only annotation", () => {
  function drive(queue: AnnotationQueue, keys: string[]): void {
    let activeSlot = 0;
    for (const key of keys) {
      const action = resolveKey(key) as KeyAction;
      expect(action).not.toBeNull();
      const task = queue.current();
      if (task === undefined) continue;
      switch (action.type) {
        case "select-slot":
          if (action.index < slotCount(task)) activeSlot = action.index;
          break;
        case "move-slot": {
          const next = activeSlot + action.delta;
          if (next >= 0 && next < slotCount(task)) activeSlot = next;
          break;
        }
        case "label":
          queue.setLabel(task.task_id, activeSlot, action.value);
          activeSlot = Math.min(activeSlot + 1, slotCount(task) - 1);
          break;
        case "label-all":
          for (let i = 0; i < slotCount(task); i++) {
            queue.setLabel(task.task_id, i, action.value);
          }
          break;
        case "next-task":
          queue.next();
          activeSlot = 0;
          break;
        case "prev-task":
          queue.prev();
          activeSlot = 0;
          break;
        case "first-incomplete":
          queue.goToFirstIncomplete();
          activeSlot = 0;
          break;
        case "submit":
          break;
      }
    }
  }

  it("fills the whole queue and leaves it exportable", () => {
    const queue = new AnnotationQueue(parseTasks(defaultTaskFile()));
    drive(queue, [
      "y", "n", "y",           // ext-0000: three slots, auto-advance
      " ", "a",                // ext-0001: all-yes shortcut
      " ", "1", "y", "n", "y", // att-0000: pick slot 1 then label through
      " ", "n",                // att-0001: single candidate
    ]);
    expect(queue.incompleteTaskIds()).toEqual([]);
    const rows = queue.exportLabels();
    expect(rows).toHaveLength(8);
    expect(rows[1]).toEqual({ task_id: "ext-0000", triple_index: 1, faithful: false });
    expect(rows[7]).toEqual({ task_id: "att-0001", candidate_index: 0, supported: false });
  });

  it("mistakes are correctable from the keyboard", () => {
    const queue = new AnnotationQueue(parseTasks(defaultTaskFile()));
    drive(queue, ["y", "1", "n"]); // label slot 0 yes, go back, relabel no
    expect(queue.getLabel("ext-0000", 0)).toBe(false);
  });
});
