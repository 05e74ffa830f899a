import { describe, expect, it } from "vitest";

import {
  TaskFileError,
  parseLabels,
  parseTasks,
  serializeLabels,
  slotCount,
} from "../src/schema.js";
import { attributionRow, defaultTaskFile, extractionRow, taskFile } from "./helpers.js";

describe("parseTasks", () => {
  it("keeps file order and both kinds", () => {
    const tasks = parseTasks(defaultTaskFile());
    expect(tasks.map((t) => t.task_id)).toEqual([
      "ext-0000", "ext-0001", "att-0000", "att-0001",
    ]);
    expect(tasks.map((t) => t.kind)).toEqual([
      "extraction", "extraction", "attribution", "attribution",
    ]);
    expect(slotCount(tasks[0]!)).toBe(3);
    expect(slotCount(tasks[2]!)).toBe(3);
  });

  it("ignores blank lines", () => {
    const text = "\n" + taskFile([extractionRow("ext-0000", 1)]) + "\n\n";
    expect(parseTasks(text)).toHaveLength(1);
  });

  it("names the malformed line", () => {
    const rows = Array.from({ length: 6 }, (_, i) => extractionRow(`ext-${i}`, 1));
    const text = taskFile(rows) + "{broken\n";
    expect(() => parseTasks(text)).toThrowError(/line 7: not valid JSON/);
    try {
      parseTasks(text);
    } catch (err) {
      expect((err as TaskFileError).line).toBe(7);
    }
  });

  it("rejects unknown kinds with the line number", () => {
    const text = taskFile([extractionRow("ext-0", 1), { kind: "mystery", task_id: "x" }]);
    expect(() => parseTasks(text)).toThrowError(/line 2: unknown task kind "mystery"/);
  });

  it("rejects missing fields, empty slots, and duplicate ids", () => {
    const noText = { ...extractionRow("ext-0", 1) } as Record<string, unknown>;
    delete noText["source_text"];
    expect(() => parseTasks(taskFile([noText]))).toThrowError(/source_text/);

    const empty = { ...extractionRow("ext-0", 1), triples: [] };
    expect(() => parseTasks(taskFile([empty]))).toThrowError(/non-empty array/);

    const dup = taskFile([extractionRow("ext-0", 1), extractionRow("ext-0", 1)]);
    expect(() => parseTasks(dup)).toThrowError(/line 2: duplicate task_id ext-0/);

    const badRank = attributionRow("att-0", [true]) as { candidates: { rank: unknown }[] };
    badRank.candidates[0]!.rank = "first";
    expect(() => parseTasks(taskFile([badRank]))).toThrowError(/rank must be an integer/);
  });
});

describe("label serialization", () => {
  it("round-trips both row shapes verbatim", () => {
    const rows = [
      { task_id: "ext-0000", triple_index: 0, faithful: true },
      { task_id: "ext-0000", triple_index: 1, faithful: false },
      { task_id: "att-0000", candidate_index: 2, supported: false },
    ];
    const text = serializeLabels(rows);
    expect(text.endsWith("\n")).toBe(true);
    expect(parseLabels(text)).toEqual(rows);
  });

  it("serializes with stable key order", () => {
    const a = serializeLabels([{ task_id: "t", triple_index: 0, faithful: true }]);
    expect(a).toBe('{"faithful":true,"task_id":"t","triple_index":0}\n');
  });

  it("rejects label rows that are neither shape", () => {
    expect(() => parseLabels('{"task_id":"t","triple_index":0}\n'))
      .toThrowError(/line 1: neither a faithful nor a supported label/);
  });

  it("serializes zero rows to an empty file", () => {
    expect(serializeLabels([])).toBe("");
  });
});
