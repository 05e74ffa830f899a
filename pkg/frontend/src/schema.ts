/**
 * Task and label file formats shared with the evaluation pipeline.
 *
 * Tasks arrive as JSONL, one task per line, kind-discriminated. Labels
 * leave as JSONL, one boolean slot per line. Parsing is strict: any
 * malformed line fails the whole load with its 1-based line number, so
 * an annotator never works on a silently truncated queue.
 */

export interface TriplePayload {
  triple_id: string;
  subject: string;
  predicate: string;
  object: string;
}

export interface CandidatePayload extends TriplePayload {
  display_index: number;
  source: string;
  rank: number;
}

export interface ExtractionTask {
  kind: "extraction";
  task_id: string;
  instance_id: string;
  source: string;
  source_text: string;
  triples: TriplePayload[];
}

export interface AttributionTask {
  kind: "attribution";
  task_id: string;
  instance_id: string;
  generated: TriplePayload;
  candidates: CandidatePayload[];
}

export type Task = ExtractionTask | AttributionTask;

export type LabelRow =
  | { task_id: string; triple_index: number; faithful: boolean }
  | { task_id: string; candidate_index: number; supported: boolean };

export class TaskFileError extends Error {
  readonly line: number;

  constructor(line: number, detail: string) {
    super(`line ${line}: ${detail}`);
    this.name = "TaskFileError";
    this.line = line;
  }
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function str(row: Record<string, unknown>, field: string, line: number): string {
  const value = row[field];
  if (typeof value !== "string" || value === "") {
    throw new TaskFileError(line, `${field} must be a non-empty string`);
  }
  return value;
}

function int(row: Record<string, unknown>, field: string, line: number): number {
  const value = row[field];
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new TaskFileError(line, `${field} must be an integer`);
  }
  return value;
}

function triplePayload(value: unknown, where: string, line: number): TriplePayload {
  if (!isRecord(value)) throw new TaskFileError(line, `${where} must be an object`);
  return {
    triple_id: str(value, "triple_id", line),
    subject: str(value, "subject", line),
    predicate: str(value, "predicate", line),
    object: str(value, "object", line),
  };
}

function candidatePayload(value: unknown, line: number): CandidatePayload {
  const base = triplePayload(value, "candidate", line);
  const row = value as Record<string, unknown>;
  return {
    ...base,
    display_index: int(row, "display_index", line),
    source: str(row, "source", line),
    rank: int(row, "rank", line),
  };
}

function parseTaskLine(payload: unknown, line: number): Task {
  if (!isRecord(payload)) throw new TaskFileError(line, "task must be an object");
  const kind = payload["kind"];
  if (kind === "extraction") {
    const triples = payload["triples"];
    if (!Array.isArray(triples) || triples.length === 0) {
      throw new TaskFileError(line, "triples must be a non-empty array");
    }
    return {
      kind,
      task_id: str(payload, "task_id", line),
      instance_id: str(payload, "instance_id", line),
      source: str(payload, "source", line),
      source_text: str(payload, "source_text", line),
      triples: triples.map((t) => triplePayload(t, "triple", line)),
    };
  }
  if (kind === "attribution") {
    const candidates = payload["candidates"];
    if (!Array.isArray(candidates) || candidates.length === 0) {
      throw new TaskFileError(line, "candidates must be a non-empty array");
    }
    return {
      kind,
      task_id: str(payload, "task_id", line),
      instance_id: str(payload, "instance_id", line),
      generated: triplePayload(payload["generated"], "generated", line),
      candidates: candidates.map((c) => candidatePayload(c, line)),
    };
  }
  throw new TaskFileError(line, `unknown task kind ${JSON.stringify(kind)}`);
}

/** Parse a task export. Order of the returned queue matches the file. */
export function parseTasks(text: string): Task[] {
  const tasks: Task[] = [];
  const seen = new Set<string>();
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const raw = lines[i] ?? "";
    if (raw.trim() === "") continue;
    const line = i + 1;
    let payload: unknown;
    try {
      payload = JSON.parse(raw);
    } catch {
      throw new TaskFileError(line, "not valid JSON");
    }
    const task = parseTaskLine(payload, line);
    if (seen.has(task.task_id)) {
      throw new TaskFileError(line, `duplicate task_id ${task.task_id}`);
    }
    seen.add(task.task_id);
    tasks.push(task);
  }
  return tasks;
}

/** Number of label slots a task needs before it is submittable. */
export function slotCount(task: Task): number {
  return task.kind === "extraction" ? task.triples.length : task.candidates.length;
}

/** Serialize label rows to the import format, one JSON object per line. */
export function serializeLabels(rows: LabelRow[]): string {
  if (rows.length === 0) return "";
  return rows.map((row) => JSON.stringify(sortedEntries(row))).join("\n") + "\n";
}

// Stable key order keeps exports diffable run to run.
function sortedEntries(row: LabelRow): Record<string, unknown> {
  const out: Record<string, unknown> = {};
  for (const key of Object.keys(row).sort()) {
    out[key] = (row as Record<string, unknown>)[key];
  }
  return out;
}

/** Parse a label file back; used by the round-trip tests. */
export function parseLabels(text: string): LabelRow[] {
  const rows: LabelRow[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const raw = lines[i] ?? "";
    if (raw.trim() === "") continue;
    const line = i + 1;
    let payload: unknown;
    try {
      payload = JSON.parse(raw);
    } catch {
      throw new TaskFileError(line, "not valid JSON");
    }
    if (!isRecord(payload)) throw new TaskFileError(line, "label must be an object");
    const taskId = str(payload, "task_id", line);
    if (typeof payload["faithful"] === "boolean") {
      rows.push({
        task_id: taskId,
        triple_index: int(payload, "triple_index", line),
        faithful: payload["faithful"],
      });
    } else if (typeof payload["supported"] === "boolean") {
      rows.push({
        task_id: taskId,
        candidate_index: int(payload, "candidate_index", line),
        supported: payload["supported"],
      });
    } else {
      throw new TaskFileError(line, "neither a faithful nor a supported label");
    }
  }
  return rows;
}
