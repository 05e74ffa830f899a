/** Small, schema-true task rows shared by the test files. */

export function extractionRow(id: string, triples: number): object {
  return {
    kind: "extraction",
    task_id: id,
    instance_id: "dp-psu--relevant",
    source: "reference",
    source_text: "The output rail shall deliver 12 V under full load.",
    triples: Array.from({ length: triples }, (_, i) => ({
      triple_id: `${id}-t${i}`,
      subject: "output rail",
      predicate: "shall deliver",
      object: `${12 + i} V`,
    })),
  };
}

export function attributionRow(id: string, matching: boolean[]): object {
  const generated = {
    triple_id: `${id}-gen`,
    subject: "holdup requirement",
    predicate: "equals",
    object: "20 ms",
  };
  return {
    kind: "attribution",
    task_id: id,
    instance_id: "dp-psu--relevant",
    generated,
    candidates: matching.map((match, i) => ({
      triple_id: `${id}-c${i}`,
      subject: generated.subject,
      predicate: generated.predicate,
      object: match ? generated.object : "25 ms",
      display_index: i,
      source: i === 0 ? "user" : "reference",
      rank: i === 0 ? 1 : i,
    })),
  };
}

export function taskFile(rows: object[]): string {
  return rows.map((row) => JSON.stringify(row)).join("\n") + "\n";
}

export function defaultTaskFile(): string {
  return taskFile([
    extractionRow("ext-0000", 3),
    extractionRow("ext-0001", 1),
    attributionRow("att-0000", [true, false, true]),
    attributionRow("att-0001", [false]),
  ]);
}
