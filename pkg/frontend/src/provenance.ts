/**
 * Construct <-> command linking for the program panes.
 *
 * The modeling wire format is one JSON command per line; targets are
 * "part.subpart" handles (plus derived handles like "part~1" or
 * "a+b" for boolean results), so each line maps back to the DSL parts it
 * realizes without extra metadata.
 */

export interface ModelingLine {
  index: number;
  text: string;
  parts: string[];
}

function partsOfHandle(handle: string): string[] {
  const base = handle.split('.')[0] ?? handle;
  // boolean-result handles reference both operands ("body+lid", "a&b")
  const pieces = base.split(/[+&~]/).filter((p) => p.length > 0);
  return pieces.length > 0 ? pieces : [base];
}

/** Parse the JSON-lines command listing into annotated pane rows. */
export function parseModelingLines(modeling: string): ModelingLine[] {
  const lines: ModelingLine[] = [];
  modeling.split('\n').forEach((raw) => {
    if (!raw.trim()) {
      return;
    }
    let parts: string[] = [];
    try {
      const doc = JSON.parse(raw) as { target?: string; args?: Record<string, unknown> };
      const handles = new Set<string>();
      if (doc.target) {
        partsOfHandle(doc.target).forEach((p) => handles.add(p));
      }
      for (const key of ['relative_to', 'a', 'b'] as const) {
        const v = doc.args?.[key];
        if (typeof v === 'string') {
          partsOfHandle(v).forEach((p) => handles.add(p));
        }
      }
      parts = [...handles];
    } catch {
      /* malformed line: render it unlinked */
    }
    lines.push({ index: lines.length, text: raw, parts });
  });
  return lines;
}

/** Indices of commands that realize the given DSL part. */
export function commandsForPart(lines: ModelingLine[], part: string): number[] {
  return lines.filter((l) => l.parts.includes(part)).map((l) => l.index);
}
