/**
 * Ranking widget rules: the widget only appears when a step has two or
 * more candidate results; rank values must be distinct and form a prefix
 * of 1..k (a partial ranking keeps just the top picks).
 */

export function widgetVisible(candidates: string[]): boolean {
  return candidates.length >= 2;
}

/** Client-side validation mirroring the server's rank rules. */
export function validateRanks(
  ranks: Record<string, number>,
  k: number,
): string[] {
  const problems: string[] = [];
  const values = Object.values(ranks);
  if (values.length === 0) {
    problems.push('assign at least the top rank');
    return problems;
  }
  if (new Set(values).size !== values.length) {
    problems.push('duplicate rank values');
  }
  const sorted = [...values].sort((a, b) => a - b);
  sorted.forEach((v, i) => {
    if (v !== i + 1) {
      problems.push(`ranks must form a prefix of 1..${k}`);
    }
  });
  if ((sorted[sorted.length - 1] ?? 0) > k) {
    problems.push(`rank exceeds candidate count ${k}`);
  }
  return [...new Set(problems)];
}

/** Drag order (best first) to rank assignments; a prefix is fine. */
export function orderToRanks(order: string[]): Record<string, number> {
  const ranks: Record<string, number> = {};
  order.forEach((method, i) => {
    ranks[method] = i + 1;
  });
  return ranks;
}

export function isPartial(ranks: Record<string, number>, k: number): boolean {
  return Object.keys(ranks).length < k;
}
