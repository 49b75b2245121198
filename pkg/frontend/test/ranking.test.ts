import { describe, expect, it } from 'vitest';

import { isPartial, orderToRanks, validateRanks, widgetVisible } from '../src/ranking';

describe('ranking widget rules', () => {
  it('hides the widget for a single candidate', () => {
    expect(widgetVisible(['ours'])).toBe(false);
    expect(widgetVisible(['ours', 'baseline'])).toBe(true);
  });

  it('rejects duplicate rank values client-side', () => {
    const problems = validateRanks({ ours: 1, alt: 1 }, 2);
    expect(problems.some((p) => p.includes('duplicate'))).toBe(true);
  });

  it('requires ranks to form a prefix starting at 1', () => {
    expect(validateRanks({ ours: 2 }, 3)).not.toHaveLength(0);
    expect(validateRanks({ ours: 1, alt: 3 }, 3)).not.toHaveLength(0);
    expect(validateRanks({}, 2)).not.toHaveLength(0);
  });

  it('accepts a full ranking and a partial prefix', () => {
    expect(validateRanks({ ours: 1, alt: 2 }, 2)).toHaveLength(0);
    expect(validateRanks({ ours: 1 }, 3)).toHaveLength(0); // top pick only
  });

  it('converts drag order to rank assignments', () => {
    expect(orderToRanks(['ours', 'alt'])).toEqual({ ours: 1, alt: 2 });
    expect(orderToRanks(['alt'])).toEqual({ alt: 1 });
  });

  it('flags partial orderings', () => {
    expect(isPartial({ ours: 1 }, 2)).toBe(true);
    expect(isPartial({ ours: 1, alt: 2 }, 2)).toBe(false);
  });
});
