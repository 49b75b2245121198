import { describe, expect, it } from 'vitest';

import { commandsForPart, parseModelingLines } from '../src/provenance';

import records from './fixtures/step_records.json';
import type { StepRecord } from '../src/types';

const steps = records as unknown as StepRecord[];

describe('construct-command linking', () => {
  it('maps modeling lines back to the parts they realize', () => {
    const lines = parseModelingLines(steps[4]!.modeling!); // after the spout step
    expect(lines.length).toBeGreaterThan(0);
    const spoutCmds = commandsForPart(lines, 'spout');
    expect(spoutCmds.length).toBeGreaterThan(0);
    for (const i of spoutCmds) {
      expect(lines[i]!.text).toContain('spout');
    }
  });

  it('relation transforms link to both endpoints', () => {
    const lines = parseModelingLines(
      '{"args": {"relative_to": "body.sphere_0", "x": 1.3, "y": 0, "z": 0}, ' +
      '"cmd": "translate", "target": "spout.cone_0"}\n',
    );
    expect(lines[0]!.parts.sort()).toEqual(['body', 'spout']);
    expect(commandsForPart(lines, 'body')).toEqual([0]);
    expect(commandsForPart(lines, 'neck')).toEqual([]);
  });

  it('boolean result handles reference both operands', () => {
    const lines = parseModelingLines(
      '{"args": {"a": "body.sphere_0", "b": "lid.sphere_0"}, "cmd": "union", "target": "body+lid"}\n',
    );
    expect(lines[0]!.parts.sort()).toEqual(['body', 'lid']);
  });

  it('keeps malformed lines visible but unlinked', () => {
    const lines = parseModelingLines('not json\n');
    expect(lines).toHaveLength(1);
    expect(lines[0]!.parts).toEqual([]);
  });
});
