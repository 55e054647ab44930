import { describe, expect, it } from 'vitest';

import {
  CandidateTable,
  buildDiffView,
  overrideCell,
  resolvedTable,
  unresolvedCells,
} from '../src/diff';

const GRID = [0, 12, 24, 36, 48];

function candidate(tag: string, counts: number[]): CandidateTable {
  return { sourceTag: tag, timeGrid: GRID, arms: { mono: counts } };
}

describe('buildDiffView', () => {
  it('marks identical tables all-agree', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 66, 36, 20, 11]),
      candidate('fallback_extractor', [120, 66, 36, 20, 11]),
    );
    expect(view.cells.every((c) => c.status === 'agree')).toBe(true);
    expect(resolvedTable(view).arms['mono']).toEqual([120, 66, 36, 20, 11]);
  });

  it('pre-resolves a minor isolated diff to the primary value', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 66, 36, 20, 11]),
      candidate('fallback_extractor', [120, 65, 36, 20, 11]),
    );
    const cell = view.cells.find((c) => c.index === 1)!;
    expect(cell.status).toBe('minor');
    expect(cell.suggested).toBe(66);
    expect(resolvedTable(view).arms['mono']![1]).toBe(66);
  });

  it('takes the fallback when the difference exceeds 1', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 60, 36, 20, 11]),
      candidate('fallback_extractor', [120, 66, 36, 20, 11]),
    );
    const cell = view.cells.find((c) => c.index === 1)!;
    expect(cell.status).toBe('conflict');
    expect(cell.suggested).toBe(66);
  });

  it('takes the fallback across a run of three discrepancies', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 67, 37, 21, 11]),
      candidate('fallback_extractor', [120, 66, 36, 20, 11]),
    );
    for (const i of [1, 2, 3]) {
      const cell = view.cells.find((c) => c.index === i)!;
      expect(cell.status).toBe('conflict');
      expect(cell.suggested).toBe([120, 66, 36, 20, 11][i]);
      expect(cell.reason).toMatch(/run of adjacent/);
    }
  });

  it('takes the other source when only one violates monotonicity', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 66, 70, 20, 11]),
      candidate('fallback_extractor', [120, 66, 36, 20, 11]),
    );
    const cell = view.cells.find((c) => c.index === 2)!;
    expect(cell.status).toBe('conflict');
    expect(cell.suggested).toBe(36);
    expect(cell.reason).toMatch(/monotonicity/);
  });

  it('leaves a both-violate cell as rule_violation with no suggestion', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 66, 36, 40, 11]),
      candidate('fallback_extractor', [120, 66, 36, 39, 11]),
    );
    const cell = view.cells.find((c) => c.index === 3)!;
    expect(cell.status).toBe('rule_violation');
    expect(cell.suggested).toBeNull();
    expect(unresolvedCells(view)).toHaveLength(1);
  });

  it('rejects mismatched grids and arm sets', () => {
    expect(() =>
      buildDiffView(candidate('a', [1, 1, 1, 1, 1]), {
        sourceTag: 'b',
        timeGrid: [0, 12],
        arms: { mono: [1, 1] },
      }),
    ).toThrow(/grid lengths/);
    expect(() =>
      buildDiffView(candidate('a', [1, 1, 1, 1, 1]), {
        sourceTag: 'b',
        timeGrid: GRID,
        arms: { dual: [1, 1, 1, 1, 1] },
      }),
    ).toThrow(/arm sets/);
  });
});

describe('resolution gating', () => {
  it('blocks assembly until every rule-violation cell is entered manually', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 66, 36, 40, 11]),
      candidate('fallback_extractor', [120, 66, 36, 39, 11]),
    );
    expect(() => resolvedTable(view)).toThrow(/unresolved conflict/);
    overrideCell(view, 'mono', 3, 20);
    expect(resolvedTable(view).arms['mono']).toEqual([120, 66, 36, 20, 11]);
    expect(view.overridesLog).toEqual([{ arm: 'mono', index: 3, from: null, to: 20 }]);
  });

  it('blocks a manual edit that breaks monotonicity', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 66, 36, 20, 11]),
      candidate('fallback_extractor', [120, 66, 36, 20, 11]),
    );
    overrideCell(view, 'mono', 2, 90);
    expect(() => resolvedTable(view)).toThrow(/non-monotone/);
  });

  it('rejects negative and fractional overrides', () => {
    const view = buildDiffView(
      candidate('primary_extractor', [120, 66, 36, 20, 11]),
      candidate('fallback_extractor', [120, 66, 36, 20, 11]),
    );
    expect(() => overrideCell(view, 'mono', 1, -3)).toThrow(/non-negative/);
    expect(() => overrideCell(view, 'mono', 1, 6.5)).toThrow(/integers/);
  });
});
