// End-to-end tests against the real digitization service. A uvicorn
// process is spawned per suite with an isolated data directory; the UI
// layer talks to it exactly as the browser would.

import { ChildProcess, spawn } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api';
import { CanvasState } from '../src/canvas';
import { buildDiffView, overrideCell } from '../src/diff';
import { adjudicateFlow, calibrateFlow, submitCandidates, traceFlow } from '../src/flows';

const PORT = 8930 + (process.pid % 50);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let dataDir: string;

async function waitForService(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/studies/__probe__/validation`);
      if (res.status === 404) return; // service is answering
    } catch {
      // not listening yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error('service did not come up');
}

beforeAll(async () => {
  dataDir = mkdtempSync(join(tmpdir(), 'kmlead-ui-'));
  server = spawn(
    'python3',
    ['-m', 'uvicorn', 'kmlead.service:app', '--host', '127.0.0.1', '--port', String(PORT), '--log-level', 'warning'],
    { env: { ...process.env, KMLEAD_DATA: dataDir }, stdio: 'ignore' },
  );
  await waitForService();
}, 40000);

afterAll(() => {
  server?.kill();
  rmSync(dataDir, { recursive: true, force: true });
});

// Ground truth for the synthetic rendered figure: Weibull survival curves
// drawn in a sheared pixel frame (a skewed photograph of the page).
const MAX_MONTHS = 48;
const SHEAR = {
  B: [
    [6.5, -0.8],
    [1.1, -2.9],
  ],
  o: [120, 760],
};

function axisToPixel(t: number, sPct: number): { u: number; v: number } {
  return {
    u: SHEAR.B[0]![0]! * t + SHEAR.B[0]![1]! * sPct + SHEAR.o[0]!,
    v: SHEAR.B[1]![0]! * t + SHEAR.B[1]![1]! * sPct + SHEAR.o[1]!,
  };
}

function truthSurvival(lam: number, kappa: number): (t: number) => number {
  return (t) => Math.exp(-lam * Math.pow(t, kappa));
}

function clickAnchors(state: CanvasState): void {
  state.addAnchorClick(axisToPixel(0, 0));
  state.addAnchorClick(axisToPixel(MAX_MONTHS, 0));
  state.addAnchorClick(axisToPixel(0, 100));
  state.maxMonths = MAX_MONTHS;
}

function traceCurve(state: CanvasState, arm: string, S: (t: number) => number, clicks = 180): void {
  state.selectArm(arm);
  const points: { u: number; v: number }[] = [];
  for (let i = 0; i <= clicks; i++) {
    const t = (MAX_MONTHS * i) / clicks;
    points.push(axisToPixel(t, 100 * S(t)));
  }
  state.replaceTrace(points);
}

function riskCounts(S: (t: number) => number, n: number, grid: number[]): number[] {
  const counts = grid.map((t) => Math.round(n * S(t)));
  for (let i = 1; i < counts.length; i++) {
    counts[i] = Math.min(counts[i]!, counts[i - 1]!);
  }
  return counts;
}

function parseXyCsv(text: string): Map<string, { t: number; s: number }[]> {
  const byArm = new Map<string, { t: number; s: number }[]>();
  const lines = text.split('\n').filter((l) => l.length > 0 && !l.startsWith('#'));
  const header = lines[0]!.split(',');
  expect(header).toEqual(['study_id', 'arm', 'time_months', 'survival_pct']);
  for (const line of lines.slice(1)) {
    const [, arm, t, s] = line.split(',');
    if (!byArm.has(arm!)) byArm.set(arm!, []);
    byArm.get(arm!)!.push({ t: Number(t), s: Number(s) });
  }
  return byArm;
}

describe('UI round trip on a synthetic rendered figure', () => {
  const api = new ApiClient(BASE);
  const arms: Record<string, (t: number) => number> = {
    mono: truthSurvival(0.05, 1.15),
    dual: truthSurvival(0.035, 1.15),
  };
  const grid = [0, 12, 24, 36, 48];

  it(
    'calibrate + trace + risk table + export stays within 1 survival-percent',
    async () => {
      const { study_id } = await api.createStudy('UI-RT');
      await api.uploadFigure(study_id, new Uint8Array([0x89, 0x50, 0x4e, 0x47]));

      const state = new CanvasState();
      state.loadFigure(new Uint8Array([0x89]));
      clickAnchors(state);

      for (const [arm, S] of Object.entries(arms)) {
        const cal = await calibrateFlow(state, api, study_id, arm);
        expect(cal.ok).toBe(true);
        traceCurve(state, arm, S);
        const traced = await traceFlow(state, api, study_id, arm);
        expect(traced.ok).toBe(true);
        expect(traced.highlights).toHaveLength(0);
      }

      const table = await submitCandidates(api, study_id, [
        {
          sourceTag: 'manual',
          timeGrid: grid,
          arms: Object.fromEntries(
            Object.entries(arms).map(([arm, S]) => [arm, riskCounts(S, 120, grid)]),
          ),
        },
      ]);
      expect(table.ok).toBe(true);

      const exported = await api.exportStudy(study_id);
      expect(exported.arms.sort()).toEqual(['dual', 'mono']);

      const xy = parseXyCsv(await api.getExportCsv(study_id, 'xy.csv'));
      expect([...xy.keys()].sort()).toEqual(['dual', 'mono']);
      for (const [arm, rows] of xy) {
        expect(rows).toHaveLength(500);
        expect(rows[0]!.t).toBe(0);
        expect(rows[0]!.s).toBeCloseTo(100, 9);
        let sup = 0;
        let prev = Infinity;
        for (const { t, s } of rows) {
          expect(s).toBeLessThanOrEqual(prev + 1e-9); // non-increasing
          prev = s;
          sup = Math.max(sup, Math.abs(s - 100 * arms[arm]!(t)));
        }
        expect(sup).toBeLessThanOrEqual(1.0);
      }
    },
    30000,
  );
});

describe('adjudication flow gates the export', () => {
  const api = new ApiClient(BASE);
  const grid = [0, 12, 24, 36, 48];
  const primary = { sourceTag: 'primary_extractor', timeGrid: grid, arms: { mono: [120, 66, 36, 40, 11] } };
  const fallback = { sourceTag: 'fallback_extractor', timeGrid: grid, arms: { mono: [120, 66, 36, 39, 11] } };

  it(
    'export returns 422 until every conflict cell is resolved',
    async () => {
      const { study_id } = await api.createStudy('UI-ADJ');
      await api.uploadFigure(study_id, new Uint8Array([1]));

      const state = new CanvasState();
      state.loadFigure(new Uint8Array([1]));
      clickAnchors(state);
      await calibrateFlow(state, api, study_id, 'mono');
      traceCurve(state, 'mono', truthSurvival(0.05, 1.0));
      await traceFlow(state, api, study_id, 'mono');

      // both candidates break monotonicity at index 3: server flags it
      const conflicted = await submitCandidates(api, study_id, [primary, fallback]);
      expect(conflicted.ok).toBe(false);
      expect(conflicted.messages.join(' ')).toMatch(/unresolved-conflict/);

      await expect(api.exportStudy(study_id)).rejects.toMatchObject({ status: 422 });

      // the diff view mirrors the server: one manual cell outstanding
      const view = buildDiffView(
        { sourceTag: primary.sourceTag, timeGrid: grid, arms: { mono: [...primary.arms.mono] } },
        { sourceTag: fallback.sourceTag, timeGrid: grid, arms: { mono: [...fallback.arms.mono] } },
      );
      const blocked = await adjudicateFlow(api, study_id, view);
      expect(blocked.ok).toBe(false);
      expect(blocked.messages.join(' ')).toMatch(/unresolved/);

      overrideCell(view, 'mono', 3, 20);
      const resolved = await adjudicateFlow(api, study_id, view);
      expect(resolved.ok).toBe(true);

      const exported = await api.exportStudy(study_id);
      expect(exported.files).toContain('risk_table.csv');
      const riskCsv = await api.getExportCsv(study_id, 'risk_table.csv');
      expect(riskCsv).toContain('mono');
    },
    30000,
  );
});
