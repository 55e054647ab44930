import { beforeEach, describe, expect, it } from 'vitest';

import { CanvasState } from '../src/canvas';

const FIGURE = new Uint8Array([1, 2, 3]);

function clickAnchors(state: CanvasState): void {
  state.addAnchorClick({ u: 100, v: 400 });
  state.addAnchorClick({ u: 600, v: 400 });
  state.addAnchorClick({ u: 100, v: 50 });
}

describe('CanvasState', () => {
  let state: CanvasState;

  beforeEach(() => {
    state = new CanvasState();
    state.loadFigure(FIGURE);
  });

  it('refuses anchor clicks before a figure is loaded', () => {
    const fresh = new CanvasState();
    expect(() => fresh.addAnchorClick({ u: 0, v: 0 })).toThrow(/figure/);
  });

  it('holds at most three anchors; a fourth click restarts', () => {
    clickAnchors(state);
    expect(state.anchorMarkers().map((m) => m.role)).toEqual(['origin', 'xmax', 'ytop']);
    state.addAnchorClick({ u: 9, v: 9 });
    expect(state.clickBuffer).toHaveLength(1);
    expect(state.anchorMarkers()[0]!.role).toBe('origin');
  });

  it('blocks calibration until clicks and max_months are complete', () => {
    state.addAnchorClick({ u: 100, v: 400 });
    state.addAnchorClick({ u: 600, v: 400 });
    let cal = state.calibration();
    expect(cal.ok).toBe(false);
    if (!cal.ok) expect(cal.reason).toMatch(/1 more anchor/);

    state.addAnchorClick({ u: 100, v: 50 });
    cal = state.calibration();
    expect(cal.ok).toBe(false);
    if (!cal.ok) expect(cal.reason).toMatch(/max_months/);

    state.maxMonths = 48;
    expect(state.calibration().ok).toBe(true);
  });

  it('reports collinear clicks with a re-click prompt', () => {
    state.addAnchorClick({ u: 0, v: 0 });
    state.addAnchorClick({ u: 1, v: 1 });
    state.addAnchorClick({ u: 2, v: 2 });
    state.maxMonths = 48;
    const cal = state.calibration();
    expect(cal.ok).toBe(false);
    if (!cal.ok) expect(cal.reason).toMatch(/re-click/);
  });

  it('attaches trace clicks to the selected arm only', () => {
    clickAnchors(state);
    state.maxMonths = 48;
    const cal = state.calibration();
    if (cal.ok) state.applyCalibration(cal.anchors);

    expect(() => state.addTracePoint({ u: 150, v: 60 })).toThrow(/select an arm/);
    state.selectArm('mono');
    state.addTracePoint({ u: 150, v: 60 });
    state.selectArm('dual');
    state.addTracePoint({ u: 150, v: 90 });
    expect(state.tracePayload('mono')).toEqual([[150, 60]]);
    expect(state.tracePayload('dual')).toEqual([[150, 90]]);
  });

  it('requires calibration before tracing', () => {
    state.selectArm('mono');
    expect(() => state.addTracePoint({ u: 1, v: 1 })).toThrow(/calibrate/);
  });

  it('replaceTrace swaps the polyline wholesale', () => {
    clickAnchors(state);
    state.maxMonths = 48;
    const cal = state.calibration();
    if (cal.ok) state.applyCalibration(cal.anchors);
    state.selectArm('mono');
    state.addTracePoint({ u: 150, v: 60 });
    state.replaceTrace([
      { u: 110, v: 55 },
      { u: 200, v: 120 },
    ]);
    expect(state.tracePayload('mono')).toEqual([
      [110, 55],
      [200, 120],
    ]);
  });

  it('maps screen to figure pixels through zoom and pan', () => {
    state.setViewport(2, 50, 20);
    expect(state.toFigure(100, 60)).toEqual({ u: 100, v: 50 });
    expect(() => state.setViewport(0, 0, 0)).toThrow(/zoom/);
  });

  it('loading a new figure clears calibration and traces', () => {
    clickAnchors(state);
    state.maxMonths = 48;
    const cal = state.calibration();
    if (cal.ok) state.applyCalibration(cal.anchors);
    state.selectArm('mono');
    state.addTracePoint({ u: 150, v: 60 });

    state.loadFigure(new Uint8Array([9]));
    expect(state.clickBuffer).toHaveLength(0);
    expect(state.affine).toBeNull();
    expect(state.traces.size).toBe(0);
  });
});
