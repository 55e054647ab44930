// Client-side drawing state for one figure: zoom/pan, the calibration
// click buffer, anchor markers, and per-arm trace polylines. Pure state
// transitions with no DOM dependency so the logic is testable headless.

import { Affine, Anchors, Point, anchorsCollinear, dedupePolyline, solveAffine } from './geometry';

export type AnchorRole = 'origin' | 'xmax' | 'ytop';

const CLICK_ORDER: AnchorRole[] = ['origin', 'xmax', 'ytop'];

export interface Viewport {
  zoom: number;
  panU: number;
  panV: number;
}

export class CanvasState {
  figure: Uint8Array | null = null;
  viewport: Viewport = { zoom: 1, panU: 0, panV: 0 };
  clickBuffer: Point[] = [];
  maxMonths: number | null = null;
  affine: Affine | null = null;
  selectedArm: string | null = null;
  traces = new Map<string, Point[]>();

  loadFigure(blob: Uint8Array): void {
    this.figure = blob;
    this.clickBuffer = [];
    this.affine = null;
    this.traces.clear();
  }

  setViewport(zoom: number, panU: number, panV: number): void {
    if (!(zoom > 0)) throw new Error('zoom must be positive');
    this.viewport = { zoom, panU, panV };
  }

  /** Screen coordinates to figure pixels under the current viewport. */
  toFigure(screenU: number, screenV: number): Point {
    const { zoom, panU, panV } = this.viewport;
    return { u: screenU / zoom + panU, v: screenV / zoom + panV };
  }

  /**
   * Register one calibration click. At most three are held; a fourth
   * click restarts the buffer rather than silently extending it.
   */
  addAnchorClick(p: Point): { role: AnchorRole; remaining: number } {
    if (!this.figure) throw new Error('load a figure before calibrating');
    if (this.clickBuffer.length >= 3) this.clickBuffer = [];
    this.clickBuffer.push(p);
    const role = CLICK_ORDER[this.clickBuffer.length - 1]!;
    return { role, remaining: 3 - this.clickBuffer.length };
  }

  /** Anchor markers for rendering, labeled by click order. */
  anchorMarkers(): { role: AnchorRole; at: Point }[] {
    return this.clickBuffer.map((at, i) => ({ role: CLICK_ORDER[i]!, at }));
  }

  /**
   * Build the anchors from the click buffer, or explain why the UI must
   * keep the export controls disabled.
   */
  calibration(): { ok: true; anchors: Anchors } | { ok: false; reason: string } {
    if (this.clickBuffer.length < 3) {
      return { ok: false, reason: `need ${3 - this.clickBuffer.length} more anchor click(s)` };
    }
    if (this.maxMonths === null || !(this.maxMonths > 0)) {
      return { ok: false, reason: 'enter max_months for the time axis' };
    }
    const [origin, xmax, ytop] = this.clickBuffer as [Point, Point, Point];
    if (anchorsCollinear(origin, xmax, ytop)) {
      return { ok: false, reason: 'anchor clicks are collinear; re-click the three axis ticks' };
    }
    return { ok: true, anchors: { origin, xmax, ytop, maxMonths: this.maxMonths } };
  }

  /** Apply a successful calibration so traces can be previewed in axis units. */
  applyCalibration(anchors: Anchors): void {
    this.affine = solveAffine(anchors);
  }

  selectArm(arm: string): void {
    if (!arm) throw new Error('arm label must be non-empty');
    this.selectedArm = arm;
    if (!this.traces.has(arm)) this.traces.set(arm, []);
  }

  /** Append a click-to-click trace point to the selected arm. */
  addTracePoint(p: Point): void {
    if (!this.affine) throw new Error('calibrate before tracing');
    if (!this.selectedArm) throw new Error('select an arm before tracing');
    this.traces.get(this.selectedArm)!.push(p);
  }

  /** Replace the selected arm's trace wholesale (re-trace is idempotent). */
  replaceTrace(points: Point[]): void {
    if (!this.selectedArm) throw new Error('select an arm before tracing');
    this.traces.set(this.selectedArm, [...points]);
  }

  tracePayload(arm: string): [number, number][] {
    const pts = dedupePolyline(this.traces.get(arm) ?? []);
    return pts.map((p) => [p.u, p.v]);
  }
}
