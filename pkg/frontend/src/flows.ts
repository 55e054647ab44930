// The three user flows: calibrate, trace, adjudicate. Each validates
// client-side only enough to give instant feedback, then submits and
// reconciles with whatever the service says.

import { ApiClient, ArmResponse, Finding, RiskTableResponse } from './api';
import { CanvasState } from './canvas';
import { CandidateTable, DiffView, resolvedTable } from './diff';
import { Point, upwardSegments } from './geometry';

export interface FlowResult<T> {
  ok: boolean;
  response?: T;
  /** inline messages for the user, client-side or mirrored from the server */
  messages: string[];
  /** pixel locations to highlight on the canvas */
  highlights: Point[];
}

/**
 * Submit the three calibration clicks plus max_months for one arm.
 * Collinear or incomplete clicks are rejected client-side with a prompt
 * to re-click; a 422 from the server is surfaced the same way.
 */
export async function calibrateFlow(
  state: CanvasState,
  api: ApiClient,
  studyId: string,
  arm: string,
): Promise<FlowResult<ArmResponse>> {
  const cal = state.calibration();
  if (!cal.ok) {
    return { ok: false, messages: [cal.reason], highlights: [] };
  }
  const { origin, xmax, ytop, maxMonths } = cal.anchors;
  const response = await api.putAnchors(studyId, arm, {
    origin: [origin.u, origin.v],
    xmax: [xmax.u, xmax.v],
    ytop: [ytop.u, ytop.v],
    max_months: maxMonths,
  });
  state.applyCalibration(cal.anchors);
  return { ok: true, response, messages: [], highlights: [] };
}

function findingMessages(findings: Finding[]): string[] {
  return findings.map((f) => `${f.level}: ${f.code}: ${f.message}`);
}

/**
 * Submit the selected arm's polyline. Upward blips are highlighted at
 * their pixel coordinates; server warnings (clamping, start insertion)
 * come back inline. Re-tracing simply replaces the stored trace.
 */
export async function traceFlow(
  state: CanvasState,
  api: ApiClient,
  studyId: string,
  arm: string,
): Promise<FlowResult<ArmResponse>> {
  const points = state.tracePayload(arm);
  if (points.length === 0) {
    return { ok: false, messages: ['trace is empty; click along the curve first'], highlights: [] };
  }
  const highlights = state.affine
    ? upwardSegments(
        state.affine,
        points.map(([u, v]) => ({ u, v })),
      ).map((seg) => seg.at)
    : [];
  const response = await api.putTrace(studyId, arm, points);
  const messages = findingMessages(response.validation?.findings ?? []);
  return { ok: response.validation?.ok ?? true, response, messages, highlights };
}

/**
 * Submit an adjudicated risk table. With two candidates the resolved
 * table (suggestions plus user overrides) must be assemblable and
 * monotone before anything is sent; the fully resolved table goes up as
 * a single manual candidate so the server stores exactly what the user
 * accepted.
 */
export async function adjudicateFlow(
  api: ApiClient,
  studyId: string,
  view: DiffView,
): Promise<FlowResult<RiskTableResponse>> {
  let resolved: CandidateTable;
  try {
    resolved = resolvedTable(view);
  } catch (err) {
    return { ok: false, messages: [(err as Error).message], highlights: [] };
  }
  const response = await api.putRiskTable(studyId, {
    candidates: [{ source_tag: 'manual', time_grid: resolved.timeGrid, arms: resolved.arms }],
  });
  return {
    ok: response.validation.ok,
    response,
    messages: findingMessages(response.validation.findings),
    highlights: [],
  };
}

/** Submit raw candidates untouched (the "upload both extractions" path). */
export async function submitCandidates(
  api: ApiClient,
  studyId: string,
  candidates: CandidateTable[],
): Promise<FlowResult<RiskTableResponse>> {
  const response = await api.putRiskTable(studyId, {
    candidates: candidates.map((c) => ({
      source_tag: c.sourceTag,
      time_grid: c.timeGrid,
      arms: c.arms,
    })),
  });
  return {
    ok: response.validation.ok,
    response,
    messages: findingMessages(response.validation.findings),
    highlights: [],
  };
}
