// Typed client for the digitization service. All state lives server-side;
// the UI only submits payloads and mirrors the validation it gets back.

export interface AnchorsPayload {
  origin: [number, number];
  xmax: [number, number];
  ytop: [number, number];
  max_months: number;
}

export interface Finding {
  level: 'error' | 'warning' | 'info';
  code: string;
  message: string;
  [extra: string]: unknown;
}

export interface ValidationReport {
  ok: boolean;
  findings: Finding[];
}

export interface CandidatePayload {
  source_tag: string;
  time_grid: number[];
  arms: Record<string, number[]>;
  confidence?: number;
}

export interface RiskTablePayload {
  candidates: CandidatePayload[];
  confirmed?: Record<string, string>;
  colors?: Record<string, string>;
}

export interface CellDiff {
  arm: string;
  index: number;
  a_value: number;
  b_value: number;
  resolved_to: string | null;
  reason: string;
}

export interface ResolvedTable {
  time_grid: number[];
  arms: [string, number[]][];
}

export interface RiskTableResponse {
  study_id: string;
  resolved: ResolvedTable;
  diffs: CellDiff[];
  validation: ValidationReport;
  mapping: [string, string][];
  unmatched: string[];
}

export interface ArmResponse {
  study_id: string;
  arm: string;
  stage: string;
  validation?: ValidationReport;
  affine?: number[];
}

export interface ValidationResponse {
  study_id: string;
  stages: Record<string, string>;
  validation: ValidationReport;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(`service returned ${status}`);
  }
}

export class ApiClient {
  constructor(private readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      if (body instanceof Uint8Array) {
        init.body = new Blob([body.slice().buffer]);
        init.headers = { 'content-type': 'application/octet-stream' };
      } else {
        init.body = JSON.stringify(body);
        init.headers = { 'content-type': 'application/json' };
      }
    }
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) {
      let detail: unknown = null;
      try {
        detail = (await res.json()).detail;
      } catch {
        // non-JSON error body; status alone is enough
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  createStudy(name: string, qualifier?: string): Promise<{ study_id: string }> {
    return this.request('POST', '/studies', { name, qualifier });
  }

  uploadFigure(studyId: string, blob: Uint8Array): Promise<{ sha256: string }> {
    return this.request('POST', `/studies/${encodeURIComponent(studyId)}/figures`, blob);
  }

  putAnchors(studyId: string, arm: string, anchors: AnchorsPayload): Promise<ArmResponse> {
    return this.request(
      'PUT',
      `/studies/${encodeURIComponent(studyId)}/arms/${encodeURIComponent(arm)}/anchors`,
      anchors,
    );
  }

  putTrace(studyId: string, arm: string, points: [number, number][]): Promise<ArmResponse> {
    return this.request(
      'PUT',
      `/studies/${encodeURIComponent(studyId)}/arms/${encodeURIComponent(arm)}/trace`,
      { points },
    );
  }

  putRiskTable(studyId: string, payload: RiskTablePayload): Promise<RiskTableResponse> {
    return this.request('PUT', `/studies/${encodeURIComponent(studyId)}/risk_table`, payload);
  }

  getValidation(studyId: string): Promise<ValidationResponse> {
    return this.request('GET', `/studies/${encodeURIComponent(studyId)}/validation`);
  }

  exportStudy(studyId: string): Promise<{ files: string[]; arms: string[] }> {
    return this.request('POST', `/studies/${encodeURIComponent(studyId)}/export`);
  }

  async getExportCsv(studyId: string, file: 'xy.csv' | 'risk_table.csv'): Promise<string> {
    const res = await fetch(`${this.baseUrl}/studies/${encodeURIComponent(studyId)}/export/${file}`);
    if (!res.ok) throw new ApiError(res.status, null);
    return res.text();
  }
}
