"""HTTP service for the browser digitization workflow.

Exposes study creation, figure upload, calibration anchors, curve traces,
risk-table candidates with adjudication, validation reports, and export.
State advances monotonically per arm: uploaded, calibrated, traced,
matched, validated, exported. Out-of-order requests get 409; exports
blocked by validation errors get 422; unknown identifiers get 404.

All mutating endpoints are idempotent: repeating an identical payload
leaves the same state and returns the same response. Session state
persists as JSON under the data directory, figures as opaque blobs; the
service never interprets pixels.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from pydantic import BaseModel, Field

from . import core, digitizer
from .core import Finding, RiskTable, StudyId, ValidationReport, Workspace


class StudyCreate(BaseModel):
    name: str
    qualifier: str | None = None


class AnchorsPayload(BaseModel):
    """The three clicked axis ticks, in pixel coordinates."""

    origin: tuple[float, float]
    xmax: tuple[float, float]
    ytop: tuple[float, float]
    max_months: float


class TracePayload(BaseModel):
    points: list[tuple[float, float]]


class CandidatePayload(BaseModel):
    source_tag: str
    time_grid: list[float]
    arms: dict[str, list[int]]
    confidence: float | None = None


class RiskTablePayload(BaseModel):
    """One or two candidate tables plus optional arm-matching hints."""

    candidates: list[CandidatePayload] = Field(min_length=1, max_length=2)
    confirmed: dict[str, str] = Field(default_factory=dict)
    colors: dict[str, str] = Field(default_factory=dict)


def _finding_dict(f: Finding):
    return {"severity": f.severity, "code": f.code,
            "location": f.location, "message": f.message}


def _report_json(report: ValidationReport):
    return {"ok": report.ok, "findings": [_finding_dict(f) for f in report.findings]}


def _safe_name(sid: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in sid)


class SessionStore:
    """In-memory study state with JSON persistence and per-study locks."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        (self.data_dir / "figures").mkdir(exist_ok=True)
        self.state_path = self.data_dir / "session.json"
        self.studies: dict[str, dict] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        if self.state_path.exists():
            self.studies = json.loads(self.state_path.read_text(encoding="utf-8"))

    def lock(self, sid: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(sid, threading.Lock())

    def save(self):
        tmp = self.state_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.studies, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        tmp.replace(self.state_path)

    def get(self, sid: str) -> dict:
        try:
            return self.studies[sid]
        except KeyError:
            raise HTTPException(404, f"unknown study {sid!r}") from None


def _study_id(study: dict) -> StudyId:
    return StudyId(study["name"], study.get("qualifier"))


def _curve_of(study: dict, arm: str):
    rec = study["arms"].get(arm)
    if rec is None or rec.get("curve") is None:
        return None
    c = rec["curve"]
    return core.KMCurve(_study_id(study), arm, c["times"], c["survival"])


def _traced_arms(study: dict):
    return [a for a, rec in study["arms"].items() if rec.get("curve") is not None]


def _resolved_table(study: dict):
    risk = study.get("risk")
    if not risk:
        return None
    t = risk["table"]
    return RiskTable(_study_id(study), tuple(t["time_grid"]),
                     tuple((label, tuple(counts)) for label, counts in t["arms"]))


def _mapping(study: dict):
    """Arm mapping computed fresh from the current traces and hints, so
    arms traced after the table upload still match."""
    table = _resolved_table(study)
    traced = _traced_arms(study)
    if table is None or not traced:
        return None
    hints = study["risk"].get("hints", {})
    return digitizer.match_arms(traced, table.arm_labels(),
                                confirmed=hints.get("confirmed"),
                                colors=hints.get("colors"))


def _arm_stage(study: dict, arm: str) -> str:
    rec = study["arms"].get(arm, {})
    if rec.get("exported"):
        return "exported"
    if study.get("figure_sha") is None:
        return "created"
    if rec.get("anchors") is None:
        return "uploaded"
    if rec.get("curve") is None:
        return "calibrated"
    mapping = _mapping(study)
    if mapping is None or mapping.table_label_for(arm) is None:
        return "traced"
    return "validated" if _validation(study).ok else "matched"


def _validation(study: dict) -> ValidationReport:
    report = ValidationReport()
    for arm, rec in study["arms"].items():
        if rec.get("curve") is not None:
            curve = _curve_of(study, arm)
            report = report.merged(ValidationReport(tuple(
                Finding(**f) for f in rec.get("findings", []))))
            report = report.merged(core.validate_curve(curve))
    table = _resolved_table(study)
    if table is not None:
        report = report.merged(ValidationReport(tuple(
            Finding(**f) for f in study["risk"].get("findings", []))))
        report = report.merged(core.validate_risk_table(table))
        curves = [_curve_of(study, a) for a in _traced_arms(study)]
        if curves:
            report = report.merged(core.validate_bundle(curves, [table]))
    return report


def create_app(data_dir=None) -> FastAPI:
    if data_dir is None:
        data_dir = os.environ.get("KMLEAD_DATA") or tempfile.mkdtemp(prefix="kmlead-")
    store = SessionStore(data_dir)
    app = FastAPI(title="km-lead digitization service")
    app.state.store = store

    @app.post("/studies")
    def create_study(body: StudyCreate, response: Response):
        sid = StudyId(body.name, body.qualifier).render()
        with store.lock(sid):
            if sid in store.studies:
                response.status_code = 200
            else:
                store.studies[sid] = {
                    "name": body.name,
                    "qualifier": body.qualifier,
                    "figure_sha": None,
                    "arms": {},
                    "risk": None,
                    "exported": False,
                }
                store.save()
                response.status_code = 201
        return {"study_id": sid}

    @app.post("/studies/{sid}/figures")
    async def upload_figure(sid: str, request: Request):
        blob = await request.body()
        if not blob:
            raise HTTPException(422, "empty figure upload")
        study = store.get(sid)
        with store.lock(sid):
            sha = hashlib.sha256(blob).hexdigest()
            (store.data_dir / "figures" / sha).write_bytes(blob)
            study["figure_sha"] = sha
            store.save()
        return {"study_id": sid, "sha256": sha, "size": len(blob)}

    @app.get("/studies/{sid}/figures")
    def get_figure(sid: str):
        study = store.get(sid)
        sha = study.get("figure_sha")
        if sha is None:
            raise HTTPException(404, "no figure uploaded")
        blob = (store.data_dir / "figures" / sha).read_bytes()
        return Response(blob, media_type="application/octet-stream")

    @app.put("/studies/{sid}/arms/{arm}/anchors")
    def put_anchors(sid: str, arm: str, body: AnchorsPayload):
        study = store.get(sid)
        if study.get("figure_sha") is None:
            raise HTTPException(409, "upload a figure before calibrating")
        anchors = digitizer.CalibrationAnchors(
            digitizer.PixelPoint(*body.origin),
            digitizer.PixelPoint(*body.xmax),
            digitizer.PixelPoint(*body.ytop),
            body.max_months,
        )
        try:
            affine = digitizer.solve_affine(anchors)
        except digitizer.CalibrationError as exc:
            raise HTTPException(422, str(exc)) from None
        with store.lock(sid):
            rec = study["arms"].setdefault(arm, {})
            rec["anchors"] = body.model_dump()
            rec["affine"] = [affine.a, affine.b, affine.c,
                             affine.d, affine.e, affine.f]
            store.save()
        return {"study_id": sid, "arm": arm, "affine": rec["affine"],
                "stage": _arm_stage(study, arm)}

    @app.put("/studies/{sid}/arms/{arm}/trace")
    def put_trace(sid: str, arm: str, body: TracePayload):
        study = store.get(sid)
        rec = study["arms"].get(arm)
        if rec is None or rec.get("affine") is None:
            raise HTTPException(409, "calibrate this arm before tracing")
        if not body.points:
            raise HTTPException(422, "empty trace")
        affine = digitizer.AffineMap(*rec["affine"])
        pts = [digitizer.PixelPoint(u, v) for u, v in body.points]
        calibrated = digitizer.transform_trace(pts, affine)
        try:
            curve, report = digitizer.standardize_curve(
                calibrated, study=_study_id(study), arm_label=arm)
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None
        with store.lock(sid):
            rec["trace"] = body.points
            rec["curve"] = {"times": curve.times.tolist(),
                            "survival": curve.survival.tolist()}
            rec["findings"] = [_finding_dict(f) for f in report.findings]
            store.save()
        return {"study_id": sid, "arm": arm,
                "validation": _report_json(report),
                "stage": _arm_stage(study, arm)}

    @app.put("/studies/{sid}/risk_table")
    def put_risk_table(sid: str, body: RiskTablePayload):
        study = store.get(sid)
        if not _traced_arms(study):
            raise HTTPException(409, "trace at least one arm before entering risk tables")
        study_id = _study_id(study)

        def to_table(c: CandidatePayload):
            return digitizer.CandidateTable(
                c.source_tag,
                RiskTable(study_id, tuple(c.time_grid),
                          tuple((label, tuple(counts))
                                for label, counts in sorted(c.arms.items()))),
                c.confidence,
            )

        try:
            if len(body.candidates) == 1:
                table = to_table(body.candidates[0]).payload
                diffs, report = [], ValidationReport()
            else:
                table, diffs, report = digitizer.adjudicate_tables(
                    to_table(body.candidates[0]), to_table(body.candidates[1]))
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None

        with store.lock(sid):
            study["risk"] = {
                "payload": body.model_dump(),
                "table": {"time_grid": list(table.time_grid),
                          "arms": [[label, list(counts)] for label, counts in table.arms]},
                "diffs": [{"arm": d.arm, "index": d.index, "a_value": d.a_value,
                           "b_value": d.b_value, "resolved_to": d.resolved_to,
                           "reason": d.reason} for d in diffs],
                "findings": [_finding_dict(f) for f in report.findings],
                "hints": {"confirmed": body.confirmed, "colors": body.colors},
            }
            store.save()
        mapping = _mapping(study)
        return {
            "study_id": sid,
            "resolved": study["risk"]["table"],
            "diffs": study["risk"]["diffs"],
            "validation": _report_json(report),
            "mapping": [list(p) for p in mapping.pairs] if mapping else [],
            "unmatched": list(mapping.unmatched_curves) if mapping else [],
        }

    @app.get("/studies/{sid}/validation")
    def get_validation(sid: str):
        study = store.get(sid)
        stages = {arm: _arm_stage(study, arm) for arm in study["arms"]}
        return {"study_id": sid, "stages": stages,
                "validation": _report_json(_validation(study))}

    @app.post("/studies/{sid}/export")
    def export_study(sid: str):
        study = store.get(sid)
        if study.get("figure_sha") is None:
            raise HTTPException(409, "nothing to export: no figure uploaded")
        traced = _traced_arms(study)
        if not any(rec.get("affine") for rec in study["arms"].values()):
            raise HTTPException(409, "nothing to export: no arm calibrated")
        if not traced:
            raise HTTPException(409, "nothing to export: no arm traced")
        table = _resolved_table(study)
        if table is None:
            raise HTTPException(409, "nothing to export: no risk table entered")

        mapping = _mapping(study)
        fragments = []
        findings = []
        for arm in traced:
            try:
                fragments.append(digitizer.finalize_arm(
                    _curve_of(study, arm), mapping, table))
            except digitizer.ExportBlockedError as exc:
                findings.extend(exc.report.findings)
        merged = _validation(study).merged(ValidationReport(tuple(findings)))
        if not merged.ok:
            raise HTTPException(422, detail=_report_json(merged))

        with store.lock(sid):
            curves = [_curve_of(study, a) for a in traced]
            ws = Workspace(
                curves=curves, risk_tables=[table],
                anchors={sid: {a: study["arms"][a]["anchors"]
                               for a in study["arms"]
                               if study["arms"][a].get("anchors")}},
                adjudication_log=study["risk"]["diffs"],
            )
            export_dir = store.data_dir / "exports" / _safe_name(sid)
            core.write_workspace(ws, export_dir)
            study["exported"] = True
            for a in traced:
                study["arms"][a]["exported"] = True
            store.save()
        return {"study_id": sid,
                "files": ["workspace.json", "xy.csv", "risk_table.csv"],
                "arms": traced}

    @app.get("/studies/{sid}/export/xy.csv")
    def get_export_xy(sid: str):
        study = store.get(sid)
        if not study.get("exported"):
            raise HTTPException(409, "study has not been exported")
        path = store.data_dir / "exports" / _safe_name(sid) / "xy.csv"
        return Response(path.read_text(encoding="utf-8"), media_type="text/csv")

    @app.get("/studies/{sid}/export/risk_table.csv")
    def get_export_risk(sid: str):
        study = store.get(sid)
        if not study.get("exported"):
            raise HTTPException(409, "study has not been exported")
        path = store.data_dir / "exports" / _safe_name(sid) / "risk_table.csv"
        return Response(path.read_text(encoding="utf-8"), media_type="text/csv")

    return app


app = create_app()
