"""Shared domain types, file formats, and structural validation.

Times are months (float). Survival is stored as a probability in [0, 1]
internally and as a percent in files. All types are immutable values;
validation never raises on malformed content, it reports findings.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_HEADER = "# km-lead v1"
CURVE_POINTS = 500

COVARIATE_KINDS = (
    "continuous_mean_sd",
    "continuous_median_range",
    "binary_proportion",
)


class KmleadError(Exception):
    """Base class for kmlead errors."""


class ParseError(KmleadError):
    """Malformed input file; carries line information when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc += f"{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class StudyId:
    """Identifier of one study, preserving any subfigure qualifier verbatim."""

    trial_name: str
    subfigure_qualifier: str | None = None

    def render(self) -> str:
        if self.subfigure_qualifier:
            return f"{self.trial_name}::{self.subfigure_qualifier}"
        return self.trial_name

    @staticmethod
    def parse(rendered: str) -> "StudyId":
        name, sep, qual = rendered.partition("::")
        return StudyId(name, qual if sep else None)


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    code: str
    location: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def errors(self):
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self):
        return [f for f in self.findings if f.severity == "warning"]

    @property
    def ok(self) -> bool:
        """True iff there is no error-level finding (export is allowed)."""
        return not self.errors

    def merged(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(self.findings + other.findings)

    def __str__(self):
        if not self.findings:
            return "valid"
        return "\n".join(
            f"{f.severity.upper()} [{f.code}] {f.location}: {f.message}"
            for f in self.findings
        )


def _report(items) -> ValidationReport:
    return ValidationReport(tuple(items))


@dataclass(frozen=True)
class KMCurve:
    """A standardized 500-point survival trace for one trial arm.

    ``times`` spans [0, t_max] on an even grid; ``survival`` is a
    probability, non-increasing, starting at 1.
    """

    study: StudyId
    arm_label: str
    times: np.ndarray
    survival: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "survival", np.asarray(self.survival, dtype=float))
        self.times.setflags(write=False)
        self.survival.setflags(write=False)

    @property
    def point_count(self) -> int:
        return len(self.times)

    def key(self):
        return (self.study.render(), self.arm_label)


@dataclass(frozen=True)
class RiskTable:
    """Numbers at risk on a time grid for the arms of one figure."""

    study: StudyId
    time_grid: tuple[float, ...]
    arms: tuple[tuple[str, tuple[int, ...]], ...]  # (arm_label, counts)

    def arm_labels(self):
        return [label for label, _ in self.arms]

    def counts_for(self, arm_label: str):
        for label, counts in self.arms:
            if label == arm_label:
                return counts
        raise KeyError(arm_label)


@dataclass(frozen=True)
class ReconstructedIPD:
    """Per-arm records (followup time, event flag) recovered from a curve."""

    study: StudyId
    arm_label: str
    times: np.ndarray  # Y_i, months > 0
    events: np.ndarray  # delta_i in {0, 1}

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "events", np.asarray(self.events, dtype=int))
        self.times.setflags(write=False)
        self.events.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class CovariateSummary:
    """One published baseline summary: mean/sd, median/range, or proportion."""

    name: str
    kind: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in COVARIATE_KINDS:
            raise ValueError(f"unknown covariate kind {self.kind!r}")
        v = tuple(float(x) for x in self.values)
        object.__setattr__(self, "values", v)
        if self.kind == "continuous_mean_sd":
            if len(v) != 2 or v[1] < 0:
                raise ValueError(f"{self.name}: expected (mean, sd) with sd >= 0")
        elif self.kind == "continuous_median_range":
            if len(v) != 3 or not (v[1] <= v[0] <= v[2]):
                raise ValueError(f"{self.name}: expected min <= median <= max")
        else:
            if len(v) != 1 or not (0.0 <= v[0] <= 1.0):
                raise ValueError(f"{self.name}: proportion must be in [0, 1]")


@dataclass(frozen=True)
class BaselineProfile:
    study: StudyId
    arm_label: str
    n: int
    covariates: tuple[CovariateSummary, ...]

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be unique within a profile")

    def covariate(self, name: str) -> CovariateSummary:
        for c in self.covariates:
            if c.name == name:
                return c
        raise KeyError(name)


# ---------------------------------------------------------------------------
# structural validation


def validate_risk_table(rt: RiskTable) -> ValidationReport:
    """Check one risk table against its structural rules.

    Malformed structure is reported, never thrown.
    """
    findings = []
    loc = rt.study.render()
    grid = np.asarray(rt.time_grid, dtype=float)
    if len(grid) == 0:
        findings.append(Finding("error", "empty-grid", loc, "time grid is empty"))
        return _report(findings)
    if np.any(np.diff(grid) <= 0):
        findings.append(
            Finding("error", "non-increasing-grid", loc, "time grid must be strictly increasing")
        )
    if grid[0] != 0:
        findings.append(
            Finding("error", "grid-start", loc, f"time grid must start at 0, got {grid[0]}")
        )
    seen = set()
    for label, counts in rt.arms:
        aloc = f"{loc}/{label}"
        if label in seen:
            findings.append(Finding("error", "duplicate-arm", aloc, "duplicate arm label"))
        seen.add(label)
        if len(counts) != len(grid):
            findings.append(
                Finding(
                    "error", "ragged-arrays", aloc,
                    f"{len(counts)} counts vs {len(grid)} grid times",
                )
            )
            continue
        c = np.asarray(counts)
        if np.any(c < 0):
            findings.append(Finding("error", "negative-count", aloc, "negative at-risk count"))
        if np.any(np.diff(c) > 0):
            findings.append(
                Finding("error", "non-monotone-at-risk", aloc, "at-risk counts increase over time")
            )
    return _report(findings)


def validate_curve(c: KMCurve) -> ValidationReport:
    findings = []
    loc = f"{c.study.render()}/{c.arm_label}"
    if c.point_count != CURVE_POINTS:
        findings.append(
            Finding("error", "point-count", loc, f"{c.point_count} points, expected {CURVE_POINTS}")
        )
    if c.point_count:
        if c.times[0] != 0 or abs(c.survival[0] - 1.0) > 1e-12:
            findings.append(
                Finding("error", "start-point", loc, "curve must start at (0, 100%)")
            )
        if np.any(np.diff(c.times) <= 0):
            findings.append(
                Finding("error", "non-increasing-time", loc, "times must be strictly increasing")
            )
        if np.any(np.diff(c.survival) > 1e-12):
            findings.append(
                Finding("error", "monotonicity", loc, "survival increases at some step")
            )
        if np.any(c.survival < -1e-12) or np.any(c.survival > 1 + 1e-12):
            findings.append(Finding("error", "range", loc, "survival outside [0, 100%]"))
    return _report(findings)


def validate_bundle(curves, tables) -> ValidationReport:
    """Cross-check study/arm alignment between curves and risk tables."""
    findings = []
    curve_keys = [c.key() for c in curves]
    table_keys = []
    for rt in tables:
        for label in rt.arm_labels():
            table_keys.append((rt.study.render(), label))

    seen = set()
    for key in curve_keys:
        if key in seen:
            findings.append(
                Finding("error", "duplicate-curve", f"{key[0]}/{key[1]}", "duplicate curve for study-arm")
            )
        seen.add(key)

    study_ids = [rt.study.render() for rt in tables]
    dupes = {s for s in study_ids if study_ids.count(s) > 1}
    for s in sorted(dupes):
        findings.append(
            Finding("error", "duplicate-identifier", s, "study identifier not unique")
        )

    for key in curve_keys:
        if key not in table_keys:
            findings.append(
                Finding("error", "unmatched-arm", f"{key[0]}/{key[1]}", "curve has no risk-table arm")
            )
    for key in table_keys:
        if key not in curve_keys:
            findings.append(
                Finding("error", "unmatched-arm", f"{key[0]}/{key[1]}", "risk-table arm has no curve")
            )
    return _report(findings)


# ---------------------------------------------------------------------------
# file formats
#
# Every file starts with the schema header line, then a csv header row.
# Floats are written with repr() (shortest round-trip form) so outputs are
# byte-stable across runs.


def _fmt(x) -> str:
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if x == int(x) and abs(x) < 1e15:
            return str(int(x))
        return repr(x)
    return str(x)


def _write_rows(path, header, rows):
    buf = io.StringIO()
    buf.write(SCHEMA_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _read_rows(path, expected_header):
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# km-lead"):
        raise ParseError("missing schema header", path, 1)
    if lines[0].strip() != SCHEMA_HEADER:
        raise ParseError(f"schema version mismatch: {lines[0].strip()!r}", path, 1)
    reader = csv.reader(lines[1:])
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing column header", path, 2) from None
    if header != expected_header:
        raise ParseError(f"unexpected columns {header}", path, 2)
    out = []
    for i, row in enumerate(reader, start=3):
        if not row:
            continue
        if len(row) != len(expected_header):
            raise ParseError(f"expected {len(expected_header)} fields, got {len(row)}", path, i)
        out.append((i, row))
    return out


XY_HEADER = ["study_id", "arm", "time_months", "survival_pct"]
RISK_HEADER = ["study_id", "arm", "time_months", "n_risk"]
IPD_HEADER = ["study_id", "arm", "time_months", "event"]
BASELINE_HEADER = ["study_id", "arm", "n", "covariate", "kind", "v1", "v2", "v3"]


def write_xy_csv(path, curves):
    rows = []
    for c in curves:
        sid = c.study.render()
        for t, s in zip(c.times, c.survival):
            rows.append((sid, c.arm_label, float(t), float(s) * 100.0))
    _write_rows(path, XY_HEADER, rows)


def read_xy_csv(path):
    groups: dict[tuple[str, str], list] = {}
    order = []
    for line_no, (sid, arm, t, s) in _read_rows(path, XY_HEADER):
        try:
            t, s = float(t), float(s)
        except ValueError:
            raise ParseError(f"non-numeric value {t!r}/{s!r}", path, line_no) from None
        if not (0.0 <= s <= 100.0):
            raise ParseError(f"survival {s} outside [0, 100]", path, line_no)
        if t < 0:
            raise ParseError(f"negative time {t}", path, line_no)
        key = (sid, arm)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((t, s))
    curves = []
    for sid, arm in order:
        pts = groups[(sid, arm)]
        times = np.array([p[0] for p in pts])
        surv = np.array([p[1] for p in pts]) / 100.0
        curves.append(KMCurve(StudyId.parse(sid), arm, times, surv))
    return curves


def write_risk_csv(path, tables):
    rows = []
    for rt in tables:
        sid = rt.study.render()
        for label, counts in rt.arms:
            for t, n in zip(rt.time_grid, counts):
                rows.append((sid, label, float(t), int(n)))
    _write_rows(path, RISK_HEADER, rows)


def read_risk_csv(path):
    by_study: dict[str, dict] = {}
    order = []
    for line_no, (sid, arm, t, n) in _read_rows(path, RISK_HEADER):
        try:
            t, n = float(t), int(n)
        except ValueError:
            raise ParseError(f"non-numeric value {t!r}/{n!r}", path, line_no) from None
        entry = by_study.setdefault(sid, {"arms": {}, "arm_order": []})
        if sid not in order:
            order.append(sid)
        if arm not in entry["arms"]:
            entry["arms"][arm] = []
            entry["arm_order"].append(arm)
        entry["arms"][arm].append((t, n))
    tables = []
    for sid in order:
        entry = by_study[sid]
        grid = None
        arms = []
        for arm in entry["arm_order"]:
            pts = entry["arms"][arm]
            times = tuple(p[0] for p in pts)
            if grid is None:
                grid = times
            elif times != grid:
                raise ParseError(f"inconsistent time grid for {sid}/{arm}", path)
            arms.append((arm, tuple(p[1] for p in pts)))
        tables.append(RiskTable(StudyId.parse(sid), grid, tuple(arms)))
    return tables


def write_ipd_csv(path, ipds):
    rows = []
    for ipd in ipds:
        sid = ipd.study.render()
        for t, e in zip(ipd.times, ipd.events):
            rows.append((sid, ipd.arm_label, float(t), int(e)))
    _write_rows(path, IPD_HEADER, rows)


def read_ipd_csv(path):
    groups: dict[tuple[str, str], list] = {}
    order = []
    for line_no, (sid, arm, t, e) in _read_rows(path, IPD_HEADER):
        try:
            t, e = float(t), int(e)
        except ValueError:
            raise ParseError(f"non-numeric value {t!r}/{e!r}", path, line_no) from None
        if e not in (0, 1):
            raise ParseError(f"event flag must be 0 or 1, got {e}", path, line_no)
        key = (sid, arm)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((t, e))
    out = []
    for sid, arm in order:
        pts = groups[(sid, arm)]
        out.append(
            ReconstructedIPD(
                StudyId.parse(sid), arm,
                np.array([p[0] for p in pts]),
                np.array([p[1] for p in pts]),
            )
        )
    return out


def write_baseline_csv(path, profiles):
    rows = []
    for p in profiles:
        sid = p.study.render()
        for cov in p.covariates:
            v = list(cov.values) + [""] * (3 - len(cov.values))
            rows.append((sid, p.arm_label, p.n, cov.name, cov.kind, *v))
    _write_rows(path, BASELINE_HEADER, rows)


def read_baseline_csv(path):
    groups: dict[tuple[str, str], dict] = {}
    order = []
    for line_no, (sid, arm, n, name, kind, v1, v2, v3) in _read_rows(path, BASELINE_HEADER):
        key = (sid, arm)
        if key not in groups:
            groups[key] = {"n": int(n), "covs": []}
            order.append(key)
        vals = [v for v in (v1, v2, v3) if v != ""]
        try:
            summary = CovariateSummary(name, kind, tuple(float(v) for v in vals))
        except ValueError as exc:
            raise ParseError(str(exc), path, line_no) from None
        groups[key]["covs"].append(summary)
    return [
        BaselineProfile(StudyId.parse(sid), arm, groups[(sid, arm)]["n"],
                        tuple(groups[(sid, arm)]["covs"]))
        for sid, arm in order
    ]


# ---------------------------------------------------------------------------
# workspace persistence


@dataclass
class Workspace:
    """Session container: curves, risk tables, IPD, baselines, plus the
    calibration anchors and adjudication logs accumulated while digitizing."""

    curves: list = field(default_factory=list)
    risk_tables: list = field(default_factory=list)
    ipds: list = field(default_factory=list)
    baselines: list = field(default_factory=list)
    anchors: dict = field(default_factory=dict)  # study_id -> anchors payload
    adjudication_log: list = field(default_factory=list)


def write_workspace(ws: Workspace, path):
    """Write a workspace directory: workspace.json plus the csv files."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if ws.curves:
        write_xy_csv(path / "xy.csv", ws.curves)
    if ws.risk_tables:
        write_risk_csv(path / "risk_table.csv", ws.risk_tables)
    if ws.ipds:
        write_ipd_csv(path / "ipd.csv", ws.ipds)
    if ws.baselines:
        write_baseline_csv(path / "baseline.csv", ws.baselines)
    meta = {
        "schema": SCHEMA_HEADER.lstrip("# "),
        "anchors": ws.anchors,
        "adjudication_log": ws.adjudication_log,
        "files": sorted(
            name for name, present in (
                ("xy.csv", ws.curves),
                ("risk_table.csv", ws.risk_tables),
                ("ipd.csv", ws.ipds),
                ("baseline.csv", ws.baselines),
            ) if present
        ),
    }
    (path / "workspace.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_workspace(path) -> Workspace:
    path = Path(path)
    meta_path = path / "workspace.json"
    if not meta_path.exists():
        raise ParseError("workspace.json not found", meta_path)
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("schema") != SCHEMA_HEADER.lstrip("# "):
        raise ParseError(f"schema version mismatch: {meta.get('schema')!r}", meta_path)
    ws = Workspace(anchors=meta.get("anchors", {}),
                   adjudication_log=meta.get("adjudication_log", []))
    files = set(meta.get("files", []))
    if "xy.csv" in files:
        ws.curves = read_xy_csv(path / "xy.csv")
    if "risk_table.csv" in files:
        ws.risk_tables = read_risk_csv(path / "risk_table.csv")
    if "ipd.csv" in files:
        ws.ipds = read_ipd_csv(path / "ipd.csv")
    if "baseline.csv" in files:
        ws.baselines = read_baseline_csv(path / "baseline.csv")
    return ws
