"""Pixel traces to standardized curves: calibration, resampling, arm
matching, and two-source risk-table adjudication.

The affine calibration maps pixel (u, v) with top-left origin to data
coordinates (t months, s survival-percent) via t = a*u + b*v + c and
s = d*u + e*v + f, which absorbs translation, rotation, scale, and mild
shear from scanned figures.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass

import numpy as np

from .core import (
    CURVE_POINTS,
    Finding,
    KMCurve,
    KmleadError,
    RiskTable,
    StudyId,
    ValidationReport,
    validate_curve,
    validate_risk_table,
)

# Upward survival blips up to this many percent are treated as tracing
# jitter and clamped; anything larger needs human correction.
MONOTONICITY_TOLERANCE_PCT = 0.5

# Fuzzy arm matching is only allowed between normalized labels whose
# lengths differ by at most this many characters.
FUZZY_LENGTH_GAP = 5
FUZZY_SIMILARITY = 0.8


class CalibrationError(KmleadError):
    pass


class ExportBlockedError(KmleadError):
    def __init__(self, report: ValidationReport):
        super().__init__(f"export blocked:\n{report}")
        self.report = report


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float

    def __post_init__(self):
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise ValueError("pixel coordinates must be finite")


@dataclass(frozen=True)
class CalibrationAnchors:
    """The three clicked ticks: origin -> (0, 0), rightmost x tick ->
    (max_months, 0), top y tick -> (0, 100)."""

    origin_px: PixelPoint
    xmax_px: PixelPoint
    ytop_px: PixelPoint
    max_months: float


@dataclass(frozen=True)
class AffineMap:
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def apply(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return self.a * u + self.b * v + self.c, self.d * u + self.e * v + self.f


@dataclass(frozen=True)
class CandidateTable:
    """A risk table proposed by one source; may violate invariants."""

    source_tag: str  # primary_extractor | fallback_extractor | manual
    payload: RiskTable
    confidence: float | None = None


@dataclass(frozen=True)
class ArmMapping:
    """Injective pairing of curve labels to risk-table labels."""

    pairs: tuple[tuple[str, str, str], ...]  # (curve_label, table_label, method)
    unmatched_curves: tuple[str, ...] = ()
    unmatched_tables: tuple[str, ...] = ()

    def table_label_for(self, curve_label):
        for c, t, _ in self.pairs:
            if c == curve_label:
                return t
        return None


def solve_affine(anchors: CalibrationAnchors) -> AffineMap:
    """Solve the six affine coefficients from the three anchor clicks."""
    if anchors.max_months <= 0:
        raise CalibrationError(f"max_months must be positive, got {anchors.max_months}")
    pts = [anchors.origin_px, anchors.xmax_px, anchors.ytop_px]
    A = np.array([[p.u, p.v, 1.0] for p in pts])
    # collinearity <=> singular design matrix
    if abs(np.linalg.det(A)) < 1e-9 * max(1.0, np.abs(A).max() ** 2):
        raise CalibrationError("calibration anchors are collinear; re-click the ticks")
    t_targets = np.array([0.0, anchors.max_months, 0.0])
    s_targets = np.array([0.0, 0.0, 100.0])
    abc = np.linalg.solve(A, t_targets)
    deff = np.linalg.solve(A, s_targets)
    m = AffineMap(abc[0], abc[1], abc[2], deff[0], deff[1], deff[2])
    if abs(m.a * m.e - m.b * m.d) < 1e-15:
        raise CalibrationError("degenerate calibration (singular linear part)")
    return m


def transform_trace(trace, affine: AffineMap):
    """Map a pixel polyline to calibrated (time, survival-percent) pairs."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    u = np.array([p.u for p in trace])
    v = np.array([p.v for p in trace])
    t, s = affine.apply(u, v)
    return list(zip(t.tolist(), s.tolist()))


def standardize_curve(points, study=None, arm_label=""):
    """Resample a calibrated trace to the 500-point standard curve.

    Duplicate times keep the last point (later clicks are corrections).
    A (0, 100) start is inserted if absent. Upward blips within the
    tolerance are clamped by a running minimum and reported as warnings;
    larger violations are reported as errors and left unclamped.

    Returns (KMCurve, ValidationReport). Survival is percent on input,
    probability in the returned curve.
    """
    if study is None:
        study = StudyId("unnamed")
    pts = [(float(t), float(s)) for t, s in points]
    if len(pts) < 2:
        raise ValueError("need at least 2 trace points")

    # stable sort by time, keep the last point among duplicates
    order = np.argsort([t for t, _ in pts], kind="stable")
    dedup: dict[float, float] = {}
    for i in order:
        dedup[pts[i][0]] = pts[i][1]
    times = np.array(list(dedup.keys()))
    surv = np.array(list(dedup.values()))
    if len(times) < 2:
        raise ValueError("need at least 2 distinct trace times")

    findings = []
    loc = f"{study.render()}/{arm_label}" if arm_label else study.render()
    if times[0] != 0.0 or surv[0] != 100.0:
        times = np.insert(times, 0, 0.0)
        surv = np.insert(surv, 0, 100.0)
        if times[1] == 0.0:  # a traced point sat at t=0 but not at 100%
            times = np.delete(times, 1)
            surv = np.delete(surv, 1)
        findings.append(
            Finding("warning", "start-inserted", loc, "inserted (0, 100%) start point")
        )

    t_max = times[-1]
    if t_max <= 0:
        raise ValueError("trace maximum time must be positive")

    clamped = surv.copy()
    running_min = clamped[0]
    for i in range(1, len(clamped)):
        rise = clamped[i] - running_min
        if rise > MONOTONICITY_TOLERANCE_PCT:
            findings.append(
                Finding(
                    "error", "monotonicity", loc,
                    f"survival rises by {rise:.3g}% at t={times[i]:.4g}; re-trace this segment",
                )
            )
            running_min = min(running_min, clamped[i])
        elif rise > 0:
            findings.append(
                Finding(
                    "warning", "monotonicity-clamped", loc,
                    f"clamped a {rise:.3g}% upward blip at t={times[i]:.4g}",
                )
            )
            clamped[i] = running_min
        else:
            running_min = clamped[i]

    report = ValidationReport(tuple(findings))
    grid = np.linspace(0.0, t_max, CURVE_POINTS)
    values = np.interp(grid, times, clamped if report.ok else surv)
    if report.ok:
        # interpolation of a monotone sequence is monotone up to float noise
        values = np.minimum.accumulate(values)
    curve = KMCurve(study, arm_label, grid, values / 100.0)
    return curve, report


_PUNCT = re.compile(r"[+/·,.\-]")
_WS = re.compile(r"\s+")


def normalize_label(label: str) -> str:
    s = _PUNCT.sub(" ", label.lower())
    return _WS.sub(" ", s).strip()


def _fuzzy_score(a: str, b: str) -> float:
    if a in b or b in a:
        return 1.0
    return difflib.SequenceMatcher(None, a, b).ratio()


def match_arms(curve_labels, table_labels, confirmed=None, colors=None) -> ArmMapping:
    """Hierarchical arm matcher: confirmed, exact-normalized, length-gated
    fuzzy, then color fallback. Ambiguous fuzzy ties are left unmatched
    rather than guessed. Labels are preserved verbatim in the output."""
    if not curve_labels or not table_labels:
        raise ValueError("labels must be nonempty")
    confirmed = dict(confirmed or {})
    colors = dict(colors or {})
    pairs = []
    free_tables = list(table_labels)

    def take(curve, table, method):
        pairs.append((curve, table, method))
        free_tables.remove(table)

    remaining = []
    for cl in curve_labels:
        if cl in confirmed and confirmed[cl] in free_tables:
            take(cl, confirmed[cl], "confirmed")
        else:
            remaining.append(cl)

    still = []
    for cl in remaining:
        exact = [tl for tl in free_tables if normalize_label(tl) == normalize_label(cl)]
        if len(exact) == 1:
            take(cl, exact[0], "exact")
        else:
            still.append(cl)

    unmatched = []
    for cl in still:
        ncl = normalize_label(cl)
        scored = []
        for tl in free_tables:
            ntl = normalize_label(tl)
            if abs(len(ncl) - len(ntl)) > FUZZY_LENGTH_GAP:
                continue
            score = _fuzzy_score(ncl, ntl)
            if score >= FUZZY_SIMILARITY:
                scored.append((score, tl))
        scored.sort(key=lambda x: (-x[0], x[1]))
        if len(scored) >= 2 and scored[0][0] == scored[1][0]:
            unmatched.append(cl)  # tie: never guess
        elif scored:
            take(cl, scored[0][1], "fuzzy")
        else:
            unmatched.append(cl)

    final_unmatched = []
    for cl in unmatched:
        tl = colors.get(cl)
        if tl is not None and tl in free_tables:
            take(cl, tl, "color_fallback")
        else:
            final_unmatched.append(cl)

    return ArmMapping(tuple(pairs), tuple(final_unmatched), tuple(free_tables))


@dataclass(frozen=True)
class CellDiff:
    arm: str
    index: int
    a_value: int
    b_value: int
    resolved_to: str  # "a" | "b" | "unresolved"
    reason: str


def _discrepancy_runs(mask):
    """Lengths of the run each index belongs to, for a boolean mask."""
    runs = np.zeros(len(mask), dtype=int)
    i = 0
    while i < len(mask):
        if mask[i]:
            j = i
            while j < len(mask) and mask[j]:
                j += 1
            runs[i:j] = j - i
            i = j
        else:
            i += 1
    return runs


def adjudicate_tables(a: CandidateTable, b: CandidateTable):
    """Fuse two candidate risk tables cell by cell.

    Minor isolated discrepancies (<= 1, no discrepant neighbor) keep the
    primary extractor's value; larger conflicts, runs of >= 3 discrepant
    cells, and cells where the primary violates monotonicity while the
    fallback does not, take the fallback's value. Cells where both
    sources violate monotonicity are unresolved and block export.

    Returns (RiskTable, diffs, ValidationReport).
    """
    ta, tb = a.payload, b.payload
    if len(ta.time_grid) != len(tb.time_grid):
        raise ValueError("candidate tables have different grid lengths")
    if set(ta.arm_labels()) != set(tb.arm_labels()):
        raise ValueError("candidate tables have different arm sets")

    diffs = []
    findings = []
    resolved_arms = []
    for label, counts_a in ta.arms:
        counts_b = tb.counts_for(label)
        ca = np.asarray(counts_a, dtype=int)
        cb = np.asarray(counts_b, dtype=int)
        disc = ca != cb
        runs = _discrepancy_runs(disc)
        a_bad = np.zeros(len(ca), dtype=bool)
        b_bad = np.zeros(len(cb), dtype=bool)
        a_bad[1:] = ca[1:] > ca[:-1]
        b_bad[1:] = cb[1:] > cb[:-1]

        out = ca.copy()
        for i in np.flatnonzero(disc):
            loc = f"{ta.study.render()}/{label}[{i}]"
            if a_bad[i] and b_bad[i]:
                findings.append(
                    Finding("error", "unresolved-conflict", loc,
                            "both sources violate monotonicity; enter this cell manually")
                )
                diffs.append(CellDiff(label, int(i), int(ca[i]), int(cb[i]),
                                      "unresolved", "both sources non-monotone"))
                continue
            if a_bad[i] and not b_bad[i]:
                out[i] = cb[i]
                diffs.append(CellDiff(label, int(i), int(ca[i]), int(cb[i]),
                                      "b", "primary violates monotonicity"))
            elif abs(int(ca[i]) - int(cb[i])) <= 1 and runs[i] == 1 and runs[i] < 3:
                diffs.append(CellDiff(label, int(i), int(ca[i]), int(cb[i]),
                                      "a", "minor isolated discrepancy"))
            else:
                out[i] = cb[i]
                reason = ("run of adjacent discrepancies" if runs[i] >= 3
                          else "discrepancy exceeds 1" if abs(int(ca[i]) - int(cb[i])) > 1
                          else "adjacent discrepancies")
                diffs.append(CellDiff(label, int(i), int(ca[i]), int(cb[i]), "b", reason))
        resolved_arms.append((label, tuple(int(x) for x in out)))

    table = RiskTable(ta.study, ta.time_grid, tuple(resolved_arms))
    return table, diffs, ValidationReport(tuple(findings))


@dataclass(frozen=True)
class ExportFragment:
    """Export-ready file rows for one arm."""

    xy_rows: tuple[tuple[str, str, float, float], ...]
    risk_rows: tuple[tuple[str, str, float, int], ...]


def finalize_arm(curve: KMCurve, mapping: ArmMapping, rt: RiskTable) -> ExportFragment:
    """Emit the xy.csv / risk_table.csv rows for one arm, refusing on any
    error-level finding, unmatched arm, or terminal-month mismatch."""
    report = validate_curve(curve).merged(validate_risk_table(rt))
    findings = list(report.findings)
    loc = f"{curve.study.render()}/{curve.arm_label}"

    table_label = mapping.table_label_for(curve.arm_label)
    if table_label is None or table_label not in rt.arm_labels():
        findings.append(Finding("error", "unmatched-arm", loc, "arm has no risk-table mapping"))
    else:
        grid = np.asarray(rt.time_grid, dtype=float)
        # the visible x-axis maximum need not equal the terminal month of
        # the risk table; allow one grid step of slack, no more
        step = float(np.min(np.diff(grid))) if len(grid) > 1 else 0.0
        if curve.times[-1] < grid[-1] - step:
            findings.append(
                Finding("error", "terminal-month-mismatch", loc,
                        f"curve ends at {curve.times[-1]:.4g} but risk grid runs to {grid[-1]:.4g}")
            )

    full = ValidationReport(tuple(findings))
    if not full.ok:
        raise ExportBlockedError(full)

    sid = curve.study.render()
    xy_rows = tuple((sid, curve.arm_label, float(t), float(s) * 100.0)
                    for t, s in zip(curve.times, curve.survival))
    counts = rt.counts_for(table_label)
    risk_rows = tuple((sid, table_label, float(t), int(n))
                      for t, n in zip(rt.time_grid, counts))
    return ExportFragment(xy_rows, risk_rows)
