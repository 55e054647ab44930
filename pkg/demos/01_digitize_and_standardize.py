"""
Digitizing a Kaplan-Meier figure
================================

A walkthrough of the pixel-side workflow: three-point calibration,
trace transformation, curve standardization, arm matching, and
two-source risk-table adjudication.
"""

import numpy as np

from kmlead import (
    CalibrationAnchors,
    CandidateTable,
    PixelPoint,
    RiskTable,
    StudyId,
    adjudicate_tables,
    match_arms,
    solve_affine,
    standardize_curve,
    transform_trace,
)

# The user clicks three labeled axis ticks on the rendered figure.
# Suppose the plot area maps t in [0, 60] months to pixels u in
# [80, 620] and survival 0..100% to pixels v in [430, 40] (y grows
# downward in image coordinates), with a slight shear from scanning.
anchors = CalibrationAnchors(
    origin_px=PixelPoint(80.0, 430.0),
    xmax_px=PixelPoint(620.0, 436.0),   # skewed a few pixels
    ytop_px=PixelPoint(83.0, 40.0),
    max_months=60.0,
)
affine = solve_affine(anchors)
print("affine coefficients:", affine)

# Round-trip check: the anchor pixels must land exactly on their targets.
for px, target in [(anchors.origin_px, (0.0, 0.0)),
                   (anchors.xmax_px, (60.0, 0.0)),
                   (anchors.ytop_px, (0.0, 100.0))]:
    t, s = affine.apply(px.u, px.v)
    print(f"  ({px.u:6.1f}, {px.v:6.1f}) -> ({t:8.4f}, {s:8.4f})  target {target}")

# Trace an exponential-looking curve in pixel space, with a small
# upward blip the way a shaky hand would produce.
true_t = np.linspace(0.0, 60.0, 30)
true_s = 100.0 * np.exp(-0.035 * true_t)
u = 80.0 + true_t / 60.0 * 540.0 + true_t / 60.0 * 3.0
v = 430.0 - true_s / 100.0 * 390.0 + true_t / 60.0 * 6.0
trace = [PixelPoint(uu, vv) for uu, vv in zip(u, v)]
points = transform_trace(trace, affine)
points[10] = (points[10][0], points[10][1] + 0.4)  # 0.4% blip, clampable

study = StudyId("DEMO-1", "Fig 2A")
curve, report = standardize_curve(points, study=study, arm_label="mono")
print("\nstandardized curve:", curve.point_count, "points, report:")
print(report)
print("max deviation from truth (%):",
      np.max(np.abs(curve.survival * 100 - 100 * np.exp(-0.035 * curve.times))))

# Arm labels rarely match verbatim between the legend and the risk table.
mapping = match_arms(
    ["NIVO + IPI", "chemotherapy"],
    ["Nivolumab+Ipilimumab", "Chemotherapy"],
)
print("\narm mapping:")
for curve_label, table_label, method in mapping.pairs:
    print(f"  {curve_label!r} -> {table_label!r}  ({method})")

# Two extraction paths propose slightly different risk tables; the
# adjudicator fuses them cell by cell and logs every difference.
grid = (0.0, 12.0, 24.0, 36.0, 48.0, 60.0)
primary = CandidateTable("primary_extractor", RiskTable(
    study, grid, (("mono", (200, 150, 96, 61, 38, 24)),)))
fallback = CandidateTable("fallback_extractor", RiskTable(
    study, grid, (("mono", (200, 150, 95, 61, 38, 24)),)))
resolved, diffs, adj_report = adjudicate_tables(primary, fallback)
print("\nadjudicated counts:", resolved.counts_for("mono"))
for d in diffs:
    print(f"  cell [{d.index}]: {d.a_value} vs {d.b_value} -> {d.resolved_to} ({d.reason})")
