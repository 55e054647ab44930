// Pixel-frame geometry shared by the canvas: a client-side preview of the
// same three-anchor affine calibration the service applies, so anchors and
// traces render where the exported data will land. The server remains the
// source of truth; this mirror only drives drawing and early rejection of
// collinear clicks.

export interface Point {
  u: number;
  v: number;
}

export interface Anchors {
  origin: Point;
  xmax: Point;
  ytop: Point;
  maxMonths: number;
}

// t = a*u + b*v + c ; s = d*u + e*v + f (survival in percent)
export interface Affine {
  a: number;
  b: number;
  c: number;
  d: number;
  e: number;
  f: number;
}

/**
 * Collinearity test on the raw click triple. The determinant of the two
 * anchor edge vectors is compared against the product of their lengths so
 * the tolerance is scale-free.
 */
export function anchorsCollinear(origin: Point, xmax: Point, ytop: Point): boolean {
  const ax = xmax.u - origin.u;
  const ay = xmax.v - origin.v;
  const bx = ytop.u - origin.u;
  const by = ytop.v - origin.v;
  const det = ax * by - ay * bx;
  const scale = Math.hypot(ax, ay) * Math.hypot(bx, by);
  return scale === 0 || Math.abs(det) < 1e-9 * scale;
}

/**
 * Solve the affine pixel-to-axis map from the three labeled clicks.
 * Shear (a skewed scan) is handled exactly; only collinear clicks fail.
 */
export function solveAffine(anchors: Anchors): Affine {
  const { origin, xmax, ytop, maxMonths } = anchors;
  if (!(maxMonths > 0)) {
    throw new Error('max_months must be positive');
  }
  if (anchorsCollinear(origin, xmax, ytop)) {
    throw new Error('anchor clicks are collinear; re-click the three axis ticks');
  }
  const ax = xmax.u - origin.u;
  const ay = xmax.v - origin.v;
  const bx = ytop.u - origin.u;
  const by = ytop.v - origin.v;
  const det = ax * by - ay * bx;
  // rows of the inverse of [[ax, bx], [ay, by]], scaled to axis units
  const a = (maxMonths * by) / det;
  const b = (maxMonths * -bx) / det;
  const d = (100 * -ay) / det;
  const e = (100 * ax) / det;
  return {
    a,
    b,
    c: -(a * origin.u + b * origin.v),
    d,
    e,
    f: -(d * origin.u + e * origin.v),
  };
}

export function pixelToAxis(affine: Affine, p: Point): { t: number; s: number } {
  return {
    t: affine.a * p.u + affine.b * p.v + affine.c,
    s: affine.d * p.u + affine.e * p.v + affine.f,
  };
}

/** Inverse map, used to place overlay markers back onto the figure. */
export function axisToPixel(affine: Affine, t: number, s: number): Point {
  const det = affine.a * affine.e - affine.b * affine.d;
  const x = t - affine.c;
  const y = s - affine.f;
  return {
    u: (affine.e * x - affine.b * y) / det,
    v: (-affine.d * x + affine.a * y) / det,
  };
}

/**
 * Collapse consecutive near-duplicate clicks (hand jitter on the same
 * step corner) so the submitted polyline is clean.
 */
export function dedupePolyline(points: Point[], minPixelGap = 0.5): Point[] {
  const out: Point[] = [];
  for (const p of points) {
    const last = out[out.length - 1];
    if (last && Math.hypot(p.u - last.u, p.v - last.v) < minPixelGap) continue;
    out.push(p);
  }
  return out;
}

/**
 * Flag trace segments that move upward in survival once calibrated; the
 * canvas highlights these at the offending pixel coordinates. Small rises
 * within the clamp tolerance are warnings the server will absorb, larger
 * ones need a re-click.
 */
export function upwardSegments(
  affine: Affine,
  points: Point[],
): { index: number; rise: number; at: Point }[] {
  const bad: { index: number; rise: number; at: Point }[] = [];
  let prev = -Infinity;
  let prevS = Infinity;
  for (let i = 0; i < points.length; i++) {
    const { t, s } = pixelToAxis(affine, points[i]!);
    if (t >= prev && s > prevS) {
      bad.push({ index: i, rise: s - prevS, at: points[i]! });
    }
    prev = t;
    prevS = Math.min(prevS, s);
  }
  return bad;
}
