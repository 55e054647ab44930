import { describe, expect, it } from 'vitest';

import {
  Anchors,
  anchorsCollinear,
  axisToPixel,
  dedupePolyline,
  pixelToAxis,
  solveAffine,
  upwardSegments,
} from '../src/geometry';

const AXIS_ALIGNED: Anchors = {
  origin: { u: 100, v: 400 },
  xmax: { u: 600, v: 400 },
  ytop: { u: 100, v: 50 },
  maxMonths: 48,
};

describe('anchorsCollinear', () => {
  it('accepts a proper axis corner', () => {
    expect(anchorsCollinear(AXIS_ALIGNED.origin, AXIS_ALIGNED.xmax, AXIS_ALIGNED.ytop)).toBe(false);
  });

  it('rejects three clicks on a line', () => {
    expect(anchorsCollinear({ u: 0, v: 0 }, { u: 1, v: 1 }, { u: 2, v: 2 })).toBe(true);
  });

  it('rejects repeated clicks', () => {
    expect(anchorsCollinear({ u: 5, v: 5 }, { u: 5, v: 5 }, { u: 9, v: 1 })).toBe(true);
  });
});

describe('solveAffine', () => {
  it('maps the anchors themselves exactly', () => {
    const affine = solveAffine(AXIS_ALIGNED);
    expect(pixelToAxis(affine, AXIS_ALIGNED.origin)).toEqual({ t: 0, s: 0 });
    const atXmax = pixelToAxis(affine, AXIS_ALIGNED.xmax);
    expect(atXmax.t).toBeCloseTo(48, 9);
    expect(atXmax.s).toBeCloseTo(0, 9);
    const atYtop = pixelToAxis(affine, AXIS_ALIGNED.ytop);
    expect(atYtop.t).toBeCloseTo(0, 9);
    expect(atYtop.s).toBeCloseTo(100, 9);
  });

  it('recovers a sheared ground-truth frame to 1e-9', () => {
    // axis -> pixel: p = B [t, s]^T + o with off-diagonal (shear) terms
    const B = [
      [7.3, -1.2],
      [0.9, -3.1],
    ];
    const o = [41.5, 803.25];
    const toPixel = (t: number, s: number) => ({
      u: B[0]![0]! * t + B[0]![1]! * s + o[0]!,
      v: B[1]![0]! * t + B[1]![1]! * s + o[1]!,
    });
    const affine = solveAffine({
      origin: toPixel(0, 0),
      xmax: toPixel(60, 0),
      ytop: toPixel(0, 100),
      maxMonths: 60,
    });
    for (const [t, s] of [
      [0, 0],
      [12.5, 87.1],
      [60, 100],
      [33.3, 4.2],
    ] as const) {
      const got = pixelToAxis(affine, toPixel(t, s));
      expect(got.t).toBeCloseTo(t, 9);
      expect(got.s).toBeCloseTo(s, 9);
    }
  });

  it('round-trips through axisToPixel', () => {
    const affine = solveAffine(AXIS_ALIGNED);
    const p = axisToPixel(affine, 17.25, 63.5);
    const back = pixelToAxis(affine, p);
    expect(back.t).toBeCloseTo(17.25, 9);
    expect(back.s).toBeCloseTo(63.5, 9);
  });

  it('throws on collinear anchors and bad max_months', () => {
    expect(() =>
      solveAffine({
        origin: { u: 0, v: 0 },
        xmax: { u: 1, v: 1 },
        ytop: { u: 2, v: 2 },
        maxMonths: 48,
      }),
    ).toThrow(/collinear/);
    expect(() => solveAffine({ ...AXIS_ALIGNED, maxMonths: 0 })).toThrow(/max_months/);
  });
});

describe('dedupePolyline', () => {
  it('drops jitter below the pixel gap and keeps order', () => {
    const pts = [
      { u: 0, v: 0 },
      { u: 0.1, v: 0.1 },
      { u: 5, v: 0 },
      { u: 5.2, v: 0.1 },
      { u: 10, v: 3 },
    ];
    expect(dedupePolyline(pts)).toEqual([
      { u: 0, v: 0 },
      { u: 5, v: 0 },
      { u: 10, v: 3 },
    ]);
  });
});

describe('upwardSegments', () => {
  it('flags the click that raises survival', () => {
    const affine = solveAffine(AXIS_ALIGNED);
    // v decreasing means survival increasing in this frame
    const pts = [
      { u: 100, v: 50 },
      { u: 200, v: 120 },
      { u: 300, v: 100 },
      { u: 400, v: 200 },
    ];
    const bad = upwardSegments(affine, pts);
    expect(bad).toHaveLength(1);
    expect(bad[0]!.index).toBe(2);
    expect(bad[0]!.at).toEqual({ u: 300, v: 100 });
  });

  it('is silent on a monotone trace', () => {
    const affine = solveAffine(AXIS_ALIGNED);
    const pts = [
      { u: 100, v: 50 },
      { u: 300, v: 180 },
      { u: 500, v: 330 },
    ];
    expect(upwardSegments(affine, pts)).toHaveLength(0);
  });
});
