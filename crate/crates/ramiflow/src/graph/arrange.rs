//! Segment arrangement: splits a family of weighted segments at pairwise
//! intersections and overlap endpoints, producing pieces with pairwise
//! disjoint relative interiors and exact coverage bookkeeping.
//!
//! Coordinates are snapped to an integer grid of `1e-9` and all incidence
//! predicates (collinearity, crossing) are decided by exact integer/rational
//! arithmetic on the snapped values. Positions along a line are kept as
//! rationals, so overlap endpoints and crossing points subdivide
//! consistently regardless of evaluation order.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::measures::Point;

const TICK: f64 = 1e9;

/// A maximal interior-disjoint piece of the arrangement.
#[derive(Debug, Clone)]
pub(crate) struct ArrangePiece {
    pub a: Point,
    pub b: Point,
    /// Canonical unit direction of the supporting line.
    pub unit: Vec<f64>,
    /// Segments covering this piece: `(input index, ±1)` relative to `unit`,
    /// one entry per traversal.
    pub covers: Vec<(usize, i8)>,
}

pub(crate) struct ArrangeInput {
    pub a: Point,
    pub b: Point,
}

struct Seg {
    input: usize,
    ta: Vec<i64>,
    tb: Vec<i64>,
    dir: Vec<i64>,
    fa: Point,
    fb: Point,
}

struct LineGroup {
    prim: Vec<i64>,
    base: Vec<i64>,
    members: Vec<usize>,
    breakpoints: BTreeMap<BigRational, Point>,
}

pub(crate) fn arrange_segments(dim: usize, inputs: &[ArrangeInput]) -> Vec<ArrangePiece> {
    let mut segs: Vec<Seg> = Vec::new();
    for (input, item) in inputs.iter().enumerate() {
        let ta = snap(&item.a);
        let tb = snap(&item.b);
        if ta == tb {
            continue;
        }
        let dir: Vec<i64> = tb.iter().zip(&ta).map(|(b, a)| b - a).collect();
        segs.push(Seg {
            input,
            ta,
            tb,
            dir,
            fa: item.a.clone(),
            fb: item.b.clone(),
        });
    }

    // Group segments by supporting line.
    let mut groups: Vec<LineGroup> = Vec::new();
    let mut by_prim: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut seg_group = vec![usize::MAX; segs.len()];
    for (si, seg) in segs.iter().enumerate() {
        let prim = primitive(&seg.dir);
        let candidates = by_prim.entry(prim.clone()).or_default();
        let mut found = None;
        for &gi in candidates.iter() {
            let offset: Vec<i64> = seg
                .ta
                .iter()
                .zip(&groups[gi].base)
                .map(|(a, b)| a - b)
                .collect();
            if parallel(&offset, &prim) {
                found = Some(gi);
                break;
            }
        }
        let gi = match found {
            Some(gi) => gi,
            None => {
                let gi = groups.len();
                groups.push(LineGroup {
                    prim: prim.clone(),
                    base: seg.ta.clone(),
                    members: Vec::new(),
                    breakpoints: BTreeMap::new(),
                });
                candidates.push(gi);
                gi
            }
        };
        groups[gi].members.push(si);
        seg_group[si] = gi;
    }

    // Register endpoint breakpoints with their original coordinates.
    for (si, seg) in segs.iter().enumerate() {
        let g = &mut groups[seg_group[si]];
        let pa = int_param(&seg.ta, &g.base, &g.prim);
        let pb = int_param(&seg.tb, &g.base, &g.prim);
        g.breakpoints.entry(pa).or_insert_with(|| seg.fa.clone());
        g.breakpoints.entry(pb).or_insert_with(|| seg.fb.clone());
    }

    // Transversal crossings between segments on different lines.
    for i in 0..segs.len() {
        for j in (i + 1)..segs.len() {
            if seg_group[i] == seg_group[j] {
                continue;
            }
            if !boxes_touch(&segs[i], &segs[j]) {
                continue;
            }
            if let Some((t, s)) = segment_crossing(dim, &segs[i], &segs[j]) {
                let point = crossing_point(&segs[i], &t);
                let gi = seg_group[i];
                let pi = param_on_line(&segs[i], &t, &groups[gi]);
                groups[gi]
                    .breakpoints
                    .entry(pi)
                    .or_insert_with(|| point.clone());
                let gj = seg_group[j];
                let pj = param_on_line(&segs[j], &s, &groups[gj]);
                groups[gj]
                    .breakpoints
                    .entry(pj)
                    .or_insert_with(|| point.clone());
            }
        }
    }

    // Emit covered elementary intervals per line.
    let mut pieces = Vec::new();
    for group in &groups {
        let params: Vec<(&BigRational, &Point)> = group.breakpoints.iter().collect();
        if params.len() < 2 {
            continue;
        }
        // Member intervals in line parameters.
        let member_spans: Vec<(usize, BigRational, BigRational, i8)> = group
            .members
            .iter()
            .map(|&si| {
                let seg = &segs[si];
                let pa = int_param(&seg.ta, &group.base, &group.prim);
                let pb = int_param(&seg.tb, &group.base, &group.prim);
                if pa <= pb {
                    (si, pa, pb, 1i8)
                } else {
                    (si, pb, pa, -1i8)
                }
            })
            .collect();
        let unit = unit_of(&group.prim);
        for w in params.windows(2) {
            let (q0, p0) = w[0];
            let (q1, p1) = w[1];
            let covers: Vec<(usize, i8)> = member_spans
                .iter()
                .filter(|(_, lo, hi, _)| lo <= q0 && *q1 <= *hi)
                .map(|(si, _, _, sign)| (segs[*si].input, *sign))
                .collect();
            if covers.is_empty() {
                continue;
            }
            if p0.dist(p1) == 0.0 {
                continue;
            }
            pieces.push(ArrangePiece {
                a: p0.clone(),
                b: p1.clone(),
                unit: unit.clone(),
                covers,
            });
        }
    }
    pieces
}

/// How two segments sit relative to each other, decided exactly on snapped
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SegRelation {
    Disjoint,
    /// Exactly one common point, at parameter `t` on the first segment and
    /// `s` on the second (both in `[0,1]`, times the respective lengths).
    Touch { t: BigRational, s: BigRational },
    /// Collinear with a common piece of positive length.
    Overlap,
}

pub(crate) fn segment_relation(
    dim: usize,
    a1: &Point,
    b1: &Point,
    a2: &Point,
    b2: &Point,
) -> SegRelation {
    let ta1 = snap(a1);
    let tb1 = snap(b1);
    let ta2 = snap(a2);
    let tb2 = snap(b2);
    if ta1 == tb1 || ta2 == tb2 {
        return SegRelation::Disjoint;
    }
    let d1: Vec<i64> = tb1.iter().zip(&ta1).map(|(b, a)| b - a).collect();
    let d2: Vec<i64> = tb2.iter().zip(&ta2).map(|(b, a)| b - a).collect();
    let offset: Vec<i64> = ta2.iter().zip(&ta1).map(|(b, a)| b - a).collect();
    if parallel(&d1, &d2) {
        if !parallel(&offset, &d1) {
            return SegRelation::Disjoint;
        }
        // Same line: compare parameter intervals along d1.
        let dot = |v: &[i64]| -> i128 {
            v.iter()
                .zip(&d1)
                .map(|(&x, &d)| x as i128 * d as i128)
                .sum()
        };
        let p1 = (0i128, dot(&d1));
        let qa = dot(&offset);
        let qb = qa
            + d2.iter()
                .zip(&d1)
                .map(|(&x, &d)| x as i128 * d as i128)
                .sum::<i128>();
        let (lo1, hi1) = (p1.0.min(p1.1), p1.0.max(p1.1));
        let (lo2, hi2) = (qa.min(qb), qa.max(qb));
        let lo = lo1.max(lo2);
        let hi = hi1.min(hi2);
        if lo > hi {
            return SegRelation::Disjoint;
        }
        if lo < hi {
            return SegRelation::Overlap;
        }
        // Single shared parameter `lo`.
        let t = ratio(lo - p1.0, p1.1 - p1.0);
        let s = ratio(lo - qa, qb - qa);
        return SegRelation::Touch { t, s };
    }
    let seg_a = Seg {
        input: 0,
        ta: ta1,
        tb: tb1,
        dir: d1,
        fa: a1.clone(),
        fb: b1.clone(),
    };
    let seg_b = Seg {
        input: 1,
        ta: ta2,
        tb: tb2,
        dir: d2,
        fa: a2.clone(),
        fb: b2.clone(),
    };
    match segment_crossing(dim, &seg_a, &seg_b) {
        Some((t, s)) => SegRelation::Touch { t, s },
        None => SegRelation::Disjoint,
    }
}

fn snap(p: &Point) -> Vec<i64> {
    p.0.iter().map(|c| (c * TICK).round() as i64).collect()
}

/// Direction divided by the gcd of its entries, sign-canonicalized so the
/// first nonzero entry is positive.
fn primitive(dir: &[i64]) -> Vec<i64> {
    let mut g: i64 = 0;
    for &d in dir {
        g = gcd(g, d.abs());
    }
    debug_assert!(g > 0);
    let mut out: Vec<i64> = dir.iter().map(|d| d / g).collect();
    if let Some(first) = out.iter().find(|&&d| d != 0) {
        if *first < 0 {
            for d in &mut out {
                *d = -*d;
            }
        }
    }
    out
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Whether `v` is an integer-parallel multiple of `w` (all 2×2 minors zero).
fn parallel(v: &[i64], w: &[i64]) -> bool {
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            let m = v[i] as i128 * w[j] as i128 - v[j] as i128 * w[i] as i128;
            if m != 0 {
                return false;
            }
        }
    }
    true
}

fn int_param(point: &[i64], base: &[i64], prim: &[i64]) -> BigRational {
    let mut acc: i128 = 0;
    for k in 0..point.len() {
        acc += (point[k] - base[k]) as i128 * prim[k] as i128;
    }
    BigRational::from(BigInt::from(acc))
}

fn unit_of(prim: &[i64]) -> Vec<f64> {
    let norm = prim
        .iter()
        .map(|&d| (d as f64) * (d as f64))
        .sum::<f64>()
        .sqrt();
    prim.iter().map(|&d| d as f64 / norm).collect()
}

fn boxes_touch(a: &Seg, b: &Seg) -> bool {
    for k in 0..a.ta.len() {
        let (alo, ahi) = minmax(a.ta[k], a.tb[k]);
        let (blo, bhi) = minmax(b.ta[k], b.tb[k]);
        if ahi < blo || bhi < alo {
            return false;
        }
    }
    true
}

fn minmax(a: i64, b: i64) -> (i64, i64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Rational segment parameters `(t, s)` of the crossing of two non-collinear
/// segments, when one exists within both (endpoints included).
fn segment_crossing(dim: usize, a: &Seg, b: &Seg) -> Option<(BigRational, BigRational)> {
    // Solve t·d1 − s·d2 = r over the rationals.
    let d1 = &a.dir;
    let d2 = &b.dir;
    let r: Vec<i64> = b.ta.iter().zip(&a.ta).map(|(x, y)| x - y).collect();
    let mut pivot: Option<(usize, usize, i128)> = None;
    for p in 0..dim {
        for q in (p + 1)..dim {
            let det = d1[p] as i128 * (-(d2[q] as i128)) - (-(d2[p] as i128)) * d1[q] as i128;
            if det != 0 {
                pivot = Some((p, q, det));
                break;
            }
        }
        if pivot.is_some() {
            break;
        }
    }
    let (p, q, det) = pivot?;
    let tn = r[p] as i128 * (-(d2[q] as i128)) - (-(d2[p] as i128)) * r[q] as i128;
    let sn = d1[p] as i128 * r[q] as i128 - r[p] as i128 * d1[q] as i128;
    let t = ratio(tn, det);
    let s = ratio(sn, det);
    // Consistency on the remaining coordinates.
    for k in 0..dim {
        let lhs = big(d1[k]) * &t - big(d2[k]) * &s;
        if lhs != BigRational::from(BigInt::from(r[k])) {
            return None;
        }
    }
    let zero = BigRational::zero();
    let one = BigRational::from(BigInt::from(1));
    if t < zero || t > one || s < zero || s > one {
        return None;
    }
    Some((t, s))
}

fn big(v: i64) -> BigRational {
    BigRational::from(BigInt::from(v))
}

fn ratio(num: i128, den: i128) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn crossing_point(seg: &Seg, t: &BigRational) -> Point {
    let coords = seg
        .ta
        .iter()
        .zip(&seg.dir)
        .map(|(&a, &d)| {
            let ticks = BigRational::from(BigInt::from(a)) + big(d) * t;
            ticks.to_f64().unwrap() / TICK
        })
        .collect();
    Point(coords)
}

fn param_on_line(seg: &Seg, t: &BigRational, group: &LineGroup) -> BigRational {
    let base_param = int_param(&seg.ta, &group.base, &group.prim);
    let mut dir_dot: i128 = 0;
    for k in 0..seg.dir.len() {
        dir_dot += seg.dir[k] as i128 * group.prim[k] as i128;
    }
    base_param + BigRational::from(BigInt::from(dir_dot)) * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::p2;

    fn input(ax: f64, ay: f64, bx: f64, by: f64) -> ArrangeInput {
        ArrangeInput {
            a: p2(ax, ay),
            b: p2(bx, by),
        }
    }

    #[test]
    fn coincident_segments_form_one_piece() {
        let pieces = arrange_segments(
            2,
            &[input(0.0, 0.0, 1.0, 0.0), input(0.0, 0.0, 1.0, 0.0)],
        );
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].covers.len(), 2);
        assert_eq!(pieces[0].covers[0].1, pieces[0].covers[1].1);
    }

    #[test]
    fn opposite_segments_have_opposite_signs() {
        let pieces = arrange_segments(
            2,
            &[input(0.0, 0.0, 1.0, 0.0), input(1.0, 0.0, 0.0, 0.0)],
        );
        assert_eq!(pieces.len(), 1);
        let signs: Vec<i8> = pieces[0].covers.iter().map(|c| c.1).collect();
        assert_eq!(signs[0], -signs[1]);
    }

    #[test]
    fn partial_overlap_splits_in_three() {
        let pieces = arrange_segments(
            2,
            &[input(0.0, 0.0, 2.0, 0.0), input(1.0, 0.0, 3.0, 0.0)],
        );
        assert_eq!(pieces.len(), 3);
        let mids: Vec<usize> = pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| p.covers.len() == 2)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(mids.len(), 1);
        let mid = &pieces[mids[0]];
        assert!((mid.a.dist(&mid.b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_splits_both() {
        let pieces = arrange_segments(
            2,
            &[input(-1.0, 0.0, 1.0, 0.0), input(0.0, -1.0, 0.0, 1.0)],
        );
        assert_eq!(pieces.len(), 4);
        for p in &pieces {
            assert!((p.a.dist(&p.b) - 1.0).abs() < 1e-12);
            assert_eq!(p.covers.len(), 1);
        }
    }

    #[test]
    fn skew_segments_in_three_dimensions_do_not_split() {
        let a = ArrangeInput {
            a: Point(vec![0.0, 0.0, 0.0]),
            b: Point(vec![1.0, 0.0, 0.0]),
        };
        let b = ArrangeInput {
            a: Point(vec![0.5, -1.0, 1.0]),
            b: Point(vec![0.5, 1.0, 1.0]),
        };
        let pieces = arrange_segments(3, &[a, b]);
        assert_eq!(pieces.len(), 2);
    }

    #[test]
    fn endpoint_touch_reuses_original_coordinates() {
        let pieces = arrange_segments(
            2,
            &[input(0.0, 0.0, 1.0, 0.0), input(1.0, 0.0, 2.0, 0.5)],
        );
        assert_eq!(pieces.len(), 2);
        for p in &pieces {
            assert_eq!(p.covers.len(), 1);
        }
    }
}
