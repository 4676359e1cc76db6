//! Evaluation: occlusion precision-recall with ODS/OIS/AP, depth error
//! metrics, and truncated-distance edge metrics.

use crate::derive::{threshold_boundary, BoundaryMap, OrientationMap};
use crate::error::{Error, Result};
use crate::grid::{DepthMap, Grid};

/// Default match tolerance as a fraction of the image diagonal (the
/// boundary-benchmark convention).
pub const DEFAULT_TOL_FRACTION: f64 = 0.0075;

/// Match tolerance in pixels for an image of the given size.
pub fn default_match_tolerance(width: usize, height: usize) -> f64 {
    let w = width as f64;
    let h = height as f64;
    (DEFAULT_TOL_FRACTION * (w * w + h * h).sqrt()).max(1.0)
}

/// The default threshold grid: 99 uniform thresholds in (0, 1).
pub fn default_thresholds() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

/// One-to-one correspondence between predicted and ground-truth boundary
/// pixels.
#[derive(Debug, Clone)]
pub struct BoundaryMatch {
    /// `(pred_pixel, gt_pixel, distance)` per match.
    pub matches: Vec<((usize, usize), (usize, usize), f64)>,
    pub unmatched_pred: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<(usize, usize)>,
}

/// Greedy one-to-one matching by increasing pairwise distance, capped at
/// `tol` pixels. Deterministic: ties break on pixel order.
pub fn match_boundaries(pred: &BoundaryMap, gt: &BoundaryMap, tol: f64) -> Result<BoundaryMatch> {
    if pred.size() != gt.size() {
        return Err(Error::SizeMismatch {
            expected: gt.size(),
            got: pred.size(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let pred_px = pred.on_pixels();
    let gt_px = gt.on_pixels();

    // bucket gt pixels on a coarse grid so candidate generation is local
    let cell = tol.ceil().max(1.0) as usize;
    let mut buckets: std::collections::HashMap<(usize, usize), Vec<usize>> =
        std::collections::HashMap::new();
    for (gi, &(gx, gy)) in gt_px.iter().enumerate() {
        buckets.entry((gx / cell, gy / cell)).or_default().push(gi);
    }

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    let tol2 = tol * tol;
    for (pi, &(px, py)) in pred_px.iter().enumerate() {
        let (bx, by) = (px / cell, py / cell);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (bx as i64 + dx, by as i64 + dy);
                if nx < 0 || ny < 0 {
                    continue;
                }
                if let Some(list) = buckets.get(&(nx as usize, ny as usize)) {
                    for &gi in list {
                        let (gx, gy) = gt_px[gi];
                        let ddx = px as f64 - gx as f64;
                        let ddy = py as f64 - gy as f64;
                        let d2 = ddx * ddx + ddy * ddy;
                        if d2 <= tol2 {
                            candidates.push((d2, pi, gi));
                        }
                    }
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut pred_used = vec![false; pred_px.len()];
    let mut gt_used = vec![false; gt_px.len()];
    let mut matches = Vec::new();
    for (d2, pi, gi) in candidates {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            matches.push((pred_px[pi], gt_px[gi], d2.sqrt()));
        }
    }
    let unmatched_pred = pred_px
        .iter()
        .zip(&pred_used)
        .filter(|(_, &u)| !u)
        .map(|(&p, _)| p)
        .collect();
    let unmatched_gt = gt_px
        .iter()
        .zip(&gt_used)
        .filter(|(_, &u)| !u)
        .map(|(&p, _)| p)
        .collect();
    Ok(BoundaryMatch {
        matches,
        unmatched_pred,
        unmatched_gt,
    })
}

/// One point of the occlusion precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub matched_pred: usize,
    pub pred_total: usize,
    pub matched_gt_orient_ok: usize,
    pub gt_total: usize,
}

fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision convention: an empty prediction makes no errors, so precision
/// is 1 when nothing is predicted. Keeps a perfect predictor at AP = 1 even
/// at thresholds above its largest response.
fn precision(ok: usize, pred_total: usize) -> f64 {
    if pred_total == 0 {
        1.0
    } else {
        ok as f64 / pred_total as f64
    }
}

/// Angular distance wrapped to [0, pi].
fn angle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Occlusion precision-recall over a threshold grid.
///
/// The prediction map is thresholded (inclusive) per threshold; matched
/// boundary pixels count toward recall, and precision counts matched pred
/// pixels whose orientation agrees with the matched gt pixel's within pi/2.
/// Undefined orientation on a matched pixel counts as incorrect.
pub fn opr_curve(
    pred_b: &BoundaryMap,
    pred_o: &OrientationMap,
    gt_b: &BoundaryMap,
    gt_o: &OrientationMap,
    thresholds: &[f64],
    tol: f64,
) -> Result<Vec<PRPoint>> {
    if pred_b.size() != gt_b.size() {
        return Err(Error::SizeMismatch {
            expected: gt_b.size(),
            got: pred_b.size(),
        });
    }
    let gt_total = gt_b.on_pixels().len();
    let mut out = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let hard = threshold_boundary(pred_b, t);
        let m = match_boundaries(&hard, gt_b, tol)?;
        let pred_total = hard.on_pixels().len();
        let matched_pred = m.matches.len();
        let mut orient_ok = 0usize;
        for &((px, py), (gx, gy), _) in &m.matches {
            if let (Some(po), Some(go)) = (pred_o.get(px, py), gt_o.get(gx, gy)) {
                if angle_dist(po, go) <= std::f64::consts::FRAC_PI_2 {
                    orient_ok += 1;
                }
            }
        }
        let precision = precision(orient_ok, pred_total);
        let recall = ratio(matched_pred, gt_total);
        out.push(PRPoint {
            threshold: t,
            precision,
            recall,
            f_measure: f_measure(precision, recall),
            matched_pred,
            pred_total,
            matched_gt_orient_ok: orient_ok,
            gt_total,
        });
    }
    Ok(out)
}

/// Dataset-level summary of per-image OPR curves.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub ods: f64,
    pub ois: f64,
    pub ap: f64,
    pub per_image: Vec<Vec<PRPoint>>,
}

/// Aggregate per-image curves sharing one threshold grid: ODS sums counts
/// per threshold then takes the best F, OIS averages per-image best F, AP
/// is the trapezoidal area under the aggregated P(R) curve (precision
/// extended as constant down to recall 0).
pub fn summarize(curves: Vec<Vec<PRPoint>>) -> Result<EvalSummary> {
    if curves.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_thresh = curves[0].len();
    if curves.iter().any(|c| c.len() != n_thresh) || n_thresh == 0 {
        return Err(Error::InvalidArgument(
            "curves must share a non-empty threshold grid".into(),
        ));
    }

    let mut agg: Vec<(f64, f64, f64)> = Vec::with_capacity(n_thresh); // (P, R, F)
    for ti in 0..n_thresh {
        let mut ok = 0usize;
        let mut pred = 0usize;
        let mut matched = 0usize;
        let mut gt = 0usize;
        for c in &curves {
            ok += c[ti].matched_gt_orient_ok;
            pred += c[ti].pred_total;
            matched += c[ti].matched_pred;
            gt += c[ti].gt_total;
        }
        let p = precision(ok, pred);
        let r = ratio(matched, gt);
        agg.push((p, r, f_measure(p, r)));
    }
    let ods = agg.iter().map(|&(_, _, f)| f).fold(0.0, f64::max);
    let ois = curves
        .iter()
        .map(|c| c.iter().map(|pt| pt.f_measure).fold(0.0, f64::max))
        .sum::<f64>()
        / curves.len() as f64;

    // AP: area under P(R), points sorted by recall, extended to R = 0.
    let mut pr: Vec<(f64, f64)> = agg.iter().map(|&(p, r, _)| (r, p)).collect();
    pr.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pr.dedup_by(|a, b| a.0 == b.0);
    let mut ap = 0.0;
    if let Some(&(r0, p0)) = pr.first() {
        ap += r0 * p0; // constant extension from recall 0
        for w in pr.windows(2) {
            let (r1, p1) = w[0];
            let (r2, p2) = w[1];
            ap += (r2 - r1) * (p1 + p2) / 2.0;
        }
    }
    Ok(EvalSummary {
        ods,
        ois,
        ap,
        per_image: curves,
    })
}

/// Standard depth error metrics over jointly valid pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub rel: f64,
    pub log10: f64,
    pub rmse_lin: f64,
    pub rmse_log: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    if pred.size() != gt.size() {
        return Err(Error::SizeMismatch {
            expected: gt.size(),
            got: pred.size(),
        });
    }
    let mut n = 0usize;
    let (mut rel, mut log10, mut se_lin, mut se_log) = (0.0, 0.0, 0.0, 0.0);
    let (mut s1, mut s2, mut s3) = (0usize, 0usize, 0usize);
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let (d_hat, d) = match (pred.get(x, y), gt.get(x, y)) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            };
            n += 1;
            rel += (d_hat - d).abs() / d;
            log10 += (d_hat.log10() - d.log10()).abs();
            se_lin += (d_hat - d) * (d_hat - d);
            let dl = d_hat.ln() - d.ln();
            se_log += dl * dl;
            let r = (d_hat / d).max(d / d_hat);
            if r < 1.25 {
                s1 += 1;
            }
            if r < 1.25f64.powi(2) {
                s2 += 1;
            }
            if r < 1.25f64.powi(3) {
                s3 += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        rel: rel / nf,
        log10: log10 / nf,
        rmse_lin: (se_lin / nf).sqrt(),
        rmse_log: (se_log / nf).sqrt(),
        sigma1: s1 as f64 / nf,
        sigma2: s2 as f64 / nf,
        sigma3: s3 as f64 / nf,
    })
}

/// Truncated mean-distance edge metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMetrics {
    /// Mean over predicted edge pixels of the truncated distance to the
    /// nearest ground-truth edge pixel.
    pub eps_acc: f64,
    /// Mean over ground-truth edge pixels of the truncated distance to the
    /// nearest predicted edge pixel.
    pub eps_comp: f64,
}

/// Exact Euclidean distance transform: distance from each pixel to the
/// nearest on-pixel of `edges` (infinite if the map is empty).
pub fn distance_transform(edges: &BoundaryMap) -> Grid<f64> {
    let (w, h) = edges.size();
    const INF: f64 = 1e20;

    // Felzenszwalb-Huttenlocher squared distance transform, columns then rows.
    fn dt_1d(f: &[f64], out: &mut Vec<f64>) {
        let n = f.len();
        out.clear();
        out.resize(n, 0.0);
        let mut v = vec![0usize; n];
        let mut z = vec![0.0f64; n + 1];
        let mut k = 0usize;
        v[0] = 0;
        z[0] = -INF;
        z[1] = INF;
        for q in 1..n {
            loop {
                let p = v[k];
                let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                    / (2.0 * q as f64 - 2.0 * p as f64);
                if s <= z[k] {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                } else {
                    k += 1;
                    v[k] = q;
                    z[k] = s;
                    z[k + 1] = INF;
                    break;
                }
            }
        }
        let mut k = 0usize;
        for q in 0..n {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let d = q as f64 - p as f64;
            out[q] = d * d + f[p];
        }
    }

    let mut sq = Grid::new(w, h, INF);
    for y in 0..h {
        for x in 0..w {
            if edges.get(x, y) > 0.0 {
                *sq.at_mut(x, y) = 0.0;
            }
        }
    }
    let mut buf_in = Vec::new();
    let mut buf_out = Vec::new();
    // columns
    for x in 0..w {
        buf_in.clear();
        for y in 0..h {
            buf_in.push(*sq.at(x, y));
        }
        dt_1d(&buf_in, &mut buf_out);
        for y in 0..h {
            *sq.at_mut(x, y) = buf_out[y];
        }
    }
    // rows
    for y in 0..h {
        buf_in.clear();
        for x in 0..w {
            buf_in.push(*sq.at(x, y));
        }
        dt_1d(&buf_in, &mut buf_out);
        for x in 0..w {
            *sq.at_mut(x, y) = buf_out[x].sqrt();
        }
    }
    sq
}

/// Mean truncated distances between predicted and ground-truth edge sets.
/// An empty prediction reports `eps_acc = trunc`; an empty ground truth is
/// an error.
pub fn edge_metrics(pred: &BoundaryMap, gt: &BoundaryMap, trunc: f64) -> Result<EdgeMetrics> {
    if pred.size() != gt.size() {
        return Err(Error::SizeMismatch {
            expected: gt.size(),
            got: pred.size(),
        });
    }
    if !(trunc > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation must be positive, got {trunc}"
        )));
    }
    let gt_px = gt.on_pixels();
    if gt_px.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let pred_px = pred.on_pixels();

    let dt_gt = distance_transform(gt);
    let eps_acc = if pred_px.is_empty() {
        trunc
    } else {
        pred_px
            .iter()
            .map(|&(x, y)| dt_gt.at(x, y).min(trunc))
            .sum::<f64>()
            / pred_px.len() as f64
    };
    let eps_comp = if pred_px.is_empty() {
        trunc
    } else {
        let dt_pred = distance_transform(pred);
        gt_px
            .iter()
            .map(|&(x, y)| dt_pred.at(x, y).min(trunc))
            .sum::<f64>()
            / gt_px.len() as f64
    };
    Ok(EdgeMetrics { eps_acc, eps_comp })
}

/// Render metric values as `name=value` lines, one per metric.
pub fn format_report(entries: &[(&str, f64)]) -> String {
    let mut s = String::new();
    for (name, value) in entries {
        s.push_str(&format!("{name}={value}\n"));
    }
    s
}

/// Render metric values as a right-aligned plain-text table.
pub fn format_table(entries: &[(&str, f64)]) -> String {
    let name_w = entries.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (name, value) in entries {
        s.push_str(&format!("{name:<name_w$}  {value:>12.6}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derive::OrientationMap;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn hard(px: &[(usize, usize)], w: usize, h: usize) -> BoundaryMap {
        let mut b = BoundaryMap::zeros(w, h, true);
        for &(x, y) in px {
            b.set(x, y, 1.0);
        }
        b
    }

    #[test]
    fn match_identity_and_empty() {
        let b = hard(&[(2, 2), (5, 5), (7, 1)], 10, 10);
        let m = match_boundaries(&b, &b, 2.0).unwrap();
        assert_eq!(m.matches.len(), 3);
        assert!(m.unmatched_pred.is_empty() && m.unmatched_gt.is_empty());
        assert!(m.matches.iter().all(|&(_, _, d)| d == 0.0));

        let empty = BoundaryMap::zeros(10, 10, true);
        let m = match_boundaries(&empty, &b, 2.0).unwrap();
        assert!(m.matches.is_empty());
        assert_eq!(m.unmatched_gt.len(), 3);
    }

    #[test]
    fn match_shifted_by_one() {
        let gt = hard(&[(2, 2), (4, 4), (6, 6)], 10, 10);
        let pred = hard(&[(3, 2), (5, 4), (7, 6)], 10, 10);
        let m = match_boundaries(&pred, &gt, 2.0).unwrap();
        assert_eq!(m.matches.len(), 3);
        assert!(m.matches.iter().all(|&(_, _, d)| (d - 1.0).abs() < 1e-12));

        // brute-force nearest-pair check on the same case
        for &((px, py), (gx, gy), d) in &m.matches {
            let dd =
                (((px as f64 - gx as f64).powi(2) + (py as f64 - gy as f64).powi(2)) as f64).sqrt();
            assert_eq!(d, dd);
        }
    }

    #[test]
    fn match_rejects_size_mismatch() {
        let a = BoundaryMap::zeros(4, 4, true);
        let b = BoundaryMap::zeros(5, 4, true);
        assert!(match_boundaries(&a, &b, 1.0).is_err());
    }

    fn orient_const(w: usize, h: usize, theta: f64) -> OrientationMap {
        let mut o = OrientationMap::undefined(w, h);
        for y in 0..h {
            for x in 0..w {
                o.set(x, y, theta);
            }
        }
        o
    }

    #[test]
    fn opr_perfect_prediction() {
        let gt = hard(&[(1, 1), (2, 2), (3, 3)], 8, 8);
        let o = orient_const(8, 8, 0.3);
        let mut pred = BoundaryMap::zeros(8, 8, false);
        for &(x, y) in &[(1usize, 1usize), (2, 2), (3, 3)] {
            pred.set(x, y, 0.9);
        }
        let curve = opr_curve(&pred, &o, &gt, &o, &[0.1, 0.5, 0.9], 2.0).unwrap();
        for pt in curve {
            assert_eq!((pt.precision, pt.recall), (1.0, 1.0));
            assert_eq!(pt.f_measure, 1.0);
        }
    }

    #[test]
    fn opr_flipped_orientation_zero_precision() {
        let gt = hard(&[(1, 1), (2, 2), (3, 3)], 8, 8);
        let o_gt = orient_const(8, 8, 0.3);
        let o_pred = orient_const(8, 8, 0.3 + PI);
        let mut pred = BoundaryMap::zeros(8, 8, false);
        for &(x, y) in &[(1usize, 1usize), (2, 2), (3, 3)] {
            pred.set(x, y, 0.9);
        }
        let curve = opr_curve(&pred, &o_pred, &gt, &o_gt, &[0.5], 2.0).unwrap();
        assert_eq!(curve[0].recall, 1.0);
        assert_eq!(curve[0].precision, 0.0);
    }

    #[test]
    fn opr_half_recall_checkerboard() {
        // 8x8 toy case: gt on column 3, prediction covers half of it.
        let gt_px: Vec<_> = (0..8).map(|y| (3usize, y)).collect();
        let gt = hard(&gt_px, 8, 8);
        let pred_px: Vec<_> = (0..8).step_by(2).map(|y| (3usize, y)).collect();
        let mut pred = BoundaryMap::zeros(8, 8, false);
        for &(x, y) in &pred_px {
            pred.set(x, y, 0.8);
        }
        let o = orient_const(8, 8, -FRAC_PI_2);
        let curve = opr_curve(&pred, &o, &gt, &o, &[0.5], 0.5).unwrap();
        assert_eq!(curve[0].recall, 0.5);
        assert_eq!(curve[0].precision, 1.0);
    }

    #[test]
    fn opr_undefined_orientation_is_incorrect() {
        let gt = hard(&[(2, 2)], 6, 6);
        let o_gt = orient_const(6, 6, 0.0);
        let o_pred = OrientationMap::undefined(6, 6);
        let mut pred = BoundaryMap::zeros(6, 6, false);
        pred.set(2, 2, 1.0);
        let curve = opr_curve(&pred, &o_pred, &gt, &o_gt, &[0.5], 1.0).unwrap();
        assert_eq!(curve[0].recall, 1.0);
        assert_eq!(curve[0].precision, 0.0);
    }

    #[test]
    fn summarize_perfect_and_empty() {
        let gt = hard(&[(1, 1), (4, 4)], 8, 8);
        let o = orient_const(8, 8, 0.1);
        let mut pred = BoundaryMap::zeros(8, 8, false);
        pred.set(1, 1, 0.9);
        pred.set(4, 4, 0.9);
        let curve = opr_curve(&pred, &o, &gt, &o, &default_thresholds(), 1.0).unwrap();
        let s = summarize(vec![curve]).unwrap();
        assert_eq!((s.ods, s.ois), (1.0, 1.0));
        assert!((s.ap - 1.0).abs() < 1e-12);

        let empty = BoundaryMap::zeros(8, 8, false);
        let curve = opr_curve(&empty, &o, &gt, &o, &default_thresholds(), 1.0).unwrap();
        let s = summarize(vec![curve]).unwrap();
        assert_eq!((s.ods, s.ois, s.ap), (0.0, 0.0, 0.0));

        assert!(summarize(vec![]).is_err());
    }

    #[test]
    fn summarize_ois_beats_ods_when_best_thresholds_differ() {
        // Image A: pixel at prob 0.3 correct, extra false pixel at prob 0.7.
        // Image B: only pixel at prob 0.7, correct. A prefers a low
        // threshold, B any; a shared threshold cannot be optimal for A's
        // precision and B simultaneously.
        let o = orient_const(8, 8, 0.0);
        let gt_a = hard(&[(1, 1)], 8, 8);
        let mut pred_a = BoundaryMap::zeros(8, 8, false);
        pred_a.set(1, 1, 0.3);
        pred_a.set(6, 6, 0.7);
        let gt_b = hard(&[(2, 2)], 8, 8);
        let mut pred_b = BoundaryMap::zeros(8, 8, false);
        pred_b.set(2, 2, 0.7);

        let thresholds = default_thresholds();
        let ca = opr_curve(&pred_a, &o, &gt_a, &o, &thresholds, 1.0).unwrap();
        let cb = opr_curve(&pred_b, &o, &gt_b, &o, &thresholds, 1.0).unwrap();

        // independent enumeration over the shared grid as the oracle
        let mut best_shared = 0.0f64;
        for ti in 0..thresholds.len() {
            let ok = ca[ti].matched_gt_orient_ok + cb[ti].matched_gt_orient_ok;
            let pred = ca[ti].pred_total + cb[ti].pred_total;
            let matched = ca[ti].matched_pred + cb[ti].matched_pred;
            let gt = ca[ti].gt_total + cb[ti].gt_total;
            let p = if pred == 0 { 0.0 } else { ok as f64 / pred as f64 };
            let r = if gt == 0 {
                0.0
            } else {
                matched as f64 / gt as f64
            };
            let f = if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            };
            best_shared = best_shared.max(f);
        }
        let s = summarize(vec![ca, cb]).unwrap();
        assert!((s.ods - best_shared).abs() < 1e-12);
        assert!(s.ois > s.ods);
    }

    #[test]
    fn depth_metrics_identity_and_scale() {
        let mut g = Grid::new(4, 4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for y in 0..4 {
            for x in 0..4 {
                *g.at_mut(x, y) = rng.gen_range(0.5..5.0);
            }
        }
        let gt = DepthMap::new(g);
        let m = depth_metrics(&gt, &gt).unwrap();
        assert_eq!(m.rel, 0.0);
        assert_eq!(m.rmse_lin, 0.0);
        assert_eq!((m.sigma1, m.sigma2, m.sigma3), (1.0, 1.0, 1.0));

        // pred = 1.25 * gt: sigma1 = 0 (strict <), sigma2 = sigma3 = 1
        let mut pg = Grid::new(4, 4, 0.0);
        for y in 0..4 {
            for x in 0..4 {
                *pg.at_mut(x, y) = gt.get(x, y).unwrap() * 1.25;
            }
        }
        let pred = DepthMap::new(pg);
        let m = depth_metrics(&pred, &gt).unwrap();
        assert_eq!(m.sigma1, 0.0);
        assert_eq!((m.sigma2, m.sigma3), (1.0, 1.0));
        assert!((m.rel - 0.25).abs() < 1e-12);
    }

    #[test]
    fn depth_metrics_match_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g1 = Grid::new(4, 4, 0.0);
        let mut g2 = Grid::new(4, 4, 0.0);
        for y in 0..4 {
            for x in 0..4 {
                *g1.at_mut(x, y) = rng.gen_range(0.5..5.0);
                *g2.at_mut(x, y) = rng.gen_range(0.5..5.0);
            }
        }
        let pred = DepthMap::new(g1);
        let gt = DepthMap::new(g2);
        let m = depth_metrics(&pred, &gt).unwrap();

        // direct spreadsheet-style recomputation
        let mut rel = 0.0;
        let mut se = 0.0;
        let mut s2 = 0;
        for y in 0..4 {
            for x in 0..4 {
                let a = pred.get(x, y).unwrap();
                let b = gt.get(x, y).unwrap();
                rel += (a - b).abs() / b;
                se += (a - b) * (a - b);
                if (a / b).max(b / a) < 1.5625 {
                    s2 += 1;
                }
            }
        }
        assert!((m.rel - rel / 16.0).abs() < 1e-12);
        assert!((m.rmse_lin - (se / 16.0).sqrt()).abs() < 1e-12);
        assert!((m.sigma2 - s2 as f64 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn depth_metrics_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut g1 = Grid::new(5, 5, 0.0);
        let mut g2 = Grid::new(5, 5, 0.0);
        for y in 0..5 {
            for x in 0..5 {
                *g1.at_mut(x, y) = rng.gen_range(0.5..5.0);
                *g2.at_mut(x, y) = rng.gen_range(0.5..5.0);
            }
        }
        let pred = DepthMap::new(g1.clone());
        let gt = DepthMap::new(g2.clone());
        let m = depth_metrics(&pred, &gt).unwrap();
        let s = 3.7;
        for v in g1.data_mut() {
            *v *= s;
        }
        for v in g2.data_mut() {
            *v *= s;
        }
        let ms = depth_metrics(&DepthMap::new(g1), &DepthMap::new(g2)).unwrap();
        assert!((m.rel - ms.rel).abs() < 1e-12);
        assert_eq!(
            (m.sigma1, m.sigma2, m.sigma3),
            (ms.sigma1, ms.sigma2, ms.sigma3)
        );
        assert!((ms.rmse_lin - s * m.rmse_lin).abs() < 1e-9);
    }

    #[test]
    fn depth_metrics_no_joint_pixels() {
        let mut a = DepthMap::invalid(2, 2);
        let mut b = DepthMap::invalid(2, 2);
        a.set(0, 0, 1.0);
        b.set(1, 1, 1.0);
        assert!(depth_metrics(&a, &b).is_err());
    }

    #[test]
    fn edge_metrics_identity_shift_and_symmetry() {
        let w = 32;
        let gt_px: Vec<_> = (5..27).map(|y| (12usize, y)).collect();
        let gt = hard(&gt_px, w, w);
        let m = edge_metrics(&gt, &gt, 10.0).unwrap();
        assert_eq!((m.eps_acc, m.eps_comp), (0.0, 0.0));

        let pred_px: Vec<_> = (5..27).map(|y| (15usize, y)).collect();
        let pred = hard(&pred_px, w, w);
        let m = edge_metrics(&pred, &gt, 10.0).unwrap();
        assert!((m.eps_acc - 3.0).abs() < 1e-12);
        assert!((m.eps_comp - 3.0).abs() < 1e-12);

        // symmetry: swapping roles swaps the two metrics
        let swapped = edge_metrics(&gt, &pred, 10.0).unwrap();
        assert_eq!(swapped.eps_acc, m.eps_comp);
        assert_eq!(swapped.eps_comp, m.eps_acc);
    }

    #[test]
    fn edge_metrics_full_prediction_matches_brute_force_dt() {
        let n = 16;
        let gt = hard(&[(4, 4), (10, 12), (7, 8)], n, n);
        let mut pred = BoundaryMap::zeros(n, n, true);
        for y in 0..n {
            for x in 0..n {
                pred.set(x, y, 1.0);
            }
        }
        let m = edge_metrics(&pred, &gt, 100.0).unwrap();
        assert_eq!(m.eps_comp, 0.0);

        // brute-force distance transform over all gt pixels
        let gt_px = gt.on_pixels();
        let mut sum = 0.0;
        for y in 0..n {
            for x in 0..n {
                let d = gt_px
                    .iter()
                    .map(|&(gx, gy)| {
                        ((x as f64 - gx as f64).powi(2) + (y as f64 - gy as f64).powi(2)).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                sum += d;
            }
        }
        assert!((m.eps_acc - sum / (n * n) as f64).abs() < 1e-9);
    }

    #[test]
    fn edge_metrics_empty_cases() {
        let gt = hard(&[(3, 3)], 8, 8);
        let empty = BoundaryMap::zeros(8, 8, true);
        let m = edge_metrics(&empty, &gt, 10.0).unwrap();
        assert_eq!(m.eps_acc, 10.0);
        assert!(edge_metrics(&gt, &empty, 10.0).is_err());
    }

    #[test]
    fn report_formats() {
        let r = format_report(&[("ods", 0.5), ("ap", 1.0)]);
        assert_eq!(r, "ods=0.5\nap=1\n");
        let t = format_table(&[("ods", 0.5)]);
        assert!(t.contains("ods") && t.contains("0.5"));
    }
}
