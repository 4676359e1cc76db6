//! Training-side objectives: class-balanced cross-entropy over relation
//! maps, the berHu penalty, and the depth-refinement objective combining
//! an occlusion-consistency term with a berHu regularizer.

use crate::error::{Error, Result};
use crate::geometry::{ray_through_pixel, CameraIntrinsics};
use crate::grid::{DepthMap, NormalMap};
use crate::relation::{ProbRelationMap, RelationMap, DEFAULT_DELTA};

/// Numerical floor for probabilities inside logarithms.
const PROB_EPS: f64 = 1e-12;

/// Numerical floor for the depth rate inside the consistency log term.
const RATE_EPS: f64 = 1e-6;

/// Configuration for the class-balanced relation cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelLossConfig {
    /// Weight applied to occluding/occluded pairs; the no-relation class
    /// has weight 1.
    pub alpha: f64,
}

impl Default for RelLossConfig {
    fn default() -> Self {
        Self { alpha: 10.0 }
    }
}

/// Class-balanced cross-entropy between a predicted relation distribution
/// map and hard ground-truth labels, averaged per inclination over present
/// pairs, then summed over inclinations.
pub fn class_balanced_ce(
    pred: &ProbRelationMap,
    gt: &RelationMap,
    cfg: RelLossConfig,
) -> Result<f64> {
    if pred.size() != gt.size() {
        return Err(Error::SizeMismatch {
            expected: gt.size(),
            got: pred.size(),
        });
    }
    if pred.connectivity() != gt.connectivity() {
        return Err(Error::InvalidArgument(
            "connectivity mismatch between prediction and labels".into(),
        ));
    }
    if !(cfg.alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {}",
            cfg.alpha
        )));
    }
    let (w, h) = gt.size();
    let mut total = 0.0;
    for &incl in gt.connectivity().inclinations() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y in 0..h {
            for x in 0..w {
                let label = match gt.label(incl, x, y) {
                    Some(r) => r,
                    None => continue,
                };
                let dist = pred.get(incl, x, y).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "prediction absent at ({x},{y}) where labels are present"
                    ))
                })?;
                let p = dist[(label + 1) as usize].max(PROB_EPS);
                let weight = if label == 0 { 1.0 } else { cfg.alpha };
                sum -= weight * p.ln();
                count += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
        }
    }
    Ok(total)
}

/// The reverse Huber penalty: linear up to `c`, quadratic beyond, with
/// matched value and slope at the switch.
pub fn berhu(residual: f64, c: f64) -> f64 {
    let r = residual.abs();
    if r <= c {
        r
    } else {
        (r * r + c * c) / (2.0 * c)
    }
}

fn berhu_grad(residual: f64, c: f64) -> f64 {
    let r = residual.abs();
    let g = if r <= c { 1.0 } else { r / c };
    if residual < 0.0 {
        -g
    } else {
        g
    }
}

/// How the berHu switch point is chosen for a loss term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BerhuPolicy {
    /// Use a fixed switch point.
    Fixed(f64),
    /// Set the switch to one fifth of the largest absolute residual of the
    /// term (floored at 1e-6).
    MaxResidual,
}

impl BerhuPolicy {
    fn resolve(&self, residuals: impl Iterator<Item = f64>) -> f64 {
        match *self {
            BerhuPolicy::Fixed(c) => c.max(1e-6),
            BerhuPolicy::MaxResidual => {
                let m = residuals.map(f64::abs).fold(0.0, f64::max);
                (0.2 * m).max(1e-6)
            }
        }
    }
}

/// Configuration for the refinement objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineLossConfig {
    /// Occlusion margin, in metres per pixel of pair distance.
    pub delta: f64,
    /// Weight of the regularization term.
    pub lambda: f64,
    /// Switch-point policy shared by both berHu terms.
    pub berhu_c: BerhuPolicy,
}

impl Default for RefineLossConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            lambda: 1.0,
            berhu_c: BerhuPolicy::MaxResidual,
        }
    }
}

/// Per-pixel coefficients `a_p` such that the mid-plane intersection
/// distance is linear in depth: `|Pi_p /\ L_m| = d_p * a_p`, where `L_m`
/// is the ray through the pair midpoint. Returns `None` when a ray is
/// parallel to the tangent plane or the intersection lies behind the
/// camera.
fn midplane_coeff(
    p: (usize, usize),
    m: (f64, f64),
    normals: &NormalMap,
    k: &CameraIntrinsics,
) -> Option<f64> {
    let n = normals.get(p.0, p.1)?;
    let r_p = ray_through_pixel((p.0 as f64, p.1 as f64), k).direction();
    let r_m = ray_through_pixel(m, k).direction();
    let num = n.dot(&r_p);
    let den = n.dot(&r_m);
    if den.abs() < crate::geometry::PARALLEL_EPS {
        return None;
    }
    let a = num / den;
    if a <= 0.0 {
        return None;
    }
    Some(a)
}

/// The mid-plane depth rate `m_pq` of a pixel pair: the signed gap, per
/// pixel of pair distance, between the two tangent planes evaluated on the
/// ray through the pair midpoint. `None` when either intersection is
/// undefined.
pub fn midplane_rate(
    p: (usize, usize),
    q: (usize, usize),
    depth: &DepthMap,
    normals: &NormalMap,
    k: &CameraIntrinsics,
) -> Option<f64> {
    let d_p = depth.get(p.0, p.1)?;
    let d_q = depth.get(q.0, q.1)?;
    let m = (
        (p.0 as f64 + q.0 as f64) / 2.0,
        (p.1 as f64 + q.1 as f64) / 2.0,
    );
    let a_p = midplane_coeff(p, m, normals, k)?;
    let a_q = midplane_coeff(q, m, normals, k)?;
    let step = (((q.0 as f64 - p.0 as f64).powi(2) + (q.1 as f64 - p.1 as f64).powi(2)) as f64)
        .sqrt();
    Some((d_q * a_q - d_p * a_p) / step)
}

/// One ordered pair taking part in the consistency term, with everything
/// that is constant during refinement precomputed.
#[derive(Debug, Clone, Copy)]
struct ConsistencyPair {
    /// Flat indices of p and q.
    ip: usize,
    iq: usize,
    /// Pair label: +1 (p occludes q) or 0. Pairs labelled -1 are stored
    /// with the roles of p and q swapped so the label is always in
    /// {0, +1} here.
    occluding: bool,
    /// Pixel-centre distance.
    step: f64,
    /// Mid-plane coefficients, if defined for this pair.
    a_p: Option<f64>,
    a_q: Option<f64>,
}

/// Occlusion-consistency loss value with its decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyBreakdown {
    pub total: f64,
    /// Contribution of pairs labelled occluding.
    pub occluding_term: f64,
    /// Contribution of pairs labelled no-relation.
    pub no_relation_term: f64,
    /// Normalizer: pixels contributing at least one nonzero pair term.
    pub active_pixels: usize,
    /// Occluding pairs currently violating the margin.
    pub violated_occluding: usize,
    /// No-relation pairs currently exceeding the margin.
    pub violated_no_relation: usize,
}

/// The occlusion-consistency objective over a depth map, together with its
/// gradient with respect to per-pixel log-depth when requested.
pub(crate) struct ConsistencyTerm {
    pairs: Vec<ConsistencyPair>,
    width: usize,
    height: usize,
    delta: f64,
}

impl ConsistencyTerm {
    pub(crate) fn new(
        labels: &RelationMap,
        depth: &DepthMap,
        normals: &NormalMap,
        k: &CameraIntrinsics,
        delta: f64,
    ) -> Result<Self> {
        let (w, h) = labels.size();
        if depth.size() != (w, h) {
            return Err(Error::SizeMismatch {
                expected: (w, h),
                got: depth.size(),
            });
        }
        if normals.size() != (w, h) {
            return Err(Error::SizeMismatch {
                expected: (w, h),
                got: normals.size(),
            });
        }
        let mut pairs = Vec::new();
        for y in 0..h {
            for x in 0..w {
                for &incl in labels.connectivity().inclinations() {
                    let label = match labels.label(incl, x, y) {
                        Some(r) => r,
                        None => continue,
                    };
                    let (dx, dy) = incl.displacement();
                    let q = ((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                    // orientation: keep (p, q) for labels 0/+1, swap for -1
                    let (p, q, occluding) = match label {
                        1 => ((x, y), q, true),
                        0 => ((x, y), q, false),
                        _ => (q, (x, y), true),
                    };
                    if depth.get(p.0, p.1).is_none() || depth.get(q.0, q.1).is_none() {
                        continue;
                    }
                    let m = (
                        (p.0 as f64 + q.0 as f64) / 2.0,
                        (p.1 as f64 + q.1 as f64) / 2.0,
                    );
                    pairs.push(ConsistencyPair {
                        ip: p.1 * w + p.0,
                        iq: q.1 * w + q.0,
                        occluding,
                        step: incl.step_len(),
                        a_p: midplane_coeff(p, m, normals, k),
                        a_q: midplane_coeff(q, m, normals, k),
                    });
                }
            }
        }
        Ok(Self {
            pairs,
            width: w,
            height: h,
            delta,
        })
    }

    /// Depth rate and mid-plane rate for one pair given current depths.
    fn rates(&self, pair: &ConsistencyPair, depth: &[f64]) -> (f64, f64) {
        let d_p = depth[pair.ip];
        let d_q = depth[pair.iq];
        let d_rate = (d_q - d_p) / pair.step;
        let m_rate = match (pair.a_p, pair.a_q) {
            (Some(ap), Some(aq)) => (d_q * aq - d_p * ap) / pair.step,
            _ => d_rate,
        };
        (d_rate, m_rate)
    }

    /// Loss over flat ray-distance values, with an optional gradient with
    /// respect to log-depth accumulated into `grad`.
    pub(crate) fn eval(
        &self,
        depth: &[f64],
        mut grad: Option<&mut [f64]>,
    ) -> ConsistencyBreakdown {
        let mut occ_sum = 0.0;
        let mut no_sum = 0.0;
        let mut viol_occ = 0usize;
        let mut viol_no = 0usize;
        let mut touched = vec![false; self.width * self.height];
        for pair in &self.pairs {
            let (d_rate, m_rate) = self.rates(pair, depth);
            let d_p = depth[pair.ip];
            let d_q = depth[pair.iq];
            if pair.occluding {
                // penalize weak separation: -log(d_rate / delta) when the
                // pair fails the margin
                if d_rate < self.delta {
                    viol_occ += 1;
                    let clamped = d_rate.max(RATE_EPS);
                    occ_sum += -(clamped / self.delta).ln();
                    touched[pair.ip] = true;
                    touched[pair.iq] = true;
                    if let Some(g) = grad.as_deref_mut() {
                        if d_rate > RATE_EPS {
                            // d/du_p of -ln((d_q - d_p)/(step*delta))
                            let inv = 1.0 / (d_q - d_p);
                            g[pair.ip] += d_p * inv;
                            g[pair.iq] -= d_q * inv;
                        }
                    }
                }
            } else {
                // a no-relation pair is violated when a full occlusion case
                // holds in one of the two directions, i.e. when *both* rates
                // clear the margin with a common sign; the lesser-magnitude
                // rate of that direction carries the hinge
                let (lo, hi) = (d_rate.min(m_rate), d_rate.max(m_rate));
                let rate = if lo >= self.delta {
                    Some(lo)
                } else if hi <= -self.delta {
                    Some(hi)
                } else {
                    None
                };
                if let Some(rate) = rate {
                    viol_no += 1;
                    no_sum += rate.abs() - self.delta;
                    touched[pair.ip] = true;
                    touched[pair.iq] = true;
                    if let Some(g) = grad.as_deref_mut() {
                        let sign = rate.signum();
                        if rate == d_rate || pair.a_p.is_none() || pair.a_q.is_none() {
                            g[pair.ip] += -sign * d_p / pair.step;
                            g[pair.iq] += sign * d_q / pair.step;
                        } else {
                            let (ap, aq) = (pair.a_p.unwrap(), pair.a_q.unwrap());
                            g[pair.ip] += -sign * ap * d_p / pair.step;
                            g[pair.iq] += sign * aq * d_q / pair.step;
                        }
                    }
                }
            }
        }
        let active = touched.iter().filter(|&&t| t).count();
        let norm = active.max(1) as f64;
        if let Some(g) = grad {
            for v in g.iter_mut() {
                *v /= norm;
            }
        }
        ConsistencyBreakdown {
            total: (occ_sum + no_sum) / norm,
            occluding_term: occ_sum / norm,
            no_relation_term: no_sum / norm,
            active_pixels: active,
            violated_occluding: viol_occ,
            violated_no_relation: viol_no,
        }
    }
}

/// Occlusion-consistency loss of a depth map against relation labels.
pub fn occlusion_consistency_loss(
    labels: &RelationMap,
    depth: &DepthMap,
    normals: &NormalMap,
    k: &CameraIntrinsics,
    delta: f64,
) -> Result<ConsistencyBreakdown> {
    let term = ConsistencyTerm::new(labels, depth, normals, k, delta)?;
    let flat: Vec<f64> = depth.grid().data().to_vec();
    Ok(term.eval(&flat, None))
}

/// berHu penalty between a depth map and its anchor in log-depth, averaged
/// over jointly valid pixels.
pub fn regularization_loss(
    depth: &DepthMap,
    anchor: &DepthMap,
    policy: BerhuPolicy,
) -> Result<f64> {
    if depth.size() != anchor.size() {
        return Err(Error::SizeMismatch {
            expected: anchor.size(),
            got: depth.size(),
        });
    }
    let mut residuals = Vec::new();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if let (Some(d), Some(a)) = (depth.get(x, y), anchor.get(x, y)) {
                residuals.push(d.ln() - a.ln());
            }
        }
    }
    if residuals.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let c = policy.resolve(residuals.iter().copied());
    Ok(residuals.iter().map(|&r| berhu(r, c)).sum::<f64>() / residuals.len() as f64)
}

pub(crate) fn regularization_eval(
    u: &[f64],
    u_anchor: &[f64],
    valid: &[bool],
    policy: BerhuPolicy,
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = valid.iter().filter(|&&v| v).count().max(1) as f64;
    let c = policy.resolve(
        u.iter()
            .zip(u_anchor)
            .zip(valid)
            .filter(|&(_, &v)| v)
            .map(|((&a, &b), _)| a - b),
    );
    let mut sum = 0.0;
    if let Some(g) = grad {
        for i in 0..u.len() {
            if !valid[i] {
                continue;
            }
            let r = u[i] - u_anchor[i];
            sum += berhu(r, c);
            g[i] += berhu_grad(r, c) / n;
        }
    } else {
        for i in 0..u.len() {
            if valid[i] {
                sum += berhu(u[i] - u_anchor[i], c);
            }
        }
    }
    sum / n
}

/// Value of the full refinement objective: consistency plus weighted
/// regularization against `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineLossValue {
    pub total: f64,
    pub consistency: ConsistencyBreakdown,
    pub regularization: f64,
}

/// Value and gradient of the refinement objective with respect to per-pixel
/// log-depth. The gradient is zero at pixels that are invalid in either
/// `depth` or `anchor`. The berHu switch point is treated as a constant when
/// differentiating, matching the descent in [`crate::refine::refine_depth`].
pub fn refine_loss_grad(
    labels: &RelationMap,
    depth: &DepthMap,
    anchor: &DepthMap,
    normals: &NormalMap,
    k: &CameraIntrinsics,
    cfg: RefineLossConfig,
) -> Result<(f64, crate::grid::Grid<f64>)> {
    if depth.size() != anchor.size() {
        return Err(Error::SizeMismatch {
            expected: anchor.size(),
            got: depth.size(),
        });
    }
    let (w, h) = depth.size();
    let term = ConsistencyTerm::new(labels, depth, normals, k, cfg.delta)?;
    let n = w * h;
    let mut valid = vec![false; n];
    let mut u = vec![0.0; n];
    let mut u_anchor = vec![0.0; n];
    let mut d = vec![f64::NAN; n];
    for y in 0..h {
        for x in 0..w {
            if let (Some(dv), Some(av)) = (depth.get(x, y), anchor.get(x, y)) {
                let i = y * w + x;
                valid[i] = true;
                u[i] = dv.ln();
                u_anchor[i] = av.ln();
                d[i] = dv;
            }
        }
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::NoValidPixels);
    }
    let mut grad = vec![0.0; n];
    let breakdown = term.eval(&d, Some(&mut grad));
    let mut reg_grad = vec![0.0; n];
    let reg = regularization_eval(&u, &u_anchor, &valid, cfg.berhu_c, Some(&mut reg_grad));
    for i in 0..n {
        grad[i] += cfg.lambda * reg_grad[i];
        if !valid[i] {
            grad[i] = 0.0;
        }
    }
    let total = breakdown.total + cfg.lambda * reg;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            pixels: depth.valid_count(),
        });
    }
    Ok((total, crate::grid::Grid::from_vec(w, h, grad)))
}

pub fn refine_loss(
    labels: &RelationMap,
    depth: &DepthMap,
    anchor: &DepthMap,
    normals: &NormalMap,
    k: &CameraIntrinsics,
    cfg: RefineLossConfig,
) -> Result<RefineLossValue> {
    let consistency = occlusion_consistency_loss(labels, depth, normals, k, cfg.delta)?;
    let regularization = regularization_loss(depth, anchor, cfg.berhu_c)?;
    let total = consistency.total + cfg.lambda * regularization;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            pixels: depth.valid_count(),
        });
    }
    Ok(RefineLossValue {
        total,
        consistency,
        regularization,
    })
}
