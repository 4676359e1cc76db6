//! Occlusion boundaries and orientations derived from relation maps, with
//! NMS thinning and thresholding.

use crate::grid::Grid;
use crate::relation::{ProbRelationMap, RelationMap};

/// Per-pixel occlusion-boundary probability in [0, 1]. Hard maps contain
/// only {0, 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    grid: Grid<f64>,
    hard: bool,
}

impl BoundaryMap {
    pub fn zeros(width: usize, height: usize, hard: bool) -> Self {
        BoundaryMap {
            grid: Grid::new(width, height, 0.0),
            hard,
        }
    }

    pub fn from_grid(grid: Grid<f64>, hard: bool) -> Self {
        for (_, _, &v) in grid.iter() {
            debug_assert!((0.0..=1.0).contains(&v));
            if hard {
                debug_assert!(v == 0.0 || v == 1.0);
            }
        }
        BoundaryMap { grid, hard }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn size(&self) -> (usize, usize) {
        self.grid.size()
    }

    pub fn is_hard(&self) -> bool {
        self.hard
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        *self.grid.at(x, y)
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        assert!((0.0..=1.0).contains(&v));
        *self.grid.at_mut(x, y) = v;
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    /// Pixel coordinates with value > 0 (for hard maps: the edge set).
    pub fn on_pixels(&self) -> Vec<(usize, usize)> {
        self.grid
            .iter()
            .filter(|(_, _, &v)| v > 0.0)
            .map(|(x, y, _)| (x, y))
            .collect()
    }
}

/// Per-pixel occlusion orientation angle in (-pi, pi], NaN where the
/// accumulated direction is zero or no pair is present.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationMap {
    grid: Grid<f64>,
}

impl OrientationMap {
    pub fn undefined(width: usize, height: usize) -> Self {
        OrientationMap {
            grid: Grid::new(width, height, f64::NAN),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn size(&self) -> (usize, usize) {
        self.grid.size()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = *self.grid.at(x, y);
        if v.is_finite() {
            Some(v)
        } else {
            None
        }
    }

    pub fn set(&mut self, x: usize, y: usize, theta: f64) {
        *self.grid.at_mut(x, y) = theta;
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut Grid<f64> {
        &mut self.grid
    }
}

/// Hard boundary: a pixel is on the boundary iff it participates in at
/// least one nonzero pair (2-pixel-wide bands by construction).
pub fn boundary_from_relation(rel: &RelationMap) -> BoundaryMap {
    let (w, h) = rel.size();
    let mut out = BoundaryMap::zeros(w, h, true);
    for y in 0..h {
        for x in 0..w {
            let on = rel.neighbors_of(x, y).iter().any(|&(_, l)| l != 0);
            if on {
                out.set(x, y, 1.0);
            }
        }
    }
    out
}

/// Probabilistic boundary: average over present neighbor pairs of the
/// nonzero-class probability mass. Pixels with no present pair get 0.
pub fn boundary_from_prob_relation(rel: &ProbRelationMap) -> BoundaryMap {
    let (w, h) = rel.size();
    let mut out = BoundaryMap::zeros(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let p = (x as i64, y as i64);
            let mut sum = 0.0;
            let mut count = 0usize;
            for &incl in rel.inclinations() {
                let (ix, iy) = incl.displacement();
                for q in [(p.0 + ix, p.1 + iy), (p.0 - ix, p.1 - iy)] {
                    if let Some(dist) = rel.pair_dist(p, q) {
                        sum += dist[0] + dist[2];
                        count += 1;
                    }
                }
            }
            if count > 0 {
                out.set(x, y, (sum / count as f64).clamp(0.0, 1.0));
            }
        }
    }
    out
}

fn theta_from_v(vx: f64, vy: f64) -> Option<f64> {
    let norm = (vx * vx + vy * vy).sqrt();
    if norm < 1e-12 {
        return None;
    }
    let mut theta = (vy / norm).atan2(vx / norm) - std::f64::consts::FRAC_PI_2;
    // wrap to (-pi, pi]
    while theta <= -std::f64::consts::PI {
        theta += 2.0 * std::f64::consts::PI;
    }
    while theta > std::f64::consts::PI {
        theta -= 2.0 * std::f64::consts::PI;
    }
    Some(theta)
}

/// Orientation from a hard relation: `v_p` sums the unit directions to
/// neighbors weighted by the label seen from `p`;
/// `theta_p = atan2(u_y, u_x) - pi/2`, image axes (x right, y down).
pub fn orientation_from_relation(rel: &RelationMap) -> OrientationMap {
    let (w, h) = rel.size();
    let mut out = OrientationMap::undefined(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut vx = 0.0;
            let mut vy = 0.0;
            for (q, l) in rel.neighbors_of(x, y) {
                if l == 0 {
                    continue;
                }
                let dx = (q.0 - x as i64) as f64;
                let dy = (q.1 - y as i64) as f64;
                let n = (dx * dx + dy * dy).sqrt();
                vx += l as f64 * dx / n;
                vy += l as f64 * dy / n;
            }
            if let Some(theta) = theta_from_v(vx, vy) {
                out.set(x, y, theta);
            }
        }
    }
    out
}

/// How probabilistic relations are collapsed into the orientation sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbOrientationMode {
    /// Weight each pair by its argmax label.
    #[default]
    Argmax,
    /// Weight each pair by the expected label `pi_+1 - pi_-1`.
    Expected,
}

/// Orientation from a probabilistic relation.
pub fn orientation_from_prob_relation(
    rel: &ProbRelationMap,
    mode: ProbOrientationMode,
) -> OrientationMap {
    let (w, h) = rel.size();
    let mut out = OrientationMap::undefined(w, h);
    for y in 0..h {
        for x in 0..w {
            let p = (x as i64, y as i64);
            let mut vx = 0.0;
            let mut vy = 0.0;
            for &incl in rel.inclinations() {
                let (ix, iy) = incl.displacement();
                for q in [(p.0 + ix, p.1 + iy), (p.0 - ix, p.1 - iy)] {
                    if let Some(dist) = rel.pair_dist(p, q) {
                        let weight = match mode {
                            ProbOrientationMode::Argmax => {
                                let mut best = 0usize;
                                for r in 1..3 {
                                    if dist[r] > dist[best] {
                                        best = r;
                                    }
                                }
                                best as f64 - 1.0
                            }
                            ProbOrientationMode::Expected => dist[2] - dist[0],
                        };
                        if weight == 0.0 {
                            continue;
                        }
                        let dx = (q.0 - p.0) as f64;
                        let dy = (q.1 - p.1) as f64;
                        let n = (dx * dx + dy * dy).sqrt();
                        vx += weight * dx / n;
                        vy += weight * dy / n;
                    }
                }
            }
            if let Some(theta) = theta_from_v(vx, vy) {
                out.set(x, y, theta);
            }
        }
    }
    out
}

/// Gaussian smoothing sigma used to estimate local edge direction in NMS.
const NMS_SIGMA: f64 = 2.0;

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn convolve_separable(src: &Grid<f64>, kernel: &[f64]) -> Grid<f64> {
    let (w, h) = src.size();
    let radius = (kernel.len() / 2) as i64;
    let mut tmp = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += kv * src.at(sx, y);
            }
            *tmp.at_mut(x, y) = acc;
        }
    }
    let mut out = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp.at(x, sy);
            }
            *out.at_mut(x, y) = acc;
        }
    }
    out
}

fn bilinear_or_zero(g: &Grid<f64>, x: f64, y: f64) -> f64 {
    let (w, h) = g.size();
    if x < -0.999 || y < -0.999 || x > w as f64 - 0.001 || y > h as f64 - 0.001 {
        return 0.0;
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let sample = |ix: i64, iy: i64| -> f64 {
        if ix < 0 || iy < 0 || ix >= w as i64 || iy >= h as i64 {
            0.0
        } else {
            *g.at(ix as usize, iy as usize)
        }
    };
    let (x0, y0) = (x0 as i64, y0 as i64);
    sample(x0, y0) * (1.0 - fx) * (1.0 - fy)
        + sample(x0 + 1, y0) * fx * (1.0 - fy)
        + sample(x0, y0 + 1) * (1.0 - fx) * fy
        + sample(x0 + 1, y0 + 1) * fx * fy
}

/// Non-maximum suppression: local edge direction comes from the
/// Gaussian-smoothed structure tensor of the probability map; a pixel
/// survives (unchanged) iff it is maximal against the two bilinear samples
/// one pixel away along the across-edge direction. Never increases values
/// and never creates nonzero pixels.
pub fn nms_thin(b: &BoundaryMap) -> BoundaryMap {
    let (w, h) = b.size();
    let src = b.grid();

    // central-difference gradients
    let mut gx = Grid::new(w, h, 0.0);
    let mut gy = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            *gx.at_mut(x, y) = (src.at(xp, y) - src.at(xm, y)) / 2.0;
            *gy.at_mut(x, y) = (src.at(x, yp) - src.at(x, ym)) / 2.0;
        }
    }
    let mut jxx = Grid::new(w, h, 0.0);
    let mut jxy = Grid::new(w, h, 0.0);
    let mut jyy = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (*gx.at(x, y), *gy.at(x, y));
            *jxx.at_mut(x, y) = a * a;
            *jxy.at_mut(x, y) = a * b;
            *jyy.at_mut(x, y) = b * b;
        }
    }
    let kernel = gaussian_kernel(NMS_SIGMA);
    let jxx = convolve_separable(&jxx, &kernel);
    let jxy = convolve_separable(&jxy, &kernel);
    let jyy = convolve_separable(&jyy, &kernel);

    let mut out = Grid::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let v = *src.at(x, y);
            if v == 0.0 {
                continue;
            }
            let (a, bb, c) = (*jxx.at(x, y), *jxy.at(x, y), *jyy.at(x, y));
            if a + c < 1e-12 {
                // flat neighborhood: nothing to suppress against
                *out.at_mut(x, y) = v;
                continue;
            }
            // dominant eigenvector of [[a, b], [b, c]] = across-edge direction
            let phi = 0.5 * (2.0 * bb).atan2(a - c);
            let (ux, uy) = (phi.cos(), phi.sin());
            let s1 = bilinear_or_zero(src, x as f64 + ux, y as f64 + uy);
            let s2 = bilinear_or_zero(src, x as f64 - ux, y as f64 - uy);
            if v >= s1 && v >= s2 {
                *out.at_mut(x, y) = v;
            }
        }
    }
    BoundaryMap::from_grid(out, b.is_hard())
}

/// Hard-threshold a boundary map: 1 iff the value is >= `t` (inclusive).
pub fn threshold_boundary(b: &BoundaryMap, t: f64) -> BoundaryMap {
    assert!((0.0..=1.0).contains(&t));
    let (w, h) = b.size();
    let mut out = BoundaryMap::zeros(w, h, true);
    for y in 0..h {
        for x in 0..w {
            if b.get(x, y) >= t {
                out.set(x, y, 1.0);
            }
        }
    }
    out
}
