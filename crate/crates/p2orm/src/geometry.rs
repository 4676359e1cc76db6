//! Pinhole camera model, back-projection and ray–plane intersection.
//!
//! The camera center is the coordinate origin; camera axes follow the image
//! convention (x right, y down, z forward). All computation is in `f64`.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::grid::DepthMap;

/// Dot-product threshold under which a ray is considered parallel to a plane.
pub const PARALLEL_EPS: f64 = 1e-8;

/// Pinhole intrinsics, no distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width < 2 || height < 2 {
            return Err(Error::InvalidArgument(format!(
                "image size must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Camera with the given size and horizontal field of view, principal
    /// point at the image center, square pixels.
    pub fn with_hfov(width: usize, height: usize, hfov_deg: f64) -> Self {
        let fx = width as f64 / (2.0 * (hfov_deg.to_radians() / 2.0).tan());
        CameraIntrinsics {
            fx,
            fy: fx,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
        }
    }

    /// 640x480 camera with a 60 degree horizontal field of view, the scale
    /// the synthetic scenes are built for.
    pub fn default_vga() -> Self {
        Self::with_hfov(640, 480, 60.0)
    }
}

/// Unit direction from the camera center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    direction: Vector3<f64>,
}

impl Ray {
    /// Normalizes `direction`; panics on a zero vector.
    pub fn new(direction: Vector3<f64>) -> Self {
        let norm = direction.norm();
        assert!(norm > 0.0, "ray direction must be nonzero");
        Ray {
            direction: direction / norm,
        }
    }

    #[inline]
    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }

    #[inline]
    pub fn point_at(&self, t: f64) -> Vector3<f64> {
        self.direction * t
    }
}

/// First-order local surface approximation: a plane through `point` with
/// unit `normal` oriented toward the camera (`n · X < 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentPlane {
    point: Vector3<f64>,
    normal: Vector3<f64>,
}

impl TangentPlane {
    /// Normalizes the normal and flips it toward the camera if needed.
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>) -> Self {
        let mut n = normal.normalize();
        if n.dot(&point) > 0.0 {
            n = -n;
        }
        TangentPlane { point, normal: n }
    }

    #[inline]
    pub fn point(&self) -> Vector3<f64> {
        self.point
    }

    #[inline]
    pub fn normal(&self) -> Vector3<f64> {
        self.normal
    }
}

/// Why a ray–plane intersection distance is unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoIntersection {
    /// `|n · dir| < PARALLEL_EPS`.
    Parallel,
    /// Intersection exists but lies behind the camera (`t <= 0`).
    BehindCamera,
}

/// Ray from the camera center through pixel `p = (x, y)`. Sub-pixel
/// coordinates are allowed (mid-pixel rays need them).
pub fn ray_through_pixel(p: (f64, f64), k: &CameraIntrinsics) -> Ray {
    Ray::new(Vector3::new(
        (p.0 - k.cx) / k.fx,
        (p.1 - k.cy) / k.fy,
        1.0,
    ))
}

/// Convert a plane-depth map (z coordinate) to ray distances
/// `d_p = z_p * ||((x-cx)/fx, (y-cy)/fy, 1)||`. Returns the converted map
/// and the count of valid pixels with non-positive z that were invalidated.
pub fn zdepth_to_raydist(z: &DepthMap, k: &CameraIntrinsics) -> (DepthMap, usize) {
    let (w, h) = z.size();
    let mut out = DepthMap::invalid(w, h);
    let mut nonpositive = 0usize;
    for y in 0..h {
        for x in 0..w {
            // DepthMap already normalizes z <= 0 to invalid at construction;
            // the counter covers maps mutated through raw grids.
            match z.get(x, y) {
                Some(zv) if zv > 0.0 => {
                    let dx = (x as f64 - k.cx) / k.fx;
                    let dy = (y as f64 - k.cy) / k.fy;
                    out.set(x, y, zv * (dx * dx + dy * dy + 1.0).sqrt());
                }
                Some(_) => nonpositive += 1,
                None => {}
            }
        }
    }
    (out, nonpositive)
}

/// Back-project pixel `p` at ray distance `d` to a 3D point; `||X|| = d`.
pub fn backproject(p: (f64, f64), d: f64, k: &CameraIntrinsics) -> Result<Vector3<f64>> {
    if !(d > 0.0) {
        return Err(Error::InvalidDepth(d));
    }
    Ok(ray_through_pixel(p, k).point_at(d))
}

/// Distance `t` from the camera center to `plane` along `ray`:
/// `t = (n · X_plane) / (n · dir)`, defined when the intersection is in
/// front of the camera.
pub fn ray_plane_distance(
    ray: &Ray,
    plane: &TangentPlane,
) -> std::result::Result<f64, NoIntersection> {
    let denom = plane.normal().dot(&ray.direction());
    if denom.abs() < PARALLEL_EPS {
        return Err(NoIntersection::Parallel);
    }
    let t = plane.normal().dot(&plane.point()) / denom;
    if t <= 0.0 {
        return Err(NoIntersection::BehindCamera);
    }
    Ok(t)
}
