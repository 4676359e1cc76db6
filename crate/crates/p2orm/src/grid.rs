//! Dense row-major grids and the depth / normal map types built on them.
//!
//! Pixel coordinates are `(x, y)` with `x` growing right and `y` growing
//! down, matching the image convention used throughout the crate. Invalid
//! entries are encoded as NaN so that maps stay contiguous `f64` buffers.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Grid {
            width,
            height,
            data: vec![fill; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height);
        Grid {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &T {
        debug_assert!(x < self.width && y < self.height);
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, x: usize, y: usize) -> &mut T {
        debug_assert!(x < self.width && y < self.height);
        &mut self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Iterate `(x, y, &value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i % w, i / w, v))
    }
}

/// Per-pixel ray distance `d_p = ||X_p||` to the camera center, in meters.
/// NaN marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    grid: Grid<f64>,
}

impl DepthMap {
    /// Wrap a grid of ray distances. Non-finite or non-positive entries are
    /// normalized to NaN (invalid).
    pub fn new(mut grid: Grid<f64>) -> Self {
        for v in grid.data_mut() {
            if !v.is_finite() || *v <= 0.0 {
                *v = f64::NAN;
            }
        }
        DepthMap { grid }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        DepthMap {
            grid: Grid::new(width, height, f64::NAN),
        }
    }

    pub fn constant(width: usize, height: usize, d: f64) -> Self {
        assert!(d > 0.0);
        DepthMap {
            grid: Grid::new(width, height, d),
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

    /// Ray distance at `(x, y)`, or `None` if the pixel is invalid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = *self.grid.at(x, y);
        if v.is_finite() {
            Some(v)
        } else {
            None
        }
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.grid.at(x, y).is_finite()
    }

    /// Set the distance at `(x, y)`; non-finite or non-positive values mark
    /// the pixel invalid.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: f64) {
        *self.grid.at_mut(x, y) = if d.is_finite() && d > 0.0 { d } else { f64::NAN };
    }

    #[inline]
    pub fn set_invalid(&mut self, x: usize, y: usize) {
        *self.grid.at_mut(x, y) = f64::NAN;
    }

    pub fn valid_count(&self) -> usize {
        self.grid.data().iter().filter(|v| v.is_finite()).count()
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn same_size<T>(&self, other: &Grid<T>) -> Result<()> {
        if self.size() != other.size() {
            return Err(Error::SizeMismatch {
                expected: self.size(),
                got: other.size(),
            });
        }
        Ok(())
    }
}

/// Per-pixel unit surface normal in camera coordinates. NaN components mark
/// invalid pixels. Normals are canonicalized to face the camera
/// (`n · X < 0`) when constructed with [`NormalMap::new_oriented`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    grid: Grid<Vector3<f64>>,
}

impl NormalMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        NormalMap {
            grid: Grid::new(width, height, Vector3::repeat(f64::NAN)),
        }
    }

    /// Wrap a grid of normals, normalizing each to unit length and flipping
    /// any that point away from the camera (`n · X > 0`, with `X` the
    /// back-projected point of the same pixel). Zero-length entries become
    /// invalid.
    pub fn new_oriented(
        mut grid: Grid<Vector3<f64>>,
        depth: &DepthMap,
        intrinsics: &crate::geometry::CameraIntrinsics,
    ) -> Result<Self> {
        depth.same_size(&grid)?;
        let (w, h) = grid.size();
        for y in 0..h {
            for x in 0..w {
                let n = *grid.at(x, y);
                if !(n.x.is_finite() && n.y.is_finite() && n.z.is_finite()) {
                    *grid.at_mut(x, y) = Vector3::repeat(f64::NAN);
                    continue;
                }
                let norm = n.norm();
                if norm < 1e-12 {
                    *grid.at_mut(x, y) = Vector3::repeat(f64::NAN);
                    continue;
                }
                let mut n = n / norm;
                if let Some(d) = depth.get(x, y) {
                    let ray = crate::geometry::ray_through_pixel((x as f64, y as f64), intrinsics);
                    let point = ray.direction() * d;
                    if n.dot(&point) > 0.0 {
                        n = -n;
                    }
                    *grid.at_mut(x, y) = n;
                } else {
                    *grid.at_mut(x, y) = Vector3::repeat(f64::NAN);
                }
            }
        }
        Ok(NormalMap { grid })
    }

    /// Wrap a grid of unit normals as-is (no re-orientation). Used by the
    /// synthetic renderer where normals are exact and already camera-facing.
    pub fn from_grid(grid: Grid<Vector3<f64>>) -> Self {
        NormalMap { grid }
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
    pub fn get(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        let n = *self.grid.at(x, y);
        if n.x.is_finite() && n.y.is_finite() && n.z.is_finite() {
            Some(n)
        } else {
            None
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, n: Vector3<f64>) {
        *self.grid.at_mut(x, y) = n;
    }

    pub fn grid(&self) -> &Grid<Vector3<f64>> {
        &self.grid
    }
}
