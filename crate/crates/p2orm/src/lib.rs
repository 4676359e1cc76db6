//! Pixel-pair occlusion relationships for geometric scene understanding.
//!
//! The crate models occlusion as a property of neighboring pixel *pairs*
//! rather than single pixels: each pair is occluding, occluded, or neutral.
//! From a depth map (and optionally surface normals) it can
//!
//! - compute these relation maps at order 0 (depth-difference test) or
//!   order 1 (mutual tangent-plane test), see [`relation`];
//! - derive classical oriented occlusion boundaries from them, with
//!   non-maximum suppression, see [`derive`];
//! - score predictions against ground truth (boundary precision/recall
//!   with orientation, depth error metrics, edge distances), see
//!   [`metrics`];
//! - refine a noisy depth map so that it agrees with given relation
//!   labels, by descending an occlusion-consistency objective in
//!   log-depth, see [`refine`] and [`losses`];
//! - build exact synthetic ground truth from analytic scenes, see
//!   [`synth`]; and read/write the involved file formats, see [`io`].
//!
//! Depth is always the distance along the camera ray (not the z
//! coordinate); [`geometry::zdepth_to_raydist`] converts. Invalid depths
//! are `NaN` inside [`grid::DepthMap`].
//!
//! # Example: label a synthetic scene and derive its boundary
//!
//! ```
//! use p2orm::geometry::CameraIntrinsics;
//! use p2orm::relation::{compute_p2orm, Connectivity};
//! use p2orm::synth::{render, scene_by_name};
//! use p2orm::derive::{boundary_from_relation, orientation_from_relation};
//!
//! let k = CameraIntrinsics::with_hfov(64, 48, 60.0);
//! let scene = scene_by_name("step", None)?;
//! let r = render(&scene, &k)?;
//! let rel = compute_p2orm(r.depth(), Some(r.normals()), &k, 0.03,
//!                         Connectivity::Four, 1)?;
//! let boundary = boundary_from_relation(&rel);
//! let orientation = orientation_from_relation(&rel);
//!
//! // a vertical depth step produces a boundary two pixels wide
//! assert!(boundary.on_pixels().len() >= 2 * 48);
//! assert!(orientation.get(32, 24).is_some() || boundary.get(32, 24) == 0.0);
//! # Ok::<(), p2orm::Error>(())
//! ```
//!
//! # Example: refine a blurred depth map against its labels
//!
//! ```
//! use p2orm::geometry::CameraIntrinsics;
//! use p2orm::relation::{compute_p2orm, estimate_normals, Connectivity};
//! use p2orm::refine::{refine_depth, RefineConfig};
//! use p2orm::synth::{render, scene_by_name};
//!
//! let k = CameraIntrinsics::with_hfov(32, 24, 60.0);
//! let r = render(&scene_by_name("step", None)?, &k)?;
//! let labels = compute_p2orm(r.depth(), Some(r.normals()), &k, 0.03,
//!                            Connectivity::Four, 1)?;
//! let normals = estimate_normals(r.depth(), &k, 3)?;
//! let run = refine_depth(&labels, r.depth(), &normals, &k,
//!                        RefineConfig::default())?;
//! let last = run.trace.last().unwrap();
//! assert!(last.total <= run.trace[0].total);
//! # Ok::<(), p2orm::Error>(())
//! ```

// Compile every code block in the guide (book/) as a doc-test, so the book
// can never drift from the library. The chapters are ordinary mdbook
// markdown; `cargo test --doc` runs their snippets.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/relations.md")]
    mod relations {}
    #[doc = include_str!("../../../book/src/boundaries.md")]
    mod boundaries {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/synth.md")]
    mod synth {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}

pub mod derive;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod refine;
pub mod relation;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::CameraIntrinsics;
pub use grid::{DepthMap, Grid, NormalMap};
pub use relation::{
    compute_p2orm, estimate_normals, Connectivity, Inclination, ProbRelationMap, RelationMap,
    DEFAULT_DELTA,
};
