//! Analytic synthetic scenes with exact depth, normals and a brute-force
//! occlusion oracle.
//!
//! Primitives are clipped planes and axis-aligned boxes; depth is the exact
//! first ray intersection, never a discretized surface. The oracle samples
//! rays inside the `[L_p, L_q]` cone and tests tangent-plane ordering on
//! each, independently of the closed-form endpoint test in [`crate::relation`].

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ray_plane_distance, ray_through_pixel, CameraIntrinsics, Ray, TangentPlane};
use crate::grid::{DepthMap, Grid, NormalMap};
use crate::relation::{Connectivity, RelationMap};

/// Rays sampled per pair by the oracle; odd so endpoints and the mid ray
/// are included.
pub const ORACLE_RAY_SAMPLES: usize = 101;

/// Analytic primitive. Plane clips are half-space constraints
/// `n_clip . X <= b` on the intersection point.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
        clips: Vec<(Vector3<f64>, f64)>,
    },
    AxisBox {
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    /// Camera-facing unit normal at the hit point.
    pub normal: Vector3<f64>,
}

const HIT_EPS: f64 = 1e-9;

impl Primitive {
    /// Closest intersection in front of the camera, honoring clips and box
    /// extents.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        match self {
            Primitive::Plane {
                point,
                normal,
                clips,
            } => {
                let denom = normal.dot(&ray.direction());
                if denom.abs() < crate::geometry::PARALLEL_EPS {
                    return None;
                }
                let t = normal.dot(point) / denom;
                if t <= HIT_EPS {
                    return None;
                }
                let x = ray.point_at(t);
                for (cn, cb) in clips {
                    if cn.dot(&x) > *cb + 1e-12 {
                        return None;
                    }
                }
                let mut n = normal.normalize();
                if n.dot(&x) > 0.0 {
                    n = -n;
                }
                Some(Hit { t, normal: n })
            }
            Primitive::AxisBox { min, max } => {
                let dir = ray.direction();
                let mut tmin = f64::NEG_INFINITY;
                let mut tmax = f64::INFINITY;
                let mut axis_min = 0usize;
                for a in 0..3 {
                    if dir[a].abs() < 1e-15 {
                        if min[a] > 0.0 || max[a] < 0.0 {
                            return None;
                        }
                        continue;
                    }
                    let mut t0 = min[a] / dir[a];
                    let mut t1 = max[a] / dir[a];
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    if t0 > tmin {
                        tmin = t0;
                        axis_min = a;
                    }
                    tmax = tmax.min(t1);
                    if tmin > tmax {
                        return None;
                    }
                }
                if tmin <= HIT_EPS {
                    // camera inside the box is not a supported configuration
                    return None;
                }
                let x = ray.point_at(tmin);
                let mut n = Vector3::zeros();
                n[axis_min] = 1.0;
                if n.dot(&x) > 0.0 {
                    n = -n;
                }
                Some(Hit { t: tmin, normal: n })
            }
        }
    }

    /// Intersection with the analytically extended surface: the unbounded
    /// supporting plane of the hit (clips and box extents ignored). The
    /// tangent plane used for extension is anchored at the actual hit.
    pub fn extended_distance(&self, ray: &Ray, tangent: &TangentPlane) -> Option<f64> {
        let _ = self;
        ray_plane_distance(ray, tangent).ok()
    }
}

/// Ordered list of primitives; every camera ray must hit at least one.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

/// Exact render of a scene: ray distances, normals at the first hit and the
/// index of the hit primitive per pixel.
#[derive(Debug, Clone)]
pub struct SceneRender {
    depth: DepthMap,
    normals: NormalMap,
    prim_id: Grid<u32>,
}

impl SceneRender {
    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }

    pub fn normals(&self) -> &NormalMap {
        &self.normals
    }

    pub fn prim_id(&self, x: usize, y: usize) -> u32 {
        *self.prim_id.at(x, y)
    }
}

/// Cast one ray per pixel and keep the closest positive intersection.
pub fn render(scene: &Scene, k: &CameraIntrinsics) -> Result<SceneRender> {
    let (w, h) = (k.width, k.height);
    struct PixelHit {
        t: f64,
        normal: Vector3<f64>,
        id: u32,
    }
    let hits: Vec<Option<PixelHit>> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = (idx % w, idx / w);
            let ray = ray_through_pixel((x as f64, y as f64), k);
            let mut best: Option<PixelHit> = None;
            for (id, prim) in scene.primitives.iter().enumerate() {
                if let Some(hit) = prim.intersect(&ray) {
                    if best.as_ref().map(|b| hit.t < b.t).unwrap_or(true) {
                        best = Some(PixelHit {
                            t: hit.t,
                            normal: hit.normal,
                            id: id as u32,
                        });
                    }
                }
            }
            best
        })
        .collect();

    let mut depth = DepthMap::invalid(w, h);
    let mut normals = NormalMap::invalid(w, h);
    let mut prim_id = Grid::new(w, h, u32::MAX);
    for (idx, hit) in hits.into_iter().enumerate() {
        let (x, y) = (idx % w, idx / w);
        match hit {
            Some(hit) => {
                depth.set(x, y, hit.t);
                normals.set(x, y, hit.normal);
                *prim_id.at_mut(x, y) = hit.id;
            }
            None => return Err(Error::SceneNotClosed { pixel: (x, y) }),
        }
    }
    Ok(SceneRender {
        depth,
        normals,
        prim_id,
    })
}

/// Brute-force ground-truth relation map: for each cross-primitive neighbor
/// pair, sample `n_rays` rays between `L_p` and `L_q` and require the
/// tangent-plane ordering margin `(t_q(L) - t_p(L)) / ||q-p||` to clear
/// `delta` on every ray, together with the order-0 margin. Same-primitive
/// pairs carry no occlusion.
pub fn oracle_relation_with_rays(
    render: &SceneRender,
    k: &CameraIntrinsics,
    delta: f64,
    connectivity: Connectivity,
    n_rays: usize,
) -> RelationMap {
    assert!(n_rays >= 2);
    let depth = &render.depth;
    let (w, h) = depth.size();
    let mut rel = RelationMap::new_absent(w, h, connectivity, delta, 1);

    for &incl in connectivity.inclinations() {
        let (ix, iy) = incl.displacement();
        let dist = incl.step_len();
        let labels: Vec<i8> = (0..w * h)
            .into_par_iter()
            .map(|idx| {
                let (x, y) = (idx % w, idx / w);
                let (qx, qy) = (x as i64 + ix, y as i64 + iy);
                if qx < 0 || qy < 0 || qx as usize >= w || qy as usize >= h {
                    return crate::relation::ABSENT;
                }
                let (qx, qy) = (qx as usize, qy as usize);
                let (d_p, d_q) = match (depth.get(x, y), depth.get(qx, qy)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return crate::relation::ABSENT,
                };
                if render.prim_id(x, y) == render.prim_id(qx, qy) {
                    return 0;
                }
                let n_p = render.normals.get(x, y).unwrap();
                let n_q = render.normals.get(qx, qy).unwrap();
                let ray_p = ray_through_pixel((x as f64, y as f64), k);
                let ray_q = ray_through_pixel((qx as f64, qy as f64), k);
                let plane_p = TangentPlane::new(ray_p.point_at(d_p), n_p);
                let plane_q = TangentPlane::new(ray_q.point_at(d_q), n_q);
                let d_pq = (d_q - d_p) / dist;

                let margin = sampled_plane_margin(&ray_p, &ray_q, &plane_p, &plane_q, dist, n_rays);
                let pos = d_pq >= delta && margin.map(|(lo, _)| lo >= delta).unwrap_or(false);
                let neg = -d_pq >= delta && margin.map(|(_, hi)| -hi >= delta).unwrap_or(false);
                if pos {
                    1
                } else if neg {
                    -1
                } else {
                    0
                }
            })
            .collect();
        for (idx, l) in labels.into_iter().enumerate() {
            let (x, y) = (idx % w, idx / w);
            if l == crate::relation::ABSENT {
                rel.set_absent(incl, x, y);
            } else {
                rel.set_label(incl, x, y, l);
            }
        }
    }
    rel
}

/// Default-parameter oracle (101 sampled rays, 8-connectivity caller choice).
pub fn oracle_relation(
    render: &SceneRender,
    k: &CameraIntrinsics,
    delta: f64,
    connectivity: Connectivity,
) -> RelationMap {
    oracle_relation_with_rays(render, k, delta, connectivity, ORACLE_RAY_SAMPLES)
}

/// Min and max over sampled rays of `(t_q(L) - t_p(L)) / dist`, or `None`
/// when an intersection is missing on any ray. The rays interpolate the
/// directions of `ray_p` and `ray_q`; the endpoints reproduce the
/// closed-form pair margins.
pub fn sampled_plane_margin(
    ray_p: &Ray,
    ray_q: &Ray,
    plane_p: &TangentPlane,
    plane_q: &TangentPlane,
    dist: f64,
    n_rays: usize,
) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in 0..n_rays {
        let a = s as f64 / (n_rays - 1) as f64;
        let dir = ray_p.direction() * (1.0 - a) + ray_q.direction() * a;
        let ray = Ray::new(dir);
        let t_p = ray_plane_distance(&ray, plane_p).ok()?;
        let t_q = ray_plane_distance(&ray, plane_q).ok()?;
        let m = (t_q - t_p) / dist;
        lo = lo.min(m);
        hi = hi.max(m);
    }
    Some((lo, hi))
}

fn infinite_plane(point: Vector3<f64>, normal: Vector3<f64>) -> Primitive {
    Primitive::Plane {
        point,
        normal,
        clips: Vec::new(),
    }
}

/// Fronto-parallel plane at distance `z`.
pub fn fronto_plane_scene(z: f64) -> Scene {
    Scene {
        primitives: vec![infinite_plane(
            Vector3::new(0.0, 0.0, z),
            Vector3::new(0.0, 0.0, -1.0),
        )],
    }
}

/// Plane through (0, 0, 2) tilted by `angle_deg` around the x axis.
pub fn slanted_plane_scene(angle_deg: f64) -> Scene {
    let a = angle_deg.to_radians();
    Scene {
        primitives: vec![infinite_plane(
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, a.sin(), -a.cos()),
        )],
    }
}

/// Fronto-parallel step: near plane at z=2 for world x <= 0, far plane at
/// z = 2 + height. The silhouette projects at pixel column `cx`.
pub fn step_scene(height: f64) -> Scene {
    assert!(height > 0.0);
    Scene {
        primitives: vec![
            Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 2.0),
                normal: Vector3::new(0.0, 0.0, -1.0),
                clips: vec![(Vector3::new(1.0, 0.0, 0.0), 0.0)],
            },
            infinite_plane(Vector3::new(0.0, 0.0, 2.0 + height), Vector3::new(0.0, 0.0, -1.0)),
        ],
    }
}

/// Two parallel slanted planes separated by a small depth gap of `offset`
/// meters along z, split at world x = 0. The slant is chosen so that across
/// the gap the surface's own depth slope largely cancels the gap's
/// contribution to the raw depth rate: the tangent-plane margins see the
/// full gap while the pairwise depth rate stays small. A threshold between
/// the two lets the depth test veto what the plane tests assert.
pub fn small_step_scene(offset: f64) -> Scene {
    let slant = Vector3::new(-0.2, 0.0, -1.0);
    Scene {
        primitives: vec![
            Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 2.0),
                normal: slant,
                clips: vec![(Vector3::new(1.0, 0.0, 0.0), 0.0)],
            },
            infinite_plane(Vector3::new(0.0, 0.0, 2.0 + offset), slant),
        ],
    }
}

/// Two planes meeting at a ridge along world x = 0, ridge nearest to the
/// camera (convex corner).
pub fn salient_wedge_scene() -> Scene {
    let t = 0.4;
    // z = 2 + t*|x|
    Scene {
        primitives: vec![
            Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 2.0),
                normal: Vector3::new(t, 0.0, -1.0),
                clips: vec![(Vector3::new(-1.0, 0.0, 0.0), 0.0)], // x >= 0
            },
            Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 2.0),
                normal: Vector3::new(-t, 0.0, -1.0),
                clips: vec![(Vector3::new(1.0, 0.0, 0.0), 0.0)], // x <= 0
            },
        ],
    }
}

/// Two planes meeting at a ridge along world x = 0, ridge farthest from the
/// camera (concave corner).
pub fn reentrant_wedge_scene() -> Scene {
    let t = 0.4;
    // z = 3 - t*|x|
    Scene {
        primitives: vec![
            Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 3.0),
                normal: Vector3::new(-t, 0.0, -1.0),
                clips: vec![(Vector3::new(-1.0, 0.0, 0.0), 0.0)],
            },
            Primitive::Plane {
                point: Vector3::new(0.0, 0.0, 3.0),
                normal: Vector3::new(t, 0.0, -1.0),
                clips: vec![(Vector3::new(1.0, 0.0, 0.0), 0.0)],
            },
        ],
    }
}

/// Axis-aligned box floating in front of a backdrop plane.
pub fn box_on_floor_scene() -> Scene {
    Scene {
        primitives: vec![
            Primitive::AxisBox {
                min: Vector3::new(-0.4, -0.3, 1.8),
                max: Vector3::new(0.4, 0.5, 2.6),
            },
            infinite_plane(Vector3::new(0.0, 0.0, 4.0), Vector3::new(0.0, 0.0, -1.0)),
        ],
    }
}

/// The named scenes used by the acceptance suite, with default parameters.
pub fn scene_catalog() -> Vec<(String, Scene)> {
    vec![
        ("fronto_plane".into(), fronto_plane_scene(2.0)),
        ("slanted_plane".into(), slanted_plane_scene(30.0)),
        ("step".into(), step_scene(0.5)),
        ("small_step".into(), small_step_scene(0.01)),
        ("salient_wedge".into(), salient_wedge_scene()),
        ("reentrant_wedge".into(), reentrant_wedge_scene()),
        ("box_on_floor".into(), box_on_floor_scene()),
    ]
}

/// Look up a catalog scene by name, with optional parameter where the scene
/// takes one (`step`, `small_step`, `slanted_plane`).
pub fn scene_by_name(name: &str, param: Option<f64>) -> Result<Scene> {
    match name {
        "fronto_plane" => Ok(fronto_plane_scene(param.unwrap_or(2.0))),
        "slanted_plane" => Ok(slanted_plane_scene(param.unwrap_or(30.0))),
        "step" => Ok(step_scene(param.unwrap_or(0.5))),
        "small_step" => Ok(small_step_scene(param.unwrap_or(0.01))),
        "salient_wedge" => Ok(salient_wedge_scene()),
        "reentrant_wedge" => Ok(reentrant_wedge_scene()),
        "box_on_floor" => Ok(box_on_floor_scene()),
        other => Err(Error::UnknownScene(other.to_string())),
    }
}

/// Parse a scene from the plain-text primitive format:
///
/// ```text
/// [plane]
/// point = 0 0 2
/// normal = 0 0 -1
/// clip = 1 0 0 0      # n.x n.y n.z b, meaning n . X <= b
///
/// [box]
/// min = -0.4 -0.3 1.8
/// max = 0.4 0.5 2.6
/// ```
pub fn scene_from_str(text: &str) -> Result<Scene> {
    enum Block {
        Plane {
            point: Option<Vector3<f64>>,
            normal: Option<Vector3<f64>>,
            clips: Vec<(Vector3<f64>, f64)>,
        },
        Box {
            min: Option<Vector3<f64>>,
            max: Option<Vector3<f64>>,
        },
    }

    fn parse_vec(v: &str) -> Result<Vec<f64>> {
        v.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number `{t}` in scene file")))
            })
            .collect()
    }

    fn finish(block: Block, out: &mut Vec<Primitive>) -> Result<()> {
        match block {
            Block::Plane {
                point,
                normal,
                clips,
            } => {
                let point = point.ok_or_else(|| Error::Format("plane missing `point`".into()))?;
                let normal =
                    normal.ok_or_else(|| Error::Format("plane missing `normal`".into()))?;
                out.push(Primitive::Plane {
                    point,
                    normal,
                    clips,
                });
            }
            Block::Box { min, max } => {
                let min = min.ok_or_else(|| Error::Format("box missing `min`".into()))?;
                let max = max.ok_or_else(|| Error::Format("box missing `max`".into()))?;
                out.push(Primitive::AxisBox { min, max });
            }
        }
        Ok(())
    }

    let mut primitives = Vec::new();
    let mut current: Option<Block> = None;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if let Some(block) = current.take() {
                finish(block, &mut primitives)?;
            }
            current = Some(match header.trim() {
                "plane" => Block::Plane {
                    point: None,
                    normal: None,
                    clips: Vec::new(),
                },
                "box" => Block::Box {
                    min: None,
                    max: None,
                },
                other => return Err(Error::Format(format!("unknown primitive `{other}`"))),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let nums = parse_vec(value.trim())?;
        let vec3 = |nums: &[f64]| -> Result<Vector3<f64>> {
            if nums.len() != 3 {
                return Err(Error::Format(format!("`{key}` expects 3 numbers")));
            }
            Ok(Vector3::new(nums[0], nums[1], nums[2]))
        };
        match current.as_mut() {
            None => return Err(Error::Format(format!("`{key}` outside a primitive block"))),
            Some(Block::Plane {
                point,
                normal,
                clips,
            }) => match key {
                "point" => *point = Some(vec3(&nums)?),
                "normal" => *normal = Some(vec3(&nums)?),
                "clip" => {
                    if nums.len() != 4 {
                        return Err(Error::Format("`clip` expects 4 numbers".into()));
                    }
                    clips.push((Vector3::new(nums[0], nums[1], nums[2]), nums[3]));
                }
                other => return Err(Error::Format(format!("unknown plane key `{other}`"))),
            },
            Some(Block::Box { min, max }) => match key {
                "min" => *min = Some(vec3(&nums)?),
                "max" => *max = Some(vec3(&nums)?),
                other => return Err(Error::Format(format!("unknown box key `{other}`"))),
            },
        }
    }
    if let Some(block) = current.take() {
        finish(block, &mut primitives)?;
    }
    if primitives.is_empty() {
        return Err(Error::Format("scene file defines no primitive".into()));
    }
    Ok(Scene { primitives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{compute_p2orm, Connectivity};

    fn small_k() -> CameraIntrinsics {
        CameraIntrinsics::with_hfov(64, 48, 60.0)
    }

    #[test]
    fn fronto_plane_depth_and_normal() {
        let k = small_k();
        let render = render(&fronto_plane_scene(2.0), &k).unwrap();
        let (cx, cy) = (k.cx as usize, k.cy as usize);
        // depth is ray distance: check the hit point lands on the plane
        let ray = ray_through_pixel((cx as f64, cy as f64), &k);
        let d = render.depth().get(cx, cy).unwrap();
        assert!((ray.point_at(d).z - 2.0).abs() < 1e-9);
        let n = render.normals().get(cx, cy).unwrap();
        assert!((n - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn slanted_plane_matches_closed_form() {
        let k = small_k();
        let scene = slanted_plane_scene(30.0);
        let render = render(&scene, &k).unwrap();
        let plane = TangentPlane::new(
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, 30f64.to_radians().sin(), -30f64.to_radians().cos()),
        );
        for y in (0..k.height).step_by(7) {
            for x in (0..k.width).step_by(7) {
                let ray = ray_through_pixel((x as f64, y as f64), &k);
                let t = ray_plane_distance(&ray, &plane).unwrap();
                assert!((render.depth().get(x, y).unwrap() - t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn box_silhouette_changes_prim_id() {
        let k = small_k();
        let scene = box_on_floor_scene();
        let render = render(&scene, &k).unwrap();
        // Project the +x box edge analytically: world x = 0.4 at z in the
        // front face depth 1.8 -> pixel x = cx + fx*0.4/1.8.
        let y = k.cy as usize;
        let edge = k.cx + k.fx * 0.4 / 1.8;
        let inside = edge.floor() as usize;
        assert_eq!(render.prim_id(inside, y), 0);
        assert_eq!(render.prim_id(inside + 2, y), 1);
    }

    #[test]
    fn single_plane_oracle_all_zero() {
        // Narrow field of view keeps steep planes below the horizon.
        let k = CameraIntrinsics::with_hfov(64, 48, 20.0);
        for angle in [0.0, 45.0, 80.0] {
            let scene = slanted_plane_scene(angle);
            let r = render(&scene, &k).unwrap();
            let rel = oracle_relation(&r, &k, 0.01, Connectivity::Eight);
            assert_eq!(rel.nonzero_count(), 0);
        }
    }

    #[test]
    fn step_oracle_marks_near_side_and_agrees_with_hand_geometry() {
        let k = small_k();
        let scene = step_scene(0.5);
        let r = render(&scene, &k).unwrap();
        let rel = oracle_relation(&r, &k, 0.01, Connectivity::Eight);
        assert!(rel.nonzero_count() > 0);
        // nonzero labels only within one pixel of the step column
        let x0 = k.cx;
        for y in 0..k.height {
            for x in 0..k.width - 1 {
                if let Some(l) = rel.label(crate::relation::Inclination::Horizontal, x, y) {
                    if l != 0 {
                        assert!((x as f64 - x0).abs() <= 1.5, "label at x={x}");
                        assert_eq!(l, 1, "near side occludes far side");
                    }
                }
            }
        }
    }

    #[test]
    fn wedges_have_no_occlusion_across_the_ridge() {
        let k = small_k();
        for scene in [salient_wedge_scene(), reentrant_wedge_scene()] {
            let r = render(&scene, &k).unwrap();
            let rel = oracle_relation(&r, &k, 0.01, Connectivity::Eight);
            assert_eq!(rel.nonzero_count(), 0);
        }
    }

    #[test]
    fn small_step_oracle_and_order1_both_zero() {
        let k = small_k();
        let delta = 0.03;
        let scene = small_step_scene(0.01);
        let r = render(&scene, &k).unwrap();
        let rel = oracle_relation(&r, &k, delta, Connectivity::Eight);
        assert_eq!(rel.nonzero_count(), 0);
        let computed =
            compute_p2orm(r.depth(), Some(r.normals()), &k, delta, Connectivity::Eight, 1).unwrap();
        assert_eq!(computed.nonzero_count(), 0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let k = small_k();
        let scene = box_on_floor_scene();
        let a = render(&scene, &k).unwrap();
        let b = render(&scene, &k).unwrap();
        assert_eq!(a.depth(), b.depth());
        assert_eq!(a.normals(), b.normals());
    }

    #[test]
    fn slanted_zero_equals_fronto() {
        let k = small_k();
        let a = render(&slanted_plane_scene(0.0), &k).unwrap();
        let b = render(&fronto_plane_scene(2.0), &k).unwrap();
        for y in 0..k.height {
            for x in 0..k.width {
                let da = a.depth().get(x, y).unwrap();
                let db = b.depth().get(x, y).unwrap();
                assert!((da - db).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scene_text_roundtrip() {
        let text = "\
# box in front of a plane
[box]
min = -0.4 -0.3 1.8
max = 0.4 0.5 2.6

[plane]
point = 0 0 4
normal = 0 0 -1
";
        let scene = scene_from_str(text).unwrap();
        assert_eq!(scene, box_on_floor_scene_reordered());
        assert!(scene_from_str("[sphere]\n").is_err());
        assert!(scene_from_str("point = 0 0 1\n").is_err());
    }

    fn box_on_floor_scene_reordered() -> Scene {
        box_on_floor_scene()
    }
}
