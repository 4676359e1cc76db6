//! File formats: 16-bit PNG depth, PFM float images, a raw f32 container
//! for probability maps and normals, relation-map PNGs with a text
//! sidecar, and color visualizations.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::derive::{BoundaryMap, OrientationMap};
use crate::error::{Error, Result};
use crate::grid::{DepthMap, Grid, NormalMap};
use crate::relation::{Connectivity, Inclination, ProbRelationMap, RelationMap};

/// Default depth quantization for 16-bit PNG: 1 mm per unit.
pub const DEFAULT_DEPTH_SCALE: f64 = 1000.0;

// ---------------------------------------------------------------- depth png

/// Write depth as 16-bit grayscale PNG, `round(d * scale)` clamped to
/// u16 range; invalid pixels store 0.
pub fn write_depth_png16(path: &Path, depth: &DepthMap, scale: f64) -> Result<()> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "depth scale must be positive, got {scale}"
        )));
    }
    let (w, h) = depth.size();
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let v = match depth.get(x, y) {
                Some(d) => (d * scale).round().clamp(1.0, u16::MAX as f64) as u16,
                None => 0,
            };
            img.put_pixel(x as u32, y as u32, image::Luma([v]));
        }
    }
    img.save(path)?;
    Ok(())
}

/// Read 16-bit grayscale PNG depth; 0 decodes as invalid.
pub fn read_depth_png16(path: &Path, scale: f64) -> Result<DepthMap> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "depth scale must be positive, got {scale}"
        )));
    }
    let img = image::open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = DepthMap::invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = img.get_pixel(x as u32, y as u32).0[0];
            if v > 0 {
                out.set(x, y, v as f64 / scale);
            }
        }
    }
    Ok(out)
}

// --------------------------------------------------------------------- pfm

/// Write a single-channel PFM (grayscale, little-endian, rows bottom-up
/// per the format). Invalid pixels are written as NaN.
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = depth.size();
    let f = fs::File::create(path)?;
    let mut out = BufWriter::new(f);
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    for y in (0..h).rev() {
        for x in 0..w {
            let v = depth.get(x, y).unwrap_or(f64::NAN) as f32;
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn pfm_token(reader: &mut impl BufRead) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        reader.read_exact(&mut byte)?;
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok).map_err(|_| Error::Format("pfm: non-ascii header".into()))
}

/// Read a single-channel PFM into a depth map; NaN and non-positive values
/// decode as invalid.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let f = fs::File::open(path)?;
    let mut reader = BufReader::new(f);
    let magic = pfm_token(&mut reader)?;
    if magic != "Pf" {
        return Err(Error::Format(format!(
            "pfm: expected grayscale magic 'Pf', got '{magic}'"
        )));
    }
    let w: usize = pfm_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("pfm: bad width".into()))?;
    let h: usize = pfm_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("pfm: bad height".into()))?;
    let scale: f64 = pfm_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("pfm: bad scale".into()))?;
    if w == 0 || h == 0 {
        return Err(Error::Format("pfm: zero dimension".into()));
    }
    let little_endian = scale < 0.0;
    let mut buf = vec![0u8; w * h * 4];
    reader.read_exact(&mut buf)?;
    let mut grid = Grid::new(w, h, f64::NAN);
    for (i, chunk) in buf.chunks_exact(4).enumerate() {
        let bytes: [u8; 4] = chunk.try_into().unwrap();
        let v = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        let (x, y_bottom) = (i % w, i / w);
        *grid.at_mut(x, h - 1 - y_bottom) = v as f64;
    }
    Ok(DepthMap::new(grid))
}

// ------------------------------------------------------------ raw f32 grids

const RAW_MAGIC: &[u8; 8] = b"P2ORMF32";

/// Write interleaved f32 channels with a small header: 8-byte magic,
/// u32 width, u32 height, u32 channels, all little-endian.
pub fn write_raw_f32(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<()> {
    if width == 0 || height == 0 || data.len() % (width * height) != 0 || data.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "raw f32: data length {} does not tile {width}x{height}",
            data.len()
        )));
    }
    let channels = data.len() / (width * height);
    let f = fs::File::create(path)?;
    let mut out = BufWriter::new(f);
    out.write_all(RAW_MAGIC)?;
    out.write_all(&(width as u32).to_le_bytes())?;
    out.write_all(&(height as u32).to_le_bytes())?;
    out.write_all(&(channels as u32).to_le_bytes())?;
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a raw f32 container: `(width, height, channels, data)`.
pub fn read_raw_f32(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let mut f = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != RAW_MAGIC {
        return Err(Error::Format("raw f32: bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf)?;
    let w = u32::from_le_bytes(u32buf) as usize;
    f.read_exact(&mut u32buf)?;
    let h = u32::from_le_bytes(u32buf) as usize;
    f.read_exact(&mut u32buf)?;
    let c = u32::from_le_bytes(u32buf) as usize;
    if w == 0 || h == 0 || c == 0 {
        return Err(Error::Format("raw f32: zero dimension".into()));
    }
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() != w * h * c * 4 {
        return Err(Error::Format(format!(
            "raw f32: expected {} payload bytes, found {}",
            w * h * c * 4,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((w, h, c, data))
}

/// Write per-pixel normals (x, y, z interleaved; NaN for invalid).
pub fn write_normals(path: &Path, normals: &NormalMap) -> Result<()> {
    let (w, h) = normals.size();
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            match normals.get(x, y) {
                Some(n) => data.extend_from_slice(&[n.x as f32, n.y as f32, n.z as f32]),
                None => data.extend_from_slice(&[f32::NAN; 3]),
            }
        }
    }
    write_raw_f32(path, w, h, &data)
}

pub fn read_normals(path: &Path) -> Result<NormalMap> {
    let (w, h, c, data) = read_raw_f32(path)?;
    if c != 3 {
        return Err(Error::Format(format!("normals: expected 3 channels, got {c}")));
    }
    let mut grid = Grid::new(w, h, Vector3::repeat(f64::NAN));
    for i in 0..w * h {
        let n = Vector3::new(
            data[3 * i] as f64,
            data[3 * i + 1] as f64,
            data[3 * i + 2] as f64,
        );
        if n.iter().all(|v| v.is_finite()) {
            *grid.at_mut(i % w, i / w) = n.normalize();
        }
    }
    Ok(NormalMap::from_grid(grid))
}

/// Write a probabilistic relation map as planar f32 channels, three planes
/// `(pi_-1, pi_0, pi_+1)` per inclination in canonical order; absent pairs
/// store NaN. The connectivity rides in the channel count (6 or 12).
pub fn write_prob_relation(path: &Path, prob: &ProbRelationMap) -> Result<()> {
    let (w, h) = prob.size();
    let incls = prob.inclinations();
    let mut data = vec![f32::NAN; w * h * incls.len() * 3];
    for (ci, &incl) in incls.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if let Some(dist) = prob.get(incl, x, y) {
                    for r in 0..3 {
                        data[(ci * 3 + r) * w * h + y * w + x] = dist[r] as f32;
                    }
                }
            }
        }
    }
    write_raw_f32(path, w, h, &data)
}

pub fn read_prob_relation(path: &Path) -> Result<ProbRelationMap> {
    let (w, h, c, data) = read_raw_f32(path)?;
    let connectivity = match c {
        6 => Connectivity::Four,
        12 => Connectivity::Eight,
        _ => {
            return Err(Error::Format(format!(
                "prob relation: expected 6 or 12 channels, got {c}"
            )))
        }
    };
    let incls = connectivity.inclinations();
    let mut out = ProbRelationMap::new_absent(w, h, connectivity);
    for y in 0..h {
        for x in 0..w {
            for (ci, &incl) in incls.iter().enumerate() {
                let dist: [f64; 3] = std::array::from_fn(|r| {
                    data[(ci * 3 + r) * w * h + y * w + x] as f64
                });
                if dist.iter().all(|v| v.is_finite()) {
                    let sum: f64 = dist.iter().sum();
                    if !(dist.iter().all(|&p| p >= 0.0) && (sum - 1.0).abs() < 1e-4) {
                        return Err(Error::Format(format!(
                            "prob relation: invalid distribution {dist:?} at ({x},{y})"
                        )));
                    }
                    let norm = [dist[0] / sum, dist[1] / sum, dist[2] / sum];
                    out.set(incl, x, y, norm);
                }
            }
        }
    }
    Ok(out)
}

// -------------------------------------------------------- hard relation png

fn label_to_gray(label: Option<i8>) -> u8 {
    match label {
        Some(-1) => 0,
        Some(0) => 128,
        Some(1) => 255,
        _ => 64,
    }
}

fn gray_to_label(v: u8) -> Result<Option<i8>> {
    match v {
        0 => Ok(Some(-1)),
        128 => Ok(Some(0)),
        255 => Ok(Some(1)),
        64 => Ok(None),
        _ => Err(Error::Format(format!("relation png: invalid gray value {v}"))),
    }
}

fn relation_channel_path(base: &Path, incl: Inclination) -> std::path::PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    base.with_file_name(format!("{stem}_{}.png", incl.tag()))
}

fn relation_meta_path(base: &Path) -> std::path::PathBuf {
    base.with_extension("meta")
}

/// Write a hard relation map as one grayscale PNG per inclination
/// (`<stem>_h.png`, ...; gray codes: 0 = occluded, 128 = none,
/// 255 = occluding, 64 = absent) plus a `<stem>.meta` text sidecar with
/// connectivity, margin and order.
pub fn write_relation(base: &Path, rel: &RelationMap) -> Result<()> {
    let (w, h) = rel.size();
    for &incl in rel.inclinations() {
        let mut img = image::GrayImage::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                img.put_pixel(
                    x as u32,
                    y as u32,
                    image::Luma([label_to_gray(rel.label(incl, x, y))]),
                );
            }
        }
        img.save(relation_channel_path(base, incl))?;
    }
    let meta = format!(
        "connectivity={}\ndelta={}\norder={}\n",
        rel.connectivity().as_u8(),
        rel.delta(),
        rel.order()
    );
    fs::write(relation_meta_path(base), meta)?;
    Ok(())
}

/// Read a relation map written by [`write_relation`].
pub fn read_relation(base: &Path) -> Result<RelationMap> {
    let meta = fs::read_to_string(relation_meta_path(base))?;
    let mut connectivity = None;
    let mut delta = None;
    let mut order = None;
    for line in meta.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("relation meta: bad line '{line}'")))?;
        match key {
            "connectivity" => {
                let v: u8 = value
                    .parse()
                    .map_err(|_| Error::Format("relation meta: bad connectivity".into()))?;
                connectivity = Connectivity::from_u8(v);
                if connectivity.is_none() {
                    return Err(Error::Format(format!(
                        "relation meta: connectivity must be 4 or 8, got {v}"
                    )));
                }
            }
            "delta" => {
                delta = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| Error::Format("relation meta: bad delta".into()))?,
                )
            }
            "order" => {
                order = Some(
                    value
                        .parse::<u8>()
                        .map_err(|_| Error::Format("relation meta: bad order".into()))?,
                )
            }
            _ => return Err(Error::Format(format!("relation meta: unknown key '{key}'"))),
        }
    }
    let connectivity =
        connectivity.ok_or_else(|| Error::Format("relation meta: missing connectivity".into()))?;
    let delta = delta.ok_or_else(|| Error::Format("relation meta: missing delta".into()))?;
    let order = order.ok_or_else(|| Error::Format("relation meta: missing order".into()))?;

    let mut rel = None;
    for &incl in connectivity.inclinations() {
        let img = image::open(relation_channel_path(base, incl))?.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let rel = rel.get_or_insert_with(|| {
            RelationMap::new_absent(w, h, connectivity, delta, order)
        });
        if rel.size() != (w, h) {
            return Err(Error::Format("relation png: channel size mismatch".into()));
        }
        for y in 0..h {
            for x in 0..w {
                match gray_to_label(img.get_pixel(x as u32, y as u32).0[0])? {
                    Some(l) => rel.set_label(incl, x, y, l),
                    None => rel.set_absent(incl, x, y),
                }
            }
        }
    }
    rel.ok_or_else(|| Error::Format("relation png: no channels".into()))
}

// ----------------------------------------------------------- visualizations

/// Render a relation map for inspection: for each pixel, red channel scales
/// with the count of occluding pairs, blue with occluded pairs; gray
/// background elsewhere.
pub fn relation_visualization(rel: &RelationMap) -> image::RgbImage {
    let (w, h) = rel.size();
    let mut img = image::RgbImage::new(w as u32, h as u32);
    let max_pairs = rel.connectivity().as_u8() as f64;
    for y in 0..h {
        for x in 0..w {
            let mut pos = 0usize;
            let mut neg = 0usize;
            for (_, l) in rel.neighbors_of(x, y) {
                match l {
                    1 => pos += 1,
                    -1 => neg += 1,
                    _ => {}
                }
            }
            let px = if pos == 0 && neg == 0 {
                [190u8, 190, 190]
            } else {
                let r = 190.0 + 65.0 * (pos as f64 / max_pairs).min(1.0);
                let b = 190.0 + 65.0 * (neg as f64 / max_pairs).min(1.0);
                [
                    if pos > 0 { r as u8 } else { 60 },
                    60,
                    if neg > 0 { b as u8 } else { 60 },
                ]
            };
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img
}

/// Render a boundary map as 8-bit grayscale (probability times 255).
pub fn boundary_visualization(b: &BoundaryMap) -> image::GrayImage {
    let (w, h) = b.size();
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            img.put_pixel(
                x as u32,
                y as u32,
                image::Luma([(b.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8]),
            );
        }
    }
    img
}

fn hsv_to_rgb(hue_deg: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = hue_deg.rem_euclid(360.0) / 60.0;
    let xc = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, xc, 0.0),
        1 => (xc, c, 0.0),
        2 => (0.0, c, xc),
        3 => (0.0, xc, c),
        4 => (xc, 0.0, c),
        _ => (c, 0.0, xc),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Render orientation as a hue wheel (angle to hue), black where undefined
/// or off-boundary.
pub fn orientation_visualization(o: &OrientationMap, b: &BoundaryMap) -> image::RgbImage {
    let (w, h) = o.size();
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = match o.get(x, y) {
                Some(theta) if b.get(x, y) > 0.0 => {
                    hsv_to_rgb(theta.to_degrees() + 180.0, 1.0, 1.0)
                }
                _ => [0, 0, 0],
            };
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img
}
