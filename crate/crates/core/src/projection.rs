//! Orthographic cube-face rendering.
//!
//! A model is viewed from one of the six axis directions. Point clouds are
//! drawn as screen-space discs, meshes as unlit textured triangles, both with
//! a z-buffer. Untouched pixels keep the background color and are flagged in
//! the background mask, which `crop_background` uses to trim the image.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_io::{Aabb, Model, PointCloud, TexturedMesh};
use crate::raster::{Raster, Rgb, WHITE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewpointId {
    #[serde(rename = "+X")]
    PosX,
    #[serde(rename = "-X")]
    NegX,
    #[serde(rename = "+Y")]
    PosY,
    #[serde(rename = "-Y")]
    NegY,
    #[serde(rename = "+Z")]
    PosZ,
    #[serde(rename = "-Z")]
    NegZ,
}

impl ViewpointId {
    pub const ALL: [ViewpointId; 6] = [
        ViewpointId::PosX,
        ViewpointId::NegX,
        ViewpointId::PosY,
        ViewpointId::NegY,
        ViewpointId::PosZ,
        ViewpointId::NegZ,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewpointId::PosX => "+X",
            ViewpointId::NegX => "-X",
            ViewpointId::PosY => "+Y",
            ViewpointId::NegY => "-Y",
            ViewpointId::PosZ => "+Z",
            ViewpointId::NegZ => "-Z",
        }
    }

    pub fn index(self) -> usize {
        ViewpointId::ALL.iter().position(|&v| v == self).unwrap()
    }

    /// Parses a comma-separated list such as `+X,-Z`.
    pub fn parse_list(s: &str) -> Result<Vec<ViewpointId>> {
        s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse()).collect()
    }

    /// Screen axes as (axis index, sign) pairs: right, up, and the viewing
    /// direction. The camera sits on the named side looking back at the model.
    fn frame(self) -> [(usize, f64); 3] {
        const X: usize = 0;
        const Y: usize = 1;
        const Z: usize = 2;
        match self {
            ViewpointId::PosZ => [(X, 1.0), (Y, 1.0), (Z, -1.0)],
            ViewpointId::NegZ => [(X, -1.0), (Y, 1.0), (Z, 1.0)],
            ViewpointId::PosX => [(Z, -1.0), (Y, 1.0), (X, -1.0)],
            ViewpointId::NegX => [(Z, 1.0), (Y, 1.0), (X, 1.0)],
            ViewpointId::PosY => [(X, -1.0), (Z, 1.0), (Y, -1.0)],
            ViewpointId::NegY => [(X, 1.0), (Z, 1.0), (Y, 1.0)],
        }
    }
}

impl fmt::Display for ViewpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewpointId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_uppercase();
        let s = s.replace('\u{2212}', "-");
        ViewpointId::ALL
            .into_iter()
            .find(|v| v.as_str() == s || (s.len() == 1 && v.as_str()[1..] == s && v.as_str().starts_with('+')))
            .ok_or_else(|| Error::invalid(format!("unknown viewpoint `{s}` (expected one of +X,-X,+Y,-Y,+Z,-Z)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureFilter {
    #[default]
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    /// Side of the square render target in pixels.
    pub viewport: usize,
    /// Multiplier (>= 1) on the framed extent.
    pub padding: f64,
    /// Disc radius in pixels for point splats; 0 draws single pixels.
    pub splat_radius: u32,
    pub background: Rgb,
    #[serde(default)]
    pub texture_filter: TextureFilter,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            viewport: 1024,
            padding: 1.1,
            splat_radius: 2,
            background: WHITE,
            texture_filter: TextureFilter::Nearest,
        }
    }
}

impl RenderConfig {
    pub const MIN_VIEWPORT: usize = 64;

    pub fn validate(&self) -> Result<()> {
        if self.viewport < Self::MIN_VIEWPORT {
            return Err(Error::invalid(format!(
                "viewport must be at least {} px, got {}",
                Self::MIN_VIEWPORT,
                self.viewport
            )));
        }
        if !(self.padding >= 1.0 && self.padding.is_finite()) {
            return Err(Error::invalid(format!("padding must be >= 1, got {}", self.padding)));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("background color channels must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Orthographic camera for one cube face.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    viewpoint: ViewpointId,
    center: [f64; 3],
    /// World-space side length mapped onto the viewport.
    extent: f64,
    viewport: usize,
}

impl Camera {
    pub fn viewpoint(&self) -> ViewpointId {
        self.viewpoint
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn viewport(&self) -> usize {
        self.viewport
    }

    /// Continuous screen coordinates (x right, y down, in pixels) and depth
    /// along the viewing direction (smaller is nearer).
    #[inline]
    pub fn project(&self, p: [f32; 3]) -> (f64, f64, f64) {
        let [(ra, rs), (ua, us), (fa, fs)] = self.viewpoint.frame();
        let vp = self.viewport as f64;
        let right = rs * (p[ra] as f64 - self.center[ra]);
        let up = us * (p[ua] as f64 - self.center[ua]);
        let depth = fs * (p[fa] as f64 - self.center[fa]);
        let x = (right / self.extent + 0.5) * vp;
        let y = (0.5 - up / self.extent) * vp;
        (x, y, depth)
    }

    /// Pixel containing a continuous screen position. Positions on the far
    /// edge of the viewport belong to the last row/column.
    #[inline]
    pub fn pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let vp = self.viewport as f64;
        if !(0.0..=vp).contains(&x) || !(0.0..=vp).contains(&y) {
            return None;
        }
        let last = self.viewport - 1;
        Some(((x as usize).min(last), (y as usize).min(last)))
    }
}

/// Frames `bbox` for viewpoint `vp`: the camera looks at the box center and
/// the viewport spans `padding` times the larger in-plane extent.
pub fn viewpoint_camera(vp: ViewpointId, bbox: &Aabb, cfg: &RenderConfig) -> Result<Camera> {
    cfg.validate()?;
    if bbox.is_point() {
        return Err(Error::InvalidModel("cannot frame a single-point bounding box".into()));
    }
    let [(ra, _), (ua, _), _] = vp.frame();
    let ext = bbox.extent();
    let mut in_plane = ext[ra].max(ext[ua]);
    if in_plane == 0.0 {
        // Seen end-on (a segment along the view axis); fall back to the full extent.
        in_plane = ext.iter().cloned().fold(0.0, f64::max);
    }
    Ok(Camera {
        viewpoint: vp,
        center: bbox.center(),
        extent: cfg.padding * in_plane,
        viewport: cfg.viewport,
    })
}

/// A rendered (and possibly cropped) view.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionImage {
    pixels: Raster,
    background_mask: Vec<bool>,
    viewpoint: ViewpointId,
    background: Rgb,
    /// Top-left of this image within the uncropped render.
    crop_origin: (usize, usize),
    source_dims: (usize, usize),
}

impl ProjectionImage {
    pub fn new(pixels: Raster, background_mask: Vec<bool>, viewpoint: ViewpointId, background: Rgb) -> Result<Self> {
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(Error::invalid("projection image must be at least 1x1"));
        }
        if background_mask.len() != pixels.width() * pixels.height() {
            return Err(Error::DimensionMismatch("background mask is not congruent with pixels".into()));
        }
        if pixels
            .pixels()
            .iter()
            .zip(&background_mask)
            .any(|(p, &m)| m && *p != background)
        {
            return Err(Error::invalid("masked pixel differs from the background color"));
        }
        let dims = pixels.dims();
        Ok(ProjectionImage {
            pixels,
            background_mask,
            viewpoint,
            background,
            crop_origin: (0, 0),
            source_dims: dims,
        })
    }

    pub fn pixels(&self) -> &Raster {
        &self.pixels
    }

    pub fn into_pixels(self) -> Raster {
        self.pixels
    }

    pub fn background_mask(&self) -> &[bool] {
        &self.background_mask
    }

    pub fn viewpoint(&self) -> ViewpointId {
        self.viewpoint
    }

    pub fn background(&self) -> Rgb {
        self.background
    }

    pub fn crop_origin(&self) -> (usize, usize) {
        self.crop_origin
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn foreground_count(&self) -> usize {
        self.background_mask.iter().filter(|&&m| !m).count()
    }

    #[inline]
    pub fn is_background(&self, x: usize, y: usize) -> bool {
        self.background_mask[y * self.pixels.width() + x]
    }
}

struct Target {
    color: Raster,
    depth: Vec<f64>,
    size: usize,
}

impl Target {
    fn new(size: usize, background: Rgb) -> Self {
        Target {
            color: Raster::new(size, size, background),
            depth: vec![f64::INFINITY; size * size],
            size,
        }
    }

    #[inline]
    fn plot(&mut self, x: usize, y: usize, depth: f64, c: Rgb) {
        let i = y * self.size + x;
        if depth < self.depth[i] {
            self.depth[i] = depth;
            self.color.pixels_mut()[i] = c;
        }
    }

    fn finish(self, vp: ViewpointId, background: Rgb) -> ProjectionImage {
        let mask: Vec<bool> = self.depth.iter().map(|d| d.is_infinite()).collect();
        let dims = self.color.dims();
        ProjectionImage {
            pixels: self.color,
            background_mask: mask,
            viewpoint: vp,
            background,
            crop_origin: (0, 0),
            source_dims: dims,
        }
    }
}

/// Offsets of a filled disc of radius `r` pixels.
fn disc_offsets(r: u32) -> Vec<(i64, i64)> {
    let r = r as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Splats every point as a constant-depth disc. Points closer along the
/// viewing direction win; equal depths keep the earlier point.
pub fn render_point_cloud(cloud: &PointCloud, vp: ViewpointId, cfg: &RenderConfig) -> Result<ProjectionImage> {
    let bbox = Aabb::from_points(cloud.positions())?;
    let cam = viewpoint_camera(vp, &bbox, cfg)?;
    Ok(splat_with_camera(cloud, &cam, cfg))
}

fn splat_with_camera(cloud: &PointCloud, cam: &Camera, cfg: &RenderConfig) -> ProjectionImage {
    let size = cam.viewport();
    let mut target = Target::new(size, cfg.background);
    let disc = disc_offsets(cfg.splat_radius);
    let last = size as i64 - 1;
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        let (x, y, depth) = cam.project(*p);
        let Some((px, py)) = cam.pixel(x, y) else {
            continue;
        };
        for &(dx, dy) in &disc {
            let (sx, sy) = (px as i64 + dx, py as i64 + dy);
            if sx < 0 || sy < 0 || sx > last || sy > last {
                continue;
            }
            target.plot(sx as usize, sy as usize, depth, *c);
        }
    }
    target.finish(cam.viewpoint(), cfg.background)
}

#[inline]
fn wrap(t: f32) -> f32 {
    t - t.floor()
}

fn sample_texture(tex: &Raster, u: f32, v: f32, filter: TextureFilter) -> Rgb {
    let (w, h) = (tex.width(), tex.height());
    // Texture rows run top-down while v runs bottom-up.
    let fx = wrap(u) * w as f32;
    let fy = (1.0 - wrap(v)) * h as f32;
    match filter {
        TextureFilter::Nearest => {
            let x = (fx as usize).min(w - 1);
            let y = (fy as usize).min(h - 1);
            tex.get(x, y)
        }
        TextureFilter::Bilinear => {
            let gx = fx - 0.5;
            let gy = fy - 0.5;
            let x0 = gx.floor();
            let y0 = gy.floor();
            let tx = gx - x0;
            let ty = gy - y0;
            let xi = |x: f32| (x as i64).rem_euclid(w as i64) as usize;
            let yi = |y: f32| (y as i64).rem_euclid(h as i64) as usize;
            let (a, b) = (tex.get(xi(x0), yi(y0)), tex.get(xi(x0 + 1.0), yi(y0)));
            let (c, d) = (tex.get(xi(x0), yi(y0 + 1.0)), tex.get(xi(x0 + 1.0), yi(y0 + 1.0)));
            let mut out = [0.0f32; 3];
            for k in 0..3 {
                let top = a[k] + (b[k] - a[k]) * tx;
                let bottom = c[k] + (d[k] - c[k]) * tx;
                out[k] = top + (bottom - top) * ty;
            }
            out
        }
    }
}

/// Rasterizes every triangle (no back-face culling) sampling the texture at
/// the barycentric uv of each covered pixel center. No lighting is applied.
pub fn render_mesh(mesh: &TexturedMesh, vp: ViewpointId, cfg: &RenderConfig) -> Result<ProjectionImage> {
    let bbox = Aabb::from_points(mesh.vertices())?;
    let cam = viewpoint_camera(vp, &bbox, cfg)?;
    let size = cam.viewport();
    let mut target = Target::new(size, cfg.background);
    let screen: Vec<(f64, f64, f64)> = mesh.vertices().iter().map(|&v| cam.project(v)).collect();
    let uvs = mesh.uvs();
    let tex = mesh.texture();

    for tri in mesh.faces() {
        let [a, b, c] = tri.vertices.map(|i| screen[i as usize]);
        let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let min_x = a.0.min(b.0).min(c.0).floor().max(0.0) as usize;
        let min_y = a.1.min(b.1).min(c.1).floor().max(0.0) as usize;
        let max_x = (a.0.max(b.0).max(c.0).ceil() as usize).min(size - 1);
        let max_y = (a.1.max(b.1).max(c.1).ceil() as usize).min(size - 1);
        let [ta, tb, tc] = tri.uvs.map(|i| uvs[i as usize]);
        for py in min_y..=max_y {
            let sy = py as f64 + 0.5;
            for px in min_x..=max_x {
                let sx = px as f64 + 0.5;
                let w0 = ((b.0 - sx) * (c.1 - sy) - (b.1 - sy) * (c.0 - sx)) / area;
                let w1 = ((c.0 - sx) * (a.1 - sy) - (c.1 - sy) * (a.0 - sx)) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let depth = w0 * a.2 + w1 * b.2 + w2 * c.2;
                let i = py * size + px;
                if depth < target.depth[i] {
                    let u = (w0 * ta[0] as f64 + w1 * tb[0] as f64 + w2 * tc[0] as f64) as f32;
                    let v = (w0 * ta[1] as f64 + w1 * tb[1] as f64 + w2 * tc[1] as f64) as f32;
                    target.depth[i] = depth;
                    target.color.pixels_mut()[i] = sample_texture(tex, u, v, cfg.texture_filter);
                }
            }
        }
    }
    Ok(target.finish(vp, cfg.background))
}

/// Trims the image to the tightest rectangle holding every foreground pixel.
pub fn crop_background(img: &ProjectionImage) -> Result<ProjectionImage> {
    let (w, h) = img.pixels.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if !img.background_mask[y * w + x] {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    if x0 == usize::MAX {
        return Err(Error::EmptyProjection);
    }
    let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut mask = Vec::with_capacity(cw * ch);
    for y in y0..=y1 {
        mask.extend_from_slice(&img.background_mask[y * w + x0..=y * w + x1]);
    }
    Ok(ProjectionImage {
        pixels: img.pixels.crop(x0, y0, cw, ch),
        background_mask: mask,
        viewpoint: img.viewpoint,
        background: img.background,
        crop_origin: (img.crop_origin.0 + x0, img.crop_origin.1 + y0),
        source_dims: img.source_dims,
    })
}

/// Anything that can render itself from a cube-face viewpoint.
pub trait ProjectionSource: Sync {
    fn render(&self, vp: ViewpointId, cfg: &RenderConfig) -> Result<ProjectionImage>;
}

impl ProjectionSource for Model {
    fn render(&self, vp: ViewpointId, cfg: &RenderConfig) -> Result<ProjectionImage> {
        match self {
            Model::PointCloud(c) => render_point_cloud(c, vp, cfg),
            Model::Mesh(m) => render_mesh(m, vp, cfg),
        }
    }
}

impl ProjectionSource for PointCloud {
    fn render(&self, vp: ViewpointId, cfg: &RenderConfig) -> Result<ProjectionImage> {
        render_point_cloud(self, vp, cfg)
    }
}

impl ProjectionSource for TexturedMesh {
    fn render(&self, vp: ViewpointId, cfg: &RenderConfig) -> Result<ProjectionImage> {
        render_mesh(self, vp, cfg)
    }
}

impl<S: ProjectionSource + ?Sized> ProjectionSource for &S {
    fn render(&self, vp: ViewpointId, cfg: &RenderConfig) -> Result<ProjectionImage> {
        (**self).render(vp, cfg)
    }
}

/// Wraps a source and records which viewpoints were rendered.
pub struct RenderCounter<S> {
    inner: S,
    calls: AtomicUsize,
    per_view: [AtomicUsize; 6],
}

impl<S: ProjectionSource> RenderCounter<S> {
    pub fn new(inner: S) -> Self {
        RenderCounter {
            inner,
            calls: AtomicUsize::new(0),
            per_view: Default::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, vp: ViewpointId) -> usize {
        self.per_view[vp.index()].load(Ordering::SeqCst)
    }

    pub fn rendered(&self) -> Vec<ViewpointId> {
        ViewpointId::ALL.into_iter().filter(|&v| self.calls_for(v) > 0).collect()
    }
}

impl<S: ProjectionSource> ProjectionSource for RenderCounter<S> {
    fn render(&self, vp: ViewpointId, cfg: &RenderConfig) -> Result<ProjectionImage> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.per_view[vp.index()].fetch_add(1, Ordering::SeqCst);
        self.inner.render(vp, cfg)
    }
}

pub(crate) fn check_distinct(viewpoints: &[ViewpointId]) -> Result<()> {
    if viewpoints.is_empty() {
        return Err(Error::invalid("viewpoint list is empty"));
    }
    let mut seen = [false; 6];
    for v in viewpoints {
        if std::mem::replace(&mut seen[v.index()], true) {
            return Err(Error::invalid(format!("viewpoint {v} listed more than once")));
        }
    }
    Ok(())
}

/// Renders and crops exactly the listed viewpoints, in order.
pub fn render_selected<S: ProjectionSource + ?Sized>(
    source: &S,
    viewpoints: &[ViewpointId],
    cfg: &RenderConfig,
) -> Result<Vec<ProjectionImage>> {
    check_distinct(viewpoints)?;
    cfg.validate()?;
    viewpoints
        .par_iter()
        .map(|&vp| source.render(vp, cfg).and_then(|img| crop_background(&img)))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectionSidecar {
    pub viewpoint: ViewpointId,
    pub crop_x: usize,
    pub crop_y: usize,
    pub width: usize,
    pub height: usize,
    pub source_width: usize,
    pub source_height: usize,
    pub render_config: RenderConfig,
}

/// Writes `<stem>.png` and `<stem>.json` into `dir`; returns the PNG path.
pub fn export_projection(img: &ProjectionImage, cfg: &RenderConfig, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let png = dir.join(format!("{stem}.png"));
    img.pixels().save_png(&png)?;
    let sidecar = ProjectionSidecar {
        viewpoint: img.viewpoint(),
        crop_x: img.crop_origin().0,
        crop_y: img.crop_origin().1,
        width: img.pixels().width(),
        height: img.pixels().height(),
        source_width: img.source_dims().0,
        source_height: img.source_dims().1,
        render_config: cfg.clone(),
    };
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&json, e))?;
    Ok(png)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::Triangle;

    const RED: Rgb = [1.0, 0.0, 0.0];
    const GREEN: Rgb = [0.0, 1.0, 0.0];
    const BLUE: Rgb = [0.0, 0.0, 1.0];

    fn cfg(viewport: usize, padding: f64, splat: u32) -> RenderConfig {
        RenderConfig {
            viewport,
            padding,
            splat_radius: splat,
            ..RenderConfig::default()
        }
    }

    fn unit_box() -> Aabb {
        Aabb {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    #[test]
    fn viewpoint_names_roundtrip() {
        for v in ViewpointId::ALL {
            assert_eq!(v.as_str().parse::<ViewpointId>().unwrap(), v);
        }
        assert_eq!("z".parse::<ViewpointId>().unwrap(), ViewpointId::PosZ);
        assert!("+W".parse::<ViewpointId>().is_err());
        assert_eq!(
            ViewpointId::parse_list("+X, -Z").unwrap(),
            vec![ViewpointId::PosX, ViewpointId::NegZ]
        );
    }

    #[test]
    fn unit_cube_frames_exactly_at_padding_one() {
        let cam = viewpoint_camera(ViewpointId::PosZ, &unit_box(), &cfg(1000, 1.0, 0)).unwrap();
        let (x0, y0, _) = cam.project([0.0, 1.0, 0.0]);
        let (x1, y1, _) = cam.project([1.0, 0.0, 0.0]);
        assert_eq!((x0, y0), (0.0, 0.0));
        assert_eq!((x1, y1), (1000.0, 1000.0));
    }

    #[test]
    fn padded_silhouette_spans_910_pixels() {
        // 1000 / 1.1 = 909.09 px of world extent, covering pixel columns 45..=954.
        let mut pos = Vec::new();
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                pos.push([i as f32 / n as f32, j as f32 / n as f32, 1.0]);
            }
        }
        let cloud = PointCloud::new(pos.clone(), vec![RED; pos.len()]).unwrap();
        let mut with_depth = pos.clone();
        with_depth.push([0.5, 0.5, 0.0]);
        let cloud3d = PointCloud::new(with_depth.clone(), vec![RED; with_depth.len()]).unwrap();
        for c in [&cloud, &cloud3d] {
            let img = render_point_cloud(c, ViewpointId::PosZ, &cfg(1000, 1.1, 0)).unwrap();
            let crop = crop_background(&img).unwrap();
            assert_eq!(crop.pixels().dims(), (910, 910));
            assert_eq!(crop.crop_origin(), (45, 45));
        }
    }

    #[test]
    fn single_point_box_rejected() {
        let b = Aabb {
            min: [2.0, 3.0, 4.0],
            max: [2.0, 3.0, 4.0],
        };
        assert!(viewpoint_camera(ViewpointId::PosX, &b, &RenderConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(63, 1.1, 2).validate().is_err());
        assert!(cfg(64, 0.9, 2).validate().is_err());
        assert!(cfg(64, 1.0, 0).validate().is_ok());
    }

    #[test]
    fn centered_point_lands_in_center() {
        let cloud = PointCloud::new(
            vec![[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]],
            vec![BLUE, BLUE, RED],
        )
        .unwrap();
        let img = render_point_cloud(&cloud, ViewpointId::PosZ, &cfg(101, 1.5, 1)).unwrap();
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for y in 0..101 {
            for x in 0..101 {
                if img.pixels().get(x, y) == RED {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1.0;
                }
            }
        }
        assert!(n > 0.0);
        assert!((sx / n - 50.0).abs() <= 1.0 && (sy / n - 50.0).abs() <= 1.0);
    }

    #[test]
    fn nearer_point_wins() {
        let cloud = PointCloud::new(
            vec![[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.5], [-1.0, -1.0, 0.5]],
            vec![BLUE, RED, GREEN, GREEN],
        )
        .unwrap();
        let img = render_point_cloud(&cloud, ViewpointId::PosZ, &cfg(64, 1.1, 0)).unwrap();
        let cam = viewpoint_camera(ViewpointId::PosZ, &Aabb::from_points(cloud.positions()).unwrap(), &cfg(64, 1.1, 0)).unwrap();
        let (x, y, _) = cam.project([0.0, 0.0, 0.0]);
        let (px, py) = cam.pixel(x, y).unwrap();
        assert_eq!(img.pixels().get(px, py), RED);
        let back = render_point_cloud(&cloud, ViewpointId::NegZ, &cfg(64, 1.1, 0)).unwrap();
        let blue_count = back.pixels().pixels().iter().filter(|&&p| p == BLUE).count();
        assert_eq!(blue_count, 1);
    }

    #[test]
    fn mask_matches_background() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]], vec![WHITE, RED]).unwrap();
        let img = render_point_cloud(&cloud, ViewpointId::PosY, &RenderConfig::default()).unwrap();
        for (p, &m) in img.pixels().pixels().iter().zip(img.background_mask()) {
            if m {
                assert_eq!(*p, WHITE);
            }
        }
        // A white point is foreground even though it matches the background color.
        assert_eq!(img.foreground_count(), 2 * 13);
    }

    fn tex(w: usize, h: usize, f: impl FnMut(usize, usize) -> Rgb) -> Raster {
        Raster::from_fn(w, h, f)
    }

    fn quad_mesh(texture: Raster) -> TexturedMesh {
        TexturedMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![
                Triangle {
                    vertices: [0, 1, 2],
                    uvs: [0, 1, 2],
                },
                Triangle {
                    vertices: [0, 2, 3],
                    uvs: [0, 2, 3],
                },
            ],
            texture,
        )
        .unwrap()
    }

    #[test]
    fn uniform_texture_is_exact() {
        let mesh = TexturedMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0.3, 0.7]],
            vec![Triangle {
                vertices: [0, 1, 2],
                uvs: [0, 0, 0],
            }],
            tex(1, 1, |_, _| RED),
        )
        .unwrap();
        let img = render_mesh(&mesh, ViewpointId::PosZ, &cfg(128, 1.0, 0)).unwrap();
        let fg = img.foreground_count();
        assert!(fg > 128 * 128 / 2 - 200, "{fg}");
        for (p, &m) in img.pixels().pixels().iter().zip(img.background_mask()) {
            assert_eq!(*p, if m { WHITE } else { RED });
        }
    }

    #[test]
    fn nearer_triangle_covers_farther() {
        let mesh = TexturedMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 0.5],
                [1.0, 0.0, 0.5],
                [0.0, 1.0, 0.5],
            ],
            vec![[0.25, 0.5], [0.75, 0.5]],
            vec![
                Triangle {
                    vertices: [0, 1, 2],
                    uvs: [0, 0, 0],
                },
                // wound the other way; must still draw
                Triangle {
                    vertices: [3, 5, 4],
                    uvs: [1, 1, 1],
                },
            ],
            tex(2, 1, |x, _| if x == 0 { BLUE } else { GREEN }),
        )
        .unwrap();
        let img = render_mesh(&mesh, ViewpointId::PosZ, &cfg(64, 1.0, 0)).unwrap();
        let fg: Vec<Rgb> = img
            .pixels()
            .pixels()
            .iter()
            .zip(img.background_mask())
            .filter(|(_, &m)| !m)
            .map(|(p, _)| *p)
            .collect();
        assert!(!fg.is_empty());
        assert!(fg.iter().all(|&p| p == GREEN));
        let from_back = render_mesh(&mesh, ViewpointId::NegZ, &cfg(64, 1.0, 0)).unwrap();
        assert!(from_back.pixels().pixels().iter().any(|&p| p == BLUE));
        assert!(!from_back.pixels().pixels().iter().any(|&p| p == GREEN));
    }

    #[test]
    fn checkerboard_quadrants() {
        // Texel (0,0) is the top-left of the texture and maps to uv (0..0.5, 0.5..1).
        let checker = tex(2, 2, |x, y| if (x + y) % 2 == 0 { RED } else { BLUE });
        let img = render_mesh(&quad_mesh(checker), ViewpointId::PosZ, &cfg(64, 1.0, 0)).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let expect = if (x < 32) == (y < 32) { RED } else { BLUE };
                assert_eq!(img.pixels().get(x, y), expect, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn bilinear_filter_blends() {
        let checker = tex(2, 2, |x, y| if (x + y) % 2 == 0 { RED } else { BLUE });
        let mut c = cfg(64, 1.0, 0);
        c.texture_filter = TextureFilter::Bilinear;
        let img = render_mesh(&quad_mesh(checker), ViewpointId::PosZ, &c).unwrap();
        let mid = img.pixels().get(32, 32);
        assert!(mid[0] > 0.0 && mid[2] > 0.0);
    }

    fn masked(w: usize, h: usize, fg: impl Fn(usize, usize) -> bool) -> ProjectionImage {
        let pixels = Raster::from_fn(w, h, |x, y| if fg(x, y) { RED } else { WHITE });
        let mask = (0..w * h).map(|i| !fg(i % w, i / w)).collect();
        ProjectionImage::new(pixels, mask, ViewpointId::PosZ, WHITE).unwrap()
    }

    #[test]
    fn crop_to_tight_box() {
        let img = masked(100, 100, |x, y| (10..=20).contains(&y) && (30..=40).contains(&x));
        let c = crop_background(&img).unwrap();
        assert_eq!(c.pixels().dims(), (11, 11));
        assert_eq!(c.crop_origin(), (30, 10));
        assert_eq!(c.foreground_count(), 121);
    }

    #[test]
    fn crop_without_background_is_identity() {
        let img = masked(7, 5, |_, _| true);
        let c = crop_background(&img).unwrap();
        assert_eq!(c, img);
    }

    #[test]
    fn crop_of_blank_image_fails() {
        let img = masked(8, 8, |_, _| false);
        assert_eq!(crop_background(&img).unwrap_err().to_string(), "empty projection");
    }

    #[test]
    fn render_selected_is_lazy_and_checks_duplicates() {
        let cloud = PointCloud::new(vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], vec![RED, BLUE]).unwrap();
        let counter = RenderCounter::new(&cloud);
        let imgs = render_selected(&counter, &[ViewpointId::PosZ], &cfg(64, 1.1, 1)).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(counter.calls(), 1);
        assert_eq!(counter.rendered(), vec![ViewpointId::PosZ]);

        let all = render_selected(&counter, &ViewpointId::ALL, &cfg(64, 1.1, 1)).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(counter.calls(), 7);
        for (img, vp) in all.iter().zip(ViewpointId::ALL) {
            assert_eq!(img.viewpoint(), vp);
        }

        let err = render_selected(&counter, &[ViewpointId::PosX, ViewpointId::PosX], &cfg(64, 1.1, 1));
        assert!(err.is_err());
        assert_eq!(counter.calls(), 7);
        assert!(render_selected(&counter, &[], &cfg(64, 1.1, 1)).is_err());
    }

    #[test]
    fn export_writes_png_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let img = crop_background(&masked(20, 20, |x, y| x > 3 && y > 5 && x < 10)).unwrap();
        let c = cfg(64, 1.1, 1);
        let png = export_projection(&img, &c, dir.path(), "view_+Z").unwrap();
        let back = Raster::load(&png).unwrap();
        assert_eq!(back, *img.pixels());
        let side: ProjectionSidecar =
            serde_json::from_str(&fs::read_to_string(dir.path().join("view_+Z.json")).unwrap()).unwrap();
        assert_eq!((side.crop_x, side.crop_y), (4, 6));
        assert_eq!((side.source_width, side.source_height), (20, 20));
        assert_eq!(side.render_config, c);
    }
}
