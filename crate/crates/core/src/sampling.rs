//! Random projection sampling and grid mini-patch sampling.
//!
//! All randomness in one sampled set comes from a single [`SeededRng`],
//! consumed in a fixed order: the viewpoint draw first, then one (y, x)
//! offset pair per grid cell in row-major order, projection by projection.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{check_distinct, crop_background, ProjectionSource, RenderConfig, ViewpointId};
use crate::raster::Raster;

/// Deterministic generator; the same seed replays the same draws.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Mixes a base seed with a stream index (splitmix64 finalizer) so that
/// items of a dataset get independent, reproducible generators.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `n` distinct viewpoints; every n-subset is equally likely.
pub fn sample_viewpoints(n: usize, rng: &mut SeededRng) -> Result<Vec<ViewpointId>> {
    if !(1..=6).contains(&n) {
        return Err(Error::invalid(format!("projection count must be in 1..=6, got {n}")));
    }
    Ok(index::sample(rng, 6, n)
        .into_iter()
        .map(|i| ViewpointId::ALL[i])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub patch: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 7,
            cols: 7,
            patch: 32,
        }
    }
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, patch: usize) -> Result<Self> {
        let g = GridSpec { rows, cols, patch };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.patch == 0 {
            return Err(Error::invalid(format!("grid values must be >= 1, got {self}")));
        }
        Ok(())
    }

    pub fn canvas_width(&self) -> usize {
        self.cols * self.patch
    }

    pub fn canvas_height(&self) -> usize {
        self.rows * self.patch
    }

    /// (width, height) of the spliced canvas.
    pub fn canvas_dims(&self) -> (usize, usize) {
        (self.canvas_width(), self.canvas_height())
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.rows, self.cols, self.patch)
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// Parses `RxCxP`, e.g. `7x7x32`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X']).collect();
        let bad = || Error::invalid(format!("grid must look like RxCxP, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let nums: Vec<usize> = parts
            .iter()
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        GridSpec::new(nums[0], nums[1], nums[2])
    }
}

/// Where one canvas patch was copied from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchOrigin {
    pub row: usize,
    pub col: usize,
    pub x: usize,
    pub y: usize,
}

#[inline]
fn cell_bounds(i: usize, cells: usize, len: usize) -> (usize, usize) {
    (i * len / cells, (i + 1) * len / cells)
}

fn check_fits(w: usize, h: usize, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    let (need_w, need_h) = grid.canvas_dims();
    if w < need_w || h < need_h {
        return Err(Error::ImageTooSmall {
            need_w,
            need_h,
            got_w: w,
            got_h: h,
        });
    }
    Ok(())
}

/// Draws one window position per cell. Cells split the image as evenly as
/// integer division allows, so each is at least `patch` pixels per side.
pub fn plan_patches(width: usize, height: usize, grid: &GridSpec, rng: &mut SeededRng) -> Result<Vec<PatchOrigin>> {
    check_fits(width, height, grid)?;
    let mut out = Vec::with_capacity(grid.rows * grid.cols);
    for row in 0..grid.rows {
        let (y0, y1) = cell_bounds(row, grid.rows, height);
        for col in 0..grid.cols {
            let (x0, x1) = cell_bounds(col, grid.cols, width);
            let y = y0 + rng.random_range(0..=(y1 - y0 - grid.patch));
            let x = x0 + rng.random_range(0..=(x1 - x0 - grid.patch));
            out.push(PatchOrigin { row, col, x, y });
        }
    }
    Ok(out)
}

/// Splices the planned windows into a canvas. Pure copy.
pub fn splice_patches(img: &Raster, grid: &GridSpec, plan: &[PatchOrigin]) -> Raster {
    let (cw, ch) = grid.canvas_dims();
    let mut canvas = Raster::new(cw, ch, [0.0; 3]);
    let p = grid.patch;
    for o in plan {
        for dy in 0..p {
            let src = &img.row(o.y + dy)[o.x..o.x + p];
            let dst_y = o.row * p + dy;
            let start = dst_y * cw + o.col * p;
            canvas.pixels_mut()[start..start + p].copy_from_slice(src);
        }
    }
    canvas
}

/// Grid mini-patch sampling: one random `patch`x`patch` window per grid
/// cell, spliced in grid order.
pub fn grid_mini_patch(img: &Raster, grid: &GridSpec, rng: &mut SeededRng) -> Result<Raster> {
    grid_mini_patch_tracked(img, grid, rng).map(|(c, _)| c)
}

/// Like [`grid_mini_patch`], also returning the source window of each patch.
pub fn grid_mini_patch_tracked(img: &Raster, grid: &GridSpec, rng: &mut SeededRng) -> Result<(Raster, Vec<PatchOrigin>)> {
    let plan = plan_patches(img.width(), img.height(), grid, rng)?;
    Ok((splice_patches(img, grid, &plan), plan))
}

/// Nearest-neighbour upscale, preserving aspect ratio, to the smallest size
/// that covers the canvas in both dimensions. Images already large enough
/// are returned unchanged.
pub fn upscale_to_fit(img: &Raster, grid: &GridSpec) -> Raster {
    let (need_w, need_h) = grid.canvas_dims();
    let (w, h) = img.dims();
    if w >= need_w && h >= need_h {
        return img.clone();
    }
    let scale = (need_w as f64 / w as f64).max(need_h as f64 / h as f64);
    let new_w = ((w as f64 * scale).ceil() as usize).max(need_w);
    let new_h = ((h as f64 * scale).ceil() as usize).max(need_h);
    img.resize_nearest(new_w, new_h)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSelection {
    /// Draw this many viewpoints at random.
    Random(usize),
    /// Always use these viewpoints (random sampling disabled).
    Fixed(Vec<ViewpointId>),
}

impl ViewSelection {
    pub fn count(&self) -> usize {
        match self {
            ViewSelection::Random(n) => *n,
            ViewSelection::Fixed(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchMode {
    #[default]
    GridMiniPatch,
    /// Bilinear resize of the whole projection to the canvas size.
    Resize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub views: ViewSelection,
    pub grid: GridSpec,
    pub mode: PatchMode,
}

impl SamplingConfig {
    pub fn random(n: usize, grid: GridSpec) -> Self {
        SamplingConfig {
            views: ViewSelection::Random(n),
            grid,
            mode: PatchMode::GridMiniPatch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        match &self.views {
            ViewSelection::Random(n) if !(1..=6).contains(n) => {
                Err(Error::invalid(format!("projection count must be in 1..=6, got {n}")))
            }
            ViewSelection::Random(_) => Ok(()),
            ViewSelection::Fixed(v) => check_distinct(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledProjectionSet {
    pub canvases: Vec<Raster>,
    pub viewpoints: Vec<ViewpointId>,
    pub seed: u64,
    pub grid: GridSpec,
    pub mode: PatchMode,
    /// Patch provenance per canvas, in the coordinates of the (possibly
    /// upscaled) cropped projection. Empty in resize mode.
    pub origins: Vec<Vec<PatchOrigin>>,
}

impl SampledProjectionSet {
    pub fn len(&self) -> usize {
        self.canvases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canvases.is_empty()
    }
}

/// Intermediate products of [`sample_projection_set`], kept so callers can
/// time or inspect each stage.
pub struct Stages {
    pub viewpoints: Vec<ViewpointId>,
    pub rendered: Vec<crate::projection::ProjectionImage>,
}

/// Draws viewpoints and renders only those.
pub fn select_and_render<S: ProjectionSource + ?Sized>(
    source: &S,
    cfg: &SamplingConfig,
    render: &RenderConfig,
    rng: &mut SeededRng,
) -> Result<Stages> {
    cfg.validate()?;
    render.validate()?;
    let viewpoints = match &cfg.views {
        ViewSelection::Random(n) => sample_viewpoints(*n, rng)?,
        ViewSelection::Fixed(v) => v.clone(),
    };
    let rendered = viewpoints
        .par_iter()
        .map(|&vp| source.render(vp, render))
        .collect::<Result<Vec<_>>>()?;
    Ok(Stages { viewpoints, rendered })
}

/// Crops each rendered view, dropping views with no geometry. Fails only if
/// every view is empty.
pub fn crop_all(stages: Stages) -> Result<(Vec<ViewpointId>, Vec<Raster>)> {
    let mut vps = Vec::new();
    let mut crops = Vec::new();
    for (vp, img) in stages.viewpoints.into_iter().zip(stages.rendered) {
        match crop_background(&img) {
            Ok(c) => {
                vps.push(vp);
                crops.push(c.into_pixels());
            }
            Err(Error::EmptyProjection) => log::warn!("projection {vp} is empty; skipped"),
            Err(e) => return Err(e),
        }
    }
    if crops.is_empty() {
        return Err(Error::EmptyProjection);
    }
    Ok((vps, crops))
}

/// Turns cropped projections into canvases. Offsets for every projection are
/// drawn first, in order; the copies then run in parallel.
pub fn patch_all(crops: Vec<Raster>, cfg: &SamplingConfig, rng: &mut SeededRng) -> Result<(Vec<Raster>, Vec<Vec<PatchOrigin>>)> {
    let grid = cfg.grid;
    match cfg.mode {
        PatchMode::GridMiniPatch => {
            let sized: Vec<Raster> = crops.par_iter().map(|c| upscale_to_fit(c, &grid)).collect();
            let plans = sized
                .iter()
                .map(|img| plan_patches(img.width(), img.height(), &grid, rng))
                .collect::<Result<Vec<_>>>()?;
            let canvases = sized
                .par_iter()
                .zip(&plans)
                .map(|(img, plan)| splice_patches(img, &grid, plan))
                .collect();
            Ok((canvases, plans))
        }
        PatchMode::Resize => {
            let (w, h) = grid.canvas_dims();
            let canvases = crops.par_iter().map(|c| c.resize_bilinear(w, h)).collect();
            Ok((canvases, vec![Vec::new(); crops.len()]))
        }
    }
}

/// Full sampling pipeline for one model: viewpoint draw, lazy rendering,
/// cropping, upscaling where needed, and per-projection patch sampling.
pub fn sample_projection_set<S: ProjectionSource + ?Sized>(
    source: &S,
    cfg: &SamplingConfig,
    render: &RenderConfig,
    rng: &mut SeededRng,
) -> Result<SampledProjectionSet> {
    let stages = select_and_render(source, cfg, render, rng)?;
    let (viewpoints, crops) = crop_all(stages)?;
    let (canvases, origins) = patch_all(crops, cfg, rng)?;
    Ok(SampledProjectionSet {
        canvases,
        viewpoints,
        seed: rng.seed(),
        grid: cfg.grid,
        mode: cfg.mode,
        origins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub viewpoint: ViewpointId,
    /// Relative to the manifest's directory.
    pub canvas_path: String,
}

/// File contract between the sampler and feature backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_id: String,
    pub seed: u64,
    pub grid: GridSpec,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes each canvas as PNG plus `manifest.json` into `dir`.
pub fn export_set(set: &SampledProjectionSet, model_id: &str, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(set.len());
    for (i, (canvas, vp)) in set.canvases.iter().zip(&set.viewpoints).enumerate() {
        let name = format!("canvas_{i:02}_{}.png", vp.as_str().replace('+', "p").replace('-', "n"));
        canvas.save_png(&dir.join(&name))?;
        entries.push(ManifestEntry {
            viewpoint: *vp,
            canvas_path: name,
        });
    }
    let manifest = Manifest {
        model_id: model_id.to_string(),
        seed: set.seed,
        grid: set.grid,
        entries,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::PointCloud;
    use crate::projection::RenderCounter;
    use proptest::prelude::*;
    use rand::Rng;

    fn noise_image(w: usize, h: usize, seed: u64) -> Raster {
        let mut rng = SeededRng::new(seed);
        Raster::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
    }

    #[test]
    fn full_draw_covers_all_views() {
        let mut rng = SeededRng::new(1);
        let mut v = sample_viewpoints(6, &mut rng).unwrap();
        v.sort();
        assert_eq!(v, ViewpointId::ALL.to_vec());
        assert!(sample_viewpoints(0, &mut rng).is_err());
        assert!(sample_viewpoints(7, &mut rng).is_err());
    }

    #[test]
    fn identity_when_cells_equal_patches() {
        let img = noise_image(224, 224, 5);
        let out = grid_mini_patch(&img, &GridSpec::default(), &mut SeededRng::new(9)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn too_small_image_rejected() {
        let img = noise_image(100, 100, 5);
        let err = grid_mini_patch(&img, &GridSpec::default(), &mut SeededRng::new(9)).unwrap_err();
        assert!(err.to_string().starts_with("image too small for grid"), "{err}");
        // One dimension short is enough to fail.
        let img = noise_image(300, 200, 5);
        assert!(grid_mini_patch(&img, &GridSpec::default(), &mut SeededRng::new(9)).is_err());
    }

    #[test]
    fn pure_copy_with_offsets() {
        let img = noise_image(448, 448, 17);
        let grid = GridSpec::default();
        let (out, plan) = grid_mini_patch_tracked(&img, &grid, &mut SeededRng::new(3)).unwrap();
        assert_eq!(out.dims(), (224, 224));
        assert_eq!(plan.len(), 49);
        for o in &plan {
            // Window stays inside its cell.
            assert!(o.x >= o.col * 64 && o.x + 32 <= (o.col + 1) * 64);
            assert!(o.y >= o.row * 64 && o.y + 32 <= (o.row + 1) * 64);
            for dy in 0..32 {
                for dx in 0..32 {
                    assert_eq!(out.get(o.col * 32 + dx, o.row * 32 + dy), img.get(o.x + dx, o.y + dy));
                }
            }
        }
    }

    #[test]
    fn grid_parsing() {
        assert_eq!("7x7x32".parse::<GridSpec>().unwrap(), GridSpec::default());
        assert_eq!("4X8x16".parse::<GridSpec>().unwrap().canvas_dims(), (128, 64));
        assert!("7x7".parse::<GridSpec>().is_err());
        assert!("0x7x32".parse::<GridSpec>().is_err());
    }

    #[test]
    fn upscale_reaches_minimum_size() {
        let grid = GridSpec::default();
        let img = noise_image(50, 20, 1);
        let up = upscale_to_fit(&img, &grid);
        assert!(up.width() >= 224 && up.height() >= 224);
        // Aspect ratio is kept, so the short side decides the scale.
        assert_eq!(up.height(), 224);
        assert_eq!(up.width(), 560);
        let big = noise_image(300, 400, 2);
        assert_eq!(upscale_to_fit(&big, &grid), big);
    }

    fn two_color_cloud() -> PointCloud {
        let mut rng = SeededRng::new(44);
        let n = 3000;
        let pos = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let col = (0..n).map(|i| if i % 2 == 0 { [0.2, 0.4, 0.6] } else { [0.9, 0.1, 0.0] }).collect();
        PointCloud::new(pos, col).unwrap()
    }

    fn small_render() -> RenderConfig {
        RenderConfig {
            viewport: 256,
            ..RenderConfig::default()
        }
    }

    #[test]
    fn set_renders_only_selected_views() {
        let cloud = two_color_cloud();
        let counter = RenderCounter::new(&cloud);
        let cfg = SamplingConfig::random(2, GridSpec::default());
        let set = sample_projection_set(&counter, &cfg, &small_render(), &mut SeededRng::new(8)).unwrap();
        assert_eq!(counter.calls(), 2);
        assert_eq!(set.len(), 2);
        assert_eq!(counter.rendered().len(), 2);
        for c in &set.canvases {
            assert_eq!(c.dims(), (224, 224));
        }
    }

    #[test]
    fn set_is_deterministic_per_seed() {
        let cloud = two_color_cloud();
        let cfg = SamplingConfig::random(5, GridSpec::default());
        let a = sample_projection_set(&cloud, &cfg, &small_render(), &mut SeededRng::new(21)).unwrap();
        let b = sample_projection_set(&cloud, &cfg, &small_render(), &mut SeededRng::new(21)).unwrap();
        assert_eq!(a, b);
        let c = sample_projection_set(&cloud, &cfg, &small_render(), &mut SeededRng::new(22)).unwrap();
        assert_ne!(a.canvases, c.canvases);
    }

    #[test]
    fn resize_mode_and_fixed_views() {
        let cloud = two_color_cloud();
        let cfg = SamplingConfig {
            views: ViewSelection::Fixed(vec![ViewpointId::NegY, ViewpointId::PosX]),
            grid: GridSpec::default(),
            mode: PatchMode::Resize,
        };
        let set = sample_projection_set(&cloud, &cfg, &small_render(), &mut SeededRng::new(1)).unwrap();
        assert_eq!(set.viewpoints, vec![ViewpointId::NegY, ViewpointId::PosX]);
        assert!(set.canvases.iter().all(|c| c.dims() == (224, 224)));
        let dup = SamplingConfig {
            views: ViewSelection::Fixed(vec![ViewpointId::PosX, ViewpointId::PosX]),
            ..cfg
        };
        assert!(sample_projection_set(&cloud, &dup, &small_render(), &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn manifest_export() {
        let cloud = two_color_cloud();
        let cfg = SamplingConfig::random(2, GridSpec::default());
        let set = sample_projection_set(&cloud, &cfg, &small_render(), &mut SeededRng::new(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = export_set(&set, "cloud-1", dir.path()).unwrap();
        let m = Manifest::read(&path).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.seed, 8);
        assert_eq!(m.grid, GridSpec::default());
        for (e, canvas) in m.entries.iter().zip(&set.canvases) {
            assert_eq!(Raster::load(&dir.path().join(&e.canvas_path)).unwrap().to_rgb8(), canvas.to_rgb8());
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn canvas_dims_law(rows in 1usize..6, cols in 1usize..6, patch in 1usize..12,
                           extra_w in 0usize..40, extra_h in 0usize..40, seed in any::<u64>()) {
            let grid = GridSpec::new(rows, cols, patch).unwrap();
            let img = noise_image(cols * patch + extra_w, rows * patch + extra_h, seed);
            let mut rng = SeededRng::new(seed);
            let (out, plan) = grid_mini_patch_tracked(&img, &grid, &mut rng).unwrap();
            prop_assert_eq!(out.dims(), (cols * patch, rows * patch));
            for o in plan {
                prop_assert_eq!(out.get(o.col * patch, o.row * patch), img.get(o.x, o.y));
            }
        }
    }
}
