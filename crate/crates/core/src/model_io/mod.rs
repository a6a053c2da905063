//! In-memory 3D models and their loaders.
//!
//! Point clouds come from PLY (ASCII or binary little-endian), textured meshes
//! from OBJ + MTL with a PNG or JPEG texture. Loaded models are immutable.

mod obj;
mod ply;

use std::path::Path;

pub use obj::{load_textured_mesh, parse_obj};
pub use ply::{load_point_cloud, parse_ply, write_ply_ascii, write_ply_binary};

use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb};

pub type Vec3 = [f32; 3];

/// Colored point cloud. Colors are normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Vec3>,
    colors: Vec<Rgb>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, colors: Vec<Rgb>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidModel("point cloud has no points".into()));
        }
        if positions.len() != colors.len() {
            return Err(Error::InvalidModel(format!(
                "{} positions but {} colors",
                positions.len(),
                colors.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidModel(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { positions, colors })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Triangle referencing vertex and uv indices (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [u32; 3],
    pub uvs: [u32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TexturedMesh {
    vertices: Vec<Vec3>,
    uvs: Vec<[f32; 2]>,
    faces: Vec<Triangle>,
    texture: Raster,
}

impl TexturedMesh {
    pub fn new(vertices: Vec<Vec3>, uvs: Vec<[f32; 2]>, faces: Vec<Triangle>, texture: Raster) -> Result<Self> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(Error::InvalidModel("mesh has no vertices or no faces".into()));
        }
        if texture.width() == 0 || texture.height() == 0 {
            return Err(Error::Texture("texture is empty".into()));
        }
        if let Some(i) = vertices.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidModel(format!("vertex {i} has a non-finite coordinate")));
        }
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                if f.vertices[k] as usize >= vertices.len() {
                    return Err(Error::IndexOutOfRange(format!(
                        "face {fi} references vertex {} of {}",
                        f.vertices[k] + 1,
                        vertices.len()
                    )));
                }
                if f.uvs[k] as usize >= uvs.len() {
                    return Err(Error::IndexOutOfRange(format!(
                        "face {fi} references uv {} of {}",
                        f.uvs[k] + 1,
                        uvs.len()
                    )));
                }
            }
        }
        Ok(TexturedMesh {
            vertices,
            uvs,
            faces,
            texture,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn uvs(&self) -> &[[f32; 2]] {
        &self.uvs
    }

    pub fn faces(&self) -> &[Triangle] {
        &self.faces
    }

    pub fn texture(&self) -> &Raster {
        &self.texture
    }
}

/// Axis-aligned bounding box; `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Result<Aabb> {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for p in points {
            any = true;
            for k in 0..3 {
                let v = p[k] as f64;
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        if !any {
            return Err(Error::InvalidModel("bounding box of an empty model".into()));
        }
        Ok(Aabb { min, max })
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn is_point(&self) -> bool {
        self.extent().iter().all(|&e| e == 0.0)
    }
}

/// Either kind of supported 3D model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    PointCloud(PointCloud),
    Mesh(TexturedMesh),
}

impl Model {
    /// Loads a model, choosing the parser by file extension.
    pub fn load(path: &Path) -> Result<Model> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "ply" => Ok(Model::PointCloud(load_point_cloud(path)?)),
            "obj" => Ok(Model::Mesh(load_textured_mesh(path)?)),
            other => Err(Error::UnsupportedFormat(format!(
                "`{}`: expected .ply or .obj, got `.{other}`",
                path.display()
            ))),
        }
    }

    pub fn bounding_box(&self) -> Result<Aabb> {
        bounding_box(self)
    }

    /// Point count for clouds, vertex count for meshes.
    pub fn size(&self) -> usize {
        match self {
            Model::PointCloud(c) => c.len(),
            Model::Mesh(m) => m.vertices().len(),
        }
    }
}

impl From<PointCloud> for Model {
    fn from(c: PointCloud) -> Self {
        Model::PointCloud(c)
    }
}

impl From<TexturedMesh> for Model {
    fn from(m: TexturedMesh) -> Self {
        Model::Mesh(m)
    }
}

pub fn bounding_box(model: &Model) -> Result<Aabb> {
    match model {
        Model::PointCloud(c) => Aabb::from_points(c.positions()),
        Model::Mesh(m) => Aabb::from_points(m.vertices()),
    }
}
