//! Wireframe object models.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Line3D, Vec3};

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("line {line} references vertex {vertex}, model has {count}")]
    IndexOutOfRange { line: usize, vertex: usize, count: usize },
    #[error("line {0} has coincident endpoints")]
    DegenerateLine(usize),
    #[error("face {0} needs at least 3 vertices")]
    FaceTooSmall(usize),
    #[error("face {0} is not planar")]
    NonPlanarFace(usize),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Vertices (meters, model frame), line segments as vertex-index pairs and
/// optional planar faces used for self-occlusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    pub vertices: Vec<[f64; 3]>,
    pub lines: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faces: Vec<Vec<usize>>,
}

impl ObjectModel {
    pub fn new(vertices: Vec<Vec3>, lines: Vec<[usize; 2]>, faces: Vec<Vec<usize>>) -> Result<Self, ModelError> {
        let model = Self { vertices: vertices.iter().map(|v| [v.x, v.y, v.z]).collect(), lines, faces };
        model.validate()?;
        Ok(model)
    }

    /// Builds a faceless model from explicit segments.
    pub fn from_segments(segments: &[(Vec3, Vec3)]) -> Result<Self, ModelError> {
        let mut vertices = Vec::with_capacity(segments.len() * 2);
        let mut lines = Vec::with_capacity(segments.len());
        for (a, b) in segments {
            lines.push([vertices.len(), vertices.len() + 1]);
            vertices.push(*a);
            vertices.push(*b);
        }
        Self::new(vertices, lines, vec![])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let count = self.vertices.len();
        for (i, l) in self.lines.iter().enumerate() {
            for &v in l {
                if v >= count {
                    return Err(ModelError::IndexOutOfRange { line: i, vertex: v, count });
                }
            }
            if (self.vertex(l[0]) - self.vertex(l[1])).norm() < 1e-12 {
                return Err(ModelError::DegenerateLine(i));
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.len() < 3 {
                return Err(ModelError::FaceTooSmall(i));
            }
            if let Some(&v) = f.iter().find(|&&v| v >= count) {
                return Err(ModelError::IndexOutOfRange { line: i, vertex: v, count });
            }
            let (n, d) = self.face_plane(i).ok_or(ModelError::NonPlanarFace(i))?;
            if f.iter().any(|&v| (n.dot(&self.vertex(v)) - d).abs() > 1e-6) {
                return Err(ModelError::NonPlanarFace(i));
            }
        }
        Ok(())
    }

    pub fn vertex(&self, i: usize) -> Vec3 {
        Vec3::from(self.vertices[i])
    }

    pub fn line(&self, i: usize) -> Line3D {
        let [a, b] = self.lines[i];
        Line3D::new(self.vertex(a), self.vertex(b)).expect("validated model line")
    }

    pub fn line_segments(&self) -> Vec<Line3D> {
        (0..self.lines.len()).map(|i| self.line(i)).collect()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    /// Unit normal and offset (`n . x = d`) of a face, via Newell's method.
    pub fn face_plane(&self, i: usize) -> Option<(Vec3, f64)> {
        let f = &self.faces[i];
        let mut n = Vec3::zeros();
        let mut centroid = Vec3::zeros();
        for (a, b) in f.iter().zip(f.iter().cycle().skip(1)) {
            let (p, q) = (self.vertex(*a), self.vertex(*b));
            n += Vec3::new((p.y - q.y) * (p.z + q.z), (p.z - q.z) * (p.x + q.x), (p.x - q.x) * (p.y + q.y));
            centroid += p;
        }
        let norm = n.norm();
        if norm < 1e-12 {
            return None;
        }
        let n = n / norm;
        Some((n, n.dot(&(centroid / f.len() as f64))))
    }

    /// Faces as triangle fans, in model coordinates.
    pub fn face_triangles(&self) -> Vec<[Vec3; 3]> {
        let mut tris = Vec::new();
        for f in &self.faces {
            for w in 1..f.len() - 1 {
                tris.push([self.vertex(f[0]), self.vertex(f[w]), self.vertex(f[w + 1])]);
            }
        }
        tris
    }

    pub fn centroid(&self) -> Vec3 {
        let sum: Vec3 = self.vertices.iter().map(|v| Vec3::from(*v)).sum();
        sum / self.vertices.len().max(1) as f64
    }

    /// Axis-aligned cube of the given side, centered at the origin, with
    /// its 12 edges and 6 faces (outward winding).
    pub fn cube(side: f64) -> Self {
        let h = side / 2.0;
        let vertices: Vec<Vec3> = (0..8)
            .map(|i| {
                let s = |bit: usize| if i & bit != 0 { h } else { -h };
                Vec3::new(s(1), s(2), s(4))
            })
            .collect();
        let mut lines = Vec::new();
        for a in 0..8usize {
            for bit in [1usize, 2, 4] {
                if a & bit == 0 {
                    lines.push([a, a | bit]);
                }
            }
        }
        let faces = vec![
            vec![0, 2, 6, 4],
            vec![1, 5, 7, 3],
            vec![0, 4, 5, 1],
            vec![2, 3, 7, 6],
            vec![0, 1, 3, 2],
            vec![4, 6, 7, 5],
        ];
        let mut cube = Self::new(vertices, lines, faces).expect("cube is valid");
        for i in 0..cube.faces.len() {
            if cube.face_plane(i).is_some_and(|(_, d)| d < 0.0) {
                cube.faces[i].reverse();
            }
        }
        cube
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self, ModelError> {
        let model: Self = serde_json::from_reader(reader)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }
}
