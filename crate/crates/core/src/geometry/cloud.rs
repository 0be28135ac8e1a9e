use super::Vec3;
use crate::{Error, Result};

/// 3D points with unit normals, optionally tagged with the image pixel
/// `(row, col)` each point was back-projected from.
#[derive(Clone, Debug, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub pixel_origin: Option<Vec<(u32, u32)>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Vec<Vec3>, pixel_origin: Option<Vec<(u32, u32)>>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::Invariant(format!(
                "{} points but {} normals",
                points.len(),
                normals.len()
            )));
        }
        if let Some(px) = &pixel_origin {
            if px.len() != points.len() {
                return Err(Error::Invariant("pixel origins do not match point count".into()));
            }
        }
        Ok(PointCloud {
            points,
            normals,
            pixel_origin,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points whose index satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        PointCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: idx.iter().map(|&i| self.normals[i]).collect(),
            pixel_origin: self
                .pixel_origin
                .as_ref()
                .map(|px| idx.iter().map(|&i| px[i]).collect()),
        }
    }
}
