use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major raster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

/// Per-pixel depth in meters, 0 where there is no return.
pub type DepthImage = Image<f64>;

pub type Mask = Image<bool>;

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Image<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: T) {
        let w = self.width;
        self.data[row * w + col] = value;
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Indices of the up-to-8 neighbours of `index` inside the image.
    #[inline]
    pub fn neighbors8(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let (x, y) = self.coords(index);
        let (w, h) = (self.width as isize, self.height as isize);
        NEIGHBORS8.iter().filter_map(move |&(dx, dy)| {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            (nx >= 0 && ny >= 0 && nx < w && ny < h).then(|| ny as usize * self.width + nx as usize)
        })
    }
}

pub const NEIGHBORS8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

impl DepthImage {
    /// Validated depth image: every value finite and non-negative.
    pub fn depth(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidImage("depth must be finite and non-negative".into()));
        }
        Image::from_vec(width, height, data)
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}
