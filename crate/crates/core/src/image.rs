//! Square images and binary structure masks.

use crate::error::{check_len, Error, Result};

/// A real-valued `n x n` pixel grid stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    n: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        check_len("Image::new", n * n, data.len())?;
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Side length.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean distance to another image of the same size.
    pub fn distance(&self, other: &Image) -> f64 {
        crate::linalg::distance(&self.data, &other.data)
    }

    pub(crate) fn check_same(&self, other: &Image, context: &'static str) -> Result<()> {
        check_len(context, self.len(), other.len())
    }
}

/// Binary mask identifying a structure of interest, with its sorted index set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureMask {
    n: usize,
    pixels: Vec<bool>,
    index_set: Vec<usize>,
    complement: Vec<usize>,
}

impl StructureMask {
    pub fn from_pixels(n: usize, pixels: Vec<bool>) -> Result<Self> {
        check_len("StructureMask::from_pixels", n * n, pixels.len())?;
        let index_set = (0..pixels.len()).filter(|&k| pixels[k]).collect();
        let complement = (0..pixels.len()).filter(|&k| !pixels[k]).collect();
        Ok(Self {
            n,
            pixels,
            index_set,
            complement,
        })
    }

    /// Builds a mask from flat pixel indices (any order, duplicates ignored).
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut pixels = vec![false; n * n];
        for &k in indices {
            if k >= n * n {
                return Err(Error::Config(format!(
                    "mask index {k} outside a {n}x{n} image"
                )));
            }
            pixels[k] = true;
        }
        Self::from_pixels(n, pixels)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            pixels: vec![false; n * n],
            index_set: Vec::new(),
            complement: (0..n * n).collect(),
        }
    }

    /// Axis-aligned rectangle `rows x cols` with top-left corner `(i0, j0)`.
    pub fn rectangle(n: usize, i0: usize, j0: usize, rows: usize, cols: usize) -> Result<Self> {
        if i0 + rows > n || j0 + cols > n {
            return Err(Error::Config(format!(
                "rectangle ({i0},{j0})+({rows}x{cols}) exceeds {n}x{n} image"
            )));
        }
        let mut idx = Vec::with_capacity(rows * cols);
        for i in i0..i0 + rows {
            for j in j0..j0 + cols {
                idx.push(i * n + j);
            }
        }
        Self::from_indices(n, &idx)
    }

    /// Pixels whose centre lies within `radius` of `(ci, cj)`.
    pub fn disk(n: usize, ci: f64, cj: f64, radius: f64) -> Result<Self> {
        let pixels = (0..n * n)
            .map(|k| {
                let (i, j) = ((k / n) as f64, (k % n) as f64);
                (i - ci).powi(2) + (j - cj).powi(2) <= radius * radius
            })
            .collect();
        Self::from_pixels(n, pixels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn contains(&self, k: usize) -> bool {
        self.pixels[k]
    }

    /// Sorted flat indices of structure pixels.
    pub fn index_set(&self) -> &[usize] {
        &self.index_set
    }

    /// Sorted flat indices of non-structure pixels.
    pub fn complement_set(&self) -> &[usize] {
        &self.complement
    }

    /// Number of structure pixels `N_M`.
    pub fn n_m(&self) -> usize {
        self.index_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_set.is_empty()
    }

    /// Mask as a 0/1 valued image.
    pub fn as_weights(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
    }

    /// Minimum distance (in pixels) from any structure pixel to the image border.
    pub fn border_margin(&self) -> Option<usize> {
        let n = self.n;
        self.index_set
            .iter()
            .map(|&k| {
                let (i, j) = (k / n, k % n);
                i.min(j).min(n - 1 - i).min(n - 1 - j)
            })
            .min()
    }

    pub(crate) fn check_image(&self, x: &Image, context: &'static str) -> Result<()> {
        check_len(context, self.pixels.len(), x.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_sets_partition_pixels() {
        let m = StructureMask::rectangle(6, 1, 2, 2, 3).unwrap();
        assert_eq!(m.n_m(), 6);
        assert_eq!(m.index_set(), &[8, 9, 10, 14, 15, 16]);
        assert_eq!(m.n_m() + m.complement_set().len(), 36);
        assert!(m.index_set().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(m.border_margin(), Some(1));
    }

    #[test]
    fn out_of_range_rectangle_is_rejected() {
        assert!(StructureMask::rectangle(4, 3, 3, 2, 2).is_err());
    }

    #[test]
    fn image_shape_is_checked() {
        assert!(Image::new(3, vec![0.0; 8]).is_err());
        let im = Image::from_fn(3, |i, j| (i * 3 + j) as f64);
        assert_eq!(im.get(2, 1), 7.0);
    }
}
