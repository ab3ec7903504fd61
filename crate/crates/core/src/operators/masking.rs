//! Restriction to (or away from) a structure mask, and its adjoint embedding.

use super::{LinearOperator, OperatorKind};
use crate::error::{check_len, Result};
use crate::image::{Image, StructureMask};

/// `M x = (x_j)_{j in I_M}`; with `complement = true`, `M^c x`.
#[derive(Debug, Clone)]
pub struct MaskingOperator {
    n_pixels: usize,
    indices: Vec<usize>,
    complement: bool,
}

impl MaskingOperator {
    pub fn structure(mask: &StructureMask) -> Self {
        Self {
            n_pixels: mask.pixels().len(),
            indices: mask.index_set().to_vec(),
            complement: false,
        }
    }

    pub fn complement(mask: &StructureMask) -> Self {
        Self {
            n_pixels: mask.pixels().len(),
            indices: mask.complement_set().to_vec(),
            complement: true,
        }
    }

    pub fn is_complement(&self) -> bool {
        self.complement
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl LinearOperator for MaskingOperator {
    type Scalar = f64;

    fn kind(&self) -> OperatorKind {
        OperatorKind::Masking
    }

    fn in_len(&self) -> usize {
        self.n_pixels
    }

    fn out_len(&self) -> usize {
        self.indices.len()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("MaskingOperator::apply", self.n_pixels, x.len())?;
        Ok(self.indices.iter().map(|&k| x[k]).collect())
    }

    fn adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("MaskingOperator::adjoint", self.indices.len(), v.len())?;
        let mut out = vec![0.0; self.n_pixels];
        for (&k, &val) in self.indices.iter().zip(v) {
            out[k] = val;
        }
        Ok(out)
    }
}

/// Masked pixels of `x`, in index order.
pub fn restrict(mask: &StructureMask, x: &Image) -> Result<Vec<f64>> {
    mask.check_image(x, "restrict")?;
    Ok(mask.index_set().iter().map(|&k| x.as_slice()[k]).collect())
}

/// Non-masked pixels of `x`, in index order.
pub fn restrict_complement(mask: &StructureMask, x: &Image) -> Result<Vec<f64>> {
    mask.check_image(x, "restrict_complement")?;
    Ok(mask
        .complement_set()
        .iter()
        .map(|&k| x.as_slice()[k])
        .collect())
}

/// Scatters `u` into the masked pixels of a zero image (`M^T u`).
pub fn embed(mask: &StructureMask, u: &[f64]) -> Result<Image> {
    check_len("embed", mask.n_m(), u.len())?;
    let mut out = Image::zeros(mask.n());
    for (&k, &v) in mask.index_set().iter().zip(u) {
        out.as_mut_slice()[k] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn sample_mask() -> StructureMask {
        StructureMask::from_indices(5, &[3, 7, 8, 12, 20]).unwrap()
    }

    #[test]
    fn restrict_embed_round_trip() {
        let m = sample_mask();
        let u = vec![1.0, -2.0, 3.0, 0.5, 9.0];
        assert_eq!(restrict(&m, &embed(&m, &u).unwrap()).unwrap(), u);
    }

    #[test]
    fn mask_and_complement_partition_pixels() {
        let m = sample_mask();
        let x = Image::from_fn(5, |i, j| (i * 5 + j) as f64);
        let mut seen: Vec<f64> = restrict(&m, &x).unwrap();
        seen.extend(restrict_complement(&m, &x).unwrap());
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(seen, x.as_slice().to_vec());
    }

    #[test]
    fn embedding_is_invisible_to_complement() {
        let m = sample_mask();
        let e = embed(&m, &[1.0; 5]).unwrap();
        assert!(restrict_complement(&m, &e).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn operator_adjoint() {
        let m = sample_mask();
        let x = Image::from_fn(5, |i, j| ((i + 1) * (j + 2)) as f64 * 0.1);
        let u = vec![0.2, -0.4, 1.5, 2.0, -1.0];
        let op = MaskingOperator::structure(&m);
        let lhs = dot(&op.apply(x.as_slice()).unwrap(), &u);
        let rhs = dot(x.as_slice(), &op.adjoint(&u).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(restrict(&m, &Image::zeros(4)).is_err());
    }
}
