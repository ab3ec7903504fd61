//! Harmonic inpainting: mask pixels solve the 4-neighbour discrete Laplace
//! equation with Dirichlet data taken from the surrounding pixels.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::LinearInpainter;
use crate::error::{check_len, Error, Result};
use crate::image::{Image, StructureMask};
use crate::operators::{LinearOperator, OperatorKind};

fn neighbours4(n: usize, k: usize) -> impl Iterator<Item = usize> {
    let (i, j) = (k / n, k % n);
    [
        (i > 0).then(|| k - n),
        (i + 1 < n).then(|| k + n),
        (j > 0).then(|| k - 1),
        (j + 1 < n).then(|| k + 1),
    ]
    .into_iter()
    .flatten()
}

/// Exact harmonic inpainter: the masked Laplacian is factored once, so
/// `apply` and `adjoint` are direct solves and the operator is linear to
/// rounding.
///
/// At the image border only in-grid neighbours enter the stencil.
#[derive(Debug, Clone)]
pub struct HarmonicInpainter {
    mask: StructureMask,
    chol: Option<Cholesky<f64, Dyn>>,
    /// For each mask pixel (in index order), complement neighbour positions
    /// in the complement list.
    boundary: Vec<Vec<usize>>,
}

impl HarmonicInpainter {
    pub fn new(mask: &StructureMask) -> Result<Self> {
        let n = mask.n();
        if mask.complement_set().is_empty() {
            return Err(Error::DegenerateStructure(
                "mask covers the whole image; nothing to inpaint from".into(),
            ));
        }
        let nm = mask.n_m();
        let mut mask_pos = vec![usize::MAX; n * n];
        for (p, &k) in mask.index_set().iter().enumerate() {
            mask_pos[k] = p;
        }
        let mut comp_pos = vec![usize::MAX; n * n];
        for (p, &k) in mask.complement_set().iter().enumerate() {
            comp_pos[k] = p;
        }
        let mut a = DMatrix::<f64>::zeros(nm, nm);
        let mut boundary = Vec::with_capacity(nm);
        for (r, &k) in mask.index_set().iter().enumerate() {
            let mut b = Vec::new();
            for q in neighbours4(n, k) {
                a[(r, r)] += 1.0;
                if mask.contains(q) {
                    a[(r, mask_pos[q])] -= 1.0;
                } else {
                    b.push(comp_pos[q]);
                }
            }
            boundary.push(b);
        }
        let chol = if nm == 0 {
            None
        } else {
            Some(Cholesky::new(a).ok_or_else(|| {
                Error::DegenerateStructure("masked Laplacian is singular".into())
            })?)
        };
        Ok(Self {
            mask: mask.clone(),
            chol,
            boundary,
        })
    }
}

impl LinearInpainter for HarmonicInpainter {
    fn inpaint_mask(&self) -> &StructureMask {
        &self.mask
    }
}

impl LinearOperator for HarmonicInpainter {
    type Scalar = f64;

    fn kind(&self) -> OperatorKind {
        OperatorKind::Composite
    }
    fn in_len(&self) -> usize {
        self.mask.complement_set().len()
    }
    fn out_len(&self) -> usize {
        self.mask.n_m()
    }

    fn apply(&self, comp: &[f64]) -> Result<Vec<f64>> {
        check_len("HarmonicInpainter::apply", self.in_len(), comp.len())?;
        let Some(chol) = &self.chol else {
            return Ok(Vec::new());
        };
        let rhs = DVector::from_iterator(
            self.boundary.len(),
            self.boundary.iter().map(|b| b.iter().map(|&p| comp[p]).sum::<f64>()),
        );
        Ok(chol.solve(&rhs).iter().copied().collect())
    }

    fn adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("HarmonicInpainter::adjoint", self.out_len(), u.len())?;
        let mut out = vec![0.0; self.in_len()];
        let Some(chol) = &self.chol else {
            return Ok(out);
        };
        let w = chol.solve(&DVector::from_column_slice(u));
        for (b, &wr) in self.boundary.iter().zip(w.iter()) {
            for &p in b {
                out[p] += wr;
            }
        }
        Ok(out)
    }
}

/// Jacobi iteration for the same Laplace problem, stopping once the largest
/// update falls below `tol`. Complement pixels are copied verbatim.
pub fn harmonic_inpaint(x: &Image, mask: &StructureMask, tol: f64) -> Result<Image> {
    mask.check_image(x, "harmonic_inpaint")?;
    if !mask.is_empty() && mask.complement_set().is_empty() {
        return Err(Error::DegenerateStructure(
            "mask covers the whole image; nothing to inpaint from".into(),
        ));
    }
    let n = x.n();
    let mut cur = x.as_slice().to_vec();
    for &k in mask.index_set() {
        cur[k] = 0.0;
    }
    let mut next = cur.clone();
    let max_sweeps = 1_000_000;
    for _ in 0..max_sweeps {
        let mut delta: f64 = 0.0;
        for &k in mask.index_set() {
            let (mut s, mut d) = (0.0, 0.0);
            for q in neighbours4(n, k) {
                s += cur[q];
                d += 1.0;
            }
            let v = s / d;
            delta = delta.max((v - cur[k]).abs());
            next[k] = v;
        }
        std::mem::swap(&mut cur, &mut next);
        if delta < tol {
            return Image::new(n, cur);
        }
    }
    Err(Error::Divergence {
        iteration: max_sweeps,
        what: "Jacobi sweeps did not reach tolerance".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inpaint::Inpainter;

    #[test]
    fn constant_and_ramp_are_preserved() {
        let mask = StructureMask::disk(12, 6.0, 5.0, 3.0).unwrap();
        let g = HarmonicInpainter::new(&mask).unwrap();
        let c = Image::from_fn(12, |_, _| 0.4);
        let gc = Inpainter::apply(&g, &c).unwrap();
        assert!(gc.distance(&c) < 1e-12);
        let ramp = Image::from_fn(12, |i, j| 0.02 * i as f64 - 0.03 * j as f64 + 0.5);
        let gr = Inpainter::apply(&g, &ramp).unwrap();
        assert!(gr.distance(&ramp) < 1e-8);
        let jr = harmonic_inpaint(&ramp, &mask, 1e-10).unwrap();
        assert!(jr.distance(&ramp) < 1e-8);
    }

    #[test]
    fn single_pixel_is_four_neighbour_mean() {
        let mask = StructureMask::from_indices(5, &[12]).unwrap();
        let x = Image::from_fn(5, |i, j| (i * i + 3 * j) as f64);
        let expect = (x.get(1, 2) + x.get(3, 2) + x.get(2, 1) + x.get(2, 3)) / 4.0;
        let g = HarmonicInpainter::new(&mask).unwrap();
        assert!((Inpainter::apply(&g, &x).unwrap().get(2, 2) - expect).abs() < 1e-12);
        assert!((harmonic_inpaint(&x, &mask, 1e-12).unwrap().get(2, 2) - expect).abs() < 1e-12);
    }

    #[test]
    fn direct_and_jacobi_agree() {
        let mask = StructureMask::rectangle(16, 4, 5, 6, 4).unwrap();
        let x = Image::from_fn(16, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let g = HarmonicInpainter::new(&mask).unwrap();
        let a = Inpainter::apply(&g, &x).unwrap();
        let b = harmonic_inpaint(&x, &mask, 1e-13).unwrap();
        assert!(a.distance(&b) < 1e-9);
        for &k in mask.complement_set() {
            assert_eq!(a.as_slice()[k], x.as_slice()[k]);
            assert_eq!(b.as_slice()[k], x.as_slice()[k]);
        }
    }
}
