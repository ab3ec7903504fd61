//! Greedy onion-peel inpainting: fill the mask from its rim inwards, each
//! pixel taking the mean of its already-known 8-neighbours.

use std::collections::VecDeque;

use super::LinearInpainter;
use crate::error::{check_len, Error, Result};
use crate::image::StructureMask;
use crate::operators::{LinearOperator, OperatorKind};

#[derive(Debug, Clone, PartialEq)]
pub struct PeelStep {
    /// Flat pixel index being filled.
    pub target: usize,
    /// Flat indices of the neighbours it averages (complement pixels or earlier targets).
    pub contributors: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OnionInpainter {
    mask: StructureMask,
    schedule: Vec<PeelStep>,
    /// Position of each flat pixel in the complement list, or `usize::MAX`.
    comp_pos: Vec<usize>,
}

fn neighbours8(n: usize, k: usize) -> impl Iterator<Item = usize> {
    let (i, j) = ((k / n) as isize, (k % n) as isize);
    (-1isize..=1)
        .flat_map(move |di| (-1isize..=1).map(move |dj| (di, dj)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |(di, dj)| {
            let (a, b) = (i + di, j + dj);
            (a >= 0 && b >= 0 && (a as usize) < n && (b as usize) < n).then(|| a as usize * n + b as usize)
        })
}

/// Chebyshev distance of every pixel to the nearest complement pixel.
fn chebyshev_depth(mask: &StructureMask) -> Vec<usize> {
    let n = mask.n();
    let mut depth = vec![usize::MAX; n * n];
    let mut queue = VecDeque::new();
    for &k in mask.complement_set() {
        depth[k] = 0;
        queue.push_back(k);
    }
    while let Some(k) = queue.pop_front() {
        for q in neighbours8(n, k) {
            if depth[q] == usize::MAX {
                depth[q] = depth[k] + 1;
                queue.push_back(q);
            }
        }
    }
    depth
}

/// Orders mask pixels by Chebyshev distance to the complement (ties by flat
/// index) and averages already-resolved 8-neighbours.
pub fn build_onion_inpainter(mask: &StructureMask) -> Result<OnionInpainter> {
    let n = mask.n();
    if mask.complement_set().is_empty() {
        return Err(Error::DegenerateStructure(
            "mask covers the whole image; nothing to inpaint from".into(),
        ));
    }
    let depth = chebyshev_depth(mask);
    let mut order: Vec<usize> = mask.index_set().to_vec();
    order.sort_by_key(|&k| (depth[k], k));

    let mut resolved: Vec<bool> = mask.pixels().iter().map(|&p| !p).collect();
    let mut schedule = Vec::with_capacity(order.len());
    for &t in &order {
        let contributors: Vec<usize> = neighbours8(n, t).filter(|&q| resolved[q]).collect();
        if contributors.is_empty() {
            return Err(Error::DegenerateStructure(format!(
                "mask pixel {t} has no resolved neighbour"
            )));
        }
        let w = 1.0 / contributors.len() as f64;
        schedule.push(PeelStep {
            target: t,
            weights: vec![w; contributors.len()],
            contributors,
        });
        resolved[t] = true;
    }

    let mut comp_pos = vec![usize::MAX; n * n];
    for (p, &k) in mask.complement_set().iter().enumerate() {
        comp_pos[k] = p;
    }
    Ok(OnionInpainter {
        mask: mask.clone(),
        schedule,
        comp_pos,
    })
}

impl OnionInpainter {
    pub fn schedule(&self) -> &[PeelStep] {
        &self.schedule
    }
}

impl LinearInpainter for OnionInpainter {
    fn inpaint_mask(&self) -> &StructureMask {
        &self.mask
    }
}

impl LinearOperator for OnionInpainter {
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
        check_len("OnionInpainter::apply", self.in_len(), comp.len())?;
        let mut full = vec![0.0; self.comp_pos.len()];
        for (&k, &v) in self.mask.complement_set().iter().zip(comp) {
            full[k] = v;
        }
        for step in &self.schedule {
            full[step.target] = step
                .contributors
                .iter()
                .zip(&step.weights)
                .map(|(&c, &w)| w * full[c])
                .sum();
        }
        Ok(self.mask.index_set().iter().map(|&k| full[k]).collect())
    }

    fn adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("OnionInpainter::adjoint", self.out_len(), u.len())?;
        let mut acc = vec![0.0; self.comp_pos.len()];
        for (&k, &v) in self.mask.index_set().iter().zip(u) {
            acc[k] = v;
        }
        for step in self.schedule.iter().rev() {
            let a = acc[step.target];
            for (&c, &w) in step.contributors.iter().zip(&step.weights) {
                acc[c] += w * a;
            }
        }
        let mut out = vec![0.0; self.in_len()];
        for (k, &a) in acc.iter().enumerate() {
            let p = self.comp_pos[k];
            if p != usize::MAX {
                out[p] = a;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::inpaint::Inpainter;

    #[test]
    fn empty_mask_is_identity() {
        let g = build_onion_inpainter(&StructureMask::empty(5)).unwrap();
        let x = Image::from_fn(5, |i, j| (i * 5 + j) as f64);
        assert_eq!(Inpainter::apply(&g, &x).unwrap(), x);
    }

    #[test]
    fn single_pixel_takes_neighbour_value() {
        let mask = StructureMask::from_indices(5, &[12]).unwrap();
        let g = build_onion_inpainter(&mask).unwrap();
        let mut x = Image::from_fn(5, |_, _| 0.3);
        x.as_mut_slice()[12] = 9.0;
        let y = Inpainter::apply(&g, &x).unwrap();
        assert!((y.as_slice()[12] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_well_formed() {
        let mask = StructureMask::disk(16, 7.0, 8.0, 4.0).unwrap();
        let g = build_onion_inpainter(&mask).unwrap();
        let mut seen = vec![false; 256];
        for s in g.schedule() {
            assert!(mask.contains(s.target));
            assert!(!seen[s.target]);
            for &c in &s.contributors {
                assert!(!mask.contains(c) || seen[c]);
            }
            assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            seen[s.target] = true;
        }
        assert_eq!(seen.iter().filter(|&&b| b).count(), mask.n_m());
    }

    #[test]
    fn full_mask_is_rejected() {
        let mask = StructureMask::from_pixels(3, vec![true; 9]).unwrap();
        assert!(build_onion_inpainter(&mask).is_err());
    }
}
