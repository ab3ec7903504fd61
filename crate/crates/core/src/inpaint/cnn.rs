//! Forward and reverse passes of the gated-convolution inpainting network.
//!
//! `G(x) = (1 - m) x + m F(z)` with `z = [(1 - m) x, m]`. Each layer computes
//! `a = W * h + b` (5x5 correlation, zero padding) and then
//!
//! * conv:  `f = lrelu(a)`
//! * gated: `f = lrelu(a) sigmoid(W_g * h + b_g)`
//!
//! followed by the folded affine `scale f + shift`. The last layer uses the
//! identity in place of `lrelu`.

use super::gdnw::{CnnWeights, LayerKind, KERNEL};
use super::{ForwardPass, Inpainter, InpainterKind};
use crate::error::{Error, Result};
use crate::image::{Image, StructureMask};

struct Layer64 {
    gated: bool,
    in_ch: usize,
    out_ch: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
    gate_weight: Vec<f64>,
    gate_bias: Vec<f64>,
    scale: Vec<f64>,
    shift: Vec<f64>,
}

pub struct CnnInpainter {
    weights: CnnWeights,
    layers: Vec<Layer64>,
    slope: f64,
    mask: StructureMask,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct CnnCache {
    n: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    gate_pre: Vec<Vec<f64>>,
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `out[co] = b[co] + sum_ci w[co, ci] (*) h[ci]`.
fn conv(h: &[f64], in_ch: usize, out_ch: usize, w: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let plane = n * n;
    let r = (KERNEL / 2) as isize;
    let mut out = vec![0.0; out_ch * plane];
    for co in 0..out_ch {
        let o = &mut out[co * plane..(co + 1) * plane];
        o.iter_mut().for_each(|v| *v = b[co]);
        for ci in 0..in_ch {
            let src = &h[ci * plane..(ci + 1) * plane];
            for ky in 0..KERNEL {
                let dy = ky as isize - r;
                let (i0, i1) = ((-dy).max(0) as usize, (n as isize - dy.max(0)) as usize);
                for kx in 0..KERNEL {
                    let wv = w[((co * in_ch + ci) * KERNEL + ky) * KERNEL + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - r;
                    let (j0, j1) = ((-dx).max(0) as usize, (n as isize - dx.max(0)) as usize);
                    for i in i0..i1 {
                        let si = (i as isize + dy) as usize * n;
                        let orow = &mut o[i * n + j0..i * n + j1];
                        let srow = &src[(si as isize + j0 as isize + dx) as usize..(si as isize + j1 as isize + dx) as usize];
                        for (ov, sv) in orow.iter_mut().zip(srow) {
                            *ov += wv * sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`conv`] in its input: accumulates `w^T (*) d` into `dh`.
fn conv_transpose_into(dh: &mut [f64], d: &[f64], in_ch: usize, out_ch: usize, w: &[f64], n: usize) {
    let plane = n * n;
    let r = (KERNEL / 2) as isize;
    for co in 0..out_ch {
        let g = &d[co * plane..(co + 1) * plane];
        for ci in 0..in_ch {
            let dst = &mut dh[ci * plane..(ci + 1) * plane];
            for ky in 0..KERNEL {
                let dy = ky as isize - r;
                let (i0, i1) = ((-dy).max(0) as usize, (n as isize - dy.max(0)) as usize);
                for kx in 0..KERNEL {
                    let wv = w[((co * in_ch + ci) * KERNEL + ky) * KERNEL + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - r;
                    let (j0, j1) = ((-dx).max(0) as usize, (n as isize - dx.max(0)) as usize);
                    for i in i0..i1 {
                        let si = (i as isize + dy) as usize * n;
                        let grow = &g[i * n + j0..i * n + j1];
                        let drow = &mut dst[(si as isize + j0 as isize + dx) as usize..(si as isize + j1 as isize + dx) as usize];
                        for (dv, gv) in drow.iter_mut().zip(grow) {
                            *dv += wv * gv;
                        }
                    }
                }
            }
        }
    }
}

impl CnnInpainter {
    pub fn new(weights: CnnWeights, mask: &StructureMask) -> Result<Self> {
        weights.validate()?;
        let layers = weights
            .layers
            .iter()
            .map(|l| Layer64 {
                gated: l.kind == LayerKind::Gated,
                in_ch: l.in_ch,
                out_ch: l.out_ch,
                weight: widen(&l.weight),
                bias: widen(&l.bias),
                gate_weight: l.gate_weight.as_deref().map(widen).unwrap_or_default(),
                gate_bias: l.gate_bias.as_deref().map(widen).unwrap_or_default(),
                scale: widen(&l.scale),
                shift: widen(&l.shift),
            })
            .collect();
        Ok(Self {
            slope: weights.slope as f64,
            weights,
            layers,
            mask: mask.clone(),
        })
    }

    pub fn weights(&self) -> &CnnWeights {
        &self.weights
    }

    fn act(&self, a: f64, last: bool) -> f64 {
        if last || a > 0.0 {
            a
        } else {
            self.slope * a
        }
    }

    fn act_grad(&self, a: f64, last: bool) -> f64 {
        if last || a > 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    /// Raw network output `F(z)` for an explicit two-channel input.
    pub fn network(&self, z: &[f64], n: usize) -> Result<Vec<f64>> {
        Ok(self.run(z.to_vec(), n)?.0)
    }

    fn run(&self, z: Vec<f64>, n: usize) -> Result<(Vec<f64>, CnnCache)> {
        let plane = n * n;
        crate::error::check_len("CnnInpainter input", 2 * plane, z.len())?;
        let depth = self.layers.len();
        let mut cache = CnnCache {
            n,
            inputs: Vec::with_capacity(depth),
            pre: Vec::with_capacity(depth),
            gate_pre: Vec::with_capacity(depth),
        };
        let mut h = z;
        for (li, l) in self.layers.iter().enumerate() {
            let last = li + 1 == depth;
            let a = conv(&h, l.in_ch, l.out_ch, &l.weight, &l.bias, n);
            let g = if l.gated {
                conv(&h, l.in_ch, l.out_ch, &l.gate_weight, &l.gate_bias, n)
            } else {
                Vec::new()
            };
            let mut out = vec![0.0; a.len()];
            for c in 0..l.out_ch {
                for p in c * plane..(c + 1) * plane {
                    let mut f = self.act(a[p], last);
                    if l.gated {
                        f *= sigmoid(g[p]);
                    }
                    out[p] = l.scale[c] * f + l.shift[c];
                }
            }
            cache.inputs.push(h);
            cache.pre.push(a);
            cache.gate_pre.push(g);
            h = out;
        }
        Ok((h, cache))
    }

    fn network_input(&self, x: &Image) -> Vec<f64> {
        let m = self.mask.pixels();
        let mut z: Vec<f64> = x
            .as_slice()
            .iter()
            .zip(m)
            .map(|(&v, &s)| if s { 0.0 } else { v })
            .collect();
        z.extend(m.iter().map(|&s| if s { 1.0 } else { 0.0 }));
        z
    }

    /// `J_F(z)^T d` for the first input channel.
    fn backward(&self, cache: &CnnCache, d_out: Vec<f64>) -> Vec<f64> {
        let n = cache.n;
        let plane = n * n;
        let depth = self.layers.len();
        let mut d = d_out;
        for li in (0..depth).rev() {
            let l = &self.layers[li];
            let last = li + 1 == depth;
            let a = &cache.pre[li];
            let mut da = vec![0.0; a.len()];
            let mut dg = if l.gated { vec![0.0; a.len()] } else { Vec::new() };
            for c in 0..l.out_ch {
                for p in c * plane..(c + 1) * plane {
                    let df = l.scale[c] * d[p];
                    if l.gated {
                        let s = sigmoid(cache.gate_pre[li][p]);
                        da[p] = df * s * self.act_grad(a[p], last);
                        dg[p] = df * self.act(a[p], last) * s * (1.0 - s);
                    } else {
                        da[p] = df * self.act_grad(a[p], last);
                    }
                }
            }
            let mut dh = vec![0.0; l.in_ch * plane];
            conv_transpose_into(&mut dh, &da, l.in_ch, l.out_ch, &l.weight, n);
            if l.gated {
                conv_transpose_into(&mut dh, &dg, l.in_ch, l.out_ch, &l.gate_weight, n);
            }
            d = dh;
        }
        d.truncate(plane);
        d
    }
}

impl Inpainter for CnnInpainter {
    fn kind(&self) -> InpainterKind {
        InpainterKind::Cnn
    }

    fn mask(&self) -> &StructureMask {
        &self.mask
    }

    fn forward(&self, x: &Image) -> Result<ForwardPass> {
        self.mask.check_image(x, "CnnInpainter::forward")?;
        let n = x.n();
        let (f, cache) = self.run(self.network_input(x), n)?;
        let m = self.mask.pixels();
        let out: Vec<f64> = x
            .as_slice()
            .iter()
            .zip(m)
            .zip(&f)
            .map(|((&v, &s), &fv)| if s { fv } else { v })
            .collect();
        Ok(ForwardPass {
            output: Image::new(n, out)?,
            cache: Some(cache),
        })
    }

    fn vjp(&self, pass: &ForwardPass, u: &Image) -> Result<Image> {
        let cache = pass
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("network VJP needs the activations of a forward pass".into()))?;
        self.mask.check_image(u, "CnnInpainter::vjp")?;
        if cache.n != u.n() {
            return Err(Error::shape("CnnInpainter::vjp cache", cache.n, u.n()));
        }
        let m = self.mask.pixels();
        let us = u.as_slice();
        let d_out: Vec<f64> = us.iter().zip(m).map(|(&v, &s)| if s { v } else { 0.0 }).collect();
        let dz = if d_out.iter().all(|&v| v == 0.0) {
            vec![0.0; us.len()]
        } else {
            self.backward(cache, d_out)
        };
        let out: Vec<f64> = us
            .iter()
            .zip(m)
            .zip(&dz)
            .map(|((&v, &s), &g)| if s { 0.0 } else { v + g })
            .collect();
        Image::new(u.n(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_keeps_only_the_complement() {
        let mask = StructureMask::rectangle(12, 3, 4, 4, 3).unwrap();
        let g = CnnInpainter::new(CnnWeights::zeros(3), &mask).unwrap();
        let x = Image::from_fn(12, |i, j| (i + 2 * j) as f64 / 40.0);
        let y = g.apply(&x).unwrap();
        for k in 0..144 {
            let expect = if mask.contains(k) { 0.0 } else { x.as_slice()[k] };
            assert_eq!(y.as_slice()[k], expect);
        }
    }

    #[test]
    fn conv_transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, ci, co) = (7, 3, 2);
        let w: Vec<f64> = (0..co * ci * 25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..ci * n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: Vec<f64> = (0..co * n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ch = conv(&h, ci, co, &w, &[0.0; 2], n);
        let mut dh = vec![0.0; ci * n * n];
        conv_transpose_into(&mut dh, &d, ci, co, &w, n);
        assert!((dot(&ch, &d) - dot(&h, &dh)).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 6;
        let w: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = conv(&h, 1, 1, &w, &[0.5], n);
        for i in 0..n as isize {
            for j in 0..n as isize {
                let mut s = 0.5;
                for ky in 0..5isize {
                    for kx in 0..5isize {
                        let (a, b) = (i + ky - 2, j + kx - 2);
                        if a >= 0 && b >= 0 && a < n as isize && b < n as isize {
                            s += w[(ky * 5 + kx) as usize] * h[(a * n as isize + b) as usize];
                        }
                    }
                }
                assert!((out[(i * n as isize + j) as usize] - s).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn vjp_without_cache_is_a_state_error() {
        let mask = StructureMask::rectangle(8, 2, 2, 3, 3).unwrap();
        let g = CnnInpainter::new(CnnWeights::random(2, 1), &mask).unwrap();
        let x = Image::from_fn(8, |i, j| (i * j) as f64 / 64.0);
        let pass = g.forward(&x).unwrap().without_cache();
        assert!(matches!(g.vjp(&pass, &x), Err(Error::State(_))));
    }
}
