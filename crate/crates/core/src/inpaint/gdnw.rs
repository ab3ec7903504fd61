//! GDNW weight files for the gated-convolution inpainting network.
//!
//! Little-endian layout:
//!
//! ```text
//! "GDNW"  version:u32=1  slope:f32  layers:u32
//! per layer:
//!   type:u8 (0 conv, 1 gated)  in:u32  out:u32  kernel:u32=5
//!   weights f32[out][in][5][5]   bias f32[out]
//!   (gated only) gate weights f32[out][in][5][5]   gate bias f32[out]
//!   scale f32[out]   shift f32[out]
//! crc32 of every preceding byte: u32
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const GDNW_MAGIC: [u8; 4] = *b"GDNW";
pub const GDNW_VERSION: u32 = 1;
pub const KERNEL: usize = 5;
pub const LAYER_COUNT: usize = 10;
pub const CONV_LAYERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Gated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    /// Present iff `kind == Gated`.
    pub gate_weight: Option<Vec<f32>>,
    pub gate_bias: Option<Vec<f32>>,
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

impl Layer {
    fn kernel_len(&self) -> usize {
        self.out_ch * self.in_ch * KERNEL * KERNEL
    }
}

/// Network parameters with batch normalization folded into `scale`/`shift`.
///
/// Layers 1-5 are plain convolutions, 6-9 gated convolutions; the last layer
/// (either type) maps to one channel with no nonlinearity besides its gate.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnWeights {
    pub slope: f32,
    pub layers: Vec<Layer>,
}

impl CnnWeights {
    /// Hidden width shared by every intermediate layer.
    pub fn width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.out_ch)
    }

    /// Checks depth, layer types, channel chaining, kernel size and finiteness.
    pub fn validate(&self) -> Result<()> {
        let shape = |msg: String| Err(Error::Format { offset: 0, msg });
        if !self.slope.is_finite() {
            return shape("leaky slope is not finite".into());
        }
        if self.layers.len() != LAYER_COUNT {
            return shape(format!("expected {LAYER_COUNT} layers, found {}", self.layers.len()));
        }
        let width = self.width();
        for (i, l) in self.layers.iter().enumerate() {
            let last = i + 1 == LAYER_COUNT;
            let want_in = if i == 0 { 2 } else { width };
            let want_out = if last { 1 } else { width };
            if l.in_ch != want_in || l.out_ch != want_out {
                return shape(format!(
                    "layer {}: channels {}->{}, expected {want_in}->{want_out}",
                    i + 1,
                    l.in_ch,
                    l.out_ch
                ));
            }
            let want_kind = if i < CONV_LAYERS { Some(LayerKind::Conv) } else if last { None } else { Some(LayerKind::Gated) };
            if want_kind.is_some_and(|k| k != l.kind) {
                return shape(format!("layer {} has type {:?}, expected {:?}", i + 1, l.kind, want_kind.unwrap()));
            }
            let gated = l.kind == LayerKind::Gated;
            let lens_ok = l.weight.len() == l.kernel_len()
                && l.bias.len() == l.out_ch
                && l.scale.len() == l.out_ch
                && l.shift.len() == l.out_ch
                && l.gate_weight.as_ref().map(Vec::len) == gated.then(|| l.kernel_len())
                && l.gate_bias.as_ref().map(Vec::len) == gated.then_some(l.out_ch);
            if !lens_ok {
                return shape(format!("layer {}: parameter array lengths inconsistent", i + 1));
            }
            let all = l
                .weight
                .iter()
                .chain(&l.bias)
                .chain(&l.scale)
                .chain(&l.shift)
                .chain(l.gate_weight.iter().flatten())
                .chain(l.gate_bias.iter().flatten());
            if all.into_iter().any(|v| !v.is_finite()) {
                return shape(format!("layer {}: non-finite parameter", i + 1));
            }
        }
        Ok(())
    }

    fn build(width: usize, slope: f32, last_gated: bool, mut fill: impl FnMut(usize, &str, usize) -> Vec<f32>) -> Self {
        let layers = (0..LAYER_COUNT)
            .map(|i| {
                let last = i + 1 == LAYER_COUNT;
                let kind = if i < CONV_LAYERS || (last && !last_gated) { LayerKind::Conv } else { LayerKind::Gated };
                let in_ch = if i == 0 { 2 } else { width };
                let out_ch = if last { 1 } else { width };
                let k = out_ch * in_ch * KERNEL * KERNEL;
                let gated = kind == LayerKind::Gated;
                Layer {
                    kind,
                    in_ch,
                    out_ch,
                    weight: fill(i, "weight", k),
                    bias: fill(i, "bias", out_ch),
                    gate_weight: gated.then(|| fill(i, "gate_weight", k)),
                    gate_bias: gated.then(|| fill(i, "gate_bias", out_ch)),
                    scale: fill(i, "scale", out_ch),
                    shift: fill(i, "shift", out_ch),
                }
            })
            .collect();
        Self { slope, layers }
    }

    /// All weights and biases zero, identity affine (`scale = 1`, `shift = 0`).
    pub fn zeros(width: usize) -> Self {
        Self::build(width, 0.2, false, |_, what, len| {
            vec![if what == "scale" { 1.0 } else { 0.0 }; len]
        })
    }

    /// Gaussian weights with He-style fan-in scaling, small biases and affine
    /// parameters near identity. The last layer is gated.
    pub fn random(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0f64, 1.0).expect("unit normal");
        Self::build(width, 0.2, true, |i, what, len| {
            let fan_in = (if i == 0 { 2 } else { width } * KERNEL * KERNEL) as f64;
            let s = match what {
                "weight" | "gate_weight" => (2.0 / fan_in).sqrt(),
                "scale" | "shift" | "bias" | "gate_bias" => 0.1,
                _ => unreachable!(),
            };
            let base = if what == "scale" { 1.0 } else { 0.0 };
            (0..len).map(|_| (base + s * unit.sample(&mut rng)) as f32).collect()
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&GDNW_MAGIC);
        out.extend_from_slice(&GDNW_VERSION.to_le_bytes());
        out.extend_from_slice(&self.slope.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        let put = |out: &mut Vec<u8>, v: &[f32]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        for l in &self.layers {
            out.push(match l.kind {
                LayerKind::Conv => 0,
                LayerKind::Gated => 1,
            });
            for d in [l.in_ch, l.out_ch, KERNEL] {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            put(&mut out, &l.weight);
            put(&mut out, &l.bias);
            if let (Some(gw), Some(gb)) = (&l.gate_weight, &l.gate_bias) {
                put(&mut out, gw);
                put(&mut out, gb);
            }
            put(&mut out, &l.scale);
            put(&mut out, &l.shift);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != GDNW_MAGIC {
            return Err(Error::Format { offset: 0, msg: "bad magic, expected \"GDNW\"".into() });
        }
        let version = r.u32("version")?;
        if version != GDNW_VERSION {
            return Err(Error::Format { offset: 4, msg: format!("unsupported version {version}") });
        }
        let slope = r.f32s(1, "leaky slope")?[0];
        let count = r.u32("layer count")? as usize;
        if count != LAYER_COUNT {
            return Err(Error::Format { offset: 12, msg: format!("expected {LAYER_COUNT} layers, found {count}") });
        }
        let mut layers = Vec::with_capacity(count);
        for i in 1..=count {
            let at = r.pos;
            let ctx = |what: &str| format!("layer {i} {what}");
            let kind = match r.take(1, &ctx("type"))?[0] {
                0 => LayerKind::Conv,
                1 => LayerKind::Gated,
                t => return Err(Error::Format { offset: at, msg: format!("layer {i}: unknown type tag {t}") }),
            };
            let in_ch = r.u32(&ctx("in_channels"))? as usize;
            let out_ch = r.u32(&ctx("out_channels"))? as usize;
            let kernel = r.u32(&ctx("kernel"))? as usize;
            if kernel != KERNEL {
                return Err(Error::Format { offset: r.pos - 4, msg: format!("layer {i}: kernel {kernel}, expected {KERNEL}") });
            }
            if in_ch == 0 || out_ch == 0 || in_ch > 4096 || out_ch > 4096 {
                return Err(Error::Format { offset: at + 1, msg: format!("layer {i}: implausible channels {in_ch}->{out_ch}") });
            }
            let k = out_ch * in_ch * KERNEL * KERNEL;
            let weight = r.f32s(k, &ctx("weights"))?;
            let bias = r.f32s(out_ch, &ctx("bias"))?;
            let (gate_weight, gate_bias) = if kind == LayerKind::Gated {
                (Some(r.f32s(k, &ctx("gate weights"))?), Some(r.f32s(out_ch, &ctx("gate bias"))?))
            } else {
                (None, None)
            };
            let scale = r.f32s(out_ch, &ctx("scale"))?;
            let shift = r.f32s(out_ch, &ctx("shift"))?;
            layers.push(Layer { kind, in_ch, out_ch, weight, bias, gate_weight, gate_bias, scale, shift });
        }
        let body_end = r.pos;
        let stored = r.u32("crc32")?;
        if r.pos != bytes.len() {
            return Err(Error::Format { offset: r.pos, msg: format!("{} trailing bytes", bytes.len() - r.pos) });
        }
        let actual = crc32fast::hash(&bytes[..body_end]);
        if stored != actual {
            return Err(Error::Format { offset: body_end, msg: format!("crc mismatch: stored {stored:08x}, computed {actual:08x}") });
        }
        let w = Self { slope, layers };
        w.validate().map_err(|e| match e {
            Error::Format { msg, .. } => Error::Format { offset: 0, msg },
            other => other,
        })?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, len: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos,
                msg: format!("truncated file: missing {what} ({len} bytes needed, {} left)", self.bytes.len() - self.pos),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let b = self.take(count * 4, what)?;
        Ok(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}
