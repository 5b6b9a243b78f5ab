//! Refiner parameters and their binary file format.
//!
//! Layout: `MHFU`, then little-endian u32 fields `version`, `input
//! channels`, `level count`, one entry per level channel count, `kh`, `kw`,
//! followed by every parameter as a little-endian f32 in declaration order
//! (encoder, FUU gate/high/low per level, decoder, mask heads, content head;
//! weights before biases within a layer).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::ConvLayer;
use crate::rng::seeded_rng;

pub const MAGIC: &[u8; 4] = b"MHFU";
pub const VERSION: u32 = 1;
/// `[Ip, Ie, Il]` stacked along channels.
pub const INPUT_CHANNELS: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinerArch {
    /// Feature channels per level, finest first.
    pub channels: Vec<usize>,
    /// Odd square kernel size used by every layer.
    pub kernel: usize,
}

impl Default for RefinerArch {
    fn default() -> Self {
        RefinerArch {
            channels: vec![16, 32, 64],
            kernel: 3,
        }
    }
}

impl RefinerArch {
    pub fn new(channels: Vec<usize>, kernel: usize) -> Result<Self> {
        let arch = RefinerArch { channels, kernel };
        arch.validate()?;
        Ok(arch)
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 {
            return Err(Error::ChannelPlan(format!(
                "need at least 2 levels, got {}",
                self.channels.len()
            )));
        }
        if self.channels.contains(&0) {
            return Err(Error::ChannelPlan("zero-width level".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::ChannelPlan(format!("kernel {} must be odd", self.kernel)));
        }
        Ok(())
    }
}

/// Gate and candidate convolutions of one feature update unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FuuWeights {
    pub gate: ConvLayer,
    pub high: ConvLayer,
    pub low: ConvLayer,
}

impl FuuWeights {
    fn layers(&self) -> [&ConvLayer; 3] {
        [&self.gate, &self.high, &self.low]
    }

    fn layers_mut(&mut self) -> [&mut ConvLayer; 3] {
        [&mut self.gate, &mut self.high, &mut self.low]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinerWeights {
    pub arch: RefinerArch,
    /// `encoder[0]` keeps resolution, the rest halve it.
    pub encoder: Vec<ConvLayer>,
    /// One unit per level except the coarsest.
    pub fuu: Vec<FuuWeights>,
    /// `decoder[m]` merges the upsampled coarser decoder feature with the
    /// updated skip feature of level `m`; one per level except the coarsest.
    pub decoder: Vec<ConvLayer>,
    pub mask_heads: [ConvLayer; 3],
    pub content_head: ConvLayer,
}

impl RefinerWeights {
    fn build(arch: &RefinerArch, mut make: impl FnMut(usize, usize, usize) -> ConvLayer) -> Result<Self> {
        arch.validate()?;
        let c = &arch.channels;
        let levels = c.len();
        let mut encoder = Vec::with_capacity(levels);
        for m in 0..levels {
            let (cin, stride) = if m == 0 { (INPUT_CHANNELS, 1) } else { (c[m - 1], 2) };
            encoder.push(make(cin, c[m], stride));
        }
        let mut fuu = Vec::with_capacity(levels - 1);
        for m in 0..levels - 1 {
            let cin = c[m] + c[m + 1];
            fuu.push(FuuWeights {
                gate: make(cin, c[m], 1),
                high: make(cin, c[m], 1),
                low: make(cin, c[m], 1),
            });
        }
        let decoder = (0..levels - 1).map(|m| make(c[m + 1] + c[m], c[m], 1)).collect();
        let mask_heads = [make(c[0], 1, 1), make(c[0], 1, 1), make(c[0], 1, 1)];
        let content_head = make(c[0], 3, 1);
        Ok(RefinerWeights {
            arch: arch.clone(),
            encoder,
            fuu,
            decoder,
            mask_heads,
            content_head,
        })
    }

    pub fn zeros(arch: &RefinerArch) -> Result<Self> {
        let k = arch.kernel;
        Self::build(arch, |i, o, s| ConvLayer::zeros(i, o, k, s))
    }

    /// Seeded random initialization.
    pub fn random(arch: &RefinerArch, seed: u64) -> Result<Self> {
        let k = arch.kernel;
        let mut rng = seeded_rng(seed);
        Self::build(arch, |i, o, s| ConvLayer::random(i, o, k, s, &mut rng))
    }

    /// All kernels zero; mask heads emit the constant `sigmoid(bias)`. A bias
    /// of `+1000` or `-1000` yields masks of exactly 1 or 0.
    pub fn selector(arch: &RefinerArch, mask_bias: [f64; 3]) -> Result<Self> {
        let mut w = Self::zeros(arch)?;
        for (head, b) in w.mask_heads.iter_mut().zip(mask_bias) {
            head.bias[0] = b;
        }
        Ok(w)
    }

    /// Every layer in declaration order.
    pub fn layers(&self) -> Vec<&ConvLayer> {
        let mut out: Vec<&ConvLayer> = self.encoder.iter().collect();
        for f in &self.fuu {
            out.extend(f.layers());
        }
        out.extend(self.decoder.iter());
        out.extend(self.mask_heads.iter());
        out.push(&self.content_head);
        out
    }

    pub fn layers_mut(&mut self) -> Vec<&mut ConvLayer> {
        let mut out: Vec<&mut ConvLayer> = self.encoder.iter_mut().collect();
        for f in &mut self.fuu {
            out.extend(f.layers_mut());
        }
        out.extend(self.decoder.iter_mut());
        out.extend(self.mask_heads.iter_mut());
        out.push(&mut self.content_head);
        out
    }

    /// Parameter slices in declaration order, weights before biases.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites every parameter from a flat vector in declaration order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::BufferLength {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Adds `scale * other` parameter-wise.
    pub fn add_scaled(&mut self, other: &RefinerWeights, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let expected = Self::zeros(&self.arch)?;
        for (a, b) in self.layers().iter().zip(expected.layers()) {
            if (a.in_channels, a.out_channels, a.kh, a.kw, a.stride)
                != (b.in_channels, b.out_channels, b.kh, b.kw, b.stride)
            {
                return Err(Error::ChannelPlan("layer shapes disagree with the architecture".into()));
            }
            a.validate()?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 4 * self.param_count());
        out.extend_from_slice(MAGIC);
        let mut put = |v: u32| out.extend_from_slice(&v.to_le_bytes());
        put(VERSION);
        put(INPUT_CHANNELS as u32);
        put(self.arch.channels.len() as u32);
        for &c in &self.arch.channels {
            put(c as u32);
        }
        put(self.arch.kernel as u32);
        put(self.arch.kernel as u32);
        for t in self.tensors() {
            for &v in t {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut reader = Reader { bytes, pos: 0 };
        if reader.take(4, "magic")? != MAGIC {
            return Err(Error::BadMagic);
        }
        let version = reader.u32("version")?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: version,
            });
        }
        let inputs = reader.u32("input channels")? as usize;
        if inputs != INPUT_CHANNELS {
            return Err(Error::ChannelPlan(format!(
                "file expects {inputs} input channels, refiner uses {INPUT_CHANNELS}"
            )));
        }
        let levels = reader.u32("level count")? as usize;
        if levels > 64 {
            return Err(Error::Corrupt(format!("implausible level count {levels}")));
        }
        let channels = (0..levels)
            .map(|_| reader.u32("channel plan").map(|c| c as usize))
            .collect::<Result<Vec<_>>>()?;
        let kh = reader.u32("kernel height")? as usize;
        let kw = reader.u32("kernel width")? as usize;
        if kh != kw {
            return Err(Error::ChannelPlan(format!("non-square kernel {kh}x{kw}")));
        }
        let arch = RefinerArch::new(channels, kh)?;
        let mut weights = Self::zeros(&arch)?;
        let needed = 4 * weights.param_count();
        let data = reader.take(needed, "parameters")?;
        let mut values = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        for t in weights.tensors_mut() {
            for v in t.iter_mut() {
                *v = values.next().expect("length checked");
            }
        }
        if reader.pos != bytes.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after parameters",
                bytes.len() - reader.pos
            )));
        }
        weights.validate()?;
        Ok(weights)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!("weights file ends inside {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_weights(weights: &RefinerWeights, path: &Path) -> Result<()> {
    fs::write(path, weights.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<RefinerWeights> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    RefinerWeights::from_bytes(&bytes)
}
