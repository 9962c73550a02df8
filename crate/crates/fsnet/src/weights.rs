//! Named parameter tensors, their seeded initialization and the `FSNW`
//! binary format.
//!
//! File layout (little endian): magic `FSNW`, `u32` version, the config
//! block, `u32` tensor count, then per tensor `u32` name length, UTF-8 name,
//! `u32` rank, `u64` extents and the entries (`f64`, or `f32` when the config
//! asks for 32-bit storage).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::config::{NetworkConfig, Precision};
use crate::error::{FsnetError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FSNW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    /// He-normal with the given fan-in and an extra gain.
    He(usize, f64),
    Zero,
    One,
}

/// Parameter names and shapes in a fixed order.
pub fn layout(config: &NetworkConfig) -> Vec<(String, Vec<usize>)> {
    layout_with_init(config).into_iter().map(|(n, s, _)| (n, s)).collect()
}

fn conv_block(out: &mut Vec<(String, Vec<usize>, Init)>, name: &str, ci: usize, co: usize, k: usize) {
    out.push((format!("{name}.w"), vec![co, ci, k, k], Init::He(ci * k * k, 1.0)));
    out.push((format!("{name}.b"), vec![co], Init::Zero));
}

fn norm(out: &mut Vec<(String, Vec<usize>, Init)>, name: &str, c: usize) {
    out.push((format!("{name}.g"), vec![c], Init::One));
    out.push((format!("{name}.b"), vec![c], Init::Zero));
}

fn linear(out: &mut Vec<(String, Vec<usize>, Init)>, name: &str, ci: usize, co: usize, gain: f64) {
    out.push((format!("{name}.w"), vec![ci, co], Init::He(ci, gain)));
    out.push((format!("{name}.b"), vec![co], Init::Zero));
}

/// Whether a residual block needs a projected shortcut.
pub fn needs_projection(ci: usize, co: usize, stride: usize) -> bool {
    ci != co || stride != 1
}

fn res_block(out: &mut Vec<(String, Vec<usize>, Init)>, name: &str, ci: usize, co: usize, stride: usize) {
    conv_block(out, &format!("{name}.conv1"), ci, co, 3);
    norm(out, &format!("{name}.norm1"), co);
    conv_block(out, &format!("{name}.conv2"), co, co, 3);
    norm(out, &format!("{name}.norm2"), co);
    if needs_projection(ci, co, stride) {
        conv_block(out, &format!("{name}.short"), ci, co, 1);
        norm(out, &format!("{name}.snorm"), co);
    }
}

/// Strides of the regressor blocks for an input of extent `size`.
pub fn regressor_strides(size: usize) -> [usize; 4] {
    let mut s = size;
    let mut out = [1; 4];
    for o in &mut out {
        if s >= 4 {
            *o = 2;
            s = s.div_ceil(2);
        }
    }
    out
}

fn layout_with_init(config: &NetworkConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let w = config.extractor_widths();
    let c = config.channels;

    conv_block(&mut out, "ext.l0.conv", 3, w[0], 3);
    norm(&mut out, "ext.l0.norm", w[0]);
    for i in 1..=4 {
        res_block(&mut out, &format!("ext.b{i}"), w[i - 1], w[i], 2);
    }
    conv_block(&mut out, "ext.d1.conv", w[4] + w[3], w[5], 3);
    norm(&mut out, "ext.d1.norm", w[5]);
    conv_block(&mut out, "ext.d2.conv", w[5] + w[2], w[6], 3);
    norm(&mut out, "ext.d2.norm", w[6]);

    for l in 0..config.transformer_depth {
        for kind in ["self", "cross"] {
            let p = format!("tr.{l}.{kind}");
            for proj in ["q", "k", "v", "merge"] {
                linear(&mut out, &format!("{p}.{proj}"), c, c, 1.0);
            }
            linear(&mut out, &format!("{p}.mlp1"), 2 * c, c, 1.0);
            linear(&mut out, &format!("{p}.mlp2"), c, c, 0.1);
        }
    }

    linear(&mut out, "epi.q", c, c, 1.0);
    // a key bias shifts every candidate logit of a query equally
    out.push(("epi.k.w".into(), vec![c, c], Init::He(c, 1.0)));
    linear(&mut out, "epi.v", c, c, 1.0);
    linear(&mut out, "epi.mlp1", 2 * c, c, 1.0);
    linear(&mut out, "epi.mlp2", c, c, 0.1);

    let rw = config.regressor_widths();
    let strides = regressor_strides(config.attended_size().0.min(config.attended_size().1));
    let mut ci = c;
    for i in 0..4 {
        res_block(&mut out, &format!("reg.b{}", i + 1), ci, rw[i], strides[i]);
        ci = rw[i];
    }
    let cr = config.regressor_size;
    linear(&mut out, "reg.fc1", cr, cr, 1.0);
    linear(&mut out, "reg.fc2", cr, cr / 2, 1.0);
    linear(&mut out, "reg.fc3", cr / 2, 2, 0.1);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub config: NetworkConfig,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Weights {
    /// Seeded initialization; each tensor draws from its own stream so adding
    /// a layer never changes the others.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in layout_with_init(config) {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zero => vec![0.0; n],
                Init::One => vec![1.0; n],
                Init::He(fan_in, gain) => {
                    let std = gain * (2.0 / fan_in as f64).sqrt();
                    let dist = Normal::new(0.0, std).expect("positive std");
                    let mut rng = epi_core::rng::stream(seed, 0, &name);
                    (0..n).map(|_| dist.sample(&mut rng)).collect()
                }
            };
            tensors.insert(name, Tensor { shape, data });
        }
        let mut w = Self {
            config: config.clone(),
            tensors,
        };
        w.apply_precision();
        Ok(w)
    }

    /// Rounds every entry through 32-bit storage when the config asks for it.
    pub fn apply_precision(&mut self) {
        if self.config.precision == Precision::F32 {
            self.tensors.values_mut().for_each(Tensor::round_to_f32);
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| FsnetError::MissingParameter(name.to_string()))
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Checks names and shapes against the config layout.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let want = layout(&self.config);
        if want.len() != self.tensors.len() {
            return Err(FsnetError::Format(format!(
                "expected {} tensors, found {}",
                want.len(),
                self.tensors.len()
            )));
        }
        for (name, shape) in want {
            let t = self.get(&name)?;
            if t.shape != shape {
                return Err(FsnetError::Shape(format!("{name}: expected {shape:?}, found {:?}", t.shape)));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let c = &self.config;
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        for v in [
            c.input_size.0,
            c.input_size.1,
            c.channels,
            c.transformer_depth,
            c.epipolar_samples,
            c.query_stride,
            c.regressor_size,
        ] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        out.write_all(&c.clamp_scale.to_le_bytes())?;
        out.write_all(&c.precision.bits().to_le_bytes())?;
        out.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &e in &t.shape {
                out.write_all(&(e as u64).to_le_bytes())?;
            }
            for &v in &t.data {
                match c.precision {
                    Precision::F64 => out.write_all(&v.to_le_bytes())?,
                    Precision::F32 => out.write_all(&(v as f32).to_le_bytes())?,
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
            let mut b = [0u8; N];
            r.read_exact(&mut b)
                .map_err(|e| FsnetError::Format(format!("truncated file: {e}")))?;
            Ok(b)
        }
        let u32_ = |r: &mut R| -> Result<u32> { Ok(u32::from_le_bytes(take::<4, R>(r)?)) };
        if &take::<4, R>(&mut input)? != MAGIC {
            return Err(FsnetError::Format("bad magic".into()));
        }
        let version = u32_(&mut input)?;
        if version != FORMAT_VERSION {
            return Err(FsnetError::Format(format!(
                "unsupported version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let mut f = [0usize; 7];
        for v in &mut f {
            *v = u32_(&mut input)? as usize;
        }
        let clamp_scale = f64::from_le_bytes(take::<8, R>(&mut input)?);
        let precision = Precision::from_bits(u32_(&mut input)?)?;
        let config = NetworkConfig {
            input_size: (f[0], f[1]),
            channels: f[2],
            transformer_depth: f[3],
            epipolar_samples: f[4],
            query_stride: f[5],
            regressor_size: f[6],
            clamp_scale,
            precision,
        };
        let count = u32_(&mut input)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = u32_(&mut input)? as usize;
            let mut name = vec![0u8; len];
            input
                .read_exact(&mut name)
                .map_err(|e| FsnetError::Format(format!("truncated name: {e}")))?;
            let name = String::from_utf8(name).map_err(|_| FsnetError::Format("tensor name is not UTF-8".into()))?;
            let rank = u32_(&mut input)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(take::<8, R>(&mut input)?) as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(match precision {
                    Precision::F64 => f64::from_le_bytes(take::<8, R>(&mut input)?),
                    Precision::F32 => f32::from_le_bytes(take::<4, R>(&mut input)?) as f64,
                });
            }
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        let w = Self { config, tensors };
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
