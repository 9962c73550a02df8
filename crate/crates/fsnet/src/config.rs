use crate::error::{FsnetError, Result};

/// Storage precision of the weights; arithmetic is always 64-bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            32 => Ok(Precision::F32),
            64 => Ok(Precision::F64),
            _ => Err(FsnetError::Config(format!("precision must be 32 or 64, got {bits}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// (H, W) in pixels.
    pub input_size: (usize, usize),
    pub channels: usize,
    pub transformer_depth: usize,
    pub epipolar_samples: usize,
    pub query_stride: usize,
    /// Soft clamp scale of the regression loss, degrees.
    pub clamp_scale: f64,
    pub regressor_size: usize,
    pub precision: Precision,
}

pub const ATTENTION_HEADS: usize = 8;

impl NetworkConfig {
    pub fn full() -> Self {
        Self {
            input_size: (256, 256),
            channels: 128,
            transformer_depth: 3,
            epipolar_samples: 45,
            query_stride: 2,
            clamp_scale: 25.0,
            regressor_size: 512,
            precision: Precision::F64,
        }
    }

    pub fn desk() -> Self {
        Self {
            input_size: (64, 64),
            channels: 32,
            transformer_depth: 2,
            epipolar_samples: 17,
            query_stride: 2,
            clamp_scale: 25.0,
            regressor_size: 128,
            precision: Precision::F64,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            _ => Err(FsnetError::Config(format!("unknown config {name:?} (expected desk or full)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_size;
        let fail = |m: String| Err(FsnetError::Config(m));
        if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
            return fail(format!("input size {h}x{w} must be positive multiples of 8"));
        }
        if self.channels == 0 || self.channels % ATTENTION_HEADS != 0 {
            return fail(format!("channels {} must be a positive multiple of {ATTENTION_HEADS}", self.channels));
        }
        if self.epipolar_samples < 2 {
            return fail(format!("need at least 2 epipolar samples, got {}", self.epipolar_samples));
        }
        if self.query_stride == 0 {
            return fail("query stride must be at least 1".into());
        }
        if !(self.clamp_scale > 0.0) || !self.clamp_scale.is_finite() {
            return fail(format!("clamp scale must be positive, got {}", self.clamp_scale));
        }
        if self.regressor_size < 4 || self.regressor_size % 4 != 0 {
            return fail(format!("regressor size {} must be a multiple of 4", self.regressor_size));
        }
        Ok(())
    }

    /// Spatial extent of the extractor output.
    pub fn feature_size(&self) -> (usize, usize) {
        (self.input_size.0 / 4, self.input_size.1 / 4)
    }

    /// Spatial extent after epipolar attention.
    pub fn attended_size(&self) -> (usize, usize) {
        let (h, w) = self.feature_size();
        (h.div_ceil(self.query_stride), w.div_ceil(self.query_stride))
    }

    /// Output widths of extractor layers 0..=8 (conv, four blocks, two decoder convs).
    pub fn extractor_widths(&self) -> [usize; 7] {
        let s = |full: usize| (full * self.channels).div_ceil(128);
        [s(128), s(128), s(196), s(256), s(256), s(196), self.channels]
    }

    pub fn regressor_widths(&self) -> [usize; 4] {
        let c = self.regressor_size;
        [c / 4, c / 4, c / 2, c]
    }

    /// Hash of every field, recorded in manifests and weight files.
    pub fn fingerprint(&self) -> u64 {
        let text = format!("{self:?}");
        text.bytes()
            .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
    }
}
