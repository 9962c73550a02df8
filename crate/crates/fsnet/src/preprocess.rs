//! Center-crop and area resize of grayscale renders into network input, and
//! the matching change of coordinates for fundamental matrices.

use epi_core::geom::Mat3;
use epi_core::synth::Image;

use crate::error::{FsnetError, Result};
use crate::tensor::Tensor;

/// Pixel map `x' = scale·x + offset` (same on both axes up to the offsets).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelTransform {
    pub scale: f64,
    pub offset: [f64; 2],
}

impl PixelTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: [0.0, 0.0],
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [self.scale * p[0] + self.offset[0], self.scale * p[1] + self.offset[1]]
    }

    /// Inverse as a homogeneous 3×3 matrix.
    fn inverse_matrix(&self) -> Mat3 {
        let a = 1.0 / self.scale;
        Mat3::new(a, 0.0, -self.offset[0] * a, 0.0, a, -self.offset[1] * a, 0.0, 0.0, 1.0)
    }
}

/// Network input `[H, W, 3]` plus the transform from source pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub tensor: Tensor,
    pub transform: PixelTransform,
}

/// Per-axis area weights `(src index, weight)` for each destination pixel.
fn area_weights(src: usize, offset: usize, span: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let step = span as f64 / dst as f64;
    (0..dst)
        .map(|j| {
            let (lo, hi) = (j as f64 * step, (j + 1) as f64 * step);
            let mut taps = Vec::new();
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(span);
            for i in first..last {
                let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push(((offset + i).min(src - 1), overlap / step));
                }
            }
            taps
        })
        .collect()
}

/// Crops the largest centered square and area-averages it to `size`
/// (H, W). Intensities are mapped from `[0, 1]` to `[-1, 1]` and replicated
/// over three channels.
pub fn prepare(image: &Image, size: (usize, usize)) -> Result<Prepared> {
    if image.width == 0 || image.height == 0 {
        return Err(FsnetError::Empty("image"));
    }
    if image.data.len() != image.width * image.height {
        return Err(FsnetError::Shape(format!(
            "image {}x{} carries {} pixels",
            image.width,
            image.height,
            image.data.len()
        )));
    }
    let side = image.width.min(image.height);
    let (ox, oy) = ((image.width - side) / 2, (image.height - side) / 2);
    let (h, w) = size;
    // the crop is square; non-square outputs squash it anisotropically, which
    // the single-scale transform cannot express
    if h != w {
        return Err(FsnetError::Shape(format!("network input must be square, got {h}x{w}")));
    }
    let wx = area_weights(image.width, ox, side, w);
    let wy = area_weights(image.height, oy, side, h);
    let mut data = vec![0.0; h * w * 3];
    for (y, ty) in wy.iter().enumerate() {
        for (x, tx) in wx.iter().enumerate() {
            let mut acc = 0.0;
            for &(sy, fy) in ty {
                for &(sx, fx) in tx {
                    acc += fy * fx * image.get(sx, sy);
                }
            }
            let v = 2.0 * acc - 1.0;
            data[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&[v, v, v]);
        }
    }
    let s = w as f64 / side as f64;
    let transform = PixelTransform {
        scale: s,
        offset: [0.5 * s - 0.5 - s * ox as f64, 0.5 * s - 0.5 - s * oy as f64],
    };
    Ok(Prepared {
        tensor: Tensor {
            shape: vec![h, w, 3],
            data,
        },
        transform,
    })
}

/// `F` expressed in transformed coordinates: `T_B⁻ᵀ F T_A⁻¹`.
pub fn adapt_fundamental(f: &Mat3, ta: &PixelTransform, tb: &PixelTransform) -> Mat3 {
    tb.inverse_matrix().transpose() * f * ta.inverse_matrix()
}
