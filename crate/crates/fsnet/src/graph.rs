//! Tape-based reverse-mode differentiation over the layer set the network
//! needs. Nodes are appended in evaluation order, so the tape is already
//! topologically sorted and `backward` walks it in reverse.
//!
//! Feature maps are `[C, H, W]`; token matrices are `[N, C]`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::attention::{self, LinearSaved};
use crate::epipolar::GatherTable;
use crate::tensor::{gemm, Tensor};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        cols: Vec<f64>,
    },
    Norm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: f64,
    },
    Relu(Var),
    Leaky(Var, f64),
    Softplus(Var),
    Add(Var, Var),
    Concat(Var, Var),
    Upsample(Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Transpose(Var),
    Reshape(Var),
    AvgPool(Var),
    Max(Var, Var),
    SelectRows(Var, Vec<usize>),
    LinearAttn {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        saved: LinearSaved,
    },
    Gather {
        map: Var,
        fill: Var,
        table: Arc<GatherTable>,
    },
    CandidateAttn {
        q: Var,
        k: Var,
        v: Var,
        d: usize,
        alpha: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// One forward evaluation; parameters enter as named leaves.
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    grads: Vec<Option<Vec<f64>>>,
    signature: u64,
    record: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn mix(h: u64, bit: bool) -> u64 {
    (h ^ (bit as u64 + 1)).wrapping_mul(0x0000_0100_0000_01b3)
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> (Vec<f64>, usize, usize) {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut cols = vec![0.0; c * k * k * ho * wo];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * wo + ox] = x[(ci * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    (cols, ho, wo)
}

#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, ho: usize, wo: usize) -> Vec<f64> {
    let mut x = vec![0.0; c * h * w];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x[(ci * h + iy as usize) * w + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Source taps of a factor-2 bilinear upsampling along one axis (half-pixel centers).
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            grads: Vec::new(),
            signature: 0xcbf2_9ce4_8422_2325,
            record: true,
        }
    }

    /// A forward-only graph: buffers needed solely by `backward` are dropped.
    pub fn inference() -> Self {
        Self {
            record: false,
            ..Self::new()
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        value.debug_check_finite();
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of every branch taken by piecewise operations (activation signs,
    /// max selections); equal signatures mean the same smooth piece.
    pub fn signature(&self) -> u64 {
        self.signature
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A named parameter leaf; repeated names return the same leaf.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        if let Some(v) = self.params.get(name) {
            return *v;
        }
        let v = self.push(t.clone(), Op::Leaf);
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (xs, ws) = (&self.value(x).shape, &self.value(w).shape);
        let (c, h, wd) = (xs[0], xs[1], xs[2]);
        let (co, ci, k) = (ws[0], ws[1], ws[2]);
        assert_eq!(c, ci, "conv input channels");
        let (cols, ho, wo) = im2col(&self.value(x).data, c, h, wd, k, stride, pad);
        let mut out = vec![0.0; co * ho * wo];
        gemm(co, ci * k * k, ho * wo, &self.value(w).data, false, &cols, false, &mut out, false);
        let bias = &self.value(b).data;
        for (o, row) in out.chunks_mut(ho * wo).enumerate() {
            row.iter_mut().for_each(|v| *v += bias[o]);
        }
        let value = Tensor {
            shape: vec![co, ho, wo],
            data: out,
        };
        let cols = if self.record { cols } else { Vec::new() };
        self.push(
            value,
            Op::Conv {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            },
        )
    }

    /// Normalization over the whole `[C, H, W]` sample with a per-channel affine.
    pub fn norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let c = xv.shape[0];
        let per = xv.len() / c;
        let n = xv.len() as f64;
        let mean = xv.data.iter().sum::<f64>() / n;
        let var = xv.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + NORM_EPS).sqrt();
        let xhat: Vec<f64> = xv.data.iter().map(|v| (v - mean) * inv_std).collect();
        let (g, bt) = (&self.value(gamma).data, &self.value(beta).data);
        let data: Vec<f64> = xhat.iter().enumerate().map(|(i, v)| g[i / per] * v + bt[i / per]).collect();
        let value = Tensor {
            shape: xv.shape.clone(),
            data,
        };
        let xhat = if self.record { xhat } else { Vec::new() };
        self.push(
            value,
            Op::Norm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut sig = self.signature;
        let data = self
            .value(x)
            .data
            .iter()
            .map(|&v| {
                sig = mix(sig, v > 0.0);
                v.max(0.0)
            })
            .collect();
        self.signature = sig;
        let shape = self.value(x).shape.clone();
        self.push(Tensor { shape, data }, Op::Relu(x))
    }

    pub fn leaky(&mut self, x: Var, slope: f64) -> Var {
        let mut sig = self.signature;
        let data = self
            .value(x)
            .data
            .iter()
            .map(|&v| {
                sig = mix(sig, v > 0.0);
                if v > 0.0 {
                    v
                } else {
                    slope * v
                }
            })
            .collect();
        self.signature = sig;
        let shape = self.value(x).shape.clone();
        self.push(Tensor { shape, data }, Op::Leaky(x, slope))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| softplus(v)).collect(),
        };
        self.push(value, Op::Softplus(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "add shapes");
        let value = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect(),
        };
        self.push(value, Op::Add(a, b))
    }

    /// Concatenation along the first axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape[1..], tb.shape[1..], "concat shapes");
        let mut shape = ta.shape.clone();
        shape[0] += tb.shape[0];
        let mut data = ta.data.clone();
        data.extend_from_slice(&tb.data);
        self.push(Tensor { shape, data }, Op::Concat(a, b))
    }

    /// Concatenation of two token matrices along channels: `[N, Ca] ++ [N, Cb]`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let ta = self.transpose(a);
        let tb = self.transpose(b);
        let c = self.concat(ta, tb);
        self.transpose(c)
    }

    /// Factor-2 bilinear upsampling of `[C, H, W]`.
    pub fn upsample(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (c, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
        let (ty, tx) = (upsample_taps(h), upsample_taps(w));
        let (h2, w2) = (2 * h, 2 * w);
        let mut data = vec![0.0; c * h2 * w2];
        for ci in 0..c {
            let src = &t.data[ci * h * w..(ci + 1) * h * w];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    data[(ci * h2 + oy) * w2 + ox] = (1.0 - fy) * ((1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1])
                        + fy * ((1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
                }
            }
        }
        self.push(
            Tensor {
                shape: vec![c, h2, w2],
                data,
            },
            Op::Upsample(x),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        assert_eq!(k, tb.shape[0], "matmul inner dimension");
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, false, &tb.data, false, &mut data, false);
        self.push(Tensor { shape: vec![m, n], data }, Op::MatMul(a, b))
    }

    /// Adds `b[C]` to every row of `x[N, C]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (tx, tb) = (self.value(x), self.value(b));
        let c = tb.len();
        assert_eq!(tx.shape[tx.rank() - 1], c, "bias width");
        let data = tx.data.iter().enumerate().map(|(i, v)| v + tb.data[i % c]).collect();
        let shape = tx.shape.clone();
        self.push(Tensor { shape, data }, Op::AddBias(x, b))
    }

    /// `x W + b` on a token matrix.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x).transposed();
        self.push(t, Op::Transpose(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).clone().reshaped(shape).expect("reshape extent");
        self.push(t, Op::Reshape(x))
    }

    /// Spatial mean of `[C, H, W]`, as a `[1, C]` row.
    pub fn avg_pool(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.shape[0];
        let per = t.len() / c;
        let data = t.data.chunks(per).map(|ch| ch.iter().sum::<f64>() / per as f64).collect();
        self.push(Tensor { shape: vec![1, c], data }, Op::AvgPool(x))
    }

    /// Elementwise maximum; ties resolve to `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let mut sig = self.signature;
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "max shapes");
        let data = ta
            .data
            .iter()
            .zip(&tb.data)
            .map(|(&x, &y)| {
                sig = mix(sig, x >= y);
                if x >= y {
                    x
                } else {
                    y
                }
            })
            .collect();
        let shape = ta.shape.clone();
        self.signature = sig;
        self.push(Tensor { shape, data }, Op::Max(a, b))
    }

    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let t = self.value(x);
        let c = t.shape[1];
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in &rows {
            data.extend_from_slice(&t.data[r * c..(r + 1) * c]);
        }
        let shape = vec![rows.len(), c];
        self.push(Tensor { shape, data }, Op::SelectRows(x, rows))
    }

    pub fn linear_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Var {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let (n, m, c) = (tq.shape[0], tk.shape[0], tq.shape[1]);
        let (data, saved) = attention::linear_attention(&tq.data, &tk.data, &tv.data, n, m, c, heads);
        self.push(
            Tensor { shape: vec![n, c], data },
            Op::LinearAttn { q, k, v, heads, saved },
        )
    }

    /// Interpolates rows of the token map `[h·w, C]` at the table's candidate
    /// positions; zero-padded candidates take the row `fill`.
    pub fn gather(&mut self, map: Var, fill: Var, table: Arc<GatherTable>) -> Var {
        let (tm, tf) = (self.value(map), self.value(fill));
        let c = tm.shape[1];
        let mut data = vec![0.0; table.taps.len() * c];
        for (row, taps) in data.chunks_mut(c).zip(&table.taps) {
            match taps {
                Some(taps) => {
                    for &(idx, wt) in taps {
                        let src = &tm.data[idx * c..(idx + 1) * c];
                        row.iter_mut().zip(src).for_each(|(r, s)| *r += wt * s);
                    }
                }
                None => row.copy_from_slice(&tf.data),
            }
        }
        let shape = vec![table.taps.len(), c];
        self.push(Tensor { shape, data }, Op::Gather { map, fill, table })
    }

    /// Softmax attention of each query row over its own `d` candidate rows.
    pub fn candidate_attention(&mut self, q: Var, k: Var, v: Var, d: usize) -> Var {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let (n, c) = (tq.shape[0], tq.shape[1]);
        assert_eq!(tk.shape[0], n * d, "candidate count");
        let (data, alpha) = attention::candidate_attention(&tq.data, &tk.data, &tv.data, n, d, c);
        self.push(
            Tensor { shape: vec![n, c], data },
            Op::CandidateAttn { q, k, v, d, alpha },
        )
    }

    fn accumulate(&mut self, v: Var, g: &[f64]) {
        match &mut self.grads[v.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse pass seeded with output gradients.
    pub fn backward(&mut self, seeds: &[(Var, Vec<f64>)]) {
        assert!(self.record, "backward on an inference graph");
        self.grads = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            assert_eq!(g.len(), self.value(*v).len(), "seed gradient size");
            self.accumulate(*v, g);
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            let contributions = self.local_backward(i, &g);
            self.grads[i] = Some(g);
            for (v, gv) in contributions {
                self.accumulate(v, &gv);
            }
        }
    }

    fn local_backward(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv {
                x,
                w,
                b,
                stride,
                pad,
                cols,
            } => {
                let (xs, ws) = (&val(*x).shape, &val(*w).shape);
                let (c, h, wd) = (xs[0], xs[1], xs[2]);
                let (co, k) = (ws[0], ws[2]);
                let (ho, wo) = (node.value.shape[1], node.value.shape[2]);
                let kk = c * k * k;
                let mut dw = vec![0.0; co * kk];
                gemm(co, ho * wo, kk, g, false, cols, true, &mut dw, false);
                let mut dcols = vec![0.0; kk * ho * wo];
                gemm(kk, co, ho * wo, &val(*w).data, true, g, false, &mut dcols, false);
                let dx = col2im(&dcols, c, h, wd, k, *stride, *pad, ho, wo);
                let db = g.chunks(ho * wo).map(|r| r.iter().sum()).collect();
                vec![(*x, dx), (*w, dw), (*b, db)]
            }
            Op::Norm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gm = &val(*gamma).data;
                let c = gm.len();
                let per = g.len() / c;
                let n = g.len() as f64;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dxhat = vec![0.0; g.len()];
                for j in 0..g.len() {
                    let ch = j / per;
                    dgamma[ch] += g[j] * xhat[j];
                    dbeta[ch] += g[j];
                    dxhat[j] = g[j] * gm[ch];
                }
                let m1 = dxhat.iter().sum::<f64>() / n;
                let m2 = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                let dx = dxhat.iter().zip(xhat).map(|(d, xh)| inv_std * (d - m1 - xh * m2)).collect();
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Relu(x) => {
                let dx = g.iter().zip(&val(*x).data).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect();
                vec![(*x, dx)]
            }
            Op::Leaky(x, slope) => {
                let dx = g.iter().zip(&val(*x).data).map(|(g, v)| if *v > 0.0 { *g } else { slope * g }).collect();
                vec![(*x, dx)]
            }
            Op::Softplus(x) => {
                let dx = g.iter().zip(&val(*x).data).map(|(g, v)| g * sigmoid(*v)).collect();
                vec![(*x, dx)]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Concat(a, b) => {
                let na = val(*a).len();
                vec![(*a, g[..na].to_vec()), (*b, g[na..].to_vec())]
            }
            Op::Upsample(x) => {
                let t = val(*x);
                let (c, h, w) = (t.shape[0], t.shape[1], t.shape[2]);
                let (ty, tx) = (upsample_taps(h), upsample_taps(w));
                let (h2, w2) = (2 * h, 2 * w);
                let mut dx = vec![0.0; t.len()];
                for ci in 0..c {
                    let d = &mut dx[ci * h * w..(ci + 1) * h * w];
                    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                            let gv = g[(ci * h2 + oy) * w2 + ox];
                            d[y0 * w + x0] += gv * (1.0 - fy) * (1.0 - fx);
                            d[y0 * w + x1] += gv * (1.0 - fy) * fx;
                            d[y1 * w + x0] += gv * fy * (1.0 - fx);
                            d[y1 * w + x1] += gv * fy * fx;
                        }
                    }
                }
                vec![(*x, dx)]
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g, false, &tb.data, true, &mut da, false);
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, &ta.data, true, g, false, &mut db, false);
                vec![(*a, da), (*b, db)]
            }
            Op::AddBias(x, b) => {
                let c = val(*b).len();
                let mut db = vec![0.0; c];
                for (j, gv) in g.iter().enumerate() {
                    db[j % c] += gv;
                }
                vec![(*x, g.to_vec()), (*b, db)]
            }
            Op::Transpose(x) => {
                let gt = Tensor {
                    shape: node.value.shape.clone(),
                    data: g.to_vec(),
                }
                .transposed();
                vec![(*x, gt.data)]
            }
            Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::AvgPool(x) => {
                let t = val(*x);
                let c = t.shape[0];
                let per = t.len() / c;
                let dx = (0..t.len()).map(|j| g[j / per] / per as f64).collect();
                vec![(*x, dx)]
            }
            Op::Max(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let mut da = vec![0.0; g.len()];
                let mut db = vec![0.0; g.len()];
                for j in 0..g.len() {
                    if ta.data[j] >= tb.data[j] {
                        da[j] = g[j];
                    } else {
                        db[j] = g[j];
                    }
                }
                vec![(*a, da), (*b, db)]
            }
            Op::SelectRows(x, rows) => {
                let t = val(*x);
                let c = t.shape[1];
                let mut dx = vec![0.0; t.len()];
                for (i, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        dx[r * c + j] += g[i * c + j];
                    }
                }
                vec![(*x, dx)]
            }
            Op::LinearAttn { q, k, v, heads, saved } => {
                let (tq, tk, tv) = (val(*q), val(*k), val(*v));
                let (n, m, c) = (tq.shape[0], tk.shape[0], tq.shape[1]);
                let (dq, dk, dv) = attention::linear_attention_backward(
                    g,
                    &node.value.data,
                    &tq.data,
                    &tk.data,
                    &tv.data,
                    saved,
                    n,
                    m,
                    c,
                    *heads,
                );
                vec![(*q, dq), (*k, dk), (*v, dv)]
            }
            Op::Gather { map, fill, table } => {
                let tm = val(*map);
                let c = tm.shape[1];
                let mut dmap = vec![0.0; tm.len()];
                let mut dfill = vec![0.0; c];
                for (row, taps) in g.chunks(c).zip(&table.taps) {
                    match taps {
                        Some(taps) => {
                            for &(idx, wt) in taps {
                                let d = &mut dmap[idx * c..(idx + 1) * c];
                                d.iter_mut().zip(row).for_each(|(a, r)| *a += wt * r);
                            }
                        }
                        None => dfill.iter_mut().zip(row).for_each(|(a, r)| *a += r),
                    }
                }
                vec![(*map, dmap), (*fill, dfill)]
            }
            Op::CandidateAttn { q, k, v, d, alpha } => {
                let (tq, tk, tv) = (val(*q), val(*k), val(*v));
                let (n, c) = (tq.shape[0], tq.shape[1]);
                let (dq, dk, dv) = attention::candidate_attention_backward(g, &tq.data, &tk.data, &tv.data, alpha, n, *d, c);
                vec![(*q, dq), (*k, dk), (*v, dv)]
            }
        }
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every named parameter; unreached parameters get zeros.
    pub fn param_grads(&self) -> BTreeMap<String, Vec<f64>> {
        self.params
            .iter()
            .map(|(name, v)| {
                let g = self.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; self.value(*v).len()]);
                (name.clone(), g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of `sum(out · probe)` with respect to one input.
    fn check(build: impl Fn(&mut Graph, &[Tensor]) -> Var, inputs: Vec<Tensor>) {
        let mut g = Graph::new();
        let ins: Vec<Var> = inputs.iter().enumerate().map(|(i, t)| g.param(&format!("p{i}"), t)).collect();
        let out = build(&mut g, &inputs);
        let probe: Vec<f64> = (0..g.value(out).len()).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.4).collect();
        g.backward(&[(out, probe.clone())]);
        let eval = |ts: &[Tensor]| {
            let mut h = Graph::new();
            for (i, t) in ts.iter().enumerate() {
                h.param(&format!("p{i}"), t);
            }
            let o = build(&mut h, ts);
            h.value(o).data.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
        };
        for (vi, v) in ins.iter().enumerate() {
            let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[vi].len()]);
            for j in 0..inputs[vi].len() {
                let mut plus = inputs.clone();
                let mut minus = inputs.clone();
                plus[vi].data[j] += 1e-6;
                minus[vi].data[j] -= 1e-6;
                let num = (eval(&plus) - eval(&minus)) / 2e-6;
                let err = (num - analytic[j]).abs() / num.abs().max(analytic[j].abs()).max(1e-6);
                assert!(err < 1e-5, "input {vi} entry {j}: numeric {num} analytic {}", analytic[j]);
            }
        }
    }

    fn t(shape: &[usize], seed: usize) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|i| ((i * 31 + seed * 17) as f64 * 0.618).sin()).collect(),
        }
    }

    fn p(g: &mut Graph, i: usize, ts: &[Tensor]) -> Var {
        g.param(&format!("p{i}"), &ts[i])
    }

    #[test]
    fn conv_and_norm_gradients() {
        check(
            |g, ts| {
                let (x, w, b) = (p(g, 0, ts), p(g, 1, ts), p(g, 2, ts));
                let y = g.conv(x, w, b, 2, 1);
                let (ga, be) = (p(g, 3, ts), p(g, 4, ts));
                g.norm(y, ga, be)
            },
            vec![t(&[2, 5, 6], 1), t(&[3, 2, 3, 3], 2), t(&[3], 3), t(&[3], 4), t(&[3], 5)],
        );
    }

    #[test]
    fn upsample_concat_pool_gradients() {
        check(
            |g, ts| {
                let (x, y) = (p(g, 0, ts), p(g, 1, ts));
                let u = g.upsample(x);
                let c = g.concat(u, y);
                let s = g.softplus(c);
                g.avg_pool(s)
            },
            vec![t(&[2, 3, 2], 1), t(&[1, 6, 4], 2)],
        );
    }

    #[test]
    fn linear_attention_gradients() {
        check(
            |g, ts| {
                let (q, k, v) = (p(g, 0, ts), p(g, 1, ts), p(g, 2, ts));
                g.linear_attention(q, k, v, 2)
            },
            vec![t(&[5, 4], 1), t(&[6, 4], 2), t(&[6, 4], 3)],
        );
    }

    #[test]
    fn gather_and_candidate_attention_gradients() {
        let table = Arc::new(GatherTable {
            queries: 2,
            candidates: 3,
            taps: vec![
                Some([(0, 0.2), (1, 0.3), (3, 0.1), (4, 0.4)]),
                None,
                Some([(2, 1.0), (5, 0.0), (0, 0.0), (1, 0.0)]),
                Some([(1, 0.5), (2, 0.5), (4, 0.0), (5, 0.0)]),
                Some([(3, 0.25), (4, 0.25), (0, 0.25), (1, 0.25)]),
                None,
            ],
        });
        check(
            move |g, ts| {
                let (m, f, q, w) = (p(g, 0, ts), p(g, 1, ts), p(g, 2, ts), p(g, 3, ts));
                let kd = g.gather(m, f, table.clone());
                let vd = g.matmul(kd, w);
                g.candidate_attention(q, kd, vd, 3)
            },
            vec![t(&[6, 4], 1), t(&[4], 2), t(&[2, 4], 3), t(&[4, 4], 4)],
        );
    }

    #[test]
    fn matmul_bias_transpose_select_max_gradients() {
        check(
            |g, ts| {
                let (x, w, b) = (p(g, 0, ts), p(g, 1, ts), p(g, 2, ts));
                let y = g.linear(x, w, b);
                let tr = g.transpose(y);
                let back = g.transpose(tr);
                let s = g.select_rows(back, vec![2, 0, 2]);
                let o = g.select_rows(y, vec![1, 1, 0]);
                let l = g.leaky(o, 0.1);
                let cc = g.concat_channels(s, l);
                let r = g.relu(cc);
                g.max(r, cc)
            },
            vec![t(&[3, 4], 1), t(&[4, 2], 2), t(&[2], 3)],
        );
    }
}
