//! Attention kernels on row-major token matrices (`tokens × channels`).
//!
//! The linear kernel uses the feature map `φ(x) = elu(x) + 1` and evaluates
//! `φ(Q) (φ(K)ᵀ V)` so the cost is linear in the number of tokens. The
//! epipolar kernel is a plain softmax over a fixed number of candidates per
//! query.

pub fn elu1(x: f64) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

pub fn elu1_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LinearSaved {
    phi_q: Vec<f64>,
    phi_k: Vec<f64>,
    /// Per head `dh × dh` summary `Σ φ(k)ᵀ v`.
    kv: Vec<f64>,
    /// Per head `Σ φ(k)`.
    ksum: Vec<f64>,
    /// `φ(q)·ksum` per token and head.
    den: Vec<f64>,
}

/// Multi-head linear attention of `n` queries over `m` keys, `c` channels
/// split evenly into `heads`.
pub fn linear_attention(q: &[f64], k: &[f64], v: &[f64], n: usize, m: usize, c: usize, heads: usize) -> (Vec<f64>, LinearSaved) {
    assert_eq!(c % heads, 0);
    let dh = c / heads;
    let phi_q: Vec<f64> = q.iter().map(|&x| elu1(x)).collect();
    let phi_k: Vec<f64> = k.iter().map(|&x| elu1(x)).collect();
    let mut kv = vec![0.0; heads * dh * dh];
    let mut ksum = vec![0.0; heads * dh];
    for t in 0..m {
        for h in 0..heads {
            let base = t * c + h * dh;
            for i in 0..dh {
                let pk = phi_k[base + i];
                ksum[h * dh + i] += pk;
                let row = &mut kv[(h * dh + i) * dh..(h * dh + i + 1) * dh];
                for (j, r) in row.iter_mut().enumerate() {
                    *r += pk * v[base + j];
                }
            }
        }
    }
    let mut out = vec![0.0; n * c];
    let mut den = vec![0.0; n * heads];
    for t in 0..n {
        for h in 0..heads {
            let base = t * c + h * dh;
            let mut d = 0.0;
            for i in 0..dh {
                d += phi_q[base + i] * ksum[h * dh + i];
            }
            den[t * heads + h] = d;
            for i in 0..dh {
                let pq = phi_q[base + i] / d;
                let row = &kv[(h * dh + i) * dh..(h * dh + i + 1) * dh];
                for j in 0..dh {
                    out[base + j] += pq * row[j];
                }
            }
        }
    }
    (
        out,
        LinearSaved {
            phi_q,
            phi_k,
            kv,
            ksum,
            den,
        },
    )
}

/// Gradients with respect to `(q, k, v)` given the output gradient.
#[allow(clippy::too_many_arguments)]
pub fn linear_attention_backward(
    g: &[f64],
    out: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    saved: &LinearSaved,
    n: usize,
    m: usize,
    c: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dh = c / heads;
    let mut dq = vec![0.0; n * c];
    let mut dkv = vec![0.0; heads * dh * dh];
    let mut dksum = vec![0.0; heads * dh];
    for t in 0..n {
        for h in 0..heads {
            let base = t * c + h * dh;
            let d = saved.den[t * heads + h];
            // out = num / d, so dnum = g / d and dd = -(g·out) / d
            let mut g_dot_out = 0.0;
            for j in 0..dh {
                g_dot_out += g[base + j] * out[base + j];
            }
            let dd = -g_dot_out / d;
            for i in 0..dh {
                let row = &saved.kv[(h * dh + i) * dh..(h * dh + i + 1) * dh];
                let mut acc = 0.0;
                for j in 0..dh {
                    acc += row[j] * g[base + j];
                }
                let dphi = acc / d + dd * saved.ksum[h * dh + i];
                dq[base + i] = dphi * elu1_grad(q[base + i]);
                let pq = saved.phi_q[base + i];
                dksum[h * dh + i] += dd * pq;
                let drow = &mut dkv[(h * dh + i) * dh..(h * dh + i + 1) * dh];
                for j in 0..dh {
                    drow[j] += pq * g[base + j] / d;
                }
            }
        }
    }
    let mut dk = vec![0.0; m * c];
    let mut dv = vec![0.0; m * c];
    for t in 0..m {
        for h in 0..heads {
            let base = t * c + h * dh;
            for i in 0..dh {
                let drow = &dkv[(h * dh + i) * dh..(h * dh + i + 1) * dh];
                let mut acc = dksum[h * dh + i];
                for j in 0..dh {
                    acc += drow[j] * v[base + j];
                }
                dk[base + i] = acc * elu1_grad(k[base + i]);
                let pk = saved.phi_k[base + i];
                for j in 0..dh {
                    dv[base + j] += pk * drow[j];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Softmax attention of each of `n` queries over its own `d` candidates;
/// `k` and `v` hold `n·d` rows. Returns the output and the weights.
pub fn candidate_attention(q: &[f64], k: &[f64], v: &[f64], n: usize, d: usize, c: usize) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (c as f64).sqrt();
    let mut out = vec![0.0; n * c];
    let mut alpha = vec![0.0; n * d];
    for t in 0..n {
        let qt = &q[t * c..(t + 1) * c];
        let a = &mut alpha[t * d..(t + 1) * d];
        for (s, a_s) in a.iter_mut().enumerate() {
            let ks = &k[(t * d + s) * c..(t * d + s + 1) * c];
            *a_s = qt.iter().zip(ks).map(|(x, y)| x * y).sum::<f64>() * scale;
        }
        let mx = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for a_s in a.iter_mut() {
            *a_s = (*a_s - mx).exp();
            z += *a_s;
        }
        for a_s in a.iter_mut() {
            *a_s /= z;
        }
        let o = &mut out[t * c..(t + 1) * c];
        for (s, a_s) in a.iter().enumerate() {
            let vs = &v[(t * d + s) * c..(t * d + s + 1) * c];
            for (oj, vj) in o.iter_mut().zip(vs) {
                *oj += a_s * vj;
            }
        }
    }
    (out, alpha)
}

#[allow(clippy::too_many_arguments)]
pub fn candidate_attention_backward(
    g: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    alpha: &[f64],
    n: usize,
    d: usize,
    c: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let scale = 1.0 / (c as f64).sqrt();
    let mut dq = vec![0.0; n * c];
    let mut dk = vec![0.0; n * d * c];
    let mut dv = vec![0.0; n * d * c];
    let mut da = vec![0.0; d];
    for t in 0..n {
        let gt = &g[t * c..(t + 1) * c];
        let a = &alpha[t * d..(t + 1) * d];
        let mut mean = 0.0;
        for s in 0..d {
            let row = (t * d + s) * c;
            da[s] = gt.iter().zip(&v[row..row + c]).map(|(x, y)| x * y).sum();
            mean += a[s] * da[s];
            for j in 0..c {
                dv[row + j] = a[s] * gt[j];
            }
        }
        for s in 0..d {
            let ds = a[s] * (da[s] - mean) * scale;
            let row = (t * d + s) * c;
            for j in 0..c {
                dq[t * c + j] += ds * k[row + j];
                dk[row + j] = ds * q[t * c + j];
            }
        }
    }
    (dq, dk, dv)
}
