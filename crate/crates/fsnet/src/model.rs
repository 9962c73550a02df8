//! The scorer: feature extraction, the attention transformer, epipolar
//! cross-attention and the pose-error regressor.
//!
//! Every stage is written once against [`Graph`] so the same code serves
//! inference and training. A pair is processed symmetrically: the direction
//! A→B uses `F` and B→A uses `Fᵀ`, each derived from the caller's matrix
//! rather than from one another, so swapping the images reproduces the same
//! floating point operations.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use epi_core::geom::{rescale_matrix, svd3, Mat3};
use epi_core::synth::Image;

use crate::config::{NetworkConfig, ATTENTION_HEADS};
use crate::epipolar::GatherTable;
use crate::error::{FsnetError, Result};
use crate::graph::{Graph, Var};
use crate::preprocess::{adapt_fundamental, prepare, Prepared};
use crate::tensor::Tensor;
use crate::weights::{needs_projection, regressor_strides, Weights};

pub const LEAKY_SLOPE: f64 = 0.1;
/// Feature maps are a quarter of the input resolution.
pub const FEATURE_SCALE: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreOutput {
    pub e_r: f64,
    pub e_t: f64,
}

impl ScoreOutput {
    /// Selection score; lower is better.
    pub fn score(&self) -> f64 {
        self.e_r.max(self.e_t)
    }
}

/// Builds network stages onto a graph.
pub struct Net<'w> {
    pub weights: &'w Weights,
}

/// Per-image state after the transformer, in token form `[h·w, C]`, with the
/// hypothesis-independent projections used by epipolar attention.
#[derive(Clone, Copy, Debug)]
pub struct ImageVars {
    pub tokens: Var,
    pub queries: Var,
    pub query_proj: Var,
    pub keys: Var,
    pub values: Var,
}

impl<'w> Net<'w> {
    pub fn new(weights: &'w Weights) -> Self {
        Self { weights }
    }

    fn config(&self) -> &NetworkConfig {
        &self.weights.config
    }

    fn p(&self, g: &mut Graph, name: &str) -> Result<Var> {
        Ok(g.param(name, self.weights.get(name)?))
    }

    fn conv(&self, g: &mut Graph, x: Var, name: &str, stride: usize) -> Result<Var> {
        let w = self.p(g, &format!("{name}.w"))?;
        let b = self.p(g, &format!("{name}.b"))?;
        let pad = self.weights.get(&format!("{name}.w"))?.shape[2] / 2;
        Ok(g.conv(x, w, b, stride, pad))
    }

    fn norm(&self, g: &mut Graph, x: Var, name: &str) -> Result<Var> {
        let gamma = self.p(g, &format!("{name}.g"))?;
        let beta = self.p(g, &format!("{name}.b"))?;
        Ok(g.norm(x, gamma, beta))
    }

    fn linear(&self, g: &mut Graph, x: Var, name: &str) -> Result<Var> {
        let w = self.p(g, &format!("{name}.w"))?;
        let b = self.p(g, &format!("{name}.b"))?;
        Ok(g.linear(x, w, b))
    }

    fn res_block(&self, g: &mut Graph, x: Var, name: &str, stride: usize) -> Result<Var> {
        let ci = g.value(x).shape[0];
        let co = self.weights.get(&format!("{name}.conv1.w"))?.shape[0];
        let y = self.conv(g, x, &format!("{name}.conv1"), stride)?;
        let y = self.norm(g, y, &format!("{name}.norm1"))?;
        let y = g.relu(y);
        let y = self.conv(g, y, &format!("{name}.conv2"), 1)?;
        let y = self.norm(g, y, &format!("{name}.norm2"))?;
        let short = if needs_projection(ci, co, stride) {
            let s = self.conv(g, x, &format!("{name}.short"), stride)?;
            self.norm(g, s, &format!("{name}.snorm"))?
        } else {
            x
        };
        let sum = g.add(y, short);
        Ok(g.relu(sum))
    }

    /// `[H, W, 3]` image → `[C, H/4, W/4]` features.
    pub fn extract(&self, g: &mut Graph, image: &Tensor) -> Result<Var> {
        let (h, w) = self.config().input_size;
        if image.shape != [h, w, 3] {
            return Err(FsnetError::Shape(format!("expected image [{h}, {w}, 3], got {:?}", image.shape)));
        }
        let hwc = g.constant(image.clone().reshaped(&[h * w, 3])?);
        let chw = g.transpose(hwc);
        let x = g.reshape(chw, &[3, h, w]);
        let x = self.conv(g, x, "ext.l0.conv", 1)?;
        let x = self.norm(g, x, "ext.l0.norm")?;
        let l0 = g.relu(x);
        let l1 = self.res_block(g, l0, "ext.b1", 2)?;
        let l2 = self.res_block(g, l1, "ext.b2", 2)?;
        let l3 = self.res_block(g, l2, "ext.b3", 2)?;
        let l4 = self.res_block(g, l3, "ext.b4", 2)?;
        let u = g.upsample(l4);
        let u = g.concat(u, l3);
        let u = self.conv(g, u, "ext.d1.conv", 1)?;
        let u = self.norm(g, u, "ext.d1.norm")?;
        let l6 = g.leaky(u, LEAKY_SLOPE);
        let u = g.upsample(l6);
        let u = g.concat(u, l2);
        let u = self.conv(g, u, "ext.d2.conv", 1)?;
        let u = self.norm(g, u, "ext.d2.norm")?;
        Ok(g.leaky(u, LEAKY_SLOPE))
    }

    /// `[C, h, w]` → `[h·w, C]`.
    pub fn to_tokens(&self, g: &mut Graph, map: Var) -> Var {
        let s = g.value(map).shape.clone();
        let flat = g.reshape(map, &[s[0], s[1] * s[2]]);
        g.transpose(flat)
    }

    /// `[h·w, C]` → `[C, h, w]`.
    pub fn to_map(&self, g: &mut Graph, tokens: Var, h: usize, w: usize) -> Var {
        let t = g.transpose(tokens);
        let c = g.value(t).shape[0];
        g.reshape(t, &[c, h, w])
    }

    /// One attention layer: `x` attends to `source`.
    fn attention_layer(&self, g: &mut Graph, x: Var, source: Var, prefix: &str) -> Result<Var> {
        let q = self.linear(g, x, &format!("{prefix}.q"))?;
        let k = self.linear(g, source, &format!("{prefix}.k"))?;
        let v = self.linear(g, source, &format!("{prefix}.v"))?;
        let a = g.linear_attention(q, k, v, ATTENTION_HEADS);
        let msg = self.linear(g, a, &format!("{prefix}.merge"))?;
        let cat = g.concat_channels(x, msg);
        let hdn = self.linear(g, cat, &format!("{prefix}.mlp1"))?;
        let hdn = g.relu(hdn);
        let upd = self.linear(g, hdn, &format!("{prefix}.mlp2"))?;
        Ok(g.add(x, upd))
    }

    /// Interleaved self and cross layers on token matrices.
    pub fn transform(&self, g: &mut Graph, a: Var, b: Var) -> Result<(Var, Var)> {
        let (mut a, mut b) = (a, b);
        for l in 0..self.config().transformer_depth {
            let sp = format!("tr.{l}.self");
            a = self.attention_layer(g, a, a, &sp)?;
            b = self.attention_layer(g, b, b, &sp)?;
            let cp = format!("tr.{l}.cross");
            let na = self.attention_layer(g, a, b, &cp)?;
            let nb = self.attention_layer(g, b, a, &cp)?;
            (a, b) = (na, nb);
        }
        Ok((a, b))
    }

    /// Hypothesis-independent projections of one transformed image.
    pub fn project(&self, g: &mut Graph, tokens: Var) -> Result<ImageVars> {
        let (h, w) = self.config().feature_size();
        let rows = GatherTable::query_tokens(w, h, self.config().query_stride);
        let queries = g.select_rows(tokens, rows);
        let query_proj = self.linear(g, queries, "epi.q")?;
        let wk = self.p(g, "epi.k.w")?;
        let keys = g.matmul(tokens, wk);
        let values = self.linear(g, tokens, "epi.v")?;
        Ok(ImageVars {
            tokens,
            queries,
            query_proj,
            keys,
            values,
        })
    }

    /// Queries of `from` attend along lines `m p̄` in `to`; returns `[C, h', w']`.
    pub fn epipolar(&self, g: &mut Graph, from: &ImageVars, to: &ImageVars, m: &Mat3) -> Result<Var> {
        let cfg = self.config();
        let (h, w) = cfg.feature_size();
        let table = Arc::new(GatherTable::build(m, w, h, cfg.query_stride, cfg.epipolar_samples));
        let k_fill = g.constant(Tensor::zeros(&[cfg.channels]));
        let v_fill = self.p(g, "epi.v.b")?;
        let kd = g.gather(to.keys, k_fill, table.clone());
        let vd = g.gather(to.values, v_fill, table);
        let msg = g.candidate_attention(from.query_proj, kd, vd, cfg.epipolar_samples);
        let cat = g.concat_channels(from.queries, msg);
        let hdn = self.linear(g, cat, "epi.mlp1")?;
        let hdn = g.relu(hdn);
        let upd = self.linear(g, hdn, "epi.mlp2")?;
        let out = g.add(from.queries, upd);
        let (ha, wa) = cfg.attended_size();
        Ok(self.to_map(g, out, ha, wa))
    }

    fn regress_branch(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = &g.value(x).shape;
        let strides = regressor_strides(s[1].min(s[2]));
        let mut x = x;
        for (i, stride) in strides.iter().enumerate() {
            x = self.res_block(g, x, &format!("reg.b{}", i + 1), *stride)?;
        }
        Ok(g.avg_pool(x))
    }

    /// Two attended maps → `[1, 2]` non-negative `(e_R, e_t)`.
    pub fn regress(&self, g: &mut Graph, fa: Var, fb: Var) -> Result<Var> {
        if g.value(fa).shape != g.value(fb).shape {
            return Err(FsnetError::Shape(format!(
                "regressor inputs {:?} and {:?} differ",
                g.value(fa).shape,
                g.value(fb).shape
            )));
        }
        let va = self.regress_branch(g, fa)?;
        let vb = self.regress_branch(g, fb)?;
        let v = g.max(va, vb);
        let x = self.linear(g, v, "reg.fc1")?;
        let x = g.relu(x);
        let x = self.linear(g, x, "reg.fc2")?;
        let x = g.relu(x);
        let x = self.linear(g, x, "reg.fc3")?;
        Ok(g.softplus(x))
    }

    /// Both attention directions and the regressor for one hypothesis;
    /// `m_ab` and `m_ba` are in feature-map coordinates.
    pub fn score_hypothesis(&self, g: &mut Graph, a: &ImageVars, b: &ImageVars, m_ab: &Mat3, m_ba: &Mat3) -> Result<Var> {
        let fa = self.epipolar(g, a, b, m_ab)?;
        let fb = self.epipolar(g, b, a, m_ba)?;
        self.regress(g, fa, fb)
    }
}

/// Rejects matrices below rank 2.
pub fn check_rank(f: &Mat3) -> Result<()> {
    let (_, s, _) = svd3(f)?;
    if !(s[0] > 0.0) || s[1] <= 1e-12 * s[0] {
        return Err(FsnetError::Degenerate(format!(
            "below rank 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            s[0], s[1], s[2]
        )));
    }
    Ok(())
}

/// Line maps for both directions in feature-map coordinates, from `F` given
/// in network-input pixels (A→B uses `F`, B→A uses `Fᵀ`).
pub fn feature_matrices(f: &Mat3) -> Result<(Mat3, Mat3)> {
    check_rank(f)?;
    let ab = rescale_matrix(f, FEATURE_SCALE, FEATURE_SCALE)?;
    let ba = rescale_matrix(&f.transpose(), FEATURE_SCALE, FEATURE_SCALE)?;
    Ok((ab, ba))
}

fn output_of(t: &Tensor) -> ScoreOutput {
    ScoreOutput {
        e_r: t.data[0],
        e_t: t.data[1],
    }
}

pub fn extract_features(image: &Tensor, weights: &Weights) -> Result<Tensor> {
    let mut g = Graph::inference();
    let v = Net::new(weights).extract(&mut g, image)?;
    Ok(g.value(v).clone())
}

/// Applies the transformer to two `[C, h, w]` maps.
pub fn transform_pair(fa: &Tensor, fb: &Tensor, weights: &Weights) -> Result<(Tensor, Tensor)> {
    if fa.shape != fb.shape || fa.rank() != 3 || fa.shape[0] != weights.config.channels {
        return Err(FsnetError::Shape(format!("transform inputs {:?} and {:?}", fa.shape, fb.shape)));
    }
    let net = Net::new(weights);
    let mut g = Graph::inference();
    let (h, w) = (fa.shape[1], fa.shape[2]);
    let a = g.constant(fa.clone());
    let b = g.constant(fb.clone());
    let ta = net.to_tokens(&mut g, a);
    let tb = net.to_tokens(&mut g, b);
    let (oa, ob) = net.transform(&mut g, ta, tb)?;
    let ma = net.to_map(&mut g, oa, h, w);
    let mb = net.to_map(&mut g, ob, h, w);
    Ok((g.value(ma).clone(), g.value(mb).clone()))
}

/// Epipolar attention of two transformed maps under `f` (network-input pixels).
pub fn epipolar_cross_attention(ta: &Tensor, tb: &Tensor, f: &Mat3, weights: &Weights) -> Result<(Tensor, Tensor)> {
    let (h, w) = weights.config.feature_size();
    let want = [weights.config.channels, h, w];
    if ta.shape != want || tb.shape != want {
        return Err(FsnetError::Shape(format!("expected maps {want:?}, got {:?} and {:?}", ta.shape, tb.shape)));
    }
    let (m_ab, m_ba) = feature_matrices(f)?;
    let net = Net::new(weights);
    let mut g = Graph::inference();
    let a = g.constant(ta.clone());
    let b = g.constant(tb.clone());
    let a = net.to_tokens(&mut g, a);
    let b = net.to_tokens(&mut g, b);
    let va = net.project(&mut g, a)?;
    let vb = net.project(&mut g, b)?;
    let fa = net.epipolar(&mut g, &va, &vb, &m_ab)?;
    let fb = net.epipolar(&mut g, &vb, &va, &m_ba)?;
    Ok((g.value(fa).clone(), g.value(fb).clone()))
}

pub fn regress_pose_error(fa: &Tensor, fb: &Tensor, weights: &Weights) -> Result<ScoreOutput> {
    let net = Net::new(weights);
    let mut g = Graph::inference();
    let a = g.constant(fa.clone());
    let b = g.constant(fb.clone());
    let out = net.regress(&mut g, a, b)?;
    Ok(output_of(g.value(out)))
}

/// Cached hypothesis-independent state of one image, in token form.
#[derive(Clone, Debug)]
pub struct CachedImage {
    pub tokens: Tensor,
    pub queries: Tensor,
    pub query_proj: Tensor,
    pub keys: Tensor,
    pub values: Tensor,
}

#[derive(Clone, Debug)]
pub struct PairState {
    pub a: CachedImage,
    pub b: CachedImage,
    pub transform_a: crate::preprocess::PixelTransform,
    pub transform_b: crate::preprocess::PixelTransform,
}

fn fnv(data: &[f64], w: usize, h: usize) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for v in [w as u64, h as u64].into_iter().chain(data.iter().map(|v| v.to_bits())) {
        for b in v.to_le_bytes() {
            hash = (hash ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// Per-pair cache of extractor and transformer outputs.
#[derive(Debug, Default)]
pub struct FeatureCache {
    entries: Mutex<HashMap<(u64, u64), Arc<PairState>>>,
    extracted: AtomicUsize,
    transformed: AtomicUsize,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Images run through the extractor so far.
    pub fn extract_calls(&self) -> usize {
        self.extracted.load(Ordering::Relaxed)
    }

    /// Pairs run through the transformer so far.
    pub fn transform_calls(&self) -> usize {
        self.transformed.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.entries.lock().expect("cache lock").clear();
    }

    /// State for `(a, b)`, computing it on first use.
    pub fn pair(&self, a: &Image, b: &Image, weights: &Weights) -> Result<Arc<PairState>> {
        let key = (fnv(&a.data, a.width, a.height), fnv(&b.data, b.width, b.height));
        if let Some(s) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(s.clone());
        }
        let size = weights.config.input_size;
        let pa = prepare(a, size)?;
        let pb = prepare(b, size)?;
        let state = Arc::new(self.compute(&pa, &pb, weights)?);
        self.entries.lock().expect("cache lock").insert(key, state.clone());
        Ok(state)
    }

    fn compute(&self, pa: &Prepared, pb: &Prepared, weights: &Weights) -> Result<PairState> {
        let net = Net::new(weights);
        let mut g = Graph::inference();
        let fa = net.extract(&mut g, &pa.tensor)?;
        let fb = net.extract(&mut g, &pb.tensor)?;
        self.extracted.fetch_add(2, Ordering::Relaxed);
        let ta = net.to_tokens(&mut g, fa);
        let tb = net.to_tokens(&mut g, fb);
        let (ta, tb) = net.transform(&mut g, ta, tb)?;
        self.transformed.fetch_add(1, Ordering::Relaxed);
        let va = net.project(&mut g, ta)?;
        let vb = net.project(&mut g, tb)?;
        let cached = |v: &ImageVars| CachedImage {
            tokens: g.value(v.tokens).clone(),
            queries: g.value(v.queries).clone(),
            query_proj: g.value(v.query_proj).clone(),
            keys: g.value(v.keys).clone(),
            values: g.value(v.values).clone(),
        };
        Ok(PairState {
            a: cached(&va),
            b: cached(&vb),
            transform_a: pa.transform,
            transform_b: pb.transform,
        })
    }
}

fn load_cached(g: &mut Graph, c: &CachedImage) -> ImageVars {
    ImageVars {
        tokens: g.constant(c.tokens.clone()),
        queries: g.constant(c.queries.clone()),
        query_proj: g.constant(c.query_proj.clone()),
        keys: g.constant(c.keys.clone()),
        values: g.constant(c.values.clone()),
    }
}

/// Scores one hypothesis `f` (source-image pixels) against cached pair state.
pub fn score_with_state(state: &PairState, f: &Mat3, weights: &Weights) -> Result<ScoreOutput> {
    let fab = adapt_fundamental(f, &state.transform_a, &state.transform_b);
    let fba = adapt_fundamental(&f.transpose(), &state.transform_b, &state.transform_a);
    check_rank(&fab)?;
    let m_ab = rescale_matrix(&fab, FEATURE_SCALE, FEATURE_SCALE)?;
    let m_ba = rescale_matrix(&fba, FEATURE_SCALE, FEATURE_SCALE)?;
    let net = Net::new(weights);
    let mut g = Graph::inference();
    let a = load_cached(&mut g, &state.a);
    let b = load_cached(&mut g, &state.b);
    let out = net.score_hypothesis(&mut g, &a, &b, &m_ab, &m_ba)?;
    Ok(output_of(g.value(out)))
}

/// Full pipeline for one hypothesis; `f` maps pixels of `a` to lines in `b`.
pub fn forward_score(a: &Image, b: &Image, f: &Mat3, weights: &Weights, cache: &FeatureCache) -> Result<ScoreOutput> {
    let state = cache.pair(a, b, weights)?;
    score_with_state(&state, f, weights)
}

/// Scores every hypothesis, in parallel when enabled; order is preserved.
pub fn score_hypotheses(
    a: &Image,
    b: &Image,
    hypotheses: &[Mat3],
    weights: &Weights,
    cache: &FeatureCache,
) -> Result<Vec<ScoreOutput>> {
    let state = cache.pair(a, b, weights)?;
    epi_core::par::map(hypotheses, |f| score_with_state(&state, f, weights))
        .into_iter()
        .collect()
}

/// Index of the minimum `max(e_R, e_t)`; ties go to the lowest index.
pub fn select_from_scores(scores: &[ScoreOutput]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        let v = s.score();
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).ok_or(FsnetError::Empty("hypothesis pool"))
}

pub fn select_hypothesis(
    pool: &[Mat3],
    a: &Image,
    b: &Image,
    weights: &Weights,
    cache: &FeatureCache,
) -> Result<usize> {
    if pool.is_empty() {
        return Err(FsnetError::Empty("hypothesis pool"));
    }
    select_from_scores(&score_hypotheses(a, b, pool, weights, cache)?)
}
