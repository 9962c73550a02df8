//! Per-pair selection, failure taxonomy, hybrid filters and report assembly.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    direction_angle_deg, model_pose, pose_error, rotation_angle_deg, CameraIntrinsics, Correspondence, Model,
    ModelKind, PoseError, RelativePose,
};
use crate::metrics::{maa, median};
use crate::par;
use crate::robust::{degeneracy_check, refine, select_best_values, Degeneracy, HypothesisPool};

/// A hypothesis is good when its max(R, t) error is below this many degrees.
pub const GOOD_POSE_DEG: f64 = 10.0;
/// Pairs with fewer correspondences fall in the lower split.
pub const SPLIT_BOUNDARY: usize = 100;
pub const HISTOGRAM_BIN_DEG: f64 = 5.0;
pub const REPORT_SCHEMA: &str = "epi-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureClass {
    SelectedGood,
    ScoringFailure,
    PreScoringFailure,
    Degenerate,
}

impl FailureClass {
    pub const ALL: [FailureClass; 4] = [
        FailureClass::SelectedGood,
        FailureClass::ScoringFailure,
        FailureClass::PreScoringFailure,
        FailureClass::Degenerate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FailureClass::SelectedGood => "SELECTED_GOOD",
            FailureClass::ScoringFailure => "SCORING_FAILURE",
            FailureClass::PreScoringFailure => "PRE_SCORING_FAILURE",
            FailureClass::Degenerate => "DEGENERATE",
        }
    }
}

impl fmt::Display for FailureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pose error of a hypothesis; undecidable decompositions get the worst error.
pub fn hypothesis_error(
    model: &Model,
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
    gt: &RelativePose,
) -> PoseError {
    match model_pose(model, corrs, ka, kb) {
        Ok(pose) => pose_error(&pose, gt),
        Err(_) => PoseError {
            rot_deg: 180.0,
            trans_deg: None,
        },
    }
}

pub fn pool_errors(
    pool: &HypothesisPool,
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
    gt: &RelativePose,
) -> Vec<PoseError> {
    pool.hypotheses.iter().map(|m| hypothesis_error(m, corrs, ka, kb, gt)).collect()
}

/// Failure class from the pool's max errors, the selection and a lazily
/// evaluated degeneracy verdict for the selected hypothesis.
pub fn classify_from_errors(max_errors: &[f64], selected: usize, degenerate: impl FnOnce() -> bool) -> FailureClass {
    if max_errors[selected] < GOOD_POSE_DEG {
        FailureClass::SelectedGood
    } else if !max_errors.iter().any(|&e| e < GOOD_POSE_DEG) {
        FailureClass::PreScoringFailure
    } else if degenerate() {
        FailureClass::Degenerate
    } else {
        FailureClass::ScoringFailure
    }
}

/// Classifies the outcome of selecting `selected` from `pool`; `threshold`
/// (pixels) drives the degeneracy check.
pub fn classify_failure(
    pool: &HypothesisPool,
    selected: usize,
    gt_pose: &RelativePose,
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
    threshold: f64,
) -> Result<FailureClass> {
    if selected >= pool.len() {
        return Err(Error::InvalidArgument(format!("selected index {selected} outside pool")));
    }
    let errors: Vec<f64> = pool_errors(pool, corrs, ka, kb, gt_pose).iter().map(PoseError::max_deg).collect();
    let model = &pool.hypotheses[selected];
    Ok(classify_from_errors(&errors, selected, || is_degenerate(model, corrs, ka, kb, threshold)))
}

fn is_degenerate(model: &Model, corrs: &[Correspondence], ka: &CameraIntrinsics, kb: &CameraIntrinsics, threshold: f64) -> bool {
    match model.to_fundamental(ka, kb) {
        Ok(f) => degeneracy_check(&f, corrs, threshold).verdict == Degeneracy::HomographyDegenerate,
        Err(_) => false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Rescorer when the pair has fewer than 100 correspondences, base otherwise.
    Corresp,
    /// Rescorer among the `k` best base-scored hypotheses.
    Candidate,
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corresp" => Ok(FilterMode::Corresp),
            "candidate" => Ok(FilterMode::Candidate),
            _ => Err(Error::InvalidArgument(format!("unknown filter {s:?}"))),
        }
    }
}

pub fn default_candidate_k(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Fundamental => 10,
        ModelKind::Essential => 20,
    }
}

/// Indices sorted by descending score; NaN last, ties by index.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let (va, vb) = (values[a], values[b]);
        match (va.is_nan(), vb.is_nan()) {
            (true, true) => a.cmp(&b),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => vb.total_cmp(&va).then(a.cmp(&b)),
        }
    });
    idx
}

/// Argmax of `rescorer` (higher is better) over `candidates`, ties to the lowest index.
fn select_among(candidates: &mut [usize], rescorer: &impl Fn(usize) -> f64) -> usize {
    candidates.sort_unstable();
    let values: Vec<f64> = candidates.iter().map(|&i| rescorer(i)).collect();
    candidates[select_best_values(&values).expect("non-empty candidates")]
}

/// Hybrid selection; `rescorer(i)` scores hypothesis `i`, higher is better.
pub fn combine_filter(
    mode: FilterMode,
    base_scores: &[f64],
    rescorer: impl Fn(usize) -> f64,
    n_corrs: usize,
    k: usize,
) -> Result<usize> {
    if base_scores.is_empty() {
        return Err(Error::Empty("hypothesis pool"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    match mode {
        FilterMode::Corresp => {
            if n_corrs < SPLIT_BOUNDARY {
                let mut all: Vec<usize> = (0..base_scores.len()).collect();
                Ok(select_among(&mut all, &rescorer))
            } else {
                select_best_values(base_scores)
            }
        }
        FilterMode::Candidate => {
            let mut top = rank_descending(base_scores);
            top.truncate(k.min(base_scores.len()));
            Ok(select_among(&mut top, &rescorer))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    Unimodal,
    Multimodal,
}

/// How the pairwise distances of the top hypotheses are turned into a verdict.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityRule {
    /// Unimodal iff every pairwise distance is below 10°.
    #[default]
    MaxPairwise,
    /// Multimodal iff the largest minus the smallest pairwise distance exceeds 10°.
    MinMaxDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityResult {
    pub modality: Modality,
    pub min_distance: f64,
    pub max_distance: f64,
    /// Members whose pose could not be decomposed.
    pub excluded: Vec<usize>,
}

pub const MODALITY_DEG: f64 = 10.0;

/// max(rotation angle, translation angle) between two poses; an undefined
/// translation angle counts as 180°.
pub fn pose_distance(a: &RelativePose, b: &RelativePose) -> f64 {
    let r = rotation_angle_deg(&a.rotation, &b.rotation);
    let t = direction_angle_deg(&a.translation, &b.translation).unwrap_or(180.0);
    r.max(t)
}

pub fn modality_analysis(
    top: &[Model],
    corrs: &[Correspondence],
    ka: &CameraIntrinsics,
    kb: &CameraIntrinsics,
    rule: ModalityRule,
) -> ModalityResult {
    let mut poses = Vec::with_capacity(top.len());
    let mut excluded = Vec::new();
    for (i, m) in top.iter().enumerate() {
        match model_pose(m, corrs, ka, kb) {
            Ok(p) => poses.push(p),
            Err(_) => excluded.push(i),
        }
    }
    let mut min_distance = f64::INFINITY;
    let mut max_distance: f64 = 0.0;
    for i in 0..poses.len() {
        for j in i + 1..poses.len() {
            let d = pose_distance(&poses[i], &poses[j]);
            min_distance = min_distance.min(d);
            max_distance = max_distance.max(d);
        }
    }
    if poses.len() < 2 {
        min_distance = 0.0;
    }
    let multimodal = match rule {
        ModalityRule::MaxPairwise => max_distance >= MODALITY_DEG,
        ModalityRule::MinMaxDifference => max_distance - min_distance > MODALITY_DEG,
    };
    ModalityResult {
        modality: if multimodal { Modality::Multimodal } else { Modality::Unimodal },
        min_distance,
        max_distance,
        excluded,
    }
}

/// Everything evaluation needs to know about one pair.
#[derive(Clone, Copy, Debug)]
pub struct EvalPair<'a> {
    pub pair_id: u64,
    pub ka: CameraIntrinsics,
    pub kb: CameraIntrinsics,
    pub gt_pose: RelativePose,
    pub corrs: &'a [Correspondence],
    pub pool: &'a HypothesisPool,
}

/// Per-hypothesis scores of one scorer, keyed by pair id; higher is better.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScorerScores {
    pub name: String,
    pub by_pair: BTreeMap<u64, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub mode: FilterMode,
    pub base: String,
    pub rescorer: String,
    pub k: usize,
}

impl FilterSpec {
    pub fn label(&self) -> String {
        match self.mode {
            FilterMode::Corresp => format!("corresp({}|{})", self.base, self.rescorer),
            FilterMode::Candidate => format!("candidate{}({}|{})", self.k, self.base, self.rescorer),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub maa_max: f64,
    /// Refine each selected hypothesis before measuring its error.
    pub refine: bool,
    /// Pixel threshold for refinement inliers.
    pub threshold: f64,
    /// Pixel threshold of the degeneracy check.
    pub degeneracy_threshold: f64,
    pub filter: Option<FilterSpec>,
    /// Scorer whose top hypotheses feed the modality statistics; the first scorer when unset.
    pub modality_scorer: Option<String>,
    pub modality_k: usize,
    pub modality_rule: ModalityRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            maa_max: 10.0,
            refine: false,
            threshold: 1.0,
            degeneracy_threshold: 3.0,
            filter: None,
            modality_scorer: None,
            modality_k: 5,
            modality_rule: ModalityRule::MaxPairwise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair_id: u64,
    pub scorer: String,
    pub selected_index: usize,
    pub e_r: f64,
    /// `None` when the translation direction is undefined.
    pub e_t: Option<f64>,
    pub n_corrs: usize,
    pub failure_class: FailureClass,
}

impl PairRow {
    pub fn error(&self) -> PoseError {
        PoseError {
            rot_deg: self.e_r,
            trans_deg: self.e_t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaaTriple {
    pub n_pairs: usize,
    pub maa_r: f64,
    pub maa_t: f64,
    pub maa_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureTable {
    pub counts: BTreeMap<FailureClass, usize>,
    /// Fractions sum to exactly 1 when added in class order.
    pub fractions: BTreeMap<FailureClass, f64>,
}

impl FailureTable {
    pub fn from_classes(classes: impl IntoIterator<Item = FailureClass>) -> Self {
        let mut counts: BTreeMap<FailureClass, usize> = FailureClass::ALL.iter().map(|c| (*c, 0)).collect();
        for c in classes {
            *counts.get_mut(&c).unwrap() += 1;
        }
        let n: usize = counts.values().sum();
        let mut fractions: BTreeMap<FailureClass, f64> = counts
            .iter()
            .map(|(c, &k)| (*c, if n == 0 { 0.0 } else { k as f64 / n as f64 }))
            .collect();
        // the last non-empty class absorbs the rounding so the partition is exact
        if let Some(last) = counts.iter().filter(|(_, &k)| k > 0).map(|(c, _)| *c).last() {
            let rest: f64 = FailureClass::ALL
                .iter()
                .filter(|c| **c != last)
                .map(|c| fractions[c])
                .fold(0.0, |a, b| a + b);
            fractions.insert(last, 1.0 - rest);
        }
        Self { counts, fractions }
    }

    pub fn fraction_sum(&self) -> f64 {
        FailureClass::ALL.iter().map(|c| self.fractions[c]).fold(0.0, |a, b| a + b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityStats {
    pub scorer: String,
    pub k: usize,
    pub rule: ModalityRule,
    pub unimodal: usize,
    pub multimodal: usize,
    /// Pairs with at least one undecomposable top hypothesis.
    pub flagged: usize,
    /// mAA (max) of the scorer on unimodal / multimodal pairs; `None` when empty.
    pub maa_max_unimodal: Option<f64>,
    pub maa_max_multimodal: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerSummary {
    pub scorer: String,
    pub overall: MaaTriple,
    pub median_r: f64,
    /// Undefined translation errors count as 180°.
    pub median_t: f64,
    pub failures: FailureTable,
    /// Keyed `"0-100"` and `"100-inf"`.
    pub splits: BTreeMap<String, MaaTriple>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub maa_max_deg: f64,
    pub maa_step_deg: f64,
    pub accuracy_rule: String,
    pub n_pairs: usize,
    pub summaries: Vec<ScorerSummary>,
    /// Max(R, t) error of every pool hypothesis.
    pub histogram: Vec<HistogramBin>,
    pub modality: Option<ModalityStats>,
    #[serde(skip)]
    pub rows: Vec<PairRow>,
}

fn maa_triple(rows: &[&PairRow], maa_max: f64) -> Result<MaaTriple> {
    let r: Vec<f64> = rows.iter().map(|x| x.e_r).collect();
    let t: Vec<f64> = rows.iter().map(|x| x.e_t.unwrap_or(f64::INFINITY)).collect();
    let m: Vec<f64> = rows.iter().map(|x| x.error().max_deg()).collect();
    Ok(MaaTriple {
        n_pairs: rows.len(),
        maa_r: maa(&r, maa_max)?,
        maa_t: maa(&t, maa_max)?,
        maa_max: maa(&m, maa_max)?,
    })
}

struct PairWork {
    errors: Vec<PoseError>,
    max_errors: Vec<f64>,
}

fn scores_for<'s>(scorer: &'s ScorerScores, pair: &EvalPair) -> Result<&'s [f64]> {
    let v = scorer.by_pair.get(&pair.pair_id).ok_or_else(|| {
        Error::InvalidArgument(format!("scorer {} has no scores for pair {}", scorer.name, pair.pair_id))
    })?;
    if v.len() != pair.pool.len() {
        return Err(Error::InvalidArgument(format!(
            "scorer {} has {} scores for pair {} with {} hypotheses",
            scorer.name,
            v.len(),
            pair.pair_id,
            pair.pool.len()
        )));
    }
    Ok(v)
}

fn evaluate_selection(pair: &EvalPair, work: &PairWork, name: &str, selected: usize, config: &EvalConfig) -> Result<PairRow> {
    let class = classify_from_errors(&work.max_errors, selected, || {
        is_degenerate(&pair.pool.hypotheses[selected], pair.corrs, &pair.ka, &pair.kb, config.degeneracy_threshold)
    });
    let error = if config.refine {
        let out = refine(&pair.pool.hypotheses[selected], pair.corrs, &pair.ka, &pair.kb, config.threshold)?;
        hypothesis_error(&out.model, pair.corrs, &pair.ka, &pair.kb, &pair.gt_pose)
    } else {
        work.errors[selected]
    };
    Ok(PairRow {
        pair_id: pair.pair_id,
        scorer: name.to_string(),
        selected_index: selected,
        e_r: error.rot_deg,
        e_t: error.trans_deg,
        n_corrs: pair.corrs.len(),
        failure_class: class,
    })
}

/// Evaluates every scorer (and the optional hybrid filter) on every pair.
pub fn evaluate(pairs: &[EvalPair], scorers: &[ScorerScores], config: &EvalConfig) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair set"));
    }
    if scorers.is_empty() {
        return Err(Error::Empty("scorer set"));
    }
    let find = |name: &str| {
        scorers
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scorer {name:?}")))
    };
    let filter = match &config.filter {
        Some(f) => Some((f, find(&f.base)?, find(&f.rescorer)?)),
        None => None,
    };
    let modality_scorer = match &config.modality_scorer {
        Some(name) => find(name)?,
        None => &scorers[0],
    };
    for s in scorers {
        for p in pairs {
            scores_for(s, p)?;
        }
    }

    let per_pair = par::map(pairs, |pair| -> Result<(Vec<PairRow>, Vec<f64>, ModalityResult)> {
        let errors = pool_errors(pair.pool, pair.corrs, &pair.ka, &pair.kb, &pair.gt_pose);
        let max_errors: Vec<f64> = errors.iter().map(PoseError::max_deg).collect();
        let work = PairWork { errors, max_errors };
        let mut rows = Vec::with_capacity(scorers.len() + 1);
        for s in scorers {
            let selected = select_best_values(scores_for(s, pair)?)?;
            rows.push(evaluate_selection(pair, &work, &s.name, selected, config)?);
        }
        if let Some((f, base, rescorer)) = filter {
            let r = scores_for(rescorer, pair)?;
            let selected = combine_filter(f.mode, scores_for(base, pair)?, |i| r[i], pair.corrs.len(), f.k)?;
            rows.push(evaluate_selection(pair, &work, &f.label(), selected, config)?);
        }
        let mut top = rank_descending(scores_for(modality_scorer, pair)?);
        top.truncate(config.modality_k);
        let models: Vec<Model> = top.iter().map(|&i| pair.pool.hypotheses[i]).collect();
        let modality = modality_analysis(&models, pair.corrs, &pair.ka, &pair.kb, config.modality_rule);
        Ok((rows, work.max_errors, modality))
    });

    let mut rows = Vec::new();
    let mut all_errors = Vec::new();
    let mut modalities = Vec::new();
    for r in per_pair {
        let (pr, errs, m) = r?;
        rows.extend(pr);
        all_errors.extend(errs);
        modalities.push(m);
    }

    let mut names: Vec<String> = scorers.iter().map(|s| s.name.clone()).collect();
    if let Some((f, _, _)) = filter {
        names.push(f.label());
    }
    let mut summaries = Vec::with_capacity(names.len());
    for name in &names {
        let mine: Vec<&PairRow> = rows.iter().filter(|r| &r.scorer == name).collect();
        let mut splits = BTreeMap::new();
        let low: Vec<&PairRow> = mine.iter().copied().filter(|r| r.n_corrs < SPLIT_BOUNDARY).collect();
        let high: Vec<&PairRow> = mine.iter().copied().filter(|r| r.n_corrs >= SPLIT_BOUNDARY).collect();
        if !low.is_empty() {
            splits.insert("0-100".to_string(), maa_triple(&low, config.maa_max)?);
        }
        if !high.is_empty() {
            splits.insert("100-inf".to_string(), maa_triple(&high, config.maa_max)?);
        }
        summaries.push(ScorerSummary {
            scorer: name.clone(),
            overall: maa_triple(&mine, config.maa_max)?,
            median_r: median(&mine.iter().map(|r| r.e_r).collect::<Vec<_>>()),
            median_t: median(&mine.iter().map(|r| r.error().trans_or_worst()).collect::<Vec<_>>()),
            failures: FailureTable::from_classes(mine.iter().map(|r| r.failure_class)),
            splits,
        });
    }

    let modality = {
        let mine: Vec<&PairRow> = rows.iter().filter(|r| r.scorer == modality_scorer.name).collect();
        let pick = |m: Modality| -> Result<Option<f64>> {
            let sel: Vec<f64> = mine
                .iter()
                .zip(&modalities)
                .filter(|(_, res)| res.modality == m)
                .map(|(r, _)| r.error().max_deg())
                .collect();
            if sel.is_empty() {
                Ok(None)
            } else {
                maa(&sel, config.maa_max).map(Some)
            }
        };
        ModalityStats {
            scorer: modality_scorer.name.clone(),
            k: config.modality_k,
            rule: config.modality_rule,
            unimodal: modalities.iter().filter(|m| m.modality == Modality::Unimodal).count(),
            multimodal: modalities.iter().filter(|m| m.modality == Modality::Multimodal).count(),
            flagged: modalities.iter().filter(|m| !m.excluded.is_empty()).count(),
            maa_max_unimodal: pick(Modality::Unimodal)?,
            maa_max_multimodal: pick(Modality::Multimodal)?,
        }
    };

    Ok(EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        maa_max_deg: config.maa_max,
        maa_step_deg: 1.0,
        accuracy_rule: "error <= threshold".to_string(),
        n_pairs: pairs.len(),
        summaries,
        histogram: histogram(&all_errors, HISTOGRAM_BIN_DEG),
        modality: Some(modality),
        rows,
    })
}

/// Fixed bins of width `bin` over [0°, 180°]; 180° lands in the last bin.
pub fn histogram(errors: &[f64], bin: f64) -> Vec<HistogramBin> {
    let n_bins = (180.0 / bin).ceil() as usize;
    let mut counts = vec![0usize; n_bins];
    for &e in errors {
        let e = if e.is_finite() { e.clamp(0.0, 180.0) } else { 180.0 };
        let i = ((e / bin).floor() as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_lo: i as f64 * bin,
            bin_hi: ((i + 1) as f64 * bin).min(180.0),
            count,
        })
        .collect()
}

impl EvalReport {
    pub fn summary(&self, scorer: &str) -> Option<&ScorerSummary> {
        self.summaries.iter().find(|s| s.scorer == scorer)
    }

    /// `pair_id,scorer,selected_index,e_R,e_t,n_corrs,failure_class`; undefined e_t is empty.
    pub fn write_rows_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "pair_id,scorer,selected_index,e_R,e_t,n_corrs,failure_class")?;
        for r in &self.rows {
            let e_t = r.e_t.map(|v| format!("{v:?}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{:?},{},{},{}",
                r.pair_id, r.scorer, r.selected_index, r.e_r, e_t, r.n_corrs, r.failure_class
            )?;
        }
        Ok(())
    }

    pub fn write_histogram_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,count")?;
        for b in &self.histogram {
            writeln!(w, "{},{},{}", b.bin_lo, b.bin_hi, b.count)?;
        }
        Ok(())
    }
}
