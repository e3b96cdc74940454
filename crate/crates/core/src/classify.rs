//! Two-party classification over embedding sets: k-means with
//! label-assignment accuracy and a linear SVM trained with Pegasos.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Party;
use crate::embed::{DatasetKind, EmbeddingSet};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no party known for {0:?}")]
    MissingLabel(String),
    #[error("both parties need members; have {dem} Democratic and {rep} Republican")]
    OneClass { dem: usize, rep: usize },
    #[error("class {label} has {size} members; a split needs at least 2")]
    ClassTooSmall { label: i8, size: usize },
    #[error("k-means needs at least {k} distinct points, found {found}")]
    TooFewDistinct { k: usize, found: usize },
    #[error("model expects dimension {expected}, data has {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub const DEMOCRATIC: i8 = 1;
pub const REPUBLICAN: i8 = -1;

/// Vectors of Democratic (+1) and Republican (-1) members only.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
    pub dataset_kind: DatasetKind,
}

impl LabeledSet {
    /// Keeps ids whose party is Democratic or Republican; other parties are
    /// dropped. Every id must have a party.
    pub fn from_set(set: &EmbeddingSet, parties: &HashMap<String, Party>) -> Result<Self, ClassifyError> {
        let mut out = LabeledSet { ids: Vec::new(), vectors: Vec::new(), labels: Vec::new(), dataset_kind: set.dataset_kind };
        for (id, v) in set.iter() {
            let party = parties.get(id).ok_or_else(|| ClassifyError::MissingLabel(id.to_string()))?;
            if let Some(label) = party.binary_label() {
                out.ids.push(id.to_string());
                out.vectors.push(v.iter().map(|&x| x as f64).collect());
                out.labels.push(label);
            }
        }
        out.check_classes()?;
        Ok(out)
    }

    pub fn new(ids: Vec<String>, vectors: Vec<Vec<f64>>, labels: Vec<i8>, dataset_kind: DatasetKind) -> Result<Self, ClassifyError> {
        if ids.len() != vectors.len() || ids.len() != labels.len() {
            return Err(ClassifyError::Config("ids, vectors and labels differ in length".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l != DEMOCRATIC && l != REPUBLICAN) {
            return Err(ClassifyError::Config(format!("label {l} is not +1 or -1")));
        }
        let s = LabeledSet { ids, vectors, labels, dataset_kind };
        s.check_classes()?;
        Ok(s)
    }

    fn check_classes(&self) -> Result<(), ClassifyError> {
        let (dem, rep) = self.class_counts();
        if dem == 0 || rep == 0 {
            return Err(ClassifyError::OneClass { dem, rep });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let dem = self.labels.iter().filter(|&&l| l == DEMOCRATIC).count();
        (dem, self.labels.len() - dem)
    }

    fn subset(&self, idx: &[usize]) -> LabeledSet {
        LabeledSet {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            vectors: idx.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            dataset_kind: self.dataset_kind,
        }
    }

    /// Same vectors with labels permuted by `seed`, as a chance-level control.
    pub fn shuffled_labels(&self, seed: u64) -> LabeledSet {
        let mut s = self.clone();
        s.labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_fraction: 0.8, seed: 7, stratified: true }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledSet,
    pub test: LabeledSet,
    /// Hash of the config and the test membership.
    pub fingerprint: String,
}

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..8])
}

/// Per-class shuffle and cut; each class contributes `round(n * fraction)`
/// training items, clamped so both sides keep at least one.
pub fn stratified_split(set: &LabeledSet, cfg: &SplitConfig) -> Result<Split, ClassifyError> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(ClassifyError::Config("train_fraction must be in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cut = |n: usize| ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n - 1);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    if cfg.stratified {
        for label in [DEMOCRATIC, REPUBLICAN] {
            let mut idx: Vec<usize> = (0..set.len()).filter(|&i| set.labels[i] == label).collect();
            if idx.len() < 2 {
                return Err(ClassifyError::ClassTooSmall { label, size: idx.len() });
            }
            idx.shuffle(&mut rng);
            let c = cut(idx.len());
            train.extend_from_slice(&idx[..c]);
            test.extend_from_slice(&idx[c..]);
        }
    } else {
        if set.len() < 2 {
            return Err(ClassifyError::ClassTooSmall { label: 0, size: set.len() });
        }
        let mut idx: Vec<usize> = (0..set.len()).collect();
        idx.shuffle(&mut rng);
        let c = cut(idx.len());
        train.extend_from_slice(&idx[..c]);
        test.extend_from_slice(&idx[c..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    let mut test_ids: Vec<&str> = test.iter().map(|&i| set.ids[i].as_str()).collect();
    test_ids.sort_unstable();
    let cfg_json = serde_json::to_vec(cfg).expect("config serializes");
    let fingerprint = short_hash(&[&cfg_json, test_ids.join("\n").as_bytes()]);
    Ok(Split { train: set.subset(&train), test: set.subset(&test), fingerprint })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop when total centroid movement relative to total centroid norm
    /// falls below this.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
    /// L2-normalize points before clustering.
    pub normalize: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { k: 2, max_iter: 100, tol: 1e-6, seed: 11, restarts: 10, normalize: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
    /// Final inertia of every restart, in restart order.
    pub restart_inertias: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, a) in points.iter().zip(out.iter_mut()) {
        let (best, d) = centroids
            .iter()
            .enumerate()
            .map(|(c, cv)| (c, sq_dist(p, cv)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        *a = best;
        inertia += d;
    }
    inertia
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        // Distinctness was checked up front, so some point has d2 > 0.
        let mut r = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("a point differs from every centroid");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && r < d {
                pick = i;
                break;
            }
            r -= d;
        }
        let c = points[pick].clone();
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> KMeansFit {
    let dim = points[0].len();
    let mut centroids = plus_plus(points, cfg.k, rng);
    let mut assignments = vec![0usize; points.len()];
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        history.push(assign(points, &centroids, &mut assignments));
        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..cfg.k {
            if counts[c] == 0 {
                // Steal the point farthest from its centroid, from a cluster
                // that can spare it.
                let victim = (0..points.len())
                    .filter(|&i| counts[assignments[i]] > 1)
                    .max_by(|&i, &j| {
                        sq_dist(&points[i], &centroids[assignments[i]]).total_cmp(&sq_dist(&points[j], &centroids[assignments[j]]))
                    })
                    .expect("n >= k implies some cluster has two members");
                let from = assignments[victim];
                counts[from] -= 1;
                for (s, x) in sums[from].iter_mut().zip(&points[victim]) {
                    *s -= x;
                }
                assignments[victim] = c;
                counts[c] = 1;
                sums[c] = points[victim].clone();
            }
        }
        let new: Vec<Vec<f64>> = sums.iter().zip(&counts).map(|(s, &n)| s.iter().map(|x| x / n as f64).collect()).collect();
        let moved: f64 = new.iter().zip(&centroids).map(|(a, b)| sq_dist(a, b).sqrt()).sum();
        let scale: f64 = centroids.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).sum::<f64>().max(1e-12);
        centroids = new;
        if moved / scale < cfg.tol {
            break;
        }
    }
    let inertia = assign(points, &centroids, &mut assignments);
    history.push(inertia);
    KMeansFit { centroids, assignments, inertia, history, restart_inertias: Vec::new() }
}

/// k-means++ seeding and Lloyd iterations, best of `restarts` by inertia.
/// Restarts run in parallel with seeds derived from `cfg.seed`.
pub fn kmeans_fit(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansFit, ClassifyError> {
    if cfg.k == 0 || cfg.restarts == 0 || cfg.max_iter == 0 {
        return Err(ClassifyError::Config("k, restarts and max_iter must be at least 1".into()));
    }
    let points: Vec<Vec<f64>> = if cfg.normalize { points.iter().map(|p| unit(p)).collect() } else { points.to_vec() };
    let distinct: HashSet<Vec<u64>> = points.iter().map(|p| p.iter().map(|x| x.to_bits()).collect()).collect();
    if distinct.len() < cfg.k {
        return Err(ClassifyError::TooFewDistinct { k: cfg.k, found: distinct.len() });
    }
    let fits: Vec<KMeansFit> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| lloyd(&points, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64 * 0x9E37_79B9))))
        .collect();
    let restart_inertias: Vec<f64> = fits.iter().map(|f| f.inertia).collect();
    let best = (0..fits.len()).min_by(|&a, &b| fits[a].inertia.total_cmp(&fits[b].inertia).then(a.cmp(&b))).expect("restarts >= 1");
    let mut fit = fits.into_iter().nth(best).expect("index in range");
    fit.restart_inertias = restart_inertias;
    Ok(fit)
}

/// Best agreement over the two cluster-to-party bijections. Returns the
/// accuracy and the label given to cluster 0 and cluster 1.
pub fn cluster_accuracy(assignments: &[usize], labels: &[i8]) -> (f64, [i8; 2]) {
    if labels.is_empty() {
        return (0.0, [DEMOCRATIC, REPUBLICAN]);
    }
    let agree = |map: [i8; 2]| assignments.iter().zip(labels).filter(|(&a, &l)| map[a.min(1)] == l).count();
    let straight = agree([DEMOCRATIC, REPUBLICAN]);
    let flipped = agree([REPUBLICAN, DEMOCRATIC]);
    let n = labels.len() as f64;
    if flipped > straight {
        (flipped as f64 / n, [REPUBLICAN, DEMOCRATIC])
    } else {
        (straight as f64 / n, [DEMOCRATIC, REPUBLICAN])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { lambda: 1e-4, epochs: 100, seed: 3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `λ/2 ‖w‖² + mean hinge` after each epoch.
    pub objective: Vec<f64>,
    pub config: SvmConfig,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// +1 (Democratic) when the decision value is non-negative.
    pub fn predict(&self, x: &[f64]) -> i8 {
        if self.decision(x) >= 0.0 {
            DEMOCRATIC
        } else {
            REPUBLICAN
        }
    }
}

fn svm_objective(w: &[f64], lambda: f64, set: &LabeledSet) -> f64 {
    let dim = w.len() - 1;
    let reg = lambda / 2.0 * w.iter().map(|x| x * x).sum::<f64>();
    let hinge: f64 = set
        .vectors
        .iter()
        .zip(&set.labels)
        .map(|(x, &y)| {
            let f = w[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[dim];
            (1.0 - y as f64 * f).max(0.0)
        })
        .sum::<f64>()
        / set.len() as f64;
    reg + hinge
}

/// Pegasos: stochastic sub-gradient steps with rate `1/(λt)` on
/// `λ/2 ‖w‖² + mean hinge`, followed by projection onto the ball of radius
/// `1/√λ`. The bias is a regularized weight on a constant feature.
pub fn svm_train(train: &LabeledSet, cfg: &SvmConfig) -> Result<SvmModel, ClassifyError> {
    if cfg.lambda <= 0.0 || cfg.epochs == 0 {
        return Err(ClassifyError::Config("lambda must be positive and epochs at least 1".into()));
    }
    train.check_classes()?;
    let dim = train.dim();
    let mut w = vec![0.0; dim + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut objective = Vec::with_capacity(cfg.epochs);
    let radius = 1.0 / cfg.lambda.sqrt();
    let mut t = 0u64;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let (x, y) = (&train.vectors[i], train.labels[i] as f64);
            let margin = y * (w[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[dim]);
            let shrink = 1.0 - eta * cfg.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wv, xv) in w[..dim].iter_mut().zip(x) {
                    *wv += eta * y * xv;
                }
                w[dim] += eta * y;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }
        objective.push(svm_objective(&w, cfg.lambda, train));
    }
    let bias = w.pop().expect("bias slot");
    Ok(SvmModel { weights: w, bias, objective, config: *cfg })
}

/// Counts with Democratic as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_dem: usize,
    pub false_dem: usize,
    pub true_rep: usize,
    pub false_rep: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_dem + self.false_dem + self.true_rep + self.false_rep
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.true_dem + self.true_rep) as f64 / self.total() as f64
    }

    fn add(&mut self, predicted: i8, actual: i8) {
        match (predicted == DEMOCRATIC, actual == DEMOCRATIC) {
            (true, true) => self.true_dem += 1,
            (true, false) => self.false_dem += 1,
            (false, false) => self.true_rep += 1,
            (false, true) => self.false_rep += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset_kind: DatasetKind,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub split_fingerprint: String,
    pub config_fingerprint: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

pub fn evaluate(model: &SvmModel, test: &LabeledSet, split_fingerprint: &str) -> Result<EvalReport, ClassifyError> {
    if !test.is_empty() && test.dim() != model.weights.len() {
        return Err(ClassifyError::DimMismatch { expected: model.weights.len(), found: test.dim() });
    }
    let mut confusion = Confusion::default();
    for (x, &y) in test.vectors.iter().zip(&test.labels) {
        confusion.add(model.predict(x), y);
    }
    Ok(EvalReport {
        model: "svm".into(),
        dataset_kind: test.dataset_kind,
        accuracy: confusion.accuracy(),
        confusion,
        split_fingerprint: split_fingerprint.to_string(),
        config_fingerprint: short_hash(&[&serde_json::to_vec(&model.config).expect("config serializes")]),
        notes: BTreeMap::new(),
    })
}

/// Clusters the whole labeled set and scores it under the better bijection.
pub fn evaluate_kmeans(set: &LabeledSet, cfg: &KMeansConfig) -> Result<(EvalReport, KMeansFit), ClassifyError> {
    let fit = kmeans_fit(&set.vectors, cfg)?;
    let (_, map) = cluster_accuracy(&fit.assignments, &set.labels);
    let mut confusion = Confusion::default();
    for (&a, &y) in fit.assignments.iter().zip(&set.labels) {
        confusion.add(map[a.min(1)], y);
    }
    let mut notes = BTreeMap::new();
    notes.insert("inertia".into(), format!("{:.6}", fit.inertia));
    let report = EvalReport {
        model: "k-means".into(),
        dataset_kind: set.dataset_kind,
        accuracy: confusion.accuracy(),
        confusion,
        split_fingerprint: "full-set".into(),
        config_fingerprint: short_hash(&[&serde_json::to_vec(cfg).expect("config serializes")]),
        notes,
    };
    Ok((report, fit))
}

/// Train on the split's training side, score on its test side.
pub fn train_and_evaluate(set: &LabeledSet, split: &SplitConfig, svm: &SvmConfig) -> Result<EvalReport, ClassifyError> {
    let s = stratified_split(set, split)?;
    let model = svm_train(&s.train, svm)?;
    evaluate(&model, &s.test, &s.fingerprint)
}
