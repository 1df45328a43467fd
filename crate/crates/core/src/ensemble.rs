//! Bagged regression trees supplying a mean and a spread for selective
//! regression.
//!
//! Trees use axis-aligned splits `x[feature] <= threshold` chosen by variance
//! reduction, with leaf means as predictions. The ensemble mean is the
//! prediction and the population standard deviation over trees is the
//! uncertainty score.
//!
//! Random stream protocol, per tree `t`, with `rng = seeding::rng(seed, &[t])`:
//! 1. with bootstrap, `n` draws of `rng.gen_range(0..n)`;
//! 2. nodes grow depth-first, left child first;
//! 3. at each node that may split, if fewer than all `d` features are
//!    considered, `rand::seq::index::sample(rng, d, k)` picks them (then sorted);
//! 4. with random thresholds, each candidate feature whose node range is not
//!    constant draws `rng.gen_range(min..max)`, in feature order.
//!
//! Ties between equally good splits keep the first one found (features
//! ascending, thresholds ascending).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::MeanSpread;
use crate::seeding;

const DUMP_MAGIC: &str = "lcc-forest";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    RandomForest,
    ExtraTrees,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Self::RandomForest => "random_forest",
            Self::ExtraTrees => "extra_trees",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "random_forest" | "rf" => Ok(Self::RandomForest),
            "extra_trees" | "ert" => Ok(Self::ExtraTrees),
            other => Err(Error::InvalidConfig(format!("unknown ensemble variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Third,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, d: usize) -> usize {
        let k = match self {
            Self::All => d,
            Self::Sqrt => (d as f64).sqrt().round() as usize,
            Self::Third => d / 3,
            Self::Count(k) => k,
        };
        k.clamp(1, d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Midpoints between consecutive distinct values.
    Exhaustive,
    /// One uniform draw within the node's feature range.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Node budget per tree; nodes that would exceed it become leaves.
    pub max_nodes: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub thresholds: ThresholdRule,
    pub seed: u64,
}

impl TrainConfig {
    /// Bootstrap samples, a third of the features per split, exhaustive thresholds.
    pub fn random_forest(seed: u64) -> Self {
        Self {
            variant: Variant::RandomForest,
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_nodes: 1000,
            bootstrap: true,
            max_features: MaxFeatures::Third,
            thresholds: ThresholdRule::Exhaustive,
            seed,
        }
    }

    /// Full sample, all features, random thresholds.
    pub fn extra_trees(seed: u64) -> Self {
        Self {
            variant: Variant::ExtraTrees,
            bootstrap: false,
            max_features: MaxFeatures::All,
            thresholds: ThresholdRule::Random,
            ..Self::random_forest(seed)
        }
    }

    pub fn for_variant(variant: Variant, seed: u64) -> Self {
        match variant {
            Variant::RandomForest => Self::random_forest(seed),
            Variant::ExtraTrees => Self::extra_trees(seed),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees < 2 {
            return Err(Error::InvalidConfig("an ensemble needs at least 2 trees".into()));
        }
        if self.min_leaf == 0 || self.max_nodes == 0 {
            return Err(Error::InvalidConfig("min_leaf and max_nodes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidConfig("tree has no nodes".into()));
        }
        for node in &nodes {
            if let Node::Split { left, right, .. } = *node {
                if left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::InvalidConfig(format!("child index out of range in {node:?}")));
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    variant: Variant,
    n_features: usize,
    seed: u64,
    trees: Vec<Tree>,
}

struct Builder<'a> {
    features: &'a [Vec<f64>],
    targets: &'a [f64],
    config: &'a TrainConfig,
    n_candidates: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    /// Right siblings promised by splits whose left subtree is still growing.
    reserved: usize,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn mean(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.targets[i]).sum::<f64>() / idx.len() as f64
    }

    /// `Σ_left² / n_left + Σ_right² / n_right`, the quantity variance
    /// reduction maximizes.
    fn score(&self, idx: &[usize], feature: usize, threshold: f64) -> Option<f64> {
        let (mut sl, mut nl, mut sr, mut nr) = (0.0, 0usize, 0.0, 0usize);
        for &i in idx {
            if self.features[i][feature] <= threshold {
                sl += self.targets[i];
                nl += 1;
            } else {
                sr += self.targets[i];
                nr += 1;
            }
        }
        let min = self.config.min_leaf;
        (nl >= min && nr >= min).then(|| sl * sl / nl as f64 + sr * sr / nr as f64)
    }

    fn best_exhaustive(&self, idx: &[usize], feature: usize) -> Option<SplitChoice> {
        let mut sorted = idx.to_vec();
        sorted.sort_by(|&a, &b| self.features[a][feature].total_cmp(&self.features[b][feature]));
        let total: f64 = sorted.iter().map(|&i| self.targets[i]).sum();
        let n = sorted.len();
        let min = self.config.min_leaf;
        let mut best: Option<SplitChoice> = None;
        let mut left_sum = 0.0;
        for pos in 0..n - 1 {
            left_sum += self.targets[sorted[pos]];
            let here = self.features[sorted[pos]][feature];
            let next = self.features[sorted[pos + 1]][feature];
            let nl = pos + 1;
            if here == next || nl < min || n - nl < min {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mid = here + (next - here) / 2.0;
                let threshold = if mid < next { mid } else { here };
                best = Some(SplitChoice { feature, threshold, score });
            }
        }
        best
    }

    fn best_random(&mut self, idx: &[usize], feature: usize) -> Option<SplitChoice> {
        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = self.features[i][feature];
            (lo.min(v), hi.max(v))
        });
        if lo >= hi {
            return None;
        }
        let threshold = self.rng.gen_range(lo..hi);
        self.score(idx, feature, threshold).map(|score| SplitChoice { feature, threshold, score })
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let at = self.nodes.len();
        let value = self.mean(idx);
        self.nodes.push(Node::Leaf { value });

        let first = self.targets[idx[0]];
        let pure = idx.iter().all(|&i| self.targets[i] == first);
        let depth_ok = self.config.max_depth.is_none_or(|d| depth < d);
        let room = self.nodes.len() + self.reserved + 2 <= self.config.max_nodes;
        if pure || !depth_ok || !room || idx.len() < 2 * self.config.min_leaf {
            return at;
        }

        let d = self.features[idx[0]].len();
        let candidates: Vec<usize> = if self.n_candidates < d {
            let mut picked = sample(&mut self.rng, d, self.n_candidates).into_vec();
            picked.sort_unstable();
            picked
        } else {
            (0..d).collect()
        };
        let mut best: Option<SplitChoice> = None;
        for feature in candidates {
            let choice = match self.config.thresholds {
                ThresholdRule::Exhaustive => self.best_exhaustive(idx, feature),
                ThresholdRule::Random => self.best_random(idx, feature),
            };
            if let Some(c) = choice {
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best else { return at };

        let mut mid = 0;
        for k in 0..idx.len() {
            if self.features[idx[k]][split.feature] <= split.threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(mid);
        self.reserved += 1;
        let left = self.grow(left_idx, depth + 1);
        self.reserved -= 1;
        let right = self.grow(right_idx, depth + 1);
        self.nodes[at] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        at
    }
}

/// Fits an ensemble on `features[i] → targets[i]`.
pub fn train(features: &[Vec<f64>], targets: &[f64], config: &TrainConfig) -> Result<TreeEnsemble> {
    config.validate()?;
    if features.is_empty() {
        return Err(Error::EmptySample);
    }
    if features.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), got: targets.len() });
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::InvalidConfig("samples need at least one feature".into()));
    }
    for (i, x) in features.iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { row: i, col: j, value: x[j] });
        }
        if !targets[i].is_finite() {
            return Err(Error::NonFiniteLoss { row: i, col: d, value: targets[i] });
        }
    }
    let n = features.len();
    let n_candidates = config.max_features.resolve(d);
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeding::rng(config.seed, &[t as u64]);
            let mut idx: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = Builder { features, targets, config, n_candidates, rng, nodes: Vec::new(), reserved: 0 };
            builder.grow(&mut idx, 0);
            Tree { nodes: builder.nodes }
        })
        .collect();
    Ok(TreeEnsemble { variant: config.variant, n_features: d, seed: config.seed, trees })
}

impl TreeEnsemble {
    pub fn from_trees(variant: Variant, n_features: usize, seed: u64, trees: Vec<Tree>) -> Result<Self> {
        if trees.len() < 2 {
            return Err(Error::InvalidConfig("an ensemble needs at least 2 trees".into()));
        }
        for tree in &trees {
            if let Some(Node::Split { feature, .. }) =
                tree.nodes.iter().find(|n| matches!(n, Node::Split { feature, .. } if *feature >= n_features))
            {
                return Err(Error::DimensionMismatch { expected: n_features, got: feature + 1 });
            }
        }
        Ok(Self { variant, n_features, seed, trees })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn member_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).collect())
    }

    /// Mean and population standard deviation over member trees.
    pub fn predict_mean_std(&self, x: &[f64]) -> Result<(f64, f64)> {
        Ok(mean_std(&self.member_predictions(x)?))
    }

    /// Writes the plain-text dump:
    ///
    /// ```text
    /// lcc-forest 1
    /// variant <random_forest|extra_trees>
    /// features <d>
    /// seed <u64>
    /// trees <T>
    /// tree <node count>          (repeated T times, followed by its nodes)
    /// leaf <value>
    /// split <feature> <threshold> <left> <right>
    /// ```
    ///
    /// Floats use Rust's shortest round-trip formatting, so a dump reloads
    /// bit-exactly.
    pub fn write_text(&self, mut writer: impl Write) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{DUMP_MAGIC} {DUMP_VERSION}");
        let _ = writeln!(out, "variant {}", self.variant.name());
        let _ = writeln!(out, "features {}", self.n_features);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "trees {}", self.trees.len());
        for tree in &self.trees {
            let _ = writeln!(out, "tree {}", tree.nodes.len());
            for node in &tree.nodes {
                match node {
                    Node::Leaf { value } => {
                        let _ = writeln!(out, "leaf {value}");
                    }
                    Node::Split { feature, threshold, left, right } => {
                        let _ = writeln!(out, "split {feature} {threshold} {left} {right}");
                    }
                }
            }
        }
        writer.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn read_text(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(l) if l.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let mut next = |expect: &str| -> Result<(usize, Vec<String>)> {
            let (line, text) = lines.next().ok_or_else(|| Error::Parse {
                row: 0,
                column: 0,
                message: format!("unexpected end of dump, expected `{expect}`"),
            })?;
            let fields: Vec<String> = text?.split_whitespace().map(str::to_string).collect();
            Ok((line, fields))
        };
        fn field<T: std::str::FromStr>(line: usize, fields: &[String], at: usize) -> Result<T> {
            fields.get(at).and_then(|f| f.parse().ok()).ok_or_else(|| Error::Parse {
                row: line,
                column: at + 1,
                message: format!("bad or missing field in `{}`", fields.join(" ")),
            })
        }
        let header = |expect: &str, (line, fields): (usize, Vec<String>)| -> Result<(usize, Vec<String>)> {
            if fields.first().map(String::as_str) == Some(expect) {
                Ok((line, fields))
            } else {
                Err(Error::Parse { row: line, column: 1, message: format!("expected `{expect}`") })
            }
        };

        let (line, fields) = header(DUMP_MAGIC, next(DUMP_MAGIC)?)?;
        let version: u32 = field(line, &fields, 1)?;
        if version != DUMP_VERSION {
            return Err(Error::Parse { row: line, column: 2, message: format!("unsupported version {version}") });
        }
        let (line, fields) = header("variant", next("variant")?)?;
        let variant = Variant::parse(&field::<String>(line, &fields, 1)?)?;
        let (line, fields) = header("features", next("features")?)?;
        let n_features: usize = field(line, &fields, 1)?;
        let (line, fields) = header("seed", next("seed")?)?;
        let seed: u64 = field(line, &fields, 1)?;
        let (line, fields) = header("trees", next("trees")?)?;
        let n_trees: usize = field(line, &fields, 1)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let (line, fields) = header("tree", next("tree")?)?;
            let count: usize = field(line, &fields, 1)?;
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let (line, fields) = next("leaf or split")?;
                nodes.push(match fields.first().map(String::as_str) {
                    Some("leaf") => Node::Leaf { value: field(line, &fields, 1)? },
                    Some("split") => Node::Split {
                        feature: field(line, &fields, 1)?,
                        threshold: field(line, &fields, 2)?,
                        left: field(line, &fields, 3)?,
                        right: field(line, &fields, 4)?,
                    },
                    _ => {
                        return Err(Error::Parse { row: line, column: 1, message: "expected `leaf` or `split`".into() })
                    }
                });
            }
            trees.push(Tree::from_nodes(nodes)?);
        }
        Self::from_trees(variant, n_features, seed, trees)
    }
}

impl MeanSpread for TreeEnsemble {
    fn mean_spread(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.predict_mean_std(x)
    }
}

/// Mean and population (divide-by-count) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = seeding::rng(seed, &[]);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let y = x.iter().map(|v| (3.0 * v[0]).sin() + v[1] * 0.5 + rng.gen::<f64>() * 0.1).collect();
        (x, y)
    }

    #[test]
    fn depth_zero_predicts_bootstrap_mean() {
        let (x, y) = toy(30, 1);
        let cfg = TrainConfig { max_depth: Some(0), n_trees: 5, ..TrainConfig::random_forest(3) };
        let ens = train(&x, &y, &cfg).unwrap();
        for (t, tree) in ens.trees().iter().enumerate() {
            let mut rng = seeding::rng(3, &[t as u64]);
            let idx: Vec<usize> = (0..30).map(|_| rng.gen_range(0..30)).collect();
            let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / 30.0;
            assert_eq!(tree.nodes().len(), 1);
            assert!((tree.predict(&[0.5, 0.5]) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_targets_zero_spread() {
        let (x, _) = toy(40, 2);
        let y = vec![0.42; 40];
        for cfg in [TrainConfig::random_forest(1), TrainConfig::extra_trees(1)] {
            let ens = train(&x, &y, &TrainConfig { n_trees: 10, ..cfg }).unwrap();
            let (m, s) = ens.predict_mean_std(&[0.3, 0.9]).unwrap();
            assert!((m - 0.42).abs() < 1e-15);
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn mean_std_by_hand() {
        let (m, s) = mean_std(&[0.2, 0.4, 0.6]);
        assert!((m - 0.4).abs() < 1e-12);
        assert!((s - 0.163_299_3).abs() < 1e-6);
        assert_eq!(mean_std(&[0.3; 4]).1, 0.0);
        let (m2, s2) = mean_std(&[0.6, 0.2, 0.4]);
        assert!((m2 - m).abs() < 1e-15 && (s2 - s).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(train(&[], &[], &TrainConfig::random_forest(0)), Err(Error::EmptySample)));
        let (x, y) = toy(10, 0);
        let ens = train(&x, &y, &TrainConfig { n_trees: 3, ..TrainConfig::extra_trees(0) }).unwrap();
        assert!(matches!(ens.predict_mean_std(&[0.1]), Err(Error::DimensionMismatch { .. })));
        assert!(train(&x, &y, &TrainConfig { n_trees: 1, ..TrainConfig::extra_trees(0) }).is_err());
    }

    #[test]
    fn node_budget_respected() {
        let (x, y) = toy(500, 4);
        let cfg = TrainConfig { n_trees: 3, max_nodes: 31, ..TrainConfig::random_forest(9) };
        let ens = train(&x, &y, &cfg).unwrap();
        assert!(ens.trees().iter().all(|t| t.nodes().len() <= 31));
    }

    #[test]
    fn dump_round_trips_exactly() {
        let (x, y) = toy(60, 5);
        let ens = train(&x, &y, &TrainConfig { n_trees: 4, ..TrainConfig::extra_trees(11) }).unwrap();
        let mut buf = Vec::new();
        ens.write_text(&mut buf).unwrap();
        let back = TreeEnsemble::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, ens);
        assert!(TreeEnsemble::read_text("lcc-forest 2\n".as_bytes()).is_err());
    }
}
