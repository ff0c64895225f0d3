//! Misjudgment, omission and correct rates per defect type, and the dataset
//! harness that produces them.
//!
//! A row for defect type `t` compares the entries whose truth is `t` with
//! the normal entries of the same device class. The Total row pools the
//! numerators and denominators of all rows, so each of its rates is a
//! population-weighted mean of the row rates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::GlobalConfig;
use crate::defects::{classify, StandardLibrary, Verdict};
use crate::imaging::{load_image, DeviceClass, ImagingError, RoiAnnotation, TruthLabel};

/// Share of normal entries assigned to the training split.
pub const TRAIN_NORMAL: (usize, usize) = (150, 200);
/// Share of defective entries assigned to the training split.
pub const TRAIN_DEFECTIVE: (usize, usize) = (40, 87);

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty {population} population for {defect}")]
    EmptyPopulation {
        defect: &'static str,
        population: &'static str,
    },
    #[error("{0} is not a defect type")]
    NotADefect(&'static str),
    #[error("entry {0} has no truth label")]
    MissingTruth(usize),
    #[error("no defect type has both populations")]
    NothingToScore,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Rates of one defect-type row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub p_e: f64,
    pub p_m: f64,
    pub p_c: f64,
    pub n_normal: usize,
    pub n_defective: usize,
}

pub fn correct_rate(p_e: f64, p_m: f64) -> f64 {
    1.0 - (p_e + p_m) / 2.0
}

impl Metrics {
    pub fn from_rates(p_e: f64, p_m: f64, n_normal: usize, n_defective: usize) -> Self {
        Self {
            p_e,
            p_m,
            p_c: correct_rate(p_e, p_m),
            n_normal,
            n_defective,
        }
    }

    fn from_counts(c: &Counts) -> Self {
        Self::from_rates(
            c.misjudged as f64 / c.n_normal as f64,
            c.omitted as f64 / c.n_defective as f64,
            c.n_normal,
            c.n_defective,
        )
    }
}

/// Truth and prediction for one ROI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub class: DeviceClass,
    pub truth: TruthLabel,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    misjudged: usize,
    n_normal: usize,
    omitted: usize,
    n_defective: usize,
}

fn counts_for(judgements: &[Judgement], defect: TruthLabel) -> Result<Counts, EvalError> {
    let class = defect.device_class().ok_or(EvalError::NotADefect(defect.as_str()))?;
    let mut c = Counts::default();
    for j in judgements {
        if j.truth == TruthLabel::Normal && j.class == class {
            c.n_normal += 1;
            c.misjudged += usize::from(j.verdict == defect);
        } else if j.truth == defect {
            c.n_defective += 1;
            // a defect reported as a different defect is still missed
            c.omitted += usize::from(j.verdict != defect);
        }
    }
    if c.n_normal == 0 {
        return Err(EvalError::EmptyPopulation {
            defect: defect.as_str(),
            population: "normal",
        });
    }
    if c.n_defective == 0 {
        return Err(EvalError::EmptyPopulation {
            defect: defect.as_str(),
            population: "defective",
        });
    }
    Ok(c)
}

/// Row metrics of `defect` over `judgements`.
pub fn compute_metrics(judgements: &[Judgement], defect: TruthLabel) -> Result<Metrics, EvalError> {
    counts_for(judgements, defect).map(|c| Metrics::from_counts(&c))
}

/// Per-type rows plus the pooled Total row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: BTreeMap<TruthLabel, Metrics>,
    pub total: Metrics,
}

/// Rows for every defect type with both populations present. Types with no
/// defective entries are left out; a type with defects but no normals of
/// its class is an error.
pub fn metrics_table(judgements: &[Judgement]) -> Result<MetricsTable, EvalError> {
    let mut rows = BTreeMap::new();
    let mut pooled = Counts::default();
    for defect in TruthLabel::DEFECTS {
        if !judgements.iter().any(|j| j.truth == defect) {
            continue;
        }
        let c = counts_for(judgements, defect)?;
        pooled.misjudged += c.misjudged;
        pooled.n_normal += c.n_normal;
        pooled.omitted += c.omitted;
        pooled.n_defective += c.n_defective;
        rows.insert(defect, Metrics::from_counts(&c));
    }
    if rows.is_empty() {
        return Err(EvalError::NothingToScore);
    }
    Ok(MetricsTable {
        rows,
        total: Metrics::from_counts(&pooled),
    })
}

impl MetricsTable {
    /// Aligned text table, one row per defect type and a total row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>7} {:>7} {:>7} {:>8} {:>11}",
            "defect", "p_e", "p_m", "p_c", "normals", "defectives"
        );
        let mut line = |name: &str, m: &Metrics| {
            let _ = writeln!(
                out,
                "{:<20} {:>7.3} {:>7.3} {:>7.3} {:>8} {:>11}",
                name, m.p_e, m.p_m, m.p_c, m.n_normal, m.n_defective
            );
        };
        for (defect, m) in &self.rows {
            line(defect.as_str(), m);
        }
        line("total", &self.total);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    All,
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::All => "all",
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Split::All),
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}; expected all, train or test")),
        }
    }
}

/// Labelled ROIs plus the split to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalManifest {
    pub entries: Vec<RoiAnnotation>,
    pub split: Split,
    pub seed: u64,
}

impl EvalManifest {
    pub fn new(entries: Vec<RoiAnnotation>, split: Split, seed: u64) -> Result<Self, EvalError> {
        if let Some(i) = entries.iter().position(|e| e.truth_label.is_none()) {
            return Err(EvalError::MissingTruth(i));
        }
        Ok(Self { entries, split, seed })
    }

    /// Indices of the selected entries, ascending. Each truth label is
    /// shuffled with the seed and its leading share goes to training.
    pub fn selected(&self) -> Vec<usize> {
        if self.split == Split::All {
            return (0..self.entries.len()).collect();
        }
        let mut by_truth: BTreeMap<TruthLabel, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(t) = e.truth_label {
                by_truth.entry(t).or_default().push(i);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut picked = Vec::new();
        for (truth, mut idx) in by_truth {
            idx.shuffle(&mut rng);
            let (num, den) = if truth == TruthLabel::Normal {
                TRAIN_NORMAL
            } else {
                TRAIN_DEFECTIVE
            };
            let n_train = (idx.len() * num + den / 2) / den;
            let (train, test) = idx.split_at(n_train);
            picked.extend_from_slice(if self.split == Split::Train { train } else { test });
        }
        picked.sort_unstable();
        picked
    }
}

/// Outcome of one evaluated entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryResult {
    pub index: usize,
    pub image: String,
    pub class: DeviceClass,
    pub truth: TruthLabel,
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything `evaluate` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub seed: u64,
    pub evaluated: usize,
    pub excluded: usize,
    pub table: MetricsTable,
    pub entries: Vec<EntryResult>,
}

/// Classifies the selected entries with `judge`, `jobs` at a time. Failing
/// entries are recorded and left out of the metrics. The result does not
/// depend on `jobs`.
pub fn evaluate_entries<F>(manifest: &EvalManifest, jobs: usize, judge: F) -> Result<EvalReport, EvalError>
where
    F: Fn(&RoiAnnotation) -> Result<Verdict, String> + Sync,
{
    let selected = manifest.selected();
    let run = || -> Vec<EntryResult> {
        selected
            .par_iter()
            .map(|&index| {
                let ann = &manifest.entries[index];
                let outcome = judge(ann);
                EntryResult {
                    index,
                    image: ann.image_path.clone(),
                    class: ann.device_class,
                    truth: ann.truth_label.expect("checked by EvalManifest::new"),
                    verdict: outcome.as_ref().ok().copied(),
                    error: outcome.err(),
                }
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let entries = pool.install(run);

    let judgements: Vec<Judgement> = entries
        .iter()
        .filter_map(|e| {
            e.verdict.map(|verdict| Judgement {
                class: e.class,
                truth: e.truth,
                verdict,
            })
        })
        .collect();
    let table = metrics_table(&judgements)?;
    Ok(EvalReport {
        split: manifest.split,
        seed: manifest.seed,
        evaluated: judgements.len(),
        excluded: entries.len() - judgements.len(),
        table,
        entries,
    })
}

/// Runs the full pipeline on every selected entry. Image paths are
/// resolved against `base_dir`.
pub fn evaluate_dataset(
    manifest: &EvalManifest,
    base_dir: &Path,
    library: &StandardLibrary,
    cfg: &GlobalConfig,
    jobs: usize,
) -> Result<EvalReport, EvalError> {
    evaluate_entries(manifest, jobs, |ann| {
        let img = load_image(base_dir.join(&ann.image_path)).map_err(|e| e.to_string())?;
        classify(&img, ann, library, cfg)
            .map(|r| r.verdict)
            .map_err(|e| e.to_string())
    })
}
