//! Experiment orchestration: seeded repetitions of selection strategies over
//! generated or ingested corpora, aggregated into uncertainty curves, quality
//! reports, and pruning statistics, all emitted as CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::belief::WorkerAccuracy;
use crate::crowd::{AccuracyDistribution, SimConfig, SimCrowd};
use crate::frameworks::{run_with_strategy, RunOptions, RunOutcome, RunTrace, SelectionStrategy};
use crate::harness::{evaluate_quality, generate, GeneratorSpec, HarnessError};
use crate::model::{load_result_set, ResultSet};
use crate::select::{AccuracyModel, GreedyTrace, PruningFlags};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Generator parameters without a seed; each repetition derives its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTemplate {
    pub n_matchings: usize,
    pub n_correspondences: usize,
    pub concentration: f64,
    pub overlap: f64,
}

impl GeneratorTemplate {
    fn with_seed(&self, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            n_matchings: self.n_matchings,
            n_correspondences: self.n_correspondences,
            concentration: self.concentration,
            overlap: self.overlap,
            seed,
        }
    }
}

/// Sidecar file designating the correct matching of an ingested result set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub matching_index: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CorpusSpec {
    /// A fresh corpus per repetition.
    Generator { template: GeneratorTemplate },
    /// One fixed corpus for every repetition.
    Input { path: PathBuf, truth_path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Sccq,
    Mccq { k: usize },
    Random,
}

impl AlgorithmSpec {
    pub fn name(&self) -> String {
        match self {
            AlgorithmSpec::Sccq => "sccq".into(),
            AlgorithmSpec::Mccq { k } => format!("mccq_k{k}"),
            AlgorithmSpec::Random => "random".into(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            AlgorithmSpec::Mccq { k } => *k,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitSpec {
    /// Stop after this many answers.
    Budget(usize),
    /// Stop at this tick, with unlimited questions.
    Ticks(u64),
}

/// How the selection-time accuracy predictions are produced. Realized
/// accuracies always come from the crowd with the answers; this only governs
/// what the selector assumes beforehand.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PredictedAccuracy {
    /// One per-correspondence draw from the accuracy distribution (the
    /// hardness-attribute protocol).
    #[default]
    Sampled,
    /// A crowd-wide constant.
    Constant { p: f64 },
}

/// One line of an accuracy-distribution sweep: every algorithm is rerun under
/// this crowd model, reported as `<algorithm>[<label>]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub accuracy_dist: AccuracyDistribution,
    #[serde(default)]
    pub allow_subhalf: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub algorithms: Vec<AlgorithmSpec>,
    pub corpus: CorpusSpec,
    pub limit: LimitSpec,
    pub repetitions: usize,
    /// Root seed; all per-repetition randomness derives from it.
    pub seed: u64,
    pub accuracy_dist: AccuracyDistribution,
    #[serde(default)]
    pub predicted_acc: PredictedAccuracy,
    /// When non-empty, replaces the single crowd model with one run per
    /// entry (per algorithm).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub accuracy_sweep: Vec<SweepEntry>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub accept_prob: Option<f64>,
    #[serde(default)]
    pub allow_subhalf: bool,
    #[serde(default)]
    pub pruning: PruningFlags,
    /// Collect per-iteration greedy traces (enables the pruning report).
    #[serde(default)]
    pub collect_traces: bool,
    /// Write per-run trace JSON files alongside the CSVs.
    #[serde(default)]
    pub emit_traces: bool,
}

fn default_lambda() -> f64 {
    3.0
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<ExperimentConfig, HarnessError> {
        serde_json::from_str(json).map_err(|e| HarnessError::BadConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    fn check(&self) -> Result<(), HarnessError> {
        let mut problems = Vec::new();
        if self.algorithms.is_empty() {
            problems.push("no algorithms listed".to_string());
        }
        if self.repetitions == 0 {
            problems.push("repetitions must be at least 1".to_string());
        }
        for alg in &self.algorithms {
            if let AlgorithmSpec::Mccq { k } = alg {
                if *k == 0 {
                    problems.push("mccq needs k >= 1".to_string());
                }
                if let LimitSpec::Budget(b) = self.limit {
                    if b < *k {
                        problems.push(format!("budget {b} smaller than k {k}"));
                    }
                }
            }
        }
        match self.limit {
            LimitSpec::Budget(0) => problems.push("budget must be at least 1".to_string()),
            LimitSpec::Ticks(0) => problems.push("tick limit must be at least 1".to_string()),
            _ => {}
        }
        if let Err(e) = self.accuracy_dist.validate(self.allow_subhalf) {
            problems.push(e.to_string());
        }
        for entry in &self.accuracy_sweep {
            if entry.label.is_empty() {
                problems.push("sweep entries need a label".to_string());
            }
            if let Err(e) = entry.accuracy_dist.validate(entry.allow_subhalf) {
                problems.push(format!("sweep '{}': {e}", entry.label));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::BadConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: u64,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub rep: usize,
    pub sim_seed: u64,
    pub answers: usize,
    pub final_uncertainty: f64,
    pub precision: f64,
    pub recall: f64,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub algorithm: String,
    pub k: usize,
    pub curve: Vec<CurvePoint>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub runs: Vec<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruning: Option<PruningTable>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub config: ExperimentConfig,
    pub reports: Vec<AlgorithmReport>,
    /// Set when any run failed; the bundle still carries the rest.
    pub partial: bool,
    #[serde(skip)]
    pub traces: Vec<(String, usize, RunTrace)>,
}

/// splitmix64: the standard 64-bit seed expander.
fn mix_seed(root: u64, salt: u64) -> u64 {
    let mut z = root ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SALT_CORPUS: u64 = 1;
const SALT_SIM: u64 = 2;
const SALT_ACC_MODEL: u64 = 3;
const SALT_RANDOM_SELECT: u64 = 4;

struct RepOutcome {
    trace: RunTrace,
    quality: crate::harness::QualityReport,
    sim_seed: u64,
}

fn run_one(
    config: &ExperimentConfig,
    algorithm: &AlgorithmSpec,
    crowd: &SweepEntry,
    fixed_corpus: Option<&(ResultSet, usize)>,
    rep: usize,
) -> Result<RepOutcome, HarnessError> {
    let rep_root = mix_seed(config.seed, 1000 + rep as u64);

    let (rs, truth_index) = match (&config.corpus, fixed_corpus) {
        (CorpusSpec::Generator { template }, _) => {
            let corpus = generate(&template.with_seed(mix_seed(rep_root, SALT_CORPUS)))?;
            (corpus.result_set, corpus.ground_truth)
        }
        (CorpusSpec::Input { .. }, Some((rs, truth))) => (rs.clone(), *truth),
        (CorpusSpec::Input { .. }, None) => {
            return Err(HarnessError::BadConfig(
                "input corpus was not preloaded".into(),
            ))
        }
    };

    let acc_model = match config.predicted_acc {
        PredictedAccuracy::Constant { p } => AccuracyModel::Constant(
            WorkerAccuracy::new(p).map_err(|e| HarnessError::BadConfig(e.to_string()))?,
        ),
        PredictedAccuracy::Sampled => {
            // per-correspondence hardness attributes
            use rand::SeedableRng;
            let mut rng =
                rand_chacha::ChaCha12Rng::seed_from_u64(mix_seed(rep_root, SALT_ACC_MODEL));
            let accs: Result<Vec<WorkerAccuracy>, _> = (0..rs.n_correspondences())
                .map(|_| {
                    crowd
                        .accuracy_dist
                        .sample_accuracy(&mut rng, crowd.allow_subhalf)
                })
                .collect();
            AccuracyModel::PerCorrespondence(accs?)
        }
    };

    let truth_members: Vec<u32> = rs
        .matching(truth_index)
        .members()
        .iter()
        .map(|c| c.0)
        .collect();
    let sim_seed = mix_seed(rep_root, SALT_SIM);
    let mut sim_config = SimConfig::new(sim_seed, crowd.accuracy_dist.clone(), truth_members);
    sim_config.lambda = config.lambda;
    sim_config.accept_prob = config.accept_prob;
    sim_config.allow_subhalf = crowd.allow_subhalf;
    let mut backend = SimCrowd::new(sim_config)?;

    let (budget, deadline) = match config.limit {
        LimitSpec::Budget(b) => (b, None),
        LimitSpec::Ticks(t) => (usize::MAX / 2, Some(t)),
    };
    let options = RunOptions {
        pruning: config.pruning,
        deadline_ticks: deadline,
        collect_greedy_trace: config.collect_traces,
        ..RunOptions::default()
    };
    let strategy = match algorithm {
        AlgorithmSpec::Sccq => SelectionStrategy::Sccq,
        AlgorithmSpec::Mccq { .. } => SelectionStrategy::Greedy,
        AlgorithmSpec::Random => SelectionStrategy::Random {
            seed: mix_seed(rep_root, SALT_RANDOM_SELECT),
        },
    };

    let trace = run_with_strategy(
        &rs,
        budget,
        algorithm.k(),
        &mut backend,
        &acc_model,
        strategy,
        &options,
    );

    let posterior = rs
        .with_probs(trace.final_beliefs.clone())
        .expect("trace beliefs match the corpus");
    let quality = evaluate_quality(&posterior, truth_index);

    Ok(RepOutcome {
        trace,
        quality,
        sim_seed,
    })
}

/// Uncertainty as a function of the x axis (answers or ticks), carried
/// forward so every repetition yields the same number of samples.
fn sample_curve(trace: &RunTrace, limit: &LimitSpec) -> Vec<f64> {
    match *limit {
        LimitSpec::Budget(b) => {
            let mut samples = Vec::with_capacity(b + 1);
            let mut current = trace.points.first().map_or(0.0, |p| p.uncertainty);
            let mut next = 0usize;
            for answers in 0..=b {
                while next < trace.points.len() && trace.points[next].answers_received <= answers {
                    current = trace.points[next].uncertainty;
                    next += 1;
                }
                samples.push(current);
            }
            samples
        }
        LimitSpec::Ticks(t) => {
            let mut samples = Vec::with_capacity(t as usize + 1);
            let mut current = trace.points.first().map_or(0.0, |p| p.uncertainty);
            let mut next = 0usize;
            for tick in 0..=t {
                while next < trace.points.len() && trace.points[next].tick <= tick {
                    current = trace.points[next].uncertainty;
                    next += 1;
                }
                samples.push(current);
            }
            samples
        }
    }
}

fn aggregate_curves(samples: &[Vec<f64>]) -> Vec<CurvePoint> {
    if samples.is_empty() {
        return Vec::new();
    }
    let len = samples[0].len();
    let n = samples.len() as f64;
    (0..len)
        .map(|x| {
            let mean = samples.iter().map(|s| s[x]).sum::<f64>() / n;
            let var = if samples.len() > 1 {
                samples.iter().map(|s| (s[x] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            CurvePoint {
                x: x as u64,
                mean,
                stddev: var.sqrt(),
            }
        })
        .collect()
}

/// Runs every algorithm for every repetition and aggregates. Failed runs are
/// recorded and mark the bundle partial; the remaining runs still aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ReportBundle, HarnessError> {
    config.check()?;

    let fixed_corpus: Option<(ResultSet, usize)> = match &config.corpus {
        CorpusSpec::Input { path, truth_path } => {
            let loaded = load_result_set(path)?;
            let truth_text = std::fs::read_to_string(truth_path)?;
            let truth: TruthFile = serde_json::from_str(&truth_text)
                .map_err(|e| HarnessError::BadConfig(format!("truth file: {e}")))?;
            if truth.matching_index >= loaded.result_set.n_matchings() {
                return Err(HarnessError::BadConfig(format!(
                    "truth index {} out of range",
                    truth.matching_index
                )));
            }
            Some((loaded.result_set, truth.matching_index))
        }
        CorpusSpec::Generator { .. } => None,
    };

    let default_line = [SweepEntry {
        label: String::new(),
        accuracy_dist: config.accuracy_dist.clone(),
        allow_subhalf: config.allow_subhalf,
    }];
    let lines: &[SweepEntry] = if config.accuracy_sweep.is_empty() {
        &default_line
    } else {
        &config.accuracy_sweep
    };

    let mut reports = Vec::new();
    let mut traces = Vec::new();
    let mut partial = false;

    for (algorithm, crowd) in config
        .algorithms
        .iter()
        .flat_map(|a| lines.iter().map(move |l| (a, l)))
    {
        let report_name = if crowd.label.is_empty() {
            algorithm.name()
        } else {
            format!("{}[{}]", algorithm.name(), crowd.label)
        };
        let outcomes = run_reps(config, algorithm, crowd, fixed_corpus.as_ref());

        let mut curve_samples = Vec::new();
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        let mut greedy_traces = Vec::new();
        let mut precision_sum = 0.0;
        let mut recall_sum = 0.0;
        let mut ok = 0usize;

        for (rep, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(rep_out) => {
                    if let RunOutcome::Truncated { cause } = &rep_out.trace.outcome {
                        failures.push(format!("rep {rep}: {cause}"));
                        partial = true;
                    }
                    curve_samples.push(sample_curve(&rep_out.trace, &config.limit));
                    precision_sum += rep_out.quality.precision;
                    recall_sum += rep_out.quality.recall;
                    ok += 1;
                    greedy_traces.extend(rep_out.trace.greedy_traces.iter().cloned());
                    runs.push(RunSummary {
                        rep,
                        sim_seed: rep_out.sim_seed,
                        answers: rep_out.trace.answers.len(),
                        final_uncertainty: rep_out.trace.final_uncertainty(),
                        precision: rep_out.quality.precision,
                        recall: rep_out.quality.recall,
                        outcome: rep_out.trace.outcome.clone(),
                    });
                    if config.emit_traces {
                        traces.push((report_name.clone(), rep, rep_out.trace));
                    }
                }
                Err(e) => {
                    failures.push(format!("rep {rep}: {e}"));
                    partial = true;
                }
            }
        }

        let pruning = if config.collect_traces && !greedy_traces.is_empty() {
            Some(pruning_report(&greedy_traces))
        } else {
            None
        };

        reports.push(AlgorithmReport {
            algorithm: report_name,
            k: algorithm.k(),
            curve: aggregate_curves(&curve_samples),
            mean_precision: if ok > 0 {
                precision_sum / ok as f64
            } else {
                0.0
            },
            mean_recall: if ok > 0 { recall_sum / ok as f64 } else { 0.0 },
            runs,
            pruning,
            failures,
        });
    }

    Ok(ReportBundle {
        config: config.clone(),
        reports,
        partial,
        traces,
    })
}

#[cfg(feature = "parallel")]
fn run_reps(
    config: &ExperimentConfig,
    algorithm: &AlgorithmSpec,
    crowd: &SweepEntry,
    fixed: Option<&(ResultSet, usize)>,
) -> Vec<Result<RepOutcome, HarnessError>> {
    (0..config.repetitions)
        .into_par_iter()
        .map(|rep| run_one(config, algorithm, crowd, fixed, rep))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_reps(
    config: &ExperimentConfig,
    algorithm: &AlgorithmSpec,
    crowd: &SweepEntry,
    fixed: Option<&(ResultSet, usize)>,
) -> Vec<Result<RepOutcome, HarnessError>> {
    (0..config.repetitions)
        .map(|rep| run_one(config, algorithm, crowd, fixed, rep))
        .collect()
}

// --- pruning report ----------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruningRow {
    pub iteration: usize,
    pub scored: usize,
    pub singleton: usize,
    pub determined: usize,
    pub bisect: usize,
    pub stale: usize,
    pub dominance: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruningTable {
    pub rows: Vec<PruningRow>,
}

impl PruningTable {
    pub fn total_pruned(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.singleton + r.determined + r.bisect + r.stale + r.dominance)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("iteration,scored,rule1_singleton,rule2_determined,rule3_bisect,rule4_stale,rule5_dominance\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iteration, r.scored, r.singleton, r.determined, r.bisect, r.stale, r.dominance
            ));
        }
        out
    }
}

/// Aggregates greedy traces into per-iteration counts and hit totals for
/// each pruning rule.
pub fn pruning_report(traces: &[GreedyTrace]) -> PruningTable {
    let mut by_iteration: BTreeMap<usize, PruningRow> = BTreeMap::new();
    for trace in traces {
        for it in &trace.iterations {
            let row = by_iteration
                .entry(it.iteration)
                .or_insert_with(|| PruningRow {
                    iteration: it.iteration,
                    ..PruningRow::default()
                });
            row.scored += it.candidate_scores.len();
            row.singleton += it.pruned_singleton;
            row.determined += it.pruned_determined;
            row.bisect += it.pruned_bisect;
            row.stale += it.pruned_stale;
            row.dominance += it.pruned_dominance;
        }
    }
    PruningTable {
        rows: by_iteration.into_values().collect(),
    }
}

// --- bundle output ------------------------------------------------------------

/// Writes `bundle.json`, one `curve_<algorithm>.csv` per algorithm,
/// `quality.csv`, per-algorithm `pruning_<algorithm>.csv` when collected, and
/// per-run trace JSON under `traces/` when emitted.
pub fn write_bundle(bundle: &ReportBundle, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;

    std::fs::write(
        dir.join("bundle.json"),
        serde_json::to_string_pretty(&bundle).expect("bundle serialization cannot fail"),
    )?;

    let x_name = match bundle.config.limit {
        LimitSpec::Budget(_) => "answers",
        LimitSpec::Ticks(_) => "tick",
    };
    for report in &bundle.reports {
        let mut csv = format!("{x_name},mean_uncertainty,stddev\n");
        for p in &report.curve {
            csv.push_str(&format!("{},{:.6},{:.6}\n", p.x, p.mean, p.stddev));
        }
        std::fs::write(dir.join(format!("curve_{}.csv", report.algorithm)), csv)?;

        if let Some(pruning) = &report.pruning {
            std::fs::write(
                dir.join(format!("pruning_{}.csv", report.algorithm)),
                pruning.to_csv(),
            )?;
        }
    }

    let mut quality = String::from("algorithm,k,precision,recall\n");
    for report in &bundle.reports {
        quality.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            report.algorithm, report.k, report.mean_precision, report.mean_recall
        ));
    }
    std::fs::write(dir.join("quality.csv"), quality)?;

    if !bundle.traces.is_empty() {
        let trace_dir = dir.join("traces");
        std::fs::create_dir_all(&trace_dir)?;
        for (alg, rep, trace) in &bundle.traces {
            std::fs::write(
                trace_dir.join(format!("{alg}_rep{rep}.json")),
                trace.to_json(),
            )?;
        }
    }

    Ok(())
}
