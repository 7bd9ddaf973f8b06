//! `ccq`: generate corpora, query selections, drive crowd runs, and execute
//! experiment bundles over uncertain schema matchings.
//!
//! Exit codes: 0 success, 1 partial experiment, 2 usage error, 3 backend
//! failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ccq_core::crowd::{
    AccuracyDistribution, CrowdBackend, HttpBackend, HttpConfig, InteractiveBackend, SimConfig,
    SimCrowd,
};
use ccq_core::frameworks::{run_with_strategy, RunOptions, RunOutcome, SelectionStrategy};
use ccq_core::harness::{
    generate, run_experiment, write_bundle, ExperimentConfig, GeneratorSpec, TruthFile,
};
use ccq_core::model::{load_result_set, result_set_to_json, validate, CorrespondenceSubset};
use ccq_core::select::{
    brute_force_select, delta_h_multi, entropy_bounds, greedy_select, select_sccq_pruned,
    GreedyOptions, PruningFlags, SelectError, EXACT_ANSWER_CAP,
};
use ccq_core::{AccuracyModel, ResultSet, WorkerAccuracy};

const EXIT_OK: u8 = 0;
const EXIT_PARTIAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BACKEND: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ccq",
    version,
    about = "Crowd question selection for uncertain schema matchings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic result set and its designated ground truth.
    Generate(GenerateArgs),
    /// Query the best single question or greedy question set.
    Select(SelectArgs),
    /// Run a budgeted question loop against a crowd backend.
    Run(RunArgs),
    /// Execute an experiment bundle described by a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory for result_set.json and ground_truth.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    matchings: usize,
    #[arg(long, default_value_t = 20)]
    correspondences: usize,
    /// Dirichlet concentration for matching probabilities.
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    /// Expected shared fraction of correspondences between matchings.
    #[arg(long, default_value_t = 0.4)]
    overlap: f64,
    #[arg(long)]
    seed: u64,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SelectArgs {
    /// Result set JSON.
    #[arg(long)]
    input: PathBuf,
    /// Number of questions to select.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Predicted crowd accuracy used for the reported reduction.
    #[arg(long, default_value_t = 1.0)]
    pred_acc: f64,
    /// Pruning rules: "all", "none", or a comma list of 1..5.
    #[arg(long, default_value = "all")]
    prune: String,
    /// Compare the greedy picks against the brute-force optimum.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Result set JSON.
    #[arg(long)]
    input: PathBuf,
    /// Backend: "sim", "interactive", or an http(s) base URL.
    #[arg(long)]
    backend: String,
    /// Answer budget.
    #[arg(long)]
    budget: usize,
    /// Questions kept in flight (k = 1 is the single-CCQ framework).
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Root seed (required by the sim backend).
    #[arg(long)]
    seed: Option<u64>,
    /// Realized accuracy distribution (sim) / self-reported accuracy
    /// (interactive, requires const:<p>).
    #[arg(long, default_value = "uniform:0.5,1")]
    acc_dist: String,
    /// Predicted crowd accuracy for selection.
    #[arg(long, default_value_t = 1.0)]
    pred_acc: f64,
    /// Ground-truth sidecar JSON (required by the sim backend).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Mean accept-to-answer delay of the simulator, in ticks.
    #[arg(long, default_value_t = 3.0)]
    lambda: f64,
    /// Fixed acceptance probability instead of per-question Uniform(0,0.5).
    #[arg(long)]
    accept_prob: Option<f64>,
    /// Permit accuracy distributions reaching below 0.5.
    #[arg(long)]
    allow_subhalf: bool,
    /// Stop at this tick instead of waiting for the budget.
    #[arg(long)]
    deadline: Option<u64>,
    /// Pruning rules for greedy selection.
    #[arg(long, default_value = "all")]
    prune: String,
    /// Condition replacement picks on still-accepted questions.
    #[arg(long)]
    include_accepted: bool,
    /// Collect per-iteration greedy diagnostics into the trace.
    #[arg(long)]
    trace_greedy: bool,
    /// Advance the http backend by POSTing /step instead of sleeping.
    #[arg(long)]
    http_step: bool,
    /// Poll interval of the http backend, in milliseconds.
    #[arg(long, default_value_t = 1000)]
    poll_ms: u64,
    /// Output directory for trace.csv, trace.json and answers.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the report bundle.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the parsed config as canonical JSON and exit.
    #[arg(long)]
    dump_config: bool,
    /// Overwrite an existing bundle.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Select(args) => cmd_select(args),
        Command::Run(args) => cmd_run(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn parse_pruning(s: &str) -> Result<PruningFlags, String> {
    match s {
        "all" => Ok(PruningFlags::all()),
        "none" => Ok(PruningFlags::none()),
        list => {
            let mut flags = PruningFlags::none();
            for part in list.split(',') {
                match part.trim() {
                    "1" => flags.singleton = true,
                    "2" => flags.determined = true,
                    "3" => flags.bisect_bound = true,
                    "4" => flags.stale_score = true,
                    "5" => flags.bound_dominance = true,
                    other => return Err(format!("unknown pruning rule '{other}'")),
                }
            }
            Ok(flags)
        }
    }
}

fn refuse_existing(paths: &[PathBuf], force: bool) -> Result<(), String> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(format!(
                "{} already exists; pass --force to overwrite",
                p.display()
            ));
        }
    }
    Ok(())
}

fn load_input(path: &Path) -> Result<ResultSet, String> {
    let loaded = load_result_set(path).map_err(|e| format!("{}: {e}", path.display()))?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let report = validate(&loaded.result_set);
    if !report.is_clean() {
        return Err(format!(
            "{} is not a valid result set:\n{report}",
            path.display()
        ));
    }
    Ok(loaded.result_set)
}

fn cmd_generate(args: GenerateArgs) -> Result<u8, String> {
    let rs_path = args.out.join("result_set.json");
    let truth_path = args.out.join("ground_truth.json");
    refuse_existing(&[rs_path.clone(), truth_path.clone()], args.force)?;

    let corpus = generate(&GeneratorSpec {
        n_matchings: args.matchings,
        n_correspondences: args.correspondences,
        concentration: args.concentration,
        overlap: args.overlap,
        seed: args.seed,
    })
    .map_err(|e| e.to_string())?;

    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    std::fs::write(&rs_path, result_set_to_json(&corpus.result_set)).map_err(|e| e.to_string())?;
    let truth = TruthFile {
        matching_index: corpus.ground_truth,
        members: corpus.truth_members(),
    };
    std::fs::write(
        &truth_path,
        serde_json::to_string_pretty(&truth).expect("truth serialization cannot fail"),
    )
    .map_err(|e| e.to_string())?;

    println!(
        "wrote {} ({} matchings, {} correspondences) and {}",
        rs_path.display(),
        corpus.result_set.n_matchings(),
        corpus.result_set.n_correspondences(),
        truth_path.display()
    );
    Ok(EXIT_OK)
}

fn cmd_select(args: SelectArgs) -> Result<u8, String> {
    let rs = load_input(&args.input)?;
    let flags = parse_pruning(&args.prune)?;
    let model = AccuracyModel::constant(args.pred_acc).map_err(|e| format!("--pred-acc: {e}"))?;
    if args.k == 0 || args.k > rs.n_correspondences() {
        return Err(format!(
            "k must be between 1 and |C| = {}",
            rs.n_correspondences()
        ));
    }

    if args.k == 1 {
        let pick = select_sccq_pruned(&rs, &model).map_err(|e| e.to_string())?;
        println!(
            "selected {} ({}) marginal={:.4} delta_h={:.4}",
            pick.ccq,
            rs.correspondence_label(pick.ccq),
            pick.marginal,
            pick.delta_h
        );
        if args.oracle {
            let (subset, best) =
                brute_force_select(&rs, 1, &model, None).map_err(|e| e.to_string())?;
            println!(
                "oracle: optimum {} delta_h={:.4} ratio={:.4}",
                subset.members()[0],
                best,
                if best > 0.0 { pick.delta_h / best } else { 1.0 }
            );
        }
        return Ok(EXIT_OK);
    }

    let options = GreedyOptions {
        flags,
        collect_trace: true,
        ..GreedyOptions::default()
    };
    let selection = greedy_select(&rs, args.k, &model, &options).map_err(|e| e.to_string())?;
    if !selection.complete {
        println!(
            "note: only {} informative questions available",
            selection.picks.len()
        );
    }
    for (i, pick) in selection.picks.iter().enumerate() {
        println!(
            "pick {}: {} ({}) conditional_entropy={:.4}",
            i + 1,
            pick.ccq,
            rs.correspondence_label(pick.ccq),
            pick.score
        );
    }

    if selection.picks.is_empty() {
        return Ok(EXIT_OK);
    }
    let chosen = CorrespondenceSubset::new(selection.ids()).expect("picks are distinct");
    let accs: Vec<WorkerAccuracy> = chosen
        .members()
        .iter()
        .map(|&c| model.predicted(c))
        .collect();
    let bounds = entropy_bounds(&rs, &chosen, &accs).map_err(|e| e.to_string())?;
    println!(
        "answer-entropy bounds: [{:.4}, {:.4}] bits",
        bounds.lower, bounds.upper
    );
    let value = if chosen.len() <= EXACT_ANSWER_CAP {
        let v = delta_h_multi(&rs, &chosen, &accs).map_err(|e| e.to_string())?;
        println!("expected uncertainty reduction: {v:.4} bits");
        Some(v)
    } else {
        None
    };

    let mut scored = 0usize;
    let mut pruned = [0usize; 5];
    for it in &selection.trace.iterations {
        scored += it.candidate_scores.len();
        pruned[0] += it.pruned_singleton;
        pruned[1] += it.pruned_determined;
        pruned[2] += it.pruned_bisect;
        pruned[3] += it.pruned_stale;
        pruned[4] += it.pruned_dominance;
    }
    println!(
        "scan: {scored} candidates scored; pruned per rule: r1={} r2={} r3={} r4={} r5={}",
        pruned[0], pruned[1], pruned[2], pruned[3], pruned[4]
    );

    if args.oracle {
        let (subset, best) =
            brute_force_select(&rs, args.k, &model, None).map_err(|e| match e {
                SelectError::EnumerationCapExceeded { subsets, cap } => format!(
                    "--oracle: {subsets} subsets exceed the enumeration cap {cap}; \
                 reduce k or the correspondence count"
                ),
                other => other.to_string(),
            })?;
        let names: Vec<String> = subset.members().iter().map(|c| c.to_string()).collect();
        println!("oracle optimum: {{{}}} delta_h={best:.4}", names.join(", "));
        if let Some(v) = value {
            println!(
                "greedy/optimum ratio: {:.4} (guarantee 1-1/e = {:.4})",
                if best > 0.0 { v / best } else { 1.0 },
                1.0 - 1.0 / std::f64::consts::E
            );
        }
    }
    Ok(EXIT_OK)
}

fn cmd_run(args: RunArgs) -> Result<u8, String> {
    let rs = load_input(&args.input)?;
    let flags = parse_pruning(&args.prune)?;
    let dist: AccuracyDistribution = args
        .acc_dist
        .parse()
        .map_err(|e| format!("--acc-dist: {e}"))?;
    let model = AccuracyModel::constant(args.pred_acc).map_err(|e| format!("--pred-acc: {e}"))?;
    if args.k == 0 {
        return Err("--k must be at least 1".into());
    }

    let trace_csv = args.out.join("trace.csv");
    let trace_json = args.out.join("trace.json");
    let answers_path = args.out.join("answers.jsonl");
    refuse_existing(
        &[trace_csv.clone(), trace_json.clone(), answers_path.clone()],
        args.force,
    )?;

    let labels: Vec<String> = rs
        .correspondences()
        .iter()
        .map(|c| c.label.clone())
        .collect();

    let mut backend: Box<dyn CrowdBackend> = match args.backend.as_str() {
        "sim" => {
            let seed = args
                .seed
                .ok_or_else(|| "--seed is required for the sim backend".to_string())?;
            let truth_path = args
                .truth
                .as_ref()
                .ok_or_else(|| "--truth is required for the sim backend".to_string())?;
            let truth_text =
                std::fs::read_to_string(truth_path).map_err(|e| format!("--truth: {e}"))?;
            let truth: TruthFile =
                serde_json::from_str(&truth_text).map_err(|e| format!("--truth: {e}"))?;
            if truth.matching_index >= rs.n_matchings() {
                return Err(format!(
                    "--truth: matching index {} out of range",
                    truth.matching_index
                ));
            }
            let members: Vec<u32> = rs
                .matching(truth.matching_index)
                .members()
                .iter()
                .map(|c| c.0)
                .collect();
            let mut config = SimConfig::new(seed, dist, members);
            config.lambda = args.lambda;
            config.accept_prob = args.accept_prob;
            config.allow_subhalf = args.allow_subhalf;
            Box::new(SimCrowd::new(config).map_err(|e| e.to_string())?)
        }
        "interactive" => {
            let self_acc = match dist {
                AccuracyDistribution::Constant { p } => {
                    WorkerAccuracy::new(p).map_err(|e| format!("--acc-dist: {e}"))?
                }
                _ => return Err(
                    "interactive backend needs --acc-dist const:<p> for the self-reported accuracy"
                        .into(),
                ),
            };
            Box::new(InteractiveBackend::stdio(labels, self_acc))
        }
        url if url.starts_with("http://") || url.starts_with("https://") => {
            let mut config = HttpConfig::new(url);
            config.advance_via_step = args.http_step;
            config.poll_interval_ms = args.poll_ms;
            Box::new(HttpBackend::new(config, labels))
        }
        other => {
            return Err(format!(
                "unknown backend '{other}' (expected sim, interactive, or an http URL)"
            ))
        }
    };

    let options = RunOptions {
        pruning: flags,
        deadline_ticks: args.deadline,
        include_accepted_context: args.include_accepted,
        collect_greedy_trace: args.trace_greedy,
        ..RunOptions::default()
    };
    let strategy = if args.k == 1 {
        SelectionStrategy::Sccq
    } else {
        SelectionStrategy::Greedy
    };
    let trace = run_with_strategy(
        &rs,
        args.budget,
        args.k,
        backend.as_mut(),
        &model,
        strategy,
        &options,
    );
    backend.close();

    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    std::fs::write(&trace_csv, trace.to_csv()).map_err(|e| e.to_string())?;
    std::fs::write(&trace_json, trace.to_json()).map_err(|e| e.to_string())?;
    let mut jsonl = String::new();
    for a in &trace.answers {
        jsonl.push_str(&serde_json::to_string(a).expect("answer serialization cannot fail"));
        jsonl.push('\n');
    }
    std::fs::write(&answers_path, jsonl).map_err(|e| e.to_string())?;

    println!(
        "{} answers, uncertainty {:.4} -> {:.4} bits, outcome: {:?}",
        trace.answers.len(),
        trace.points.first().map_or(0.0, |p| p.uncertainty),
        trace.final_uncertainty(),
        trace.outcome
    );
    let _ = std::io::stdout().flush();

    match trace.outcome {
        RunOutcome::Truncated { .. } => Ok(EXIT_BACKEND),
        _ => Ok(EXIT_OK),
    }
}

fn cmd_experiment(args: ExperimentArgs) -> Result<u8, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("{}: {e}", args.config.display()))?;
    let config = ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?;

    if args.dump_config {
        println!("{}", config.to_json());
        return Ok(EXIT_OK);
    }

    let out = args
        .out
        .ok_or_else(|| "--out is required to run an experiment".to_string())?;
    refuse_existing(&[out.join("bundle.json")], args.force)?;

    let bundle = run_experiment(&config).map_err(|e| e.to_string())?;
    write_bundle(&bundle, &out).map_err(|e| e.to_string())?;

    for report in &bundle.reports {
        let last = report.curve.last();
        println!(
            "{}: final mean uncertainty {:.4} (+/- {:.4}), precision {:.3}, recall {:.3}{}",
            report.algorithm,
            last.map_or(0.0, |p| p.mean),
            last.map_or(0.0, |p| p.stddev),
            report.mean_precision,
            report.mean_recall,
            if report.failures.is_empty() {
                String::new()
            } else {
                format!(", {} failed runs", report.failures.len())
            }
        );
    }
    println!("bundle written to {}", out.display());

    if bundle.partial {
        Ok(EXIT_PARTIAL)
    } else {
        Ok(EXIT_OK)
    }
}
