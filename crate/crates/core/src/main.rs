use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use edgelab::constants::{ledger_report, Prefactors};
use edgelab::ensemble::{build_centered_adjacency, critical_time, evolve_exact};
use edgelab::experiment::{
    csv_to_string, derive_trial_seed, goe_top_pairs, graph_top_pairs, read_csv, run_experiment, samples_from_rows,
    ExperimentConfig, LocalLawRow, OverlapRow, SpacingRow, Summary,
};
use edgelab::graph::{sample_regular_graph, RegularGraph};
use edgelab::linalg::GraphOperator;
use edgelab::metrics::{fit_rate, ks_distance_to_normal, multivariate_gaussian_distance, EcdfSummary};
use edgelab::overlap::{
    compute_overlaps, estimate_decorrelation, estimate_moments, joint_covariance, make_test_vector,
    JointOverlapMatrix, OverlapSample, TestVectorKind,
};
use edgelab::rng::{stream_seed, tags};
use edgelab::spectral::{edge_spacing_profile, local_law_deviation_profile_lanczos, LocalLawGrid};
use edgelab::{LabError, Result};

#[derive(Parser)]
#[command(name = "edgelab", version, about = "Edge eigenvector statistics of random regular graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a random d-regular graph and print its edge list.
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve a graph's centered adjacency to time t and print the matrix dump.
    Evolve {
        /// Edge-list file; a fresh graph is sampled when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        /// A time, or `tstar` for N^(-1/3+eps).
        #[arg(long, default_value = "tstar")]
        t: String,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-trial overlaps X_2..X_{K+1} as CSV.
    Overlaps {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value = "coordinate-difference")]
        test_vector: String,
        /// Use the constrained GOE instead of the graph ensemble.
        #[arg(long)]
        goe: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Moments of one overlap index from an overlap CSV.
    Moments {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        index: usize,
    },
    /// E[X_i X_j] from an overlap CSV.
    Decorrelation {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        i: usize,
        #[arg(long, default_value_t = 3)]
        j: usize,
    },
    /// Joint second-moment matrix and projection proxy from an overlap CSV.
    Joint {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        projections: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Local-law deviation profiles as CSV.
    LocalLaw {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 5)]
        energies: usize,
        #[arg(long, default_value_t = 8)]
        etas: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Edge spacing profiles as CSV.
    Spacing {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        k_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// KS distance to the standard normal of one overlap index.
    Ks {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        index: usize,
    },
    /// Log-log rate fit of summary values across N.
    Rate {
        /// Summary JSON files (arrays of summaries), one or more.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Statistic name to pick out of the summaries.
        #[arg(long, default_value = "ks_distance_X2")]
        statistic: String,
    },
    /// Evaluate the constants table.
    Constants {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e6)]
        n: f64,
        /// `default` (unit prefactors) or `worked-example`.
        #[arg(long, default_value = "default")]
        preset: String,
        #[arg(long)]
        json: bool,
    },
    /// Run the full pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_samples(input: &PathBuf) -> Result<(Vec<OverlapRow>, Vec<OverlapSample>)> {
    let rows: Vec<OverlapRow> = read_csv(input)?;
    let samples = samples_from_rows(&rows);
    Ok((rows, samples))
}

fn summary_for(rows: &[OverlapRow], samples: &[OverlapSample], name: &str, value: f64, se: Option<f64>) -> Summary {
    let first = rows.first();
    Summary {
        statistic_name: name.into(),
        n: first.map_or(0, |r| r.n),
        d: first.map_or(0, |r| r.d),
        epsilon: f64::NAN,
        t: first.map_or_else(String::new, |r| r.t.clone()),
        trials: samples.len(),
        value,
        std_error: se,
        seed_range: [
            samples.iter().map(|s| s.seed).min().unwrap_or(0),
            samples.iter().map(|s| s.seed).max().unwrap_or(0),
        ],
        excluded_trials: 0,
        test_vector_id: first.map(|r| r.test_vector_id.clone()),
        note: None,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample { n, d, seed, out } => {
            let g = sample_regular_graph(n, d, seed)?;
            emit(out.as_ref(), &g.to_edge_list())
        }
        Command::Evolve { graph, n, d, t, epsilon, seed, out } => {
            let g = match graph {
                Some(path) => fs::read_to_string(path)?.parse::<RegularGraph>()?,
                None => sample_regular_graph(n, d, stream_seed(seed, tags::GRAPH))?,
            };
            let time = if t == "tstar" {
                critical_time(g.n_vertices(), epsilon)
            } else {
                t.parse::<f64>().map_err(|e| LabError::Parse(format!("bad time `{t}`: {e}")))?
            };
            let h0 = build_centered_adjacency(&g)?;
            let ht = evolve_exact(&h0, time, stream_seed(seed, tags::EVOLUTION))?;
            emit(out.as_ref(), &ht.matrix().to_dump())
        }
        Command::Overlaps { n, d, trials, seed, k, test_vector, goe, out } => {
            let kind = TestVectorKind::parse(&test_vector)?;
            let q = make_test_vector(kind, n, seed)?;
            let indices: Vec<usize> = (2..=k + 1).collect();
            let mut rows = Vec::new();
            for trial in 0..trials as u64 {
                let s = derive_trial_seed(seed, 0, trial);
                let sd = if goe { goe_top_pairs(n, s, k)? } else { graph_top_pairs(n, d, s, k)? };
                let sample = compute_overlaps(&sd, &q, &indices, stream_seed(s, kind as u64))?;
                for (&index, &value) in sample.indices.iter().zip(&sample.values) {
                    rows.push(OverlapRow { n, d, seed: s, t: "0".into(), index, test_vector_id: q.id().into(), value });
                }
            }
            emit(out.as_ref(), &csv_to_string(&rows)?)
        }
        Command::Moments { input, index } => {
            let (rows, samples) = load_samples(&input)?;
            let m = estimate_moments(&samples, index)?;
            print_json(&vec![
                summary_for(&rows, &samples, &format!("mean_X{index}"), m.mean, Some(m.mean_se)),
                summary_for(&rows, &samples, &format!("second_moment_X{index}"), m.second, Some(m.second_se)),
                summary_for(&rows, &samples, &format!("fourth_moment_X{index}"), m.fourth, Some(m.fourth_se)),
            ])
        }
        Command::Decorrelation { input, i, j } => {
            let (rows, samples) = load_samples(&input)?;
            let c = estimate_decorrelation(&samples, i, j)?;
            print_json(&summary_for(&rows, &samples, &format!("product_mean_X{i}_X{j}"), c.value, Some(c.std_error)))
        }
        Command::Joint { input, k, projections, seed } => {
            let (_, samples) = load_samples(&input)?;
            let per_trial: Vec<Vec<OverlapSample>> = samples.into_iter().map(|s| vec![s]).collect();
            let joint = JointOverlapMatrix::from_samples(k, &per_trial)?;
            let cov = joint_covariance(&joint)?;
            let proxy = multivariate_gaussian_distance(&joint, projections, seed)?;
            print_json(&serde_json::json!({
                "K": k,
                "m": 1,
                "trials": joint.trials(),
                "second_moment_matrix": cov.matrix,
                "deviation_operator_norm": cov.deviation_norm,
                "rank_deficient": cov.rank_deficient,
                "projection_proxy_max_ks": proxy,
                "projection_proxy_note": "maximum one-dimensional KS distance over random projections; a proxy, not the convex-set distance",
            }))
        }
        Command::LocalLaw { n, d, trials, seed, epsilon, energies, etas, out } => {
            let grid = LocalLawGrid::edge_window(n, epsilon, energies, etas)?;
            let q = make_test_vector(TestVectorKind::CoordinateDifference, n, seed)?;
            let mut rows = Vec::new();
            for trial in 0..trials as u64 {
                let s = derive_trial_seed(seed, 0, trial);
                let g = sample_regular_graph(n, d, stream_seed(s, tags::GRAPH))?;
                let prof = local_law_deviation_profile_lanczos(&GraphOperator::new(&g), &q.coords, &grid, epsilon)?;
                for (z, dev) in prof.rows {
                    rows.push(LocalLawRow { n, d, seed: s, energy: z.energy(), eta: z.eta(), deviation: dev });
                }
            }
            emit(out.as_ref(), &csv_to_string(&rows)?)
        }
        Command::Spacing { n, d, trials, seed, k_max, out } => {
            let mut rows = Vec::new();
            for trial in 0..trials as u64 {
                let s = derive_trial_seed(seed, 0, trial);
                let sd = graph_top_pairs(n, d, s, k_max)?;
                for (k, dist) in edge_spacing_profile(&sd, k_max)? {
                    rows.push(SpacingRow { n, d, seed: s, k, edge_distance: dist });
                }
            }
            emit(out.as_ref(), &csv_to_string(&rows)?)
        }
        Command::Ks { input, index } => {
            let (rows, samples) = load_samples(&input)?;
            let xs: Vec<f64> = samples.iter().filter_map(|s| s.value_at(index)).collect();
            let ks = ks_distance_to_normal(&EcdfSummary::new(xs)?);
            print_json(&summary_for(&rows, &samples, &format!("ks_distance_X{index}"), ks, None))
        }
        Command::Rate { inputs, statistic } => {
            let mut points = Vec::new();
            for path in &inputs {
                let list: Vec<Summary> = serde_json::from_str(&fs::read_to_string(path)?)?;
                points.extend(list.into_iter().filter(|s| s.statistic_name == statistic).map(|s| (s.n as f64, s.value)));
            }
            let fit = fit_rate(&points)?;
            print_json(&serde_json::json!({
                "statistic_name": statistic,
                "points": points,
                "exponent": fit.exponent,
                "intercept": fit.intercept,
                "residual": fit.residual,
            }))
        }
        Command::Constants { d, epsilon, n, preset, json } => {
            let prefactors = match preset.as_str() {
                "default" => Prefactors::default(),
                "worked-example" => Prefactors::worked_example(),
                other => return Err(LabError::InvalidInput(format!("unknown preset `{other}`"))),
            };
            let report = ledger_report(d, epsilon, n, prefactors)?;
            if json {
                print_json(&report)
            } else {
                print!("{}", report.to_text());
                Ok(())
            }
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let record = run_experiment(&cfg)?;
            eprintln!(
                "wrote {} summaries to {} (config hash {}, {} failed trials)",
                record.summaries.len(),
                cfg.output_dir.display(),
                record.config_hash,
                record.trial_failures.len()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
