//! Command-line benchmark harness.
//!
//! Subcommands:
//! - `run`: one configured run; writes `report.json`, `trace.csv`, and
//!   `convergence.svg`.
//! - `compare`: every correction model on the same problem; writes per-model
//!   reports and `summary.csv`.
//! - `sweep`: iteration-count robustness across correction hyperparameters;
//!   writes `sweep.csv`.
//! - `costmodel`: closed-form correction-cost curves; writes `costmodel.csv`
//!   and `costmodel.svg`.
//!
//! Exit codes: 0 on success/convergence, 2 when a run stopped on its
//! wall-clock budget, 1 on any error (bad config, I/O, aborted run).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pintkit::config::load_config;
use pintkit::engine::{
    compute_accuracy, cost_model_curves, robustness_sweep, run_pint, sequential_fine,
    CorrectionConfig, CostModelParams, PintConfig, RunReport, RunStatus,
};
use pintkit::report::{
    comparison_csv, convergence_svg, costmodel_csv, costmodel_svg, status_word, sweep_csv,
    trace_csv, write_report_json, ComparisonRow,
};

#[derive(Parser)]
#[command(
    name = "pintkit",
    version,
    about = "Parallel-in-time ODE/PDE benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run from a TOML config.
    Run {
        /// Path to the TOML run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.json, trace.csv, convergence.svg.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run each correction model on the same problem and summarize.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of parareal,nngp,randnet.
        #[arg(long, default_value = "parareal,nngp,randnet")]
        models: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rerun the config across a grid of random-feature hyperparameters.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated neighbor counts.
        #[arg(long, default_value = "2,4,8,16")]
        m_values: String,
        /// Comma-separated hidden widths.
        #[arg(long, default_value = "20,100,500")]
        hidden_values: String,
        /// Seeds per cell (offsets from the config's seed).
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate the closed-form correction-cost bounds over dimensions.
    Costmodel {
        #[arg(long, default_value_t = 128)]
        n_intervals: usize,
        /// Iteration index the bounds are evaluated at.
        #[arg(long, default_value_t = 10)]
        iteration: usize,
        /// Comma-separated state dimensions.
        #[arg(long, default_value = "100,316,1000,3162,10000,31623,100000")]
        dims: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, String> {
    let values: Result<Vec<T>, _> = text.split(',').map(|s| s.trim().parse::<T>()).collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("cannot parse {what} list `{text}`")),
    }
}

fn write(path: &Path, content: &str) -> Result<(), String> {
    std::fs::write(path, content).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn prepare_out(out: &Path) -> Result<(), String> {
    std::fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))
}

fn exit_for(status: &RunStatus) -> ExitCode {
    match status {
        RunStatus::Converged => ExitCode::SUCCESS,
        RunStatus::BudgetExhausted => ExitCode::from(2),
        RunStatus::Aborted { .. } => ExitCode::from(1),
    }
}

fn print_run_line(report: &RunReport) {
    println!(
        "system={} model={} status={} iterations={} prefix={}/{} dataset={} \
         t_alg_modeled={:.3}s speedup={:.2}",
        report.config.system.name(),
        report.config.correction.name(),
        status_word(&report.status),
        report.iterations,
        report.converged_prefix,
        report.config.n_intervals - 1,
        report.dataset_size,
        report.cost.t_alg_modeled_seconds,
        report.cost.s_alg_modeled,
    );
}

fn cmd_run(config_path: &Path, out: &Path) -> Result<ExitCode, String> {
    let config = load_config(config_path)?;
    let report = run_pint(&config).map_err(|e| e.to_string())?;
    prepare_out(out)?;
    write_report_json(&report, &out.join("report.json"))
        .map_err(|e| format!("cannot write report.json: {e}"))?;
    write(&out.join("trace.csv"), &trace_csv(&report))?;
    write(&out.join("convergence.svg"), &convergence_svg(&report))?;
    print_run_line(&report);
    if let RunStatus::Aborted { message } = &report.status {
        eprintln!("run aborted: {message}");
    }
    Ok(exit_for(&report.status))
}

fn model_config(base: &PintConfig, model: &str) -> Result<PintConfig, String> {
    let correction = if base.correction.name() == model {
        base.correction
    } else {
        match model {
            "parareal" => CorrectionConfig::Parareal,
            "nngp" => CorrectionConfig::default_nngp(),
            "randnet" => CorrectionConfig::default_randnet(),
            other => return Err(format!("unknown model `{other}`")),
        }
    };
    let mut config = base.clone();
    config.correction = correction;
    Ok(config)
}

fn cmd_compare(config_path: &Path, models: &str, out: &Path) -> Result<ExitCode, String> {
    let base = load_config(config_path)?;
    let models: Vec<String> = models
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if models.is_empty() {
        return Err("no models requested".into());
    }
    prepare_out(out)?;
    let reference = sequential_fine(&base).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut worst = ExitCode::SUCCESS;
    let mut saw_budget = false;
    let mut saw_abort = false;
    for model in &models {
        let config = model_config(&base, model)?;
        let mut report = run_pint(&config).map_err(|e| e.to_string())?;
        if matches!(report.status, RunStatus::Converged) {
            report.accuracy_vs_fine =
                Some(compute_accuracy(&report.final_states, &reference.states));
        }
        match report.status {
            RunStatus::BudgetExhausted => saw_budget = true,
            RunStatus::Aborted { .. } => saw_abort = true,
            RunStatus::Converged => {}
        }
        write_report_json(&report, &out.join(format!("report_{model}.json")))
            .map_err(|e| format!("cannot write report_{model}.json: {e}"))?;
        print_run_line(&report);
        rows.push(ComparisonRow::from_report(&report));
    }
    write(&out.join("summary.csv"), &comparison_csv(&rows))?;
    if saw_abort {
        worst = ExitCode::from(1);
    } else if saw_budget {
        worst = ExitCode::from(2);
    }
    Ok(worst)
}

fn cmd_sweep(
    config_path: &Path,
    m_values: &str,
    hidden_values: &str,
    seeds: u64,
    out: &Path,
) -> Result<ExitCode, String> {
    let base = load_config(config_path)?;
    let m_values: Vec<usize> = parse_list(m_values, "m")?;
    let hidden_values: Vec<usize> = parse_list(hidden_values, "hidden")?;
    if seeds == 0 {
        return Err("seeds must be >= 1".into());
    }
    let cells =
        robustness_sweep(&base, &m_values, &hidden_values, seeds).map_err(|e| e.to_string())?;
    prepare_out(out)?;
    write(&out.join("sweep.csv"), &sweep_csv(&cells))?;
    let mut saw_budget = false;
    let mut saw_abort = false;
    for &m in &m_values {
        for &hidden in &hidden_values {
            let ks: Vec<usize> = cells
                .iter()
                .filter(|c| c.m == m && c.hidden == hidden)
                .filter_map(|c| c.iterations)
                .collect();
            let failures = cells
                .iter()
                .filter(|c| c.m == m && c.hidden == hidden && c.iterations.is_none())
                .count();
            let (lo, hi) = ks
                .iter()
                .fold((usize::MAX, 0), |(lo, hi), &k| (lo.min(k), hi.max(k)));
            println!(
                "m={m} hidden={hidden} converged={}/{} K_range=[{},{}]",
                ks.len(),
                ks.len() + failures,
                if ks.is_empty() { 0 } else { lo },
                hi
            );
        }
    }
    for cell in &cells {
        match cell.outcome.as_str() {
            "converged" => {}
            "budget_exhausted" => saw_budget = true,
            _ => saw_abort = true,
        }
    }
    if saw_abort {
        Ok(ExitCode::from(1))
    } else if saw_budget {
        Ok(ExitCode::from(2))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_costmodel(
    n_intervals: usize,
    iteration: usize,
    dims: &str,
    out: &Path,
) -> Result<ExitCode, String> {
    let dims: Vec<usize> = parse_list(dims, "dimension")?;
    if n_intervals == 0 || iteration == 0 {
        return Err("n_intervals and iteration must be >= 1".into());
    }
    let params = CostModelParams {
        n_intervals,
        iteration,
        ..CostModelParams::default()
    };
    let points = cost_model_curves(&params, &dims);
    prepare_out(out)?;
    write(&out.join("costmodel.csv"), &costmodel_csv(&points))?;
    write(&out.join("costmodel.svg"), &costmodel_svg(&points))?;
    for p in &points {
        println!(
            "d={} t_nngp={:.3e} t_randnet={:.3e}",
            p.dimension, p.t_nngp, p.t_randnet
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Compare {
            config,
            models,
            out,
        } => cmd_compare(config, models, out),
        Command::Sweep {
            config,
            m_values,
            hidden_values,
            seeds,
            out,
        } => cmd_sweep(config, m_values, hidden_values, *seeds, out),
        Command::Costmodel {
            n_intervals,
            iteration,
            dims,
            out,
        } => cmd_costmodel(*n_intervals, *iteration, dims, out),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
