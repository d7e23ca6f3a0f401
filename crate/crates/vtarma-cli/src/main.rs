//! Command-line interface for VT-ARMA volatility modelling: simulation,
//! fitting, forecasting, rolling VaR backtests, residual diagnostics and
//! plot-data export.
//!
//! Exit codes: 0 on success, 1 on data/numeric failures, 2 on usage
//! errors. Set `VTARMA_THREADS` to cap worker parallelism.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vtarma::diagnostics::diagnose_residuals;
use vtarma::estimate::{
    self, fit_copula, fit_joint, lr_stochastic_volatility, pseudo_obs, VtKind,
};
use vtarma::forecast::{forecast_in_sample, rolling_backtest, BacktestConfig};
use vtarma::{FitReport, MarginFamily, VtArmaModel};

use io::{ingest, read_json, write_csv, write_json, InputMode};

#[derive(Parser)]
#[command(
    name = "vtarma",
    about = "Volatility modelling with v-transforms and ARMA copula processes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// `vt{1|2|3}-arma(p,q)` model selector.
#[derive(Debug, Clone, Copy)]
struct ModelSpecArg {
    kind: VtKind,
    order: (usize, usize),
}

fn parse_model_spec(s: &str) -> Result<ModelSpecArg, String> {
    let err = || {
        format!("invalid model `{s}`: expected vt{{1|2|3}}-arma(p,q), e.g. vt2-arma(1,1)")
    };
    let rest = s.strip_prefix("vt").ok_or_else(err)?;
    let (kind_digit, rest) = rest.split_once("-arma(").ok_or_else(err)?;
    let kind = match kind_digit {
        "1" => VtKind::Linear,
        "2" => VtKind::TwoParam,
        "3" => VtKind::ThreeParam,
        _ => return Err(err()),
    };
    let inner = rest.strip_suffix(')').ok_or_else(err)?;
    let (p, q) = inner.split_once(',').ok_or_else(err)?;
    let p: usize = p.trim().parse().map_err(|_| err())?;
    let q: usize = q.trim().parse().map_err(|_| err())?;
    if p + q == 0 {
        return Err(format!("invalid model `{s}`: need at least one ARMA parameter"));
    }
    Ok(ModelSpecArg {
        kind,
        order: (p, q),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MarginArg {
    None,
    Laplace,
    Student,
    Dweibull,
}

impl MarginArg {
    fn family(self) -> Option<MarginFamily> {
        match self {
            MarginArg::None => None,
            MarginArg::Laplace => Some(MarginFamily::Laplace),
            MarginArg::Student => Some(MarginFamily::Student),
            MarginArg::Dweibull => Some(MarginFamily::DoubleWeibull),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ProxyArg {
    /// Absolute returns.
    Abs,
    /// Squared returns.
    Square,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with header `date,value`.
    #[arg(long)]
    data: PathBuf,
    /// Whether the value column holds returns or price levels.
    #[arg(long, value_enum, default_value = "returns")]
    mode: InputMode,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a model to CSV (columns t,[x,]u,v,z).
    Sim {
        /// Model JSON file ({"vt": ..., "arma": ..., "margin": ...}).
        #[arg(long)]
        model: PathBuf,
        /// Number of observations.
        #[arg(long)]
        n: usize,
        /// Random seed; fixed seeds give bit-identical output.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a VT-ARMA model by exact maximum likelihood.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Copula model, e.g. vt2-arma(1,1).
        #[arg(long, value_parser = parse_model_spec)]
        model: ModelSpecArg,
        /// Marginal family; `none` fits the copula semi-parametrically on
        /// pseudo-observations.
        #[arg(long, value_enum, default_value = "none")]
        margin: MarginArg,
        /// Add a skewness parameter to the margin.
        #[arg(long)]
        skew: bool,
        /// Tie the fulcrum to the margin by delta = F_X(0).
        #[arg(long)]
        constrain_fulcrum: bool,
        /// Where to write the fit report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Optional residual CSV (columns t,residual).
        #[arg(long)]
        residuals: Option<PathBuf>,
        /// Optional fitted-model JSON usable by `sim` and `forecast`.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// One-step in-sample VaR forecasts from a fitted model.
    Forecast {
        #[command(flatten)]
        data: DataArgs,
        /// Fitted model JSON (must include a margin).
        #[arg(long)]
        model: PathBuf,
        /// VaR confidence levels.
        #[arg(long, value_delimiter = ',', default_value = "0.95,0.99")]
        levels: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rolling out-of-sample VaR backtest with daily refits.
    Backtest {
        #[command(flatten)]
        data: DataArgs,
        /// Copula model refitted on each window, e.g. vt2-arma(1,1).
        #[arg(long, value_parser = parse_model_spec)]
        model: ModelSpecArg,
        /// Moving estimation window length.
        #[arg(long, default_value_t = 1000)]
        window: usize,
        /// VaR confidence levels.
        #[arg(long, value_delimiter = ',', default_value = "0.95,0.99")]
        levels: Vec<f64>,
        /// Refit cadence in steps (1 = refit every day).
        #[arg(long, default_value_t = 1)]
        refit_every: usize,
        /// Per-step CSV output (t,x,var_*,exceed_*).
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON summary path; printed to stdout otherwise.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Residual diagnostics for a stored fit report.
    Diagnose {
        /// Fit report JSON produced by `fit`.
        #[arg(long)]
        fit: PathBuf,
        /// Diagnostics JSON output.
        #[arg(long)]
        out: PathBuf,
        /// Optional ACF CSV (lag,acf_residual,acf_abs_residual).
        #[arg(long)]
        acf_out: Option<PathBuf>,
        /// Optional QQ CSV (theoretical,empirical).
        #[arg(long)]
        qq_out: Option<PathBuf>,
    },
    /// Empirical v-transform pairs for scatter plots (t,x,u,v).
    VplotData {
        #[command(flatten)]
        data: DataArgs,
        /// Volatility proxy applied to the returns.
        #[arg(long, value_enum, default_value = "abs")]
        proxy: ProxyArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("VTARMA_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                vtarma::par::configure_threads(n);
            }
            _ => {
                eprintln!("error: VTARMA_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<(), String> {
    match command {
        Command::Sim { model, n, seed, out } => {
            if n == 0 {
                return Err("need n >= 1".to_string());
            }
            let model: VtArmaModel = read_json(&model)?;
            let sim = model.simulate(n, seed);
            let header: Vec<&str> = if sim.x.is_some() {
                vec!["t", "x", "u", "v", "z"]
            } else {
                vec!["t", "u", "v", "z"]
            };
            write_csv(
                &out,
                &header,
                (0..n).map(|t| {
                    let mut row = vec![(t + 1).to_string()];
                    if let Some(x) = &sim.x {
                        row.push(x[t].to_string());
                    }
                    row.push(sim.u[t].to_string());
                    row.push(sim.v[t].to_string());
                    row.push(sim.z[t].to_string());
                    row
                }),
            )?;
            println!("wrote {n} simulated observations to {}", out.display());
            Ok(())
        }

        Command::Fit {
            data,
            model,
            margin,
            skew,
            constrain_fulcrum,
            out,
            residuals,
            model_out,
        } => {
            let series = ingest(&data.data, data.mode)?;
            let (fitted, report): (VtArmaModel, FitReport) = match margin.family() {
                None => {
                    if skew || constrain_fulcrum {
                        return Err(
                            "--skew and --constrain-fulcrum require a parametric margin".into()
                        );
                    }
                    let u = pseudo_obs(&series.values).map_err(|e| e.to_string())?;
                    let fit = fit_copula(&u, model.kind, model.order, None)
                        .map_err(|e| e.to_string())?;
                    let lr = lr_stochastic_volatility(&fit.report);
                    println!(
                        "LR test for stochastic volatility: statistic {:.4}, df {}, p-value {:.4}",
                        lr.statistic, lr.df, lr.p_value
                    );
                    (fit.model, fit.report)
                }
                Some(family) => {
                    let fit = fit_joint(
                        &series.values,
                        model.kind,
                        model.order,
                        family,
                        skew,
                        constrain_fulcrum,
                        None,
                    )
                    .map_err(|e| e.to_string())?;
                    (fit.model, fit.report)
                }
            };
            println!(
                "fitted {}: loglik {:.4}, aic {:.4} ({})",
                report.model, report.loglik, report.aic, report.convergence.message
            );
            if let Some(path) = residuals {
                write_csv(
                    &path,
                    &["t", "residual"],
                    report
                        .residuals
                        .iter()
                        .enumerate()
                        .map(|(t, r)| vec![(t + 1).to_string(), r.to_string()]),
                )?;
            }
            if let Some(path) = model_out {
                write_json(&path, &fitted)?;
            }
            write_json(&out, &report)
        }

        Command::Forecast {
            data,
            model,
            levels,
            out,
        } => {
            let series = ingest(&data.data, data.mode)?;
            let model: VtArmaModel = read_json(&model)?;
            let rows = forecast_in_sample(&model, &series.values, &levels)
                .map_err(|e| e.to_string())?;
            let mut header = vec!["t".to_string(), "mu_t".to_string()];
            header.extend(levels.iter().map(|l| format!("var_{l}")));
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(
                &out,
                &header_refs,
                rows.iter().map(|row| {
                    let mut cells = vec![row.t.to_string(), row.mu_t.to_string()];
                    cells.extend(row.var.iter().map(|v| v.to_string()));
                    cells
                }),
            )?;
            println!("wrote {} forecast rows to {}", rows.len(), out.display());
            Ok(())
        }

        Command::Backtest {
            data,
            model,
            window,
            levels,
            refit_every,
            out,
            report,
        } => {
            let series = ingest(&data.data, data.mode)?;
            let config = BacktestConfig {
                window,
                refit_every,
                levels: levels.clone(),
                vt_kind: model.kind,
                order: model.order,
            };
            let result =
                rolling_backtest(&series.values, &config).map_err(|e| e.to_string())?;

            let mut header = vec!["t".to_string(), "date".to_string(), "x".to_string()];
            header.extend(levels.iter().map(|l| format!("var_{l}")));
            header.extend(levels.iter().map(|l| format!("exceed_{l}")));
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(
                &out,
                &header_refs,
                result.var.iter().enumerate().map(|(i, var_row)| {
                    let t = result.first_origin + i;
                    let mut cells = vec![
                        (t + 1).to_string(),
                        series.timestamps[t].clone(),
                        series.values[t].to_string(),
                    ];
                    cells.extend(var_row.iter().map(|v| v.to_string()));
                    cells.extend(result.exceeded[i].iter().map(|e| u8::from(*e).to_string()));
                    cells
                }),
            )?;

            for level in &result.levels {
                println!(
                    "level {:.3}: {} exceptions, {:.2} expected, binomial p-value {:.4}",
                    level.level, level.exceptions, level.expected, level.p_value
                );
            }
            if !result.refit_failures.is_empty() {
                println!(
                    "{} refits failed and reused the previous model",
                    result.refit_failures.len()
                );
            }
            match report {
                Some(path) => write_json(&path, &result.levels)?,
                None => println!(
                    "{}",
                    serde_json::to_string_pretty(&result.levels)
                        .map_err(|e| format!("serialization: {e}"))?
                ),
            }
            Ok(())
        }

        Command::Diagnose {
            fit,
            out,
            acf_out,
            qq_out,
        } => {
            let report: FitReport = read_json(&fit)?;
            if report.residuals.is_empty() {
                return Err("fit report holds no residual series".to_string());
            }
            let diagnostics =
                diagnose_residuals(&report.residuals).map_err(|e| e.to_string())?;
            for (name, test) in &diagnostics.tests {
                println!(
                    "{name}: statistic {:.4}, p-value {:.4}",
                    test.statistic, test.p_value
                );
            }
            if let Some(path) = acf_out {
                write_csv(
                    &path,
                    &["lag", "acf_residual", "acf_abs_residual"],
                    diagnostics
                        .acf_residuals
                        .iter()
                        .zip(&diagnostics.acf_abs_residuals)
                        .enumerate()
                        .map(|(i, (a, b))| {
                            vec![(i + 1).to_string(), a.to_string(), b.to_string()]
                        }),
                )?;
            }
            if let Some(path) = qq_out {
                write_csv(
                    &path,
                    &["theoretical", "empirical"],
                    diagnostics
                        .qq
                        .iter()
                        .map(|(a, b)| vec![a.to_string(), b.to_string()]),
                )?;
            }
            write_json(&out, &diagnostics)
        }

        Command::VplotData { data, proxy, out } => {
            let series = ingest(&data.data, data.mode)?;
            let proxy_fn = match proxy {
                ProxyArg::Abs => |x: f64| x.abs(),
                ProxyArg::Square => |x: f64| x * x,
            };
            let pairs = estimate::empirical_vtransform(&series.values, proxy_fn)
                .map_err(|e| e.to_string())?;
            write_csv(
                &out,
                &["t", "date", "x", "u", "v"],
                pairs.iter().enumerate().map(|(t, (u, v))| {
                    vec![
                        (t + 1).to_string(),
                        series.timestamps[t].clone(),
                        series.values[t].to_string(),
                        u.to_string(),
                        v.to_string(),
                    ]
                }),
            )?;
            println!("wrote {} pairs to {}", pairs.len(), out.display());
            Ok(())
        }
    }
}
