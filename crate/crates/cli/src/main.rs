//! Command-line front end: fit mean-function models, build split conformal
//! prediction intervals, run the resampling experiment, and inspect
//! feature importance.
//!
//! Exit codes: 0 success, 2 usage/configuration, 3 data, 4 numeric.
//! `RAYON_NUM_THREADS` bounds the worker pool used by `simulate`.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use tweedie_conformal_core::conformal::{
    calibrate, predict_interval, IntervalMode, IntervalSpec, ResidualKind, SharedSpread,
};
use tweedie_conformal_core::data::{
    generate_synthetic, load_csv_with, load_query_csv, Dataset, MeanFunction, MissingPolicy, Schema, SynthConfig,
};
use tweedie_conformal_core::evaluation::{run_experiment, write_report_files, ExperimentConfig, ModelKind};
use tweedie_conformal_core::models::{
    feature_importance, gbm_cv_rounds, gbm_fit, glm_cv_select, glm_fit, spread_fit, GbmConfig, GlmCvConfig,
    MeanPredictor, Predictor, SpreadModel, SpreadTarget,
};
use tweedie_conformal_core::tweedie::{profile_power_select, PowerGrid};
use tweedie_conformal_core::Error;

#[derive(Parser)]
#[command(
    name = "tweedie-conformal",
    version,
    about = "Split conformal prediction intervals for zero-inflated, Tweedie-distributed targets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mean-function model (GBM or elastic-net GLM) and save it as JSON.
    Fit(FitArgs),
    /// Construct prediction intervals for query rows from a fitted model
    /// and a calibration CSV.
    Interval(IntervalArgs),
    /// Run the repeated-resampling coverage/width experiment.
    Simulate(SimulateArgs),
    /// Print the gain/cover/frequency importance table of a fitted GBM.
    Importance(ImportanceArgs),
    /// Write a synthetic Tweedie dataset (and its schema) to CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10296)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    numeric: usize,
    #[arg(long, default_value_t = 1)]
    categorical: usize,
    /// Mean function: linear or nonlinear.
    #[arg(long, default_value = "linear")]
    mean: String,
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    #[arg(long, default_value_t = 1.5)]
    power: f64,
    /// Make the dispersion vary with the first numeric feature.
    #[arg(long, default_value_t = false)]
    het: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; a matching schema JSON lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON; defaults to the built-in AutoClaim schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Missing-cell policy: reject (default) or impute.
    #[arg(long, default_value = "reject")]
    missing: String,
}

impl DataArgs {
    fn schema(&self) -> Result<Schema, Error> {
        match &self.schema {
            Some(path) => Schema::from_path(path),
            None => Ok(Schema::autoclaim_default()),
        }
    }

    fn policy(&self) -> Result<MissingPolicy, Error> {
        match self.missing.to_ascii_lowercase().as_str() {
            "reject" => Ok(MissingPolicy::Reject),
            "impute" => Ok(MissingPolicy::Impute),
            other => Err(Error::Config(format!("unknown missing policy '{other}'"))),
        }
    }

    fn load(&self) -> Result<Dataset, Error> {
        load_csv_with(&self.data, &self.schema()?, self.policy()?)
    }
}

#[derive(Args, Clone)]
struct GbmArgs {
    /// Maximum leaves per tree.
    #[arg(long, default_value_t = 10)]
    leaves: usize,
    #[arg(long, default_value_t = 0.005)]
    learning_rate: f64,
    /// Maximum boosting rounds.
    #[arg(long, default_value_t = 2000)]
    rounds: usize,
    /// Minimum rows per leaf.
    #[arg(long, default_value_t = 20)]
    min_leaf: usize,
    /// L2 smoothing added to leaf hessians.
    #[arg(long, default_value_t = 1.0)]
    leaf_l2: f64,
    /// Histogram bins per numeric feature.
    #[arg(long, default_value_t = 255)]
    bins: usize,
}

impl GbmArgs {
    fn config(&self) -> GbmConfig {
        GbmConfig {
            max_leaves: self.leaves,
            learning_rate: self.learning_rate,
            num_rounds: self.rounds,
            min_leaf_count: self.min_leaf,
            leaf_l2: self.leaf_l2,
            bins: self.bins,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model family: gbm or glm.
    #[arg(long, default_value = "gbm")]
    model: String,
    /// Comma-separated Tweedie power candidates in (1, 2).
    #[arg(long, default_value = "1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9")]
    power_grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    gbm: GbmArgs,
    /// Select the GBM round count by five-fold cross-validation first.
    #[arg(long, default_value_t = false)]
    cv_rounds: bool,
    /// Fixed elastic-net penalty strength; omitting it runs the CV grid.
    #[arg(long)]
    lambda: Option<f64>,
    /// Fixed elastic-net mixing weight in [0, 1] (0 = ridge, 1 = lasso).
    #[arg(long)]
    gamma: Option<f64>,
    /// Penalty path length for the GLM grid search.
    #[arg(long, default_value_t = 100)]
    n_lambda: usize,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Where to write the fitted model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also fit a Pearson-residual spread model (GBM only) and save it here.
    #[arg(long)]
    spread_out: Option<PathBuf>,
    /// Also fit an absolute-residual spread model (GBM only) and save it here.
    #[arg(long)]
    lei_spread_out: Option<PathBuf>,
}

#[derive(Args)]
struct IntervalArgs {
    /// Fitted model JSON from `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Calibration CSV (must be disjoint from the training rows).
    #[arg(long)]
    calib: PathBuf,
    /// Query CSV; the target column is optional here.
    #[arg(long)]
    query: PathBuf,
    /// Schema JSON; defaults to the built-in AutoClaim schema.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value = "reject")]
    missing: String,
    /// Comma-separated residual kinds.
    #[arg(long, default_value = "pearson")]
    kinds: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// symmetric or asymmetric.
    #[arg(long, default_value = "symmetric")]
    mode: String,
    /// Pearson-residual spread model JSON (for locally_weighted_pearson).
    #[arg(long)]
    spread: Option<PathBuf>,
    /// Absolute-residual spread model JSON (for lei_locally_weighted).
    #[arg(long)]
    lei_spread: Option<PathBuf>,
    /// Output CSV of interval rows.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Input CSV; mutually exclusive with --synthetic.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value = "reject")]
    missing: String,
    /// Generate a synthetic Tweedie dataset instead of reading a CSV.
    #[arg(long, default_value_t = false)]
    synthetic: bool,
    #[arg(long, default_value_t = 10296)]
    synth_n: usize,
    #[arg(long, default_value_t = 4)]
    synth_numeric: usize,
    #[arg(long, default_value_t = 1)]
    synth_categorical: usize,
    /// Synthetic mean function: linear or nonlinear.
    #[arg(long, default_value = "linear")]
    synth_mean: String,
    #[arg(long, default_value_t = 1.0)]
    synth_phi: f64,
    #[arg(long, default_value_t = 1.5)]
    synth_power: f64,
    /// Make the synthetic dispersion vary with the first numeric feature.
    #[arg(long, default_value_t = false)]
    synth_het: bool,
    #[arg(long, default_value_t = 4000)]
    n1: usize,
    #[arg(long, default_value_t = 4000)]
    n2: usize,
    #[arg(long, default_value_t = 2296)]
    n3: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Comma-separated residual kinds; "all" runs every kind.
    #[arg(long, default_value = "all")]
    kinds: String,
    /// Comma-separated model kinds (gbm, glm).
    #[arg(long, default_value = "gbm")]
    models: String,
    #[arg(long, default_value = "symmetric")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tune hyperparameters in the first repetition only.
    #[arg(long, default_value_t = false)]
    fast: bool,
    #[command(flatten)]
    gbm: GbmArgs,
    #[arg(long, default_value = "1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9")]
    power_grid: String,
    #[arg(long, default_value = "0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    gamma_grid: String,
    #[arg(long, default_value_t = 100)]
    n_lambda: usize,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Prefix for the report files ({prefix}_report.json,
    /// {prefix}_aggregate.csv, {prefix}_repetitions.csv).
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct ImportanceArgs {
    /// Fitted GBM model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Optional output CSV; the table always prints to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse '{s}' in {what}")))
        })
        .collect()
}

fn parse_kinds(text: &str) -> Result<Vec<ResidualKind>, Error> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(ResidualKind::ALL.to_vec());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(ResidualKind::from_str)
        .collect()
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let ds = args.data.load()?;
    let grid = PowerGrid::new(parse_f64_list(&args.power_grid, "--power-grid")?)?;
    let model_kind = ModelKind::from_str(&args.model)?;

    let predictor = match model_kind {
        ModelKind::Gbm => {
            let config = args.gbm.config();
            let selection = profile_power_select(&ds, ds.target(), &grid, |train, p| {
                let mut cfg = config.clone();
                if args.cv_rounds {
                    let (rounds, dev) = gbm_cv_rounds(train, p, &cfg, args.folds, args.seed)?;
                    log::info!("p={p}: cv selected {rounds} rounds (deviance {dev:.6})");
                    cfg.num_rounds = rounds;
                }
                let model = gbm_fit(train, p, &cfg)?;
                let mu = (0..train.n_rows())
                    .map(|i| model.predict_mean(&train.feature_row(i)))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok((model, mu))
            })?;
            for (p, cause) in &selection.skipped {
                eprintln!("warning: power candidate {p} skipped: {cause}");
            }
            println!(
                "fitted gbm: p = {}, rounds = {}, dispersion = {:.6}",
                selection.power,
                selection.model.n_trees(),
                selection.dispersion
            );
            Predictor::Gbm(selection.model)
        }
        ModelKind::Glm => match (args.lambda, args.gamma) {
            (Some(lambda), Some(gamma)) if grid.values().len() == 1 => {
                let model = glm_fit(&ds, grid.values()[0], lambda, gamma)?;
                println!("fitted glm: p = {}, lambda = {lambda}, gamma = {gamma}", grid.values()[0]);
                Predictor::Glm(model)
            }
            (lambda, gamma) => {
                let cv = glm_cv_select(
                    &ds,
                    &GlmCvConfig {
                        power_grid: grid,
                        gamma_grid: match gamma {
                            Some(g) => vec![g],
                            None => (0..=10).map(|k| k as f64 / 10.0).collect(),
                        },
                        lambda_path: lambda.map(|l| vec![l]),
                        n_lambda: args.n_lambda,
                        folds: args.folds,
                        seed: args.seed,
                    },
                )?;
                println!(
                    "fitted glm: p = {}, lambda = {:.6e}, gamma = {} (cv deviance {:.6})",
                    cv.power, cv.lambda, cv.gamma, cv.cv_deviance
                );
                Predictor::Glm(cv.model)
            }
        },
    };

    predictor.save(&args.out)?;
    println!("model written to {}", args.out.display());

    if args.spread_out.is_some() || args.lei_spread_out.is_some() {
        let Predictor::Gbm(_) = &predictor else {
            return Err(Error::Config("spread models pair with a gbm mean model".into()));
        };
        let p = predictor.power();
        let mu: Vec<f64> = (0..ds.n_rows())
            .map(|i| predictor.predict_mean(&ds.feature_row(i)))
            .collect::<Result<_, _>>()?;
        if let Some(path) = &args.spread_out {
            let residuals: Vec<f64> = ds
                .target()
                .iter()
                .zip(&mu)
                .map(|(&y, &m)| ((y - m) / m.powf(p / 2.0)).abs())
                .collect();
            let spread = spread_fit(&ds, &residuals, &args.gbm.config(), SpreadTarget::PearsonResidual)?;
            spread.save(path)?;
            println!("pearson spread model written to {}", path.display());
        }
        if let Some(path) = &args.lei_spread_out {
            let residuals: Vec<f64> = ds.target().iter().zip(&mu).map(|(&y, &m)| (y - m).abs()).collect();
            let spread = spread_fit(&ds, &residuals, &args.gbm.config(), SpreadTarget::AbsoluteResidual)?;
            spread.save(path)?;
            println!("absolute spread model written to {}", path.display());
        }
    }
    Ok(())
}

fn load_spread(path: &PathBuf, expected: SpreadTarget, kind: ResidualKind) -> Result<SharedSpread, Error> {
    let spread = SpreadModel::load(path)?;
    if spread.target != expected {
        return Err(Error::Config(format!(
            "spread model {} was fit to {:?} residuals, but kind '{kind}' needs {:?}",
            path.display(),
            spread.target,
            expected
        )));
    }
    Ok(Arc::new(spread))
}

fn cmd_interval(args: IntervalArgs) -> Result<(), Error> {
    let schema = match &args.schema {
        Some(path) => Schema::from_path(path)?,
        None => Schema::autoclaim_default(),
    };
    let policy = match args.missing.to_ascii_lowercase().as_str() {
        "reject" => MissingPolicy::Reject,
        "impute" => MissingPolicy::Impute,
        other => return Err(Error::Config(format!("unknown missing policy '{other}'"))),
    };
    let kinds = parse_kinds(&args.kinds)?;
    let mode = IntervalMode::from_str(&args.mode)?;
    let spec = IntervalSpec::new(args.alpha, mode)?;

    let predictor = Predictor::load(&args.model)?;
    let calib_ds = load_csv_with(&args.calib, &schema, policy)?;
    let query_ds = load_query_csv(&args.query, &schema, policy)?;
    predictor.validate_features(&calib_ds.feature_meta())?;
    predictor.validate_features(&query_ds.feature_meta())?;

    // Fail fast on missing spread models before any computation.
    for &kind in &kinds {
        match kind {
            ResidualKind::LocallyWeightedPearson if args.spread.is_none() => {
                return Err(Error::Config(
                    "kind 'locally_weighted_pearson' requires --spread <model.json>".into(),
                ))
            }
            ResidualKind::LeiLocallyWeighted if args.lei_spread.is_none() => {
                return Err(Error::Config(
                    "kind 'lei_locally_weighted' requires --lei-spread <model.json>".into(),
                ))
            }
            _ => {}
        }
    }

    let mut w = csv::Writer::from_path(&args.out).map_err(tweedie_conformal_core::Error::from)?;
    w.write_record(["row", "mu_hat", "lo", "hi", "kind", "alpha", "mode"])
        .map_err(Error::from)?;
    for &kind in &kinds {
        let spread = match kind {
            ResidualKind::LocallyWeightedPearson => Some(load_spread(
                args.spread.as_ref().expect("checked above"),
                SpreadTarget::PearsonResidual,
                kind,
            )?),
            ResidualKind::LeiLocallyWeighted => Some(load_spread(
                args.lei_spread.as_ref().expect("checked above"),
                SpreadTarget::AbsoluteResidual,
                kind,
            )?),
            _ => None,
        };
        let calib = calibrate(kind, &predictor, spread, &calib_ds, &spec)?;
        for i in 0..query_ds.n_rows() {
            let row = query_ds.feature_row(i);
            let mu = predictor.predict_mean(&row)?;
            let interval = predict_interval(&calib, &predictor, &row, &spec)?;
            w.write_record([
                i.to_string(),
                mu.to_string(),
                interval.lo.to_string(),
                interval.hi.to_string(),
                kind.to_string(),
                args.alpha.to_string(),
                mode.to_string(),
            ])
            .map_err(Error::from)?;
        }
    }
    w.flush()?;
    println!("intervals written to {}", args.out.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let ds = if args.synthetic {
        let mean_function = match args.synth_mean.to_ascii_lowercase().as_str() {
            "linear" => MeanFunction::LinearLogLink,
            "nonlinear" => MeanFunction::Nonlinear,
            other => return Err(Error::Config(format!("unknown synthetic mean function '{other}'"))),
        };
        generate_synthetic(
            &SynthConfig {
                n_rows: args.synth_n,
                n_numeric: args.synth_numeric,
                n_categorical: args.synth_categorical,
                mean_function,
                phi: args.synth_phi,
                power: args.synth_power,
                heteroscedastic: args.synth_het,
            },
            args.seed,
        )?
        .dataset
    } else {
        let Some(path) = &args.data else {
            return Err(Error::Config("simulate needs --data <csv> or --synthetic".into()));
        };
        let schema = match &args.schema {
            Some(p) => Schema::from_path(p)?,
            None => Schema::autoclaim_default(),
        };
        let policy = match args.missing.to_ascii_lowercase().as_str() {
            "reject" => MissingPolicy::Reject,
            "impute" => MissingPolicy::Impute,
            other => return Err(Error::Config(format!("unknown missing policy '{other}'"))),
        };
        load_csv_with(path, &schema, policy)?
    };

    let models = args
        .models
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(ModelKind::from_str)
        .collect::<Result<Vec<_>, _>>()?;
    let cfg = ExperimentConfig {
        n1: args.n1,
        n2: args.n2,
        n3: args.n3,
        repetitions: args.reps,
        alpha: args.alpha,
        mode: IntervalMode::from_str(&args.mode)?,
        kinds: parse_kinds(&args.kinds)?,
        models,
        base_seed: args.seed,
        gbm: args.gbm.config(),
        power_grid: parse_f64_list(&args.power_grid, "--power-grid")?,
        glm_gamma_grid: parse_f64_list(&args.gamma_grid, "--gamma-grid")?,
        glm_n_lambda: args.n_lambda,
        glm_folds: args.folds,
        fast_mode: args.fast,
    };

    let report = run_experiment(&ds, &cfg)?;
    write_report_files(&report, &args.out_prefix)?;

    println!("model      kind                      coverage (mean+/-sd)   width (mean+/-sd)    inf");
    for agg in &report.aggregates {
        println!(
            "{:<10} {:<25} {:.4} +/- {:.4}      {:<18} {}",
            agg.model.to_string(),
            agg.kind.to_string(),
            agg.coverage_mean,
            agg.coverage_sd,
            match (agg.width_mean, agg.width_sd) {
                (Some(m), Some(s)) => format!("{m:.4} +/- {s:.4}"),
                _ => "n/a (all infinite)".to_string(),
            },
            agg.infinite_intervals,
        );
    }
    for m in &report.metrics {
        println!(
            "{}: rmse {:.4} +/- {:.4}, mae {:.4} +/- {:.4}, r2 {}",
            m.model,
            m.rmse_mean,
            m.rmse_sd,
            m.mae_mean,
            m.mae_sd,
            m.r2_mean.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
        );
    }
    if !report.skipped_combinations.is_empty() {
        for s in &report.skipped_combinations {
            eprintln!("note: skipped {s}");
        }
    }
    println!("report files written with prefix {}", args.out_prefix.display());

    if !report.failed_repetitions.is_empty() {
        for (rep, cause) in &report.failed_repetitions {
            eprintln!("repetition {rep} failed: {cause}");
        }
        return Err(Error::Numeric(format!(
            "{} repetition(s) failed",
            report.failed_repetitions.len()
        )));
    }
    Ok(())
}

fn cmd_importance(args: ImportanceArgs) -> Result<(), Error> {
    let predictor = Predictor::load(&args.model)?;
    let Predictor::Gbm(model) = &predictor else {
        return Err(Error::Config(
            "importance is tree-specific; the given model is a glm".into(),
        ));
    };
    let table = feature_importance(model);
    let order = table.order_by_gain();

    println!("{:<20} {:>10} {:>10} {:>10}", "feature", "gain", "cover", "frequency");
    for &i in &order {
        println!(
            "{:<20} {:>10.4} {:>10.4} {:>10.4}",
            table.names[i], table.gain[i], table.cover[i], table.frequency[i]
        );
    }

    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
        w.write_record(["feature", "gain", "cover", "frequency"]).map_err(Error::from)?;
        for &i in &order {
            w.write_record([
                table.names[i].clone(),
                table.gain[i].to_string(),
                table.cover[i].to_string(),
                table.frequency[i].to_string(),
            ])
            .map_err(Error::from)?;
        }
        w.flush()?;
        println!("importance table written to {}", path.display());
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let mean_function = match args.mean.to_ascii_lowercase().as_str() {
        "linear" => MeanFunction::LinearLogLink,
        "nonlinear" => MeanFunction::Nonlinear,
        other => return Err(Error::Config(format!("unknown mean function '{other}'"))),
    };
    let synth = generate_synthetic(
        &SynthConfig {
            n_rows: args.n,
            n_numeric: args.numeric,
            n_categorical: args.categorical,
            mean_function,
            phi: args.phi,
            power: args.power,
            heteroscedastic: args.het,
        },
        args.seed,
    )?;
    synth.dataset.to_csv(&args.out)?;

    // Matching schema so fit/interval can load the file back.
    let mut columns = std::collections::BTreeMap::new();
    for col in synth.dataset.columns() {
        use tweedie_conformal_core::data::{ColumnData, ColumnRole, ColumnSpec};
        let spec = match &col.data {
            ColumnData::Numeric(_) => ColumnSpec::Role(ColumnRole::Numeric),
            ColumnData::Categorical { levels, .. } => ColumnSpec::Detailed {
                role: ColumnRole::Categorical,
                levels: Some(levels.clone()),
            },
        };
        columns.insert(col.name.clone(), spec);
    }
    let schema = Schema::new(synth.dataset.target_name(), columns)?;
    let schema_path = args.out.with_extension("schema.json");
    std::fs::write(&schema_path, schema.to_json()?)?;
    println!(
        "synthetic dataset written to {} (schema: {})",
        args.out.display(),
        schema_path.display()
    );
    Ok(())
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parameter(_) | Error::Config(_) | Error::Contract(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
        Error::Numeric(_) => 4,
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Interval(args) => cmd_interval(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Importance(args) => cmd_importance(args),
        Command::Synth(args) => cmd_synth(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
