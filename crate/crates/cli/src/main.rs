mod config;
mod error;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use batlife::dataset::{write_dataset, CellHistory, Chemistry, Manifest};
use batlife::ecm::{self, EcmError};
use batlife::features::{CellFeatures, FeatureSet, WindowSpec};
use batlife::gpc::LifeDag;
use batlife::gpr::{GprConfig, GprModel};
use batlife::harness::{self, ClassificationConfig, RulConfig};
use batlife::simgen::{default_conditions, SamplingProtocol, SyntheticDataset};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use config::{CommonArgs, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "batlife",
    version,
    about = "Battery lifetime prediction from relaxation voltage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw cell files listed in a manifest and store them in
    /// canonical form under <out>/dataset.
    Ingest {
        /// Manifest (TOML) listing the raw cell files.
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a synthetic dataset under <out>/dataset.
    Simulate {
        /// Cells per condition (cells).
        #[arg(long, default_value_t = 5, value_name = "N")]
        cells: usize,
        /// Number of cycling conditions (conditions).
        #[arg(long, default_value_t = 3, value_name = "N")]
        conditions: usize,
        /// Relaxation voltage noise, standard deviation (V).
        #[arg(long, default_value_t = 1e-4, value_name = "VOLTS")]
        noise: f64,
        /// Cell-to-cell spread of initial parameters and aging rate
        /// (fraction, 0 to 1).
        #[arg(long, default_value_t = 0.1, value_name = "FRACTION")]
        spread: f64,
        /// Dataset design: `mixed` conditions for RUL, or three lifetime
        /// classes for `classification`.
        #[arg(long, value_enum, default_value_t = Design::Mixed)]
        design: Design,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit the relaxation circuit model to every cycle; writes <out>/ecm.csv
    /// (V, ohm, F).
    FitEcm {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Extract a feature set for every cycle; writes <out>/features.csv in
    /// long format.
    Features {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train one RUL regressor per chemistry on the training cells; writes
    /// <out>/models/rul.json.
    TrainRul {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Predict RUL (cycles) with a trained model; writes
    /// <out>/rul_predictions.csv and <out>/rul_metrics.csv.
    PredictRul {
        /// Model file written by train-rul [default: <out>/models/rul.json].
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Which cells of the split to predict.
        #[arg(long, value_enum, default_value_t = CellSelection::Test)]
        cells: CellSelection,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train one lifetime classifier per chemistry on training-cell samples
    /// of the window; writes <out>/models/class.json.
    TrainClass {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classify window samples with a trained classifier; writes
    /// <out>/class_predictions.csv and <out>/class_accuracy.csv.
    Classify {
        /// Model file written by train-class [default: <out>/models/class.json].
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Which cells of the split to classify.
        #[arg(long, value_enum, default_value_t = CellSelection::Test)]
        cells: CellSelection,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run a full train/test experiment; writes tables under <out>/evaluate.
    Evaluate {
        /// Experiment to run.
        #[arg(long, value_enum, default_value_t = Experiment::Rul)]
        experiment: Experiment,
        /// Truncation levels for the truncation sweep (samples, each at
        /// least 6).
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "6,8,12,16",
            value_name = "SAMPLES"
        )]
        levels: Vec<usize>,
        /// Window start cycles for the start-cycle sweep (cycles).
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1,50,100,150",
            value_name = "CYCLES"
        )]
        starts: Vec<u32>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Recompute metric tables from stored prediction files; writes
    /// <out>/report/table.csv.
    Report {
        /// Prediction CSV files, or directories searched for
        /// `*predictions.csv` [default: <out>/evaluate].
        #[arg(long, value_name = "PATH")]
        input: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Design {
    Mixed,
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum CellSelection {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Experiment {
    /// RUL regression with one feature set.
    Rul,
    /// RUL regression with ecm, stats, benchmark and novel-pred.
    RulTable,
    /// RUL error against relaxation truncation.
    Truncation,
    /// RUL error against window start cycle.
    StartCycle,
    /// Lifetime classification with one feature set.
    Class,
    /// Classification with ecm, rate-class, benchmark and novel-class.
    ClassTable,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("batlife: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { manifest, common } => {
            ingest(&manifest, &RunConfig::resolve("ingest", &common)?)
        }
        Command::Simulate {
            cells,
            conditions,
            noise,
            spread,
            design,
            common,
        } => simulate(
            &RunConfig::resolve("simulate", &common)?,
            cells,
            conditions,
            noise,
            spread,
            design,
        ),
        Command::FitEcm { common } => fit_ecm(&RunConfig::resolve("fit-ecm", &common)?),
        Command::Features { common } => features(&RunConfig::resolve("features", &common)?),
        Command::TrainRul { common } => train_rul(&RunConfig::resolve("train-rul", &common)?),
        Command::PredictRul {
            model,
            cells,
            common,
        } => predict_rul(&RunConfig::resolve("predict-rul", &common)?, model, cells),
        Command::TrainClass { common } => train_class(&RunConfig::resolve("train-class", &common)?),
        Command::Classify {
            model,
            cells,
            common,
        } => classify(&RunConfig::resolve("classify", &common)?, model, cells),
        Command::Evaluate {
            experiment,
            levels,
            starts,
            common,
        } => evaluate(
            &RunConfig::resolve("evaluate", &common)?,
            experiment,
            &levels,
            &starts,
        ),
        Command::Report { input, common } => report(&RunConfig::resolve("report", &common)?, input),
    }
}

fn load_cells(cfg: &RunConfig) -> Result<Vec<CellHistory>, CliError> {
    let path = cfg.manifest_path();
    let manifest = Manifest::load(&path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cells = manifest.ingest_all(base)?;
    if let Some(chem) = cfg.chemistry {
        cells.retain(|c| c.chemistry() == chem);
    }
    if cells.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no cells selected",
            path.display()
        )));
    }
    Ok(cells)
}

fn print_cells(cells: &[CellHistory]) {
    println!("cell_id,chemistry,condition,cycles,eol_cycle");
    for c in cells {
        let eol = c.eol_cycle().map_or("-".to_string(), |e| e.to_string());
        println!(
            "{},{},{},{},{eol}",
            c.cell_id(),
            c.chemistry(),
            c.condition(),
            c.cycles.len()
        );
    }
}

fn ingest(manifest: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let m = Manifest::load(manifest)?;
    let mut cells = m.ingest_all(manifest.parent().unwrap_or(Path::new(".")))?;
    if let Some(chem) = cfg.chemistry {
        cells.retain(|c| c.chemistry() == chem);
    }
    let dir = cfg.out_path("dataset");
    write_dataset(&dir, &cells, &cfg.header())?;
    print_cells(&cells);
    eprintln!("wrote {} cells to {}", cells.len(), dir.display());
    Ok(())
}

fn simulate(
    cfg: &RunConfig,
    cells: usize,
    conditions: usize,
    noise: f64,
    spread: f64,
    design: Design,
) -> Result<(), CliError> {
    if cells == 0 || conditions == 0 {
        return Err(CliError::Usage(
            "need at least one cell and one condition".into(),
        ));
    }
    let chemistry = cfg.chemistry.unwrap_or(Chemistry::Nca);
    let ds = match design {
        Design::Mixed => SyntheticDataset {
            chemistry,
            protocol: SamplingProtocol::for_chemistry(chemistry),
            conditions: default_conditions(conditions, noise, spread),
            cells_per_condition: cells,
            horizon: 3000,
            cycles_after_eol: 5,
            seed: cfg.seed,
        },
        Design::Classification => {
            let mut ds = SyntheticDataset::classification_benchmark(cells, cfg.seed);
            ds.chemistry = chemistry;
            ds.protocol = SamplingProtocol::for_chemistry(chemistry);
            for c in &mut ds.conditions {
                c.profile.noise_sigma = noise;
                c.profile.cell_spread = spread;
            }
            ds
        }
    };
    let histories = ds.simulate()?;
    let dir = cfg.out_path("dataset");
    write_dataset(&dir, &histories, &cfg.header())?;
    harness::write_json(
        std::fs::File::create(dir.join("simulation.json"))?,
        &cfg.header(),
        &ds,
    )?;
    print_cells(&histories);
    eprintln!("wrote {} cells to {}", histories.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct EcmRow<'a> {
    cell_id: &'a str,
    cycle: u32,
    ocv_v: f64,
    r_o_ohm: f64,
    r_e_ohm: f64,
    c_e_f: f64,
    r_c_ohm: f64,
    c_c_f: f64,
    residual_rms_v: f64,
    iterations: usize,
    converged: bool,
}

fn fit_ecm(cfg: &RunConfig) -> Result<(), CliError> {
    let cells = load_cells(cfg)?;
    let mut rows = Vec::new();
    for cell in &cells {
        let source = CellFeatures::new(cell, cfg.truncation);
        for rec in cell.cycles.iter().step_by(cfg.stride as usize) {
            let curve = source.relaxation(rec.cycle_index)?;
            let report = match ecm::fit(&curve) {
                Ok(r) => r,
                Err(EcmError::NoConvergence { best }) => *best,
                Err(e) => return Err(e.into()),
            };
            let p = report.params;
            rows.push(EcmRow {
                cell_id: cell.cell_id(),
                cycle: rec.cycle_index,
                ocv_v: p.ocv,
                r_o_ohm: p.r_o,
                r_e_ohm: p.r_e,
                c_e_f: p.c_e,
                r_c_ohm: p.r_c,
                c_c_f: p.c_c,
                residual_rms_v: report.residual_rms,
                iterations: report.iterations,
                converged: report.converged,
            });
        }
    }
    let path = cfg.out_path("ecm.csv");
    std::fs::create_dir_all(&cfg.out)?;
    harness::write_csv(std::fs::File::create(&path)?, &cfg.header(), &rows)?;
    eprintln!("wrote {} fits to {}", rows.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct FeatureRow<'a> {
    cell_id: &'a str,
    cycle: u32,
    feature: &'static str,
    value: f64,
}

fn features(cfg: &RunConfig) -> Result<(), CliError> {
    let cells = load_cells(cfg)?;
    let set = cfg.feature_set_or(FeatureSet::NovelPred);
    let fixed = matches!(set, FeatureSet::Stats | FeatureSet::NovelPred);
    let mut rows = Vec::new();
    for cell in &cells {
        let Some(n) = cell
            .cycles
            .iter()
            .map(|c| c.cycle_index)
            .find(|&c| c >= cfg.window_start)
        else {
            continue;
        };
        let cycles: Vec<u32> = cell
            .cycles
            .iter()
            .map(|c| c.cycle_index)
            .filter(|&m| m > n && (m - n) % cfg.stride == 0)
            .filter(|&m| fixed || cell.cycle(m - 1).is_some())
            .collect();
        let mut source = CellFeatures::new(cell, cfg.truncation);
        if set.uses_ecm() {
            source.prefit(&cycles)?;
        }
        for m in cycles {
            let window = if fixed {
                WindowSpec::fixed(n, m)?
            } else {
                WindowSpec::adjacent(m)?
            };
            let v = source.assemble(&window, set)?;
            for (feature, value) in v.iter() {
                rows.push(FeatureRow {
                    cell_id: cell.cell_id(),
                    cycle: m,
                    feature,
                    value,
                });
            }
        }
    }
    let path = cfg.out_path("features.csv");
    std::fs::create_dir_all(&cfg.out)?;
    harness::write_csv(std::fs::File::create(&path)?, &cfg.header(), &rows)?;
    eprintln!("wrote {} values to {}", rows.len(), path.display());
    Ok(())
}

fn rul_config(cfg: &RunConfig) -> RulConfig {
    RulConfig {
        feature_set: cfg.feature_set_or(FeatureSet::NovelPred),
        window_start: cfg.window_start,
        truncation: cfg.truncation,
        gpr: GprConfig {
            seed: cfg.seed,
            ..GprConfig::default()
        },
        train_stride: cfg.stride,
        eval_stride: cfg.stride,
    }
}

fn class_config(cfg: &RunConfig) -> ClassificationConfig {
    ClassificationConfig {
        feature_set: cfg.feature_set_or(FeatureSet::NovelClass),
        test_cycle: cfg.test_cycle,
        window_cycles: cfg.window_cycles,
        policy: cfg.policy,
        gpc: batlife::gpc::GpcConfig {
            seed: cfg.seed,
            ..Default::default()
        },
        include_unlabelled: cfg.include_unlabelled,
    }
}

#[derive(Serialize, Deserialize)]
struct RulModelFile {
    fingerprint: String,
    config: RulConfig,
    models: BTreeMap<Chemistry, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct ClassModelFile {
    fingerprint: String,
    config: ClassificationConfig,
    models: BTreeMap<Chemistry, serde_json::Value>,
}

fn to_value(json: String) -> serde_json::Value {
    serde_json::from_str(&json).expect("model json is valid")
}

fn selected(split: &batlife::dataset::DatasetSplit, which: CellSelection, id: &str) -> bool {
    match which {
        CellSelection::Train => split.is_train(id),
        CellSelection::Test => split.is_test(id),
        CellSelection::All => true,
    }
}

fn train_rul(cfg: &RunConfig) -> Result<(), CliError> {
    let cells = load_cells(cfg)?;
    let split = cfg.split_for(&cells)?;
    let rc = rul_config(cfg);
    let mut ex = harness::Extraction::new(&cells, rc.truncation);
    let train = harness::rul_samples(&mut ex, rc.window_start, rc.feature_set, |id| {
        split.is_train(id).then_some(rc.train_stride)
    })?;
    if train.is_empty() {
        return Err(CliError::Data("no training samples".into()));
    }
    let models = harness::train_rul_models(&train, &rc.gpr)?;
    let file = RulModelFile {
        fingerprint: cfg.fingerprint(),
        models: models
            .iter()
            .map(|(c, m)| (*c, to_value(m.to_json())))
            .collect(),
        config: rc.clone(),
    };
    let path = cfg.out_path("models/rul.json");
    std::fs::create_dir_all(path.parent().unwrap())?;
    harness::write_json(std::fs::File::create(&path)?, &cfg.header(), &file)?;
    let importance = harness::importance_rows(&models, rc.feature_set);
    harness::write_csv(
        std::fs::File::create(cfg.out_path("models/rul_importance.csv"))?,
        &cfg.header(),
        &importance,
    )?;
    for (c, s) in models
        .iter()
        .filter_map(|(c, m)| m.summary().map(|s| (c, s)))
    {
        eprintln!(
            "{c}: {} samples, log marginal likelihood {:.3}",
            s.samples_used, s.log_marginal_likelihood
        );
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn predict_rul(
    cfg: &RunConfig,
    model: Option<PathBuf>,
    which: CellSelection,
) -> Result<(), CliError> {
    let path = model.unwrap_or_else(|| cfg.out_path("models/rul.json"));
    let file: RulModelFile = harness::read_json(
        std::fs::File::open(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
    )?;
    let models: BTreeMap<Chemistry, GprModel> = file
        .models
        .iter()
        .map(|(c, v)| Ok((*c, GprModel::from_json(&v.to_string())?)))
        .collect::<Result<_, CliError>>()?;
    let cells = load_cells(cfg)?;
    let split = cfg.split_for(&cells)?;
    let rc = &file.config;
    let mut ex = harness::Extraction::new(&cells, rc.truncation);
    let samples = harness::rul_samples(&mut ex, rc.window_start, rc.feature_set, |id| {
        selected(&split, which, id).then_some(cfg.stride)
    })?;
    let predictions = harness::predict_rul(&models, &samples)?;
    if predictions.is_empty() {
        return Err(CliError::Data("no samples to predict".into()));
    }
    let metrics = harness::metrics_from_predictions(&predictions, rc.feature_set)?;
    std::fs::create_dir_all(&cfg.out)?;
    harness::write_csv(
        std::fs::File::create(cfg.out_path("rul_predictions.csv"))?,
        &cfg.header(),
        &predictions,
    )?;
    harness::write_csv(
        std::fs::File::create(cfg.out_path("rul_metrics.csv"))?,
        &cfg.header(),
        &metrics,
    )?;
    print_metrics(&metrics);
    Ok(())
}

fn train_class(cfg: &RunConfig) -> Result<(), CliError> {
    let cells = load_cells(cfg)?;
    let split = cfg.split_for(&cells)?;
    let cc = class_config(cfg);
    let train = harness::class_samples(&cells, &cc, |id| split.is_train(id))?;
    if train.is_empty() {
        return Err(CliError::Data(format!(
            "EmptyWindow: no training samples in cycles {:?}",
            cc.window()
        )));
    }
    let dags = harness::train_dags(&train, &cc.gpc)?;
    let file = ClassModelFile {
        fingerprint: cfg.fingerprint(),
        models: dags
            .iter()
            .map(|(c, d)| (*c, to_value(d.to_json())))
            .collect(),
        config: cc,
    };
    let path = cfg.out_path("models/class.json");
    std::fs::create_dir_all(path.parent().unwrap())?;
    harness::write_json(std::fs::File::create(&path)?, &cfg.header(), &file)?;
    eprintln!(
        "wrote {} ({} training samples)",
        path.display(),
        train.len()
    );
    Ok(())
}

fn classify(cfg: &RunConfig, model: Option<PathBuf>, which: CellSelection) -> Result<(), CliError> {
    let path = model.unwrap_or_else(|| cfg.out_path("models/class.json"));
    let file: ClassModelFile = harness::read_json(
        std::fs::File::open(&path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
    )?;
    let dags: BTreeMap<Chemistry, LifeDag> = file
        .models
        .iter()
        .map(|(c, v)| Ok((*c, LifeDag::from_json(&v.to_string())?)))
        .collect::<Result<_, CliError>>()?;
    let cells = load_cells(cfg)?;
    let split = cfg.split_for(&cells)?;
    let samples = harness::class_samples(&cells, &file.config, |id| selected(&split, which, id))?;
    let predictions = harness::classify_samples(&dags, &samples)?;
    if predictions.is_empty() {
        return Err(CliError::Data("no samples to classify".into()));
    }
    let accuracy = harness::accuracy_from_predictions(&predictions, file.config.feature_set);
    std::fs::create_dir_all(&cfg.out)?;
    harness::write_csv(
        std::fs::File::create(cfg.out_path("class_predictions.csv"))?,
        &cfg.header(),
        &predictions,
    )?;
    harness::write_csv(
        std::fs::File::create(cfg.out_path("class_accuracy.csv"))?,
        &cfg.header(),
        &accuracy,
    )?;
    print_accuracy(&accuracy);
    Ok(())
}

fn print_metrics(rows: &[harness::MetricRow]) {
    println!("chemistry,condition,feature_set,samples,rmse_cycles,mape_percent");
    for m in rows {
        println!(
            "{},{},{},{},{:.3},{:.3}",
            m.chemistry, m.condition, m.feature_set, m.samples, m.rmse, m.mape
        );
    }
}

fn print_accuracy(rows: &[harness::AccuracyRow]) {
    println!("chemistry,condition,feature_set,samples,accuracy");
    for a in rows {
        println!(
            "{},{},{},{},{:.4}",
            a.chemistry, a.condition, a.feature_set, a.samples, a.accuracy
        );
    }
}

fn evaluate(
    cfg: &RunConfig,
    experiment: Experiment,
    levels: &[usize],
    starts: &[u32],
) -> Result<(), CliError> {
    let cells = load_cells(cfg)?;
    let split = cfg.split_for(&cells)?;
    let dir = cfg.out_path("evaluate");
    let header = cfg.header();
    let written = match experiment {
        Experiment::Rul => {
            let report = harness::run_rul_experiment(&cells, &split, &rul_config(cfg))?;
            print_metrics(&report.metrics);
            report.write(&dir, "", &header, cfg.plots)?
        }
        Experiment::RulTable => {
            let reports = harness::run_prediction_table(&cells, &split, &rul_config(cfg))?;
            let mut paths = Vec::new();
            for r in &reports {
                let per_set = RunConfig {
                    feature_set: Some(r.config.feature_set),
                    ..cfg.clone()
                };
                paths.extend(r.write(
                    &dir,
                    &format!("{}_", r.config.feature_set),
                    &per_set.header(),
                    cfg.plots,
                )?);
            }
            let table = harness::table_rows(&reports);
            print_metrics(&table);
            let path = dir.join("table.csv");
            harness::write_csv(std::fs::File::create(&path)?, &header, &table)?;
            paths.push(path);
            paths
        }
        Experiment::Truncation => {
            let sweep = harness::run_truncation_sweep(&cells, &split, &rul_config(cfg), levels)?;
            print_sweep(&sweep);
            sweep.write(&dir, "truncation", &header, cfg.plots)?
        }
        Experiment::StartCycle => {
            let sweep = harness::run_start_cycle_sweep(&cells, &split, &rul_config(cfg), starts)?;
            print_sweep(&sweep);
            sweep.write(&dir, "start_cycle", &header, cfg.plots)?
        }
        Experiment::Class => {
            let report =
                harness::run_classification_experiment(&cells, &split, &class_config(cfg))?;
            print_accuracy(&report.accuracy);
            report.write(&dir, "", &header, cfg.plots)?
        }
        Experiment::ClassTable => {
            let reports = harness::run_classification_table(&cells, &split, &class_config(cfg))?;
            let mut paths = Vec::new();
            for r in &reports {
                let per_set = RunConfig {
                    feature_set: Some(r.config.feature_set),
                    ..cfg.clone()
                };
                paths.extend(r.write(
                    &dir,
                    &format!("{}_", r.config.feature_set),
                    &per_set.header(),
                    cfg.plots,
                )?);
            }
            let table = harness::accuracy_table_rows(&reports);
            print_accuracy(&table);
            let path = dir.join("table.csv");
            harness::write_csv(std::fs::File::create(&path)?, &header, &table)?;
            paths.push(path);
            paths
        }
    };
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn print_sweep(sweep: &harness::SweepReport) {
    println!("level,minutes,chemistry,condition,rmse_cycles,mape_percent");
    for r in &sweep.rows {
        let minutes = r.minutes.map_or(String::new(), |m| format!("{m}"));
        println!(
            "{},{minutes},{},{},{:.3},{:.3}",
            r.level, r.chemistry, r.condition, r.rmse, r.mape
        );
    }
}

fn prediction_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.ends_with("predictions.csv"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else if input.exists() {
            files.push(input.clone());
        } else {
            return Err(CliError::Data(format!("{}: not found", input.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::Data("no prediction files found".into()));
    }
    Ok(files)
}

fn report(cfg: &RunConfig, inputs: Vec<PathBuf>) -> Result<(), CliError> {
    let inputs = if inputs.is_empty() {
        vec![cfg.out_path("evaluate")]
    } else {
        inputs
    };
    let mut rul_rows = Vec::new();
    let mut class_rows = Vec::new();
    for path in prediction_files(&inputs)? {
        let text = std::fs::read_to_string(&path)?;
        // the feature set is recorded in the file's config header line
        let set = feature_set_of(&text).or(cfg.feature_set);
        let columns = text.lines().find(|l| !l.starts_with('#')).unwrap_or("");
        if columns.split(',').any(|c| c == "predicted") && columns.split(',').any(|c| c == "eol") {
            let rows: Vec<harness::PredictionRow> = harness::read_csv(text.as_bytes())?;
            let set = set.unwrap_or(FeatureSet::NovelPred);
            rul_rows.extend(harness::metrics_from_predictions(&rows, set)?);
        } else if columns.split(',').any(|c| c == "truth") {
            let rows: Vec<harness::ClassPredictionRow> = harness::read_csv(text.as_bytes())?;
            let set = set.unwrap_or(FeatureSet::NovelClass);
            class_rows.extend(harness::accuracy_from_predictions(&rows, set));
        } else {
            return Err(CliError::Data(format!(
                "{}: not a prediction table",
                path.display()
            )));
        }
    }
    let dir = cfg.out_path("report");
    std::fs::create_dir_all(&dir)?;
    if !rul_rows.is_empty() {
        print_metrics(&rul_rows);
        harness::write_csv(
            std::fs::File::create(dir.join("table.csv"))?,
            &cfg.header(),
            &rul_rows,
        )?;
    }
    if !class_rows.is_empty() {
        print_accuracy(&class_rows);
        harness::write_csv(
            std::fs::File::create(dir.join("class_table.csv"))?,
            &cfg.header(),
            &class_rows,
        )?;
    }
    Ok(())
}

/// Feature set named in a `# config {...}` header line.
fn feature_set_of(text: &str) -> Option<FeatureSet> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.strip_prefix("# config "))
        .filter_map(|json| serde_json::from_str::<RunConfig>(json).ok())
        .find_map(|c| c.feature_set)
}
