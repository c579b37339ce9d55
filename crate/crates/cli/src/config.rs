use std::path::{Path, PathBuf};

use batlife::dataset::{Chemistry, DatasetSplit, SplitSpec};
use batlife::features::FeatureSet;
use batlife::gpc::ThresholdPolicy;
use batlife::harness;
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const OUT_ENV: &str = "BATLIFE_OUT";
pub const DEFAULT_OUT: &str = "batlife-out";

/// Flags shared by every subcommand. Each may also be set in the config
/// file under the same name with `_` for `-`; flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Key-value config file (TOML). Flags override its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory [default: $BATLIFE_OUT, else ./batlife-out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Dataset directory holding manifest.toml, or a manifest file
    /// [default: <out>/dataset].
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,

    /// Only use cells of this chemistry (NCA, NCM, NCM_NCA).
    #[arg(long, value_name = "CHEM")]
    pub chemistry: Option<Chemistry>,

    /// Feature set: ecm, stats, benchmark, novel-pred, novel-class, rate-class.
    #[arg(long, value_name = "SET")]
    pub feature_set: Option<FeatureSet>,

    /// First cycle of the RUL evaluation window (cycles) [default: 1].
    #[arg(long, value_name = "CYCLE")]
    pub window_start: Option<u32>,

    /// Centre of the classification window (cycles) [default: 60].
    #[arg(long, value_name = "CYCLE")]
    pub test_cycle: Option<u32>,

    /// Width of the classification window (cycles) [default: 20].
    #[arg(long, value_name = "CYCLES")]
    pub window_cycles: Option<u32>,

    /// Keep only the first N relaxation samples of every rest (samples, at
    /// least 6) [default: full rest].
    #[arg(long, value_name = "SAMPLES")]
    pub truncate: Option<usize>,

    /// Train/test cell counts per group, e.g. `NCA:CY25-0.5/1=3/2,...`
    /// (cells) [default: half of each group for training, rounded up].
    #[arg(long, value_name = "SPEC")]
    pub split: Option<String>,

    /// Seed for splitting, simulation and optimizer restarts (integer)
    /// [default: 0].
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,

    /// Long/medium threshold at SOH 1 (cycles of RUL); needs
    /// --lower-threshold [default: per chemistry].
    #[arg(long, value_name = "CYCLES", requires = "lower_threshold")]
    pub upper_threshold: Option<f64>,

    /// Medium/short threshold at SOH 1 (cycles of RUL); needs
    /// --upper-threshold.
    #[arg(long, value_name = "CYCLES", requires = "upper_threshold")]
    pub lower_threshold: Option<f64>,

    /// Also classify chemistries without built-in thresholds.
    #[arg(long)]
    pub include_unlabelled: bool,

    /// Use every Nth cycle when building samples (cycles) [default: 1].
    #[arg(long, value_name = "N")]
    pub stride: Option<u32>,

    /// Also write SVG plots.
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    chemistry: Option<String>,
    feature_set: Option<String>,
    window_start: Option<u32>,
    test_cycle: Option<u32>,
    window_cycles: Option<u32>,
    truncate: Option<usize>,
    split: Option<String>,
    seed: Option<u64>,
    upper_threshold: Option<f64>,
    lower_threshold: Option<f64>,
    include_unlabelled: Option<bool>,
    stride: Option<u32>,
    plots: Option<bool>,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub out: PathBuf,
    pub data: PathBuf,
    pub chemistry: Option<Chemistry>,
    pub feature_set: Option<FeatureSet>,
    pub window_start: u32,
    pub test_cycle: u32,
    pub window_cycles: u32,
    pub truncation: Option<usize>,
    pub split: Option<String>,
    pub seed: u64,
    pub policy: Option<ThresholdPolicy>,
    pub include_unlabelled: bool,
    pub stride: u32,
    pub plots: bool,
}

impl RunConfig {
    /// Flags, then the config file, then `$BATLIFE_OUT` (output directory
    /// only), then defaults.
    pub fn resolve(command: &str, args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let usage = |e: String| CliError::Usage(e);
        let out = args
            .out
            .clone()
            .or(file.out)
            .or_else(|| {
                std::env::var_os(OUT_ENV)
                    .filter(|v| !v.is_empty())
                    .map(PathBuf::from)
            })
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let data = args
            .data
            .clone()
            .or(file.data)
            .unwrap_or_else(|| out.join("dataset"));
        let chemistry = match (args.chemistry, file.chemistry) {
            (Some(c), _) => Some(c),
            (None, Some(s)) => Some(
                s.parse()
                    .map_err(|e: batlife::dataset::DatasetError| usage(e.to_string()))?,
            ),
            (None, None) => None,
        };
        let feature_set = match (args.feature_set, file.feature_set) {
            (Some(f), _) => Some(f),
            (None, Some(s)) => Some(s.parse().map_err(|e| usage(format!("feature_set: {e}")))?),
            (None, None) => None,
        };
        let upper = args.upper_threshold.or(file.upper_threshold);
        let lower = args.lower_threshold.or(file.lower_threshold);
        let policy = match (upper, lower) {
            (Some(u), Some(l)) => {
                Some(ThresholdPolicy::new(u, l).map_err(|e| usage(e.to_string()))?)
            }
            (None, None) => None,
            _ => {
                return Err(usage(
                    "upper_threshold and lower_threshold must be set together".into(),
                ))
            }
        };
        let truncation = args.truncate.or(file.truncate);
        if let Some(k) = truncation {
            if k < batlife::ecm::MIN_FIT_SAMPLES {
                return Err(CliError::Data(
                    batlife::ecm::EcmError::InsufficientData(k).to_string(),
                ));
            }
        }
        let stride = args.stride.or(file.stride).unwrap_or(1);
        if stride == 0 {
            return Err(usage("stride must be at least 1".into()));
        }
        Ok(Self {
            command: command.to_string(),
            out,
            data,
            chemistry,
            feature_set,
            window_start: args.window_start.or(file.window_start).unwrap_or(1),
            test_cycle: args.test_cycle.or(file.test_cycle).unwrap_or(60),
            window_cycles: args.window_cycles.or(file.window_cycles).unwrap_or(20),
            truncation,
            split: args.split.clone().or(file.split),
            seed: args.seed.or(file.seed).unwrap_or(0),
            policy,
            include_unlabelled: args.include_unlabelled || file.include_unlabelled.unwrap_or(false),
            stride,
            plots: args.plots || file.plots.unwrap_or(false),
        })
    }

    pub fn fingerprint(&self) -> String {
        harness::fingerprint(self)
    }

    /// First lines of every file this run writes: version and fingerprint,
    /// then the configuration itself.
    pub fn header(&self) -> Vec<String> {
        vec![
            harness::header_line(&self.fingerprint()),
            format!(
                "config {}",
                serde_json::to_string(self).expect("config serializes")
            ),
        ]
    }

    pub fn feature_set_or(&self, default: FeatureSet) -> FeatureSet {
        self.feature_set.unwrap_or(default)
    }

    pub fn manifest_path(&self) -> PathBuf {
        if self.data.is_dir() {
            self.data.join("manifest.toml")
        } else {
            self.data.clone()
        }
    }

    pub fn split_for(
        &self,
        cells: &[batlife::dataset::CellHistory],
    ) -> Result<DatasetSplit, CliError> {
        let spec = match &self.split {
            Some(s) => s
                .parse::<SplitSpec>()
                .map_err(|e| CliError::Usage(e.to_string()))?,
            None => SplitSpec::halves(cells),
        };
        Ok(batlife::dataset::split_dataset(cells, &spec, self.seed)?)
    }

    pub fn out_path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out.join(name)
    }
}
