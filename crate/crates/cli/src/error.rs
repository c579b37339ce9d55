use batlife::dataset::DatasetError;
use batlife::ecm::EcmError;
use batlife::features::FeatureError;
use batlife::gpc::GpcError;
use batlife::gpr::GprError;
use batlife::harness::HarnessError;
use batlife::simgen::SimError;

/// Failure categories, one exit code each.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "UsageError: {m}"),
            CliError::Data(m) => write!(f, "DataError: {m}"),
            CliError::Numerical(m) => write!(f, "NumericalError: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Dataset(d) => d.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<EcmError> for CliError {
    fn from(e: EcmError) -> Self {
        match e {
            EcmError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Ecm {
                source: EcmError::NoConvergence { .. },
                ..
            } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GprError> for CliError {
    fn from(e: GprError) -> Self {
        match e {
            GprError::SingularKernel | GprError::NonFinite | GprError::DegenerateTargets => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GpcError> for CliError {
    fn from(e: GpcError) -> Self {
        match e {
            GpcError::NoConvergence(_) | GpcError::SingularKernel | GpcError::NonFinite => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Dataset(e) => e.into(),
            HarnessError::Feature(e) => e.into(),
            HarnessError::Gpr(e) => e.into(),
            HarnessError::Gpc(e) => e.into(),
            HarnessError::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}
