use ebmddg::ddg::DdgError;
use ebmddg::dsm::DsmError;
use ebmddg::energy::EnergyError;
use ebmddg::eval::EvalError;
use ebmddg::ingest::IngestError;
use ebmddg::net::NetError;
use ebmddg::sampler::SamplerError;
use ebmddg::seqmodel::SeqModelError;
use thiserror::Error;

/// Failure of a command; the variant decides the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    /// Unreadable or malformed inputs and missing upstream artifacts. Exit code 3.
    #[error("input error: {0}")]
    Input(String),
    /// Divergence, non-finite values or failed gradient checks. Exit code 4.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Anything else, including output I/O. Exit code 1.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Internal(_) => 1,
        }
    }

    pub fn input(msg: impl std::fmt::Display) -> Self {
        CliError::Input(msg.to_string())
    }

    pub fn internal(msg: impl std::fmt::Display) -> Self {
        CliError::Internal(msg.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Csv(_) => CliError::Input(e.to_string()),
            EvalError::NonFinite => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::NonFiniteEvaluation { .. } | NetError::NonFiniteGradient { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SeqModelError> for CliError {
    fn from(e: SeqModelError) -> Self {
        match e {
            SeqModelError::Diverged(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            SamplerError::Energy(n) => n.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::NonFinite => CliError::Numerical(e.to_string()),
            EnergyError::Net(n) => n.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<DsmError> for CliError {
    fn from(e: DsmError) -> Self {
        match e {
            DsmError::NoNeighborhoods => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<DdgError> for CliError {
    fn from(e: DdgError) -> Self {
        match e {
            DdgError::Diverged { .. } | DdgError::NonPositiveOmega { .. } => CliError::Numerical(e.to_string()),
            DdgError::Sampler(s) => s.into(),
            DdgError::SeqModel(s) => s.into(),
            DdgError::Net(n) => n.into(),
            DdgError::Energy(n) => n.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
