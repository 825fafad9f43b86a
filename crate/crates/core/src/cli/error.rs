//! Error classification and the exit-code contract.

use serde::Serialize;

use crate::clamping_loss::ClampingError;
use crate::coupled_modes::CoupledModeError;
use crate::fem::FemError;
use crate::intrinsic_loss::IntrinsicLossError;
use crate::noise_spectra::SpectrumError;
use crate::quantum_budget::BudgetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Bad config, missing file, malformed or insufficient data.
    Input,
    /// A solver or fit failed to converge.
    Numerical,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Input => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Internal => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
    /// Dotted path of the offending config key, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{} (at `{k}`)", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into(), key: None }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Input, message)
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(ErrorKind::Internal, e.to_string())
    }

    pub fn at(mut self, key: impl Into<String>) -> Self {
        self.key = Some(key.into());
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// `{"error": {...}}` as printed on stderr.
    pub fn to_json(&self, command: Option<&str>) -> String {
        let mut v = serde_json::json!({ "error": self, "exit_code": self.exit_code() });
        if let Some(c) = command {
            v["command"] = serde_json::Value::from(c);
        }
        v.to_string()
    }
}

impl From<CoupledModeError> for CliError {
    fn from(e: CoupledModeError) -> Self {
        let kind = match e {
            CoupledModeError::ConvergenceFailure { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<FemError> for CliError {
    fn from(e: FemError) -> Self {
        let kind = match e {
            FemError::NotPositiveDefinite(_) | FemError::SingularShift { .. } | FemError::ConvergenceFailure { .. } => ErrorKind::Numerical,
            FemError::ShapeMismatch { .. } => ErrorKind::Internal,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ClampingError> for CliError {
    fn from(e: ClampingError) -> Self {
        let kind = match e {
            ClampingError::NonPositiveEnergy(_) | ClampingError::NegativeSlope { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<IntrinsicLossError> for CliError {
    fn from(e: IntrinsicLossError) -> Self {
        let kind = match e {
            IntrinsicLossError::Quadrature { .. } | IntrinsicLossError::ConvergenceFailure { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SpectrumError> for CliError {
    fn from(e: SpectrumError) -> Self {
        let kind = match e {
            SpectrumError::ConvergenceFailure { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Input,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<BudgetError> for CliError {
    fn from(e: BudgetError) -> Self {
        Self::new(ErrorKind::Input, e.to_string())
    }
}
