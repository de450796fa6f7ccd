use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("packet not localized: {0}")]
    Localization(String),
    #[error("coincident points in kernel query")]
    Singular,
    #[error("time step {dt} exceeds stability limit; suggested dt = {suggested}")]
    Cfl { dt: f64, suggested: f64 },
    #[error("derivative order {0} exceeds kmax {1}")]
    Order(usize, usize),
    #[error("monitor abort at t = {t}: {reason}")]
    Monitor { t: f64, reason: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
