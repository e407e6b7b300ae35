use thiserror::Error;

use crate::environment::EnvError;
use crate::privatizer::PrivacyError;
use crate::stats::LinalgError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown baseline '{0}'")]
    UnknownBaseline(String),
    #[error("baseline '{0}' is not implemented")]
    NotImplemented(String),
    #[error("user {user} is not a member of cluster {cluster} on server {server}")]
    Membership { user: usize, server: usize, cluster: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::UnknownBaseline(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
