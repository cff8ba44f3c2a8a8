use crate::model::Node;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("coalition is empty")]
    EmptyCoalition,
    #[error("coalition must be a proper nonempty subset of the players")]
    CoalitionNotProper,
    #[error("induced subgraph is disconnected")]
    DisconnectedSubgame,
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("invalid incorporation order: {0}")]
    InvalidOrder(String),
    #[error("linear program: {0}")]
    Lp(String),
    #[error("path enumeration budget exceeded for {u}-{v} (limit {limit})")]
    PathBudgetExceeded { u: Node, v: Node, limit: usize },
    #[error("coalition enumeration not supported for general graphs with n = {0} > 12")]
    CoalitionBudgetExceeded(usize),
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),
    #[error("{count} valid orders exceed the enumeration limit {limit}")]
    OrderLimitExceeded { count: u128, limit: u128 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("json: {0}")]
    Json(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
