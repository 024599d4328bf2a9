//! HTTP front end that lets a human act as the oracle of a labeling
//! campaign.

pub mod api;
pub mod config;
pub mod session;

pub use api::{router, serve, AppState, API_PREFIX};
pub use config::{DataSources, LoadedData, ServiceConfig, DATA_ROOT_ENV, JOURNAL_FILE};
pub use session::{LabelAck, LabelRequest, QueryPayload, Session, SessionError, Status};
