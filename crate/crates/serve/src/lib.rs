//! Diagnosis service, recommendation provider, latency benchmark and the
//! `cane` command line.

pub mod bench;
pub mod cli;
pub mod infer;
pub mod kb;
pub mod reco;
pub mod server;

pub use infer::{load_model, predict_bytes, ClassScore, LoadedModel, Prediction};
pub use kb::{Recommendation, Sections, Source};
pub use reco::RecoProvider;
pub use server::{router, AppState, Health};
