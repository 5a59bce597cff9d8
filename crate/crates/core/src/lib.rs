pub mod fuzzy;
pub mod detection;
pub mod reputation;
pub mod codec;
pub mod crypto;
pub mod dht;
pub mod sim;
pub mod ledger;
pub mod harness;

pub use detection::{DetectionDecision, Detector, DetectorConfig, TelemetryFrame};
pub use dht::{ContentAddress, Dht};
pub use fuzzy::{FuzzySystem, Verdict};
pub use reputation::{ReputationRecord, ReputationStore};
