pub mod corpus;
pub mod eval;
pub mod human_eval;
pub mod prefs;
pub mod report;
pub mod stats;
pub mod verify;
