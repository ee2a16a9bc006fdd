//! Scoring of discovered units: NMI against reference phones, same-different
//! average precision on word segments, and spoken-document classification
//! and clustering.

pub mod docs;
pub mod nmi;
pub mod samediff;
