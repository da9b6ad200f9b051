//! Onion password hashing toolkit.
//!
//! Models layered ("onion") password-hash chains of the kind large services
//! used to upgrade legacy MD5 stores in place, including the five-stage
//! scheme Facebook presented in 2014. Provides:
//!
//! - test-vector-pinned hash and KDF primitives ([`primitives`])
//! - chain definition, evaluation, and verification ([`chain`])
//! - legacy-digest wrapping and store migration ([`migration`])
//! - static bottleneck and compliance analysis ([`analyzer`])
//! - a durable, atomic credential store ([`credstore`])
//! - a minimal register/login HTTP service ([`authd`])
//! - the published MD5-colliding string pair ([`collision`])
//!
//! The central property the analyzer quantifies and the demo exploits: any
//! two inputs with equal MD5 digests produce identical values at every later
//! stage of an MD5-first chain, for any salts and pepper.

pub mod analyzer;
pub mod authd;
pub mod chain;
pub mod collision;
pub mod credstore;
pub mod migration;
pub mod primitives;

pub use chain::{
    evaluate_chain, stage_trace_hex, verify, ChainRegistry, ChainSpec, Pepper, SaltSet,
    StageTrace, VerificationOutcome,
};
pub use credstore::{CredentialRecord, SaltSource, Store};
