//! Layered hash-chain definition, evaluation, and verification.
//!
//! A chain is an ordered list of stages; each stage consumes the previous
//! stage's output rendered as lowercase ASCII hex (the first stage consumes
//! the raw password octets). The `fb2014` preset reproduces the five-stage
//! scheme Facebook presented in 2014:
//!
//! ```text
//! md5 -> salted sha1 -> hmac-sha256 (pepper) -> scrypt -> sha256
//! ```

use std::collections::BTreeMap;

use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::credstore::CredentialRecord;
use crate::primitives::{self, ScryptParams};

pub const MAX_PASSWORD_LEN: usize = 4096;

/// How a stage interprets the data handed to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputEncoding {
    /// Used only by the first stage: the password octets as submitted.
    RawBytes,
    /// Lowercase ASCII hex of the previous stage's output.
    LowerHex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageKind {
    Md5Plain,
    Sha1Salted,
    HmacSha256Peppered,
    Scrypt(ScryptParams),
    Sha256Plain,
    /// Salt-prefixed SHA-256; the single stage of the `sha256-v1` control
    /// chain. Uses the 32-octet salt slot.
    Sha256Salted,
}

impl StageKind {
    /// Output width in octets.
    pub fn output_len(&self) -> usize {
        match self {
            StageKind::Md5Plain => 16,
            StageKind::Sha1Salted => 20,
            StageKind::HmacSha256Peppered => 32,
            StageKind::Scrypt(params) => params.dk_len(),
            StageKind::Sha256Plain | StageKind::Sha256Salted => 32,
        }
    }

    /// Output width in bits, the quantity the analyzer reasons about.
    pub fn output_bits(&self) -> u32 {
        self.output_len() as u32 * 8
    }

    pub fn name(&self) -> &'static str {
        match self {
            StageKind::Md5Plain => "md5",
            StageKind::Sha1Salted => "sha1",
            StageKind::HmacSha256Peppered => "hmac-sha256",
            StageKind::Scrypt(_) => "scrypt",
            StageKind::Sha256Plain => "sha256",
            StageKind::Sha256Salted => "sha256-salted",
        }
    }

    pub fn uses_legacy_algorithm(&self) -> bool {
        matches!(self, StageKind::Md5Plain | StageKind::Sha1Salted)
    }

    pub fn is_memory_hard(&self) -> bool {
        matches!(self, StageKind::Scrypt(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSpec {
    pub kind: StageKind,
    pub input_encoding: InputEncoding,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSpec {
    version: String,
    stages: Vec<StageSpec>,
    output_width_bits: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("password exceeds {MAX_PASSWORD_LEN} octets")]
    PasswordTooLong,
    #[error("invalid chain spec: {0}")]
    InvalidSpec(String),
    #[error("record version {record} does not match spec version {spec}")]
    VersionMismatch { record: String, spec: String },
}

impl ChainSpec {
    /// Build a chain from explicit stages. The first stage consumes raw
    /// bytes; every later stage consumes the hex rendering of its
    /// predecessor.
    pub fn new(version: impl Into<String>, kinds: Vec<StageKind>) -> Result<Self, ChainError> {
        let version = version.into();
        if kinds.is_empty() {
            return Err(ChainError::InvalidSpec("stage list is empty".into()));
        }
        if version.is_empty() || version.contains(['$', ':', '\n']) {
            return Err(ChainError::InvalidSpec(format!(
                "invalid version string {version:?}"
            )));
        }
        let output_width_bits = kinds.last().unwrap().output_bits();
        let stages = kinds
            .into_iter()
            .enumerate()
            .map(|(i, kind)| StageSpec {
                kind,
                input_encoding: if i == 0 {
                    InputEncoding::RawBytes
                } else {
                    InputEncoding::LowerHex
                },
            })
            .collect();
        Ok(ChainSpec {
            version,
            stages,
            output_width_bits,
        })
    }

    /// The five-stage scheme presented by Facebook in 2014, scrypt at
    /// n=2^14, r=8, p=1, 64-octet derived key.
    pub fn facebook2014() -> ChainSpec {
        let scrypt = ScryptParams::new(1 << 14, 8, 1, 64).unwrap();
        ChainSpec::new(
            "fb2014",
            vec![
                StageKind::Md5Plain,
                StageKind::Sha1Salted,
                StageKind::HmacSha256Peppered,
                StageKind::Scrypt(scrypt),
                StageKind::Sha256Plain,
            ],
        )
        .unwrap()
    }

    /// Control chain: a single salted SHA-256 stage. Not vulnerable to the
    /// MD5 collision attack.
    pub fn sha256_v1() -> ChainSpec {
        ChainSpec::new("sha256-v1", vec![StageKind::Sha256Salted]).unwrap()
    }

    /// Single unsalted MD5 stage, modeling pre-upgrade legacy storage.
    pub fn md5_v0() -> ChainSpec {
        ChainSpec::new("md5-v0", vec![StageKind::Md5Plain]).unwrap()
    }

    pub fn by_version(version: &str) -> Option<ChainSpec> {
        match version {
            "fb2014" => Some(ChainSpec::facebook2014()),
            "sha256-v1" => Some(ChainSpec::sha256_v1()),
            "md5-v0" => Some(ChainSpec::md5_v0()),
            _ => None,
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn output_width_bits(&self) -> u32 {
        self.output_width_bits
    }

    /// Output width of the final stage in octets.
    pub fn output_len(&self) -> usize {
        self.stages.last().unwrap().kind.output_len()
    }
}

/// Per-user public salts, stored in the clear alongside the record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaltSet {
    pub sha1_salt: [u8; 20],
    pub scrypt_salt: [u8; 32],
}

impl SaltSet {
    /// Fresh salts from the OS randomness source.
    pub fn generate() -> SaltSet {
        let mut sha1_salt = [0u8; 20];
        let mut scrypt_salt = [0u8; 32];
        getrandom::fill(&mut sha1_salt).expect("OS randomness unavailable");
        getrandom::fill(&mut scrypt_salt).expect("OS randomness unavailable");
        SaltSet {
            sha1_salt,
            scrypt_salt,
        }
    }

    /// All-zero salts, for deterministic fixtures only.
    pub fn zero() -> SaltSet {
        SaltSet {
            sha1_salt: [0; 20],
            scrypt_salt: [0; 32],
        }
    }
}

/// Service-wide secret key. Held in memory only; never serialized.
#[derive(Clone, PartialEq, Eq)]
pub struct Pepper {
    secret: [u8; 32],
}

impl Pepper {
    pub fn new(secret: [u8; 32]) -> Pepper {
        Pepper { secret }
    }

    /// Parse the 64-hex-char form used by the ONIONHASH_PEPPER variable.
    pub fn from_hex(s: &str) -> Option<Pepper> {
        let bytes = hex::decode(s).ok()?;
        let secret: [u8; 32] = bytes.try_into().ok()?;
        Some(Pepper { secret })
    }

    pub fn zero() -> Pepper {
        Pepper { secret: [0; 32] }
    }

    pub(crate) fn secret(&self) -> &[u8; 32] {
        &self.secret
    }
}

impl std::fmt::Debug for Pepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Pepper(redacted)")
    }
}

/// One stage's output within a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub stage_name: &'static str,
    pub bytes: Vec<u8>,
}

/// Per-stage intermediate outputs of one chain evaluation. The final entry is
/// the stored credential value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageTrace {
    outputs: Vec<StageOutput>,
}

impl StageTrace {
    pub fn outputs(&self) -> &[StageOutput] {
        &self.outputs
    }

    /// The final stage output, i.e. the value a credential store keeps.
    pub fn value(&self) -> &[u8] {
        &self.outputs.last().unwrap().bytes
    }
}

/// Diagnostic rendering: one `(stage-name, lowercase-hex)` entry per stage,
/// in evaluation order.
pub fn stage_trace_hex(trace: &StageTrace) -> Vec<(&'static str, String)> {
    trace
        .outputs
        .iter()
        .map(|out| (out.stage_name, hex::encode(&out.bytes)))
        .collect()
}

fn stage_input(encoding: InputEncoding, previous: &[u8]) -> Vec<u8> {
    match encoding {
        InputEncoding::RawBytes => previous.to_vec(),
        InputEncoding::LowerHex => hex::encode(previous).into_bytes(),
    }
}

fn run_stage(stage: &StageSpec, input: &[u8], salts: &SaltSet, pepper: &Pepper) -> Vec<u8> {
    match &stage.kind {
        StageKind::Md5Plain => primitives::md5(input).as_bytes().to_vec(),
        StageKind::Sha1Salted => {
            let mut msg = salts.sha1_salt.to_vec();
            msg.extend_from_slice(input);
            primitives::sha1(&msg).as_bytes().to_vec()
        }
        StageKind::HmacSha256Peppered => primitives::hmac_sha256(pepper.secret(), input)
            .as_bytes()
            .to_vec(),
        StageKind::Scrypt(params) => primitives::scrypt_kdf(input, &salts.scrypt_salt, params),
        StageKind::Sha256Plain => primitives::sha256(input).as_bytes().to_vec(),
        StageKind::Sha256Salted => {
            let mut msg = salts.scrypt_salt.to_vec();
            msg.extend_from_slice(input);
            primitives::sha256(&msg).as_bytes().to_vec()
        }
    }
}

/// Evaluate every stage of `spec` over `password`, returning all
/// intermediates. Pure and deterministic in all four arguments.
pub fn evaluate_chain(
    spec: &ChainSpec,
    password: &[u8],
    salts: &SaltSet,
    pepper: &Pepper,
) -> Result<StageTrace, ChainError> {
    if password.len() > MAX_PASSWORD_LEN {
        return Err(ChainError::PasswordTooLong);
    }
    evaluate_from(spec, 0, password, salts, pepper)
}

/// Enter the pipeline at stage `skip`, seeding it with `seed` as if it were
/// the output of stage `skip - 1`. With `skip = 0`, `seed` is the password.
/// This is the entry point legacy-hash wrapping uses.
pub fn evaluate_from(
    spec: &ChainSpec,
    skip: usize,
    seed: &[u8],
    salts: &SaltSet,
    pepper: &Pepper,
) -> Result<StageTrace, ChainError> {
    if skip >= spec.stages.len() {
        return Err(ChainError::InvalidSpec(format!(
            "entry stage {skip} out of range for {}-stage chain",
            spec.stages.len()
        )));
    }
    let mut outputs = Vec::with_capacity(spec.stages.len());
    let mut current = seed.to_vec();
    for stage in &spec.stages[skip..] {
        let encoding = if skip > 0 {
            // seeding with a prior stage's output: always hex from here on
            InputEncoding::LowerHex
        } else {
            stage.input_encoding
        };
        let input = if outputs.is_empty() {
            stage_input(encoding, &current)
        } else {
            stage_input(stage.input_encoding, &current)
        };
        current = run_stage(stage, &input, salts, pepper);
        outputs.push(StageOutput {
            stage_name: stage.kind.name(),
            bytes: current.clone(),
        });
    }
    Ok(StageTrace { outputs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerificationOutcome {
    Accept,
    Reject,
}

/// Compare `candidate` against a stored record. The stored-value comparison
/// is constant-time.
pub fn verify(
    spec: &ChainSpec,
    candidate: &[u8],
    record: &CredentialRecord,
    pepper: &Pepper,
) -> Result<VerificationOutcome, ChainError> {
    if record.version != spec.version {
        return Err(ChainError::VersionMismatch {
            record: record.version.clone(),
            spec: spec.version.clone(),
        });
    }
    let trace = evaluate_chain(spec, candidate, &record.salts, pepper)?;
    let matches: bool = trace.value().ct_eq(record.stored_value.as_slice()).into();
    Ok(if matches {
        VerificationOutcome::Accept
    } else {
        VerificationOutcome::Reject
    })
}

/// Version-string -> spec lookup used by stores that may hold records from
/// several chain generations at once (mid-migration).
#[derive(Debug, Clone)]
pub struct ChainRegistry {
    specs: BTreeMap<String, ChainSpec>,
    default_version: String,
}

impl ChainRegistry {
    /// Registry holding the built-in chains, with `fb2014` as default.
    pub fn builtin() -> ChainRegistry {
        let mut registry = ChainRegistry {
            specs: BTreeMap::new(),
            default_version: "fb2014".into(),
        };
        registry.register(ChainSpec::facebook2014());
        registry.register(ChainSpec::sha256_v1());
        registry.register(ChainSpec::md5_v0());
        registry
    }

    /// Registry holding a single chain, which is also the default.
    pub fn single(spec: ChainSpec) -> ChainRegistry {
        let mut registry = ChainRegistry {
            specs: BTreeMap::new(),
            default_version: spec.version.clone(),
        };
        registry.register(spec);
        registry
    }

    pub fn register(&mut self, spec: ChainSpec) {
        self.specs.insert(spec.version.clone(), spec);
    }

    pub fn get(&self, version: &str) -> Option<&ChainSpec> {
        self.specs.get(version)
    }

    pub fn default_spec(&self) -> &ChainSpec {
        &self.specs[&self.default_version]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision;
    use crate::credstore::CredentialRecord;

    fn fb_test_chain() -> ChainSpec {
        // reduced-cost scrypt keeps the suite fast; the preset itself always
        // carries n=2^14
        let scrypt = ScryptParams::new(1 << 4, 8, 1, 64).unwrap();
        ChainSpec::new(
            "fb2014-test",
            vec![
                StageKind::Md5Plain,
                StageKind::Sha1Salted,
                StageKind::HmacSha256Peppered,
                StageKind::Scrypt(scrypt),
                StageKind::Sha256Plain,
            ],
        )
        .unwrap()
    }

    #[test]
    fn preset_shape() {
        let spec = ChainSpec::facebook2014();
        assert_eq!(spec.stages().len(), 5);
        assert_eq!(spec.output_width_bits(), 256);
        assert_eq!(spec.version(), "fb2014");
        assert_eq!(spec, ChainSpec::facebook2014());
        match &spec.stages()[3].kind {
            StageKind::Scrypt(p) => {
                assert_eq!((p.n(), p.r(), p.p(), p.dk_len()), (1 << 14, 8, 1, 64));
            }
            other => panic!("stage 3 is {other:?}"),
        }
    }

    // golden value pinned from an independent step-by-step composition of the
    // five primitives (full n=2^14 parameters, all-zero salts and pepper)
    #[test]
    fn fb2014_golden_value() {
        let trace = evaluate_chain(
            &ChainSpec::facebook2014(),
            b"hunter2",
            &SaltSet::zero(),
            &Pepper::zero(),
        )
        .unwrap();
        let hex_entries = stage_trace_hex(&trace);
        assert_eq!(
            hex_entries,
            vec![
                ("md5", "2ab96390c7dbe3439de74d0c9b0b1767".to_string()),
                (
                    "sha1",
                    "c0f821909f77c660ac329f0d3d360e6772937490".to_string()
                ),
                (
                    "hmac-sha256",
                    "5a13029adecce35c656a51ea9db26e6e031e79179b898ed3ca8d0beffe060f36"
                        .to_string()
                ),
                (
                    "scrypt",
                    "b3fa073d1bd32e354718e1db01866ba7181758de2bdf846a63b240f1f53e162c\
                     0f25b3ffcb3ab9ed4922b4c3d7fd256e01dd7c385a1fc255a639483df5eef385"
                        .to_string()
                ),
                (
                    "sha256",
                    "4da55aa7f53a17b3113d0b0c2eea5bd94f052bba70be1bf9d2dbc07aebdee19c"
                        .to_string()
                ),
            ]
        );
    }

    // same composition at the reduced test cost
    #[test]
    fn fb2014_reduced_cost_golden_value() {
        let trace = evaluate_chain(
            &fb_test_chain(),
            b"hunter2",
            &SaltSet::zero(),
            &Pepper::zero(),
        )
        .unwrap();
        assert_eq!(
            hex::encode(trace.value()),
            "93fce1b99afe8f77aa297675957e62f3b19b906458b332960ef26fddbfaefe94"
        );
    }

    #[test]
    fn trace_shape_and_hex_lengths() {
        let trace = evaluate_chain(
            &fb_test_chain(),
            b"abc",
            &SaltSet::zero(),
            &Pepper::zero(),
        )
        .unwrap();
        let entries = stage_trace_hex(&trace);
        assert_eq!(entries.len(), 5);
        assert_eq!(entries[0], ("md5", "900150983cd24fb0d6963f7d28e17f72".into()));
        let lens: Vec<usize> = entries.iter().map(|(_, h)| h.len()).collect();
        assert_eq!(lens, vec![32, 40, 64, 128, 64]);
    }

    #[test]
    fn collision_pair_produces_identical_traces() {
        let spec = fb_test_chain();
        let salts = SaltSet::generate();
        let pepper = Pepper::new([7; 32]);
        let ta = evaluate_chain(&spec, collision::STRING_A, &salts, &pepper).unwrap();
        let tb = evaluate_chain(&spec, collision::STRING_B, &salts, &pepper).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn non_colliding_inputs_diverge_at_first_stage() {
        let spec = fb_test_chain();
        let salts = SaltSet::zero();
        let pepper = Pepper::zero();
        let ta = evaluate_chain(&spec, b"abc", &salts, &pepper).unwrap();
        let tb = evaluate_chain(&spec, b"abd", &salts, &pepper).unwrap();
        assert_ne!(ta.outputs()[0], tb.outputs()[0]);
        assert_ne!(ta.value(), tb.value());
    }

    #[test]
    fn password_length_limit() {
        let spec = fb_test_chain();
        let long = vec![b'x'; MAX_PASSWORD_LEN + 1];
        assert_eq!(
            evaluate_chain(&spec, &long, &SaltSet::zero(), &Pepper::zero()),
            Err(ChainError::PasswordTooLong)
        );
        let max = vec![b'x'; MAX_PASSWORD_LEN];
        assert!(evaluate_chain(&spec, &max, &SaltSet::zero(), &Pepper::zero()).is_ok());
    }

    #[test]
    fn empty_password_is_accepted() {
        assert!(evaluate_chain(&fb_test_chain(), b"", &SaltSet::zero(), &Pepper::zero()).is_ok());
    }

    #[test]
    fn verify_accept_collide_reject() {
        let spec = fb_test_chain();
        let salts = SaltSet::generate();
        let pepper = Pepper::new([3; 32]);
        let trace = evaluate_chain(&spec, collision::STRING_A, &salts, &pepper).unwrap();
        let record = CredentialRecord {
            username: "eve".into(),
            version: spec.version().into(),
            salts,
            stored_value: trace.value().to_vec(),
        };
        assert_eq!(
            verify(&spec, collision::STRING_A, &record, &pepper).unwrap(),
            VerificationOutcome::Accept
        );
        assert_eq!(
            verify(&spec, collision::STRING_B, &record, &pepper).unwrap(),
            VerificationOutcome::Accept
        );
        assert_eq!(
            verify(&spec, b"wrong", &record, &pepper).unwrap(),
            VerificationOutcome::Reject
        );
    }

    #[test]
    fn verify_version_mismatch() {
        let spec = fb_test_chain();
        let record = CredentialRecord {
            username: "eve".into(),
            version: "other".into(),
            salts: SaltSet::zero(),
            stored_value: vec![0; 32],
        };
        assert!(matches!(
            verify(&spec, b"x", &record, &Pepper::zero()),
            Err(ChainError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn salt_and_pepper_sensitivity() {
        let spec = fb_test_chain();
        let base = evaluate_chain(&spec, b"pw", &SaltSet::zero(), &Pepper::zero()).unwrap();

        let mut salts = SaltSet::zero();
        salts.sha1_salt[3] ^= 1;
        let t = evaluate_chain(&spec, b"pw", &salts, &Pepper::zero()).unwrap();
        assert_ne!(t.value(), base.value());

        let mut salts = SaltSet::zero();
        salts.scrypt_salt[31] ^= 0x80;
        let t = evaluate_chain(&spec, b"pw", &salts, &Pepper::zero()).unwrap();
        assert_ne!(t.value(), base.value());

        let t = evaluate_chain(&spec, b"pw", &SaltSet::zero(), &Pepper::new([1; 32])).unwrap();
        assert_ne!(t.value(), base.value());
    }

    #[test]
    fn empty_stage_list_rejected() {
        assert!(matches!(
            ChainSpec::new("x", vec![]),
            Err(ChainError::InvalidSpec(_))
        ));
    }

    #[test]
    fn registry_lookup() {
        let registry = ChainRegistry::builtin();
        assert_eq!(registry.get("fb2014").unwrap().version(), "fb2014");
        assert_eq!(registry.get("sha256-v1").unwrap().stages().len(), 1);
        assert!(registry.get("nope").is_none());
        assert_eq!(registry.default_spec().version(), "fb2014");
    }
}
