//! Durable credential storage: one UTF-8 text file, one PHC-style record line
//! per user, atomic whole-file rewrites (write temp, fsync, rename).
//!
//! Only the final chain value and the public salts are ever written; no
//! plaintext, no intermediate digests, no pepper.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::os::fd::AsRawFd;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;

use crate::chain::{
    evaluate_chain, verify, ChainError, ChainRegistry, ChainSpec, Pepper, SaltSet,
    VerificationOutcome, MAX_PASSWORD_LEN,
};

pub const STORE_HEADER: &str = "#onionstore v1";
pub const PEPPER_ENV_VAR: &str = "ONIONHASH_PEPPER";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredentialRecord {
    pub username: String,
    pub version: String,
    pub salts: SaltSet,
    pub stored_value: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("malformed line at byte {position}: {reason}")]
    MalformedLine { position: usize, reason: String },
    #[error("duplicate username {0:?}")]
    DuplicateUsername(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("chain error: {0}")]
    Chain(#[from] ChainError),
    #[error("store I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

fn validate_username(username: &str) -> Result<(), StoreError> {
    if username.is_empty() || username.len() > 64 {
        return Err(StoreError::InvalidRecord(format!(
            "username must be 1-64 octets, got {}",
            username.len()
        )));
    }
    if username.contains([':', '\n', '\r']) {
        return Err(StoreError::InvalidRecord(
            "username must not contain ':' or newline".into(),
        ));
    }
    if username.trim() != username {
        return Err(StoreError::InvalidRecord(
            "username must not start or end with whitespace".into(),
        ));
    }
    Ok(())
}

/// Render one record as
/// `username:$onion$<version>$s1=<b64>,s2=<b64>$<b64(value)>`.
pub fn serialize_record(record: &CredentialRecord) -> Result<String, StoreError> {
    validate_username(&record.username)?;
    if record.version.is_empty() || record.version.contains(['$', ':', '\n']) {
        return Err(StoreError::InvalidRecord(format!(
            "invalid version string {:?}",
            record.version
        )));
    }
    if record.stored_value.is_empty() || record.stored_value.len() > 64 {
        return Err(StoreError::InvalidRecord(format!(
            "stored value must be 1-64 octets, got {}",
            record.stored_value.len()
        )));
    }
    Ok(format!(
        "{}:$onion${}$s1={},s2={}${}",
        record.username,
        record.version,
        BASE64.encode(record.salts.sha1_salt),
        BASE64.encode(record.salts.scrypt_salt),
        BASE64.encode(&record.stored_value),
    ))
}

fn malformed(line: &str, field: &str, reason: impl Into<String>) -> StoreError {
    // position = byte offset of the failing field within the line
    let position = line.find(field).unwrap_or(0);
    StoreError::MalformedLine {
        position,
        reason: reason.into(),
    }
}

/// Strict inverse of [`serialize_record`]. Unknown version strings parse
/// fine (forward-compat listing); they only fail later, at verification.
pub fn parse_record(line: &str) -> Result<CredentialRecord, StoreError> {
    let colon = line.find(':').ok_or(StoreError::MalformedLine {
        position: 0,
        reason: "missing ':' after username".into(),
    })?;
    let username = &line[..colon];
    validate_username(username).map_err(|e| StoreError::MalformedLine {
        position: 0,
        reason: e.to_string(),
    })?;

    let rest = &line[colon + 1..];
    let fields: Vec<&str> = rest.split('$').collect();
    if fields.len() != 5 || !fields[0].is_empty() || fields[1] != "onion" {
        return Err(StoreError::MalformedLine {
            position: colon + 1,
            reason: "expected `$onion$<version>$<salts>$<value>`".into(),
        });
    }
    let version = fields[2];
    if version.is_empty() {
        return Err(malformed(line, "$$", "empty version field"));
    }

    let salts_field = fields[3];
    let (s1_part, s2_part) = salts_field
        .split_once(',')
        .ok_or_else(|| malformed(line, salts_field, "expected `s1=..,s2=..`"))?;
    let s1_b64 = s1_part
        .strip_prefix("s1=")
        .ok_or_else(|| malformed(line, s1_part, "salt field must start with `s1=`"))?;
    let s2_b64 = s2_part
        .strip_prefix("s2=")
        .ok_or_else(|| malformed(line, s2_part, "salt field must start with `s2=`"))?;

    let sha1_salt: [u8; 20] = BASE64
        .decode(s1_b64)
        .map_err(|e| malformed(line, s1_b64, format!("bad base64 in s1: {e}")))?
        .try_into()
        .map_err(|v: Vec<u8>| malformed(line, s1_b64, format!("s1 salt is {} octets, want 20", v.len())))?;
    let scrypt_salt: [u8; 32] = BASE64
        .decode(s2_b64)
        .map_err(|e| malformed(line, s2_b64, format!("bad base64 in s2: {e}")))?
        .try_into()
        .map_err(|v: Vec<u8>| malformed(line, s2_b64, format!("s2 salt is {} octets, want 32", v.len())))?;

    let stored_value = BASE64
        .decode(fields[4])
        .map_err(|e| malformed(line, fields[4], format!("bad base64 in value: {e}")))?;
    if stored_value.is_empty() || stored_value.len() > 64 {
        return Err(malformed(
            line,
            fields[4],
            format!("stored value is {} octets, want 1-64", stored_value.len()),
        ));
    }

    let record = CredentialRecord {
        username: username.to_string(),
        version: version.to_string(),
        salts: SaltSet {
            sha1_salt,
            scrypt_salt,
        },
        stored_value,
    };

    // strictness: the line must be the canonical rendering, octet for octet
    // (rejects stray whitespace, case variants, non-canonical base64)
    let canonical = serialize_record(&record).map_err(|e| StoreError::MalformedLine {
        position: 0,
        reason: e.to_string(),
    })?;
    if canonical != line {
        return Err(StoreError::MalformedLine {
            position: 0,
            reason: "line is not in canonical record form".into(),
        });
    }
    Ok(record)
}

/// Where fresh salts come from. `FixedZero` exists only for golden tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaltSource {
    Random,
    FixedZero,
}

impl SaltSource {
    pub fn next(self) -> SaltSet {
        match self {
            SaltSource::Random => SaltSet::generate(),
            SaltSource::FixedZero => SaltSet::zero(),
        }
    }
}

/// Single-file credential store. Writers take an advisory `flock` on a
/// sidecar lock file; readers go lockless (rename keeps the file consistent).
#[derive(Debug)]
pub struct Store {
    path: PathBuf,
    records: Vec<CredentialRecord>,
    // held for the store's lifetime when opened writable
    _writer_lock: Option<File>,
}

fn acquire_writer_lock(store_path: &Path) -> Result<File, StoreError> {
    let lock_path = store_path.with_extension("lock");
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&lock_path)?;
    let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX) };
    if rc != 0 {
        return Err(StoreError::Io(std::io::Error::last_os_error()));
    }
    Ok(file)
}

impl Store {
    /// Create a new empty store file. Fails if the file already exists.
    pub fn create(path: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let path = path.into();
        if path.exists() {
            return Err(StoreError::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} already exists", path.display()),
            )));
        }
        let lock = acquire_writer_lock(&path)?;
        let store = Store {
            path,
            records: Vec::new(),
            _writer_lock: Some(lock),
        };
        store.save()?;
        Ok(store)
    }

    /// Open an existing store for reading only.
    pub fn open_read(path: impl Into<PathBuf>) -> Result<Store, StoreError> {
        Store::open(path, false)
    }

    /// Open an existing store for reading and writing (takes the writer
    /// lock, blocking until it is free).
    pub fn open_rw(path: impl Into<PathBuf>) -> Result<Store, StoreError> {
        Store::open(path, true)
    }

    fn open(path: impl Into<PathBuf>, writable: bool) -> Result<Store, StoreError> {
        let path = path.into();
        let lock = if writable {
            Some(acquire_writer_lock(&path)?)
        } else {
            None
        };
        let text = fs::read_to_string(&path)?;
        let mut lines = text.lines();
        if lines.next() != Some(STORE_HEADER) {
            return Err(StoreError::MalformedLine {
                position: 0,
                reason: format!("missing `{STORE_HEADER}` header"),
            });
        }
        let mut records = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let record = parse_record(line)?;
            if records
                .iter()
                .any(|r: &CredentialRecord| r.username == record.username)
            {
                return Err(StoreError::DuplicateUsername(record.username));
            }
            records.push(record);
        }
        Ok(Store {
            path,
            records,
            _writer_lock: lock,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> &[CredentialRecord] {
        &self.records
    }

    pub fn get(&self, username: &str) -> Option<&CredentialRecord> {
        self.records.iter().find(|r| r.username == username)
    }

    pub fn serialize(&self) -> Result<String, StoreError> {
        let mut out = String::from(STORE_HEADER);
        out.push('\n');
        for record in &self.records {
            out.push_str(&serialize_record(record)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Persist atomically: write a temp file in the same directory, fsync,
    /// rename over the store, fsync the directory. A crashed writer leaves
    /// the previous store intact.
    pub fn save(&self) -> Result<(), StoreError> {
        let contents = self.serialize()?;
        let dir = self.path.parent().unwrap_or_else(|| Path::new("."));
        let tmp_path = dir.join(format!(
            ".{}.{}.tmp",
            self.path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            std::process::id()
        ));
        {
            let mut tmp = File::create(&tmp_path)?;
            tmp.write_all(contents.as_bytes())?;
            tmp.sync_all()?;
        }
        fs::rename(&tmp_path, &self.path)?;
        if let Ok(dir_handle) = File::open(dir) {
            let _ = dir_handle.sync_all();
        }
        Ok(())
    }

    /// Insert a pre-built record without persisting; callers must `save`.
    /// Used by migration imports to batch writes.
    pub fn add_record(&mut self, record: CredentialRecord) -> Result<(), StoreError> {
        if self.get(&record.username).is_some() {
            return Err(StoreError::DuplicateUsername(record.username));
        }
        self.records.push(record);
        Ok(())
    }

    pub(crate) fn replace_record(&mut self, record: CredentialRecord) -> Result<(), StoreError> {
        let slot = self
            .records
            .iter_mut()
            .find(|r| r.username == record.username)
            .ok_or_else(|| StoreError::UnknownUser(record.username.clone()))?;
        *slot = record;
        Ok(())
    }

    /// Register a new account: fresh salts, full chain evaluation, durable
    /// append before returning.
    pub fn create_account(
        &mut self,
        username: &str,
        password: &[u8],
        spec: &ChainSpec,
        pepper: &Pepper,
        salt_source: SaltSource,
    ) -> Result<&CredentialRecord, StoreError> {
        validate_username(username)?;
        if self.get(username).is_some() {
            return Err(StoreError::DuplicateUsername(username.to_string()));
        }
        if password.len() > MAX_PASSWORD_LEN {
            return Err(StoreError::Chain(ChainError::PasswordTooLong));
        }
        let salts = salt_source.next();
        let trace = evaluate_chain(spec, password, &salts, pepper)?;
        let record = CredentialRecord {
            username: username.to_string(),
            version: spec.version().to_string(),
            salts,
            stored_value: trace.value().to_vec(),
        };
        self.records.push(record);
        self.save()?;
        Ok(self.records.last().unwrap())
    }

    /// Check a candidate password. Unknown usernames still pay for one chain
    /// evaluation against a dummy record so the timing does not leak whether
    /// the user exists.
    pub fn authenticate(
        &self,
        username: &str,
        candidate: &[u8],
        registry: &ChainRegistry,
        pepper: &Pepper,
    ) -> Result<VerificationOutcome, StoreError> {
        match self.get(username) {
            Some(record) => {
                let spec = match registry.get(&record.version) {
                    Some(spec) => spec,
                    // record from an unregistered chain generation: listable
                    // but not verifiable
                    None => return Ok(VerificationOutcome::Reject),
                };
                Ok(verify(spec, candidate, record, pepper)?)
            }
            None => {
                let spec = registry.default_spec();
                let dummy = CredentialRecord {
                    username: String::new(),
                    version: spec.version().to_string(),
                    salts: SaltSet::zero(),
                    stored_value: vec![0; spec.output_len()],
                };
                let _ = verify(spec, candidate, &dummy, pepper)?;
                Ok(VerificationOutcome::Reject)
            }
        }
    }

    /// Rotate salts and set a new password; the old value is gone from the
    /// store once this returns.
    pub fn set_password(
        &mut self,
        username: &str,
        new_password: &[u8],
        spec: &ChainSpec,
        pepper: &Pepper,
        salt_source: SaltSource,
    ) -> Result<&CredentialRecord, StoreError> {
        if new_password.len() > MAX_PASSWORD_LEN {
            return Err(StoreError::Chain(ChainError::PasswordTooLong));
        }
        let salts = salt_source.next();
        let trace = evaluate_chain(spec, new_password, &salts, pepper)?;
        let slot = self
            .records
            .iter_mut()
            .find(|r| r.username == username)
            .ok_or_else(|| StoreError::UnknownUser(username.to_string()))?;
        slot.version = spec.version().to_string();
        slot.salts = salts;
        slot.stored_value = trace.value().to_vec();
        self.save()?;
        Ok(self.get(username).unwrap())
    }
}

/// Read the service pepper from `ONIONHASH_PEPPER` (64 hex chars).
pub fn pepper_from_env() -> Result<Pepper, StoreError> {
    let raw = std::env::var(PEPPER_ENV_VAR).map_err(|_| {
        StoreError::InvalidRecord(format!("{PEPPER_ENV_VAR} is not set"))
    })?;
    Pepper::from_hex(raw.trim()).ok_or_else(|| {
        StoreError::InvalidRecord(format!("{PEPPER_ENV_VAR} must be 64 hex characters"))
    })
}
