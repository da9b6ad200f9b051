//! Migration-in-place: wrap a stored legacy MD5 digest into a longer chain
//! without ever seeing the plaintext, by entering the pipeline at stage 2
//! with the legacy digest standing in for `md5(pw)`.

use thiserror::Error;

use crate::chain::{evaluate_from, ChainError, ChainSpec, Pepper, SaltSet, StageKind};
use crate::credstore::{CredentialRecord, SaltSource, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegacyKind {
    Md5Hex,
}

/// One row of a legacy credential table: `username:md5hex`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegacyRecord {
    pub username: String,
    pub legacy_kind: LegacyKind,
    pub legacy_value: String,
}

impl LegacyRecord {
    /// Parse one line of the legacy import format (`username:md5hex`).
    pub fn parse(line: &str) -> Result<LegacyRecord, MigrationError> {
        let (username, value) = line
            .split_once(':')
            .ok_or_else(|| MigrationError::MalformedLine(line.to_string()))?;
        if username.is_empty() || username.len() > 64 {
            return Err(MigrationError::MalformedLine(line.to_string()));
        }
        let record = LegacyRecord {
            username: username.to_string(),
            legacy_kind: LegacyKind::Md5Hex,
            legacy_value: value.to_string(),
        };
        record.decode_value()?;
        Ok(record)
    }

    fn decode_value(&self) -> Result<[u8; 16], MigrationError> {
        if self.legacy_value.len() != 32
            || !self
                .legacy_value
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        {
            return Err(MigrationError::MalformedHex(self.legacy_value.clone()));
        }
        let bytes = hex::decode(&self.legacy_value)
            .map_err(|_| MigrationError::MalformedHex(self.legacy_value.clone()))?;
        Ok(bytes.try_into().unwrap())
    }
}

#[derive(Debug, Error)]
pub enum MigrationError {
    #[error("legacy value is not 32 lowercase hex chars: {0:?}")]
    MalformedHex(String),
    #[error("malformed legacy line: {0:?}")]
    MalformedLine(String),
    #[error("target chain cannot wrap MD5 digests: first stage is {0}, not md5")]
    IncompatibleSpec(String),
    #[error("store holds record {username:?} with unexpected version {version:?}")]
    IncompatibleVersions { username: String, version: String },
    #[error("chain error: {0}")]
    Chain(#[from] ChainError),
    #[error("store error: {0}")]
    Store(#[from] StoreError),
}

/// Wrap a legacy MD5 record into `spec` with the given salts. The resulting
/// `stored_value` equals the full-chain evaluation of any plaintext whose
/// MD5 is `legacy_value`.
pub fn wrap_legacy(
    legacy: &LegacyRecord,
    salts: &SaltSet,
    pepper: &Pepper,
    spec: &ChainSpec,
) -> Result<CredentialRecord, MigrationError> {
    match spec.stages().first().map(|s| &s.kind) {
        Some(StageKind::Md5Plain) => {}
        Some(other) => return Err(MigrationError::IncompatibleSpec(other.name().to_string())),
        None => return Err(MigrationError::IncompatibleSpec("<empty>".to_string())),
    }
    let digest = legacy.decode_value()?;
    let trace = evaluate_from(spec, 1, &digest, salts, pepper)?;
    Ok(CredentialRecord {
        username: legacy.username.clone(),
        version: spec.version().to_string(),
        salts: *salts,
        stored_value: trace.value().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MigrationReport {
    pub migrated: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Replace every `spec_from` record in the store with a wrapped `spec_to`
/// record under fresh salts. Persists after each record so a crash cannot
/// lose more than the in-flight user, and never touches a record whose wrap
/// fails. Running it twice is a no-op the second time.
pub fn upgrade_store(
    store: &mut Store,
    spec_from: &ChainSpec,
    spec_to: &ChainSpec,
    pepper: &Pepper,
    salt_source: SaltSource,
) -> Result<MigrationReport, MigrationError> {
    let mut report = MigrationReport::default();

    let pending: Vec<(String, String)> = store
        .records()
        .iter()
        .map(|r| (r.username.clone(), r.version.clone()))
        .collect();

    for (username, version) in pending {
        if version == spec_to.version() {
            report.skipped += 1;
            continue;
        }
        if version != spec_from.version() {
            return Err(MigrationError::IncompatibleVersions { username, version });
        }
        let record = store.get(&username).unwrap();
        let legacy = LegacyRecord {
            username: username.clone(),
            legacy_kind: LegacyKind::Md5Hex,
            legacy_value: hex::encode(&record.stored_value),
        };
        match wrap_legacy(&legacy, &salt_source.next(), pepper, spec_to) {
            Ok(wrapped) => {
                store.replace_record(wrapped)?;
                store.save()?;
                report.migrated += 1;
            }
            Err(_) => {
                // original record stays untouched; the user keeps their login
                report.failed += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{evaluate_chain, ChainRegistry, VerificationOutcome};
    use crate::collision;
    use crate::primitives::{md5, ScryptParams};

    fn fb_test_chain() -> ChainSpec {
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

    fn legacy(username: &str, password: &[u8]) -> LegacyRecord {
        LegacyRecord {
            username: username.into(),
            legacy_kind: LegacyKind::Md5Hex,
            legacy_value: md5(password).to_hex(),
        }
    }

    #[test]
    fn wrap_equals_full_evaluation() {
        let spec = fb_test_chain();
        let salts = SaltSet::generate();
        let pepper = Pepper::new([5; 32]);
        let wrapped = wrap_legacy(&legacy("alice", b"abc"), &salts, &pepper, &spec).unwrap();
        let direct = evaluate_chain(&spec, b"abc", &salts, &pepper).unwrap();
        assert_eq!(wrapped.stored_value, direct.value());
    }

    #[test]
    fn wrap_is_deterministic() {
        let spec = fb_test_chain();
        let salts = SaltSet::generate();
        let pepper = Pepper::zero();
        let l = legacy("alice", b"pw");
        assert_eq!(
            wrap_legacy(&l, &salts, &pepper, &spec).unwrap(),
            wrap_legacy(&l, &salts, &pepper, &spec).unwrap()
        );
    }

    #[test]
    fn wrap_rejects_bad_hex() {
        let spec = fb_test_chain();
        let bad = LegacyRecord {
            username: "alice".into(),
            legacy_kind: LegacyKind::Md5Hex,
            legacy_value: "z".repeat(32),
        };
        assert!(matches!(
            wrap_legacy(&bad, &SaltSet::zero(), &Pepper::zero(), &spec),
            Err(MigrationError::MalformedHex(_))
        ));
        let upper = LegacyRecord {
            legacy_value: md5(b"abc").to_hex().to_uppercase(),
            ..bad
        };
        assert!(wrap_legacy(&upper, &SaltSet::zero(), &Pepper::zero(), &spec).is_err());
    }

    #[test]
    fn wrap_rejects_chain_not_starting_with_md5() {
        let spec = ChainSpec::sha256_v1();
        assert!(matches!(
            wrap_legacy(&legacy("a", b"pw"), &SaltSet::zero(), &Pepper::zero(), &spec),
            Err(MigrationError::IncompatibleSpec(_))
        ));
    }

    #[test]
    fn legacy_line_parsing() {
        let line = format!("alice:{}", md5(b"pw").to_hex());
        let record = LegacyRecord::parse(&line).unwrap();
        assert_eq!(record.username, "alice");
        assert!(LegacyRecord::parse("no-colon-here").is_err());
        assert!(LegacyRecord::parse(":missinguser").is_err());
        assert!(LegacyRecord::parse("alice:zzzz").is_err());
    }

    #[test]
    fn upgrade_store_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store");
        let from = ChainSpec::md5_v0();
        let to = fb_test_chain();
        let pepper = Pepper::new([2; 32]);
        let users: &[(&str, &[u8])] = &[
            ("alice", b"password1"),
            ("bob", collision::STRING_A),
            ("carol", b""),
        ];

        let mut store = Store::create(&path).unwrap();
        for (name, pw) in users {
            store
                .create_account(name, pw, &from, &pepper, SaltSource::Random)
                .unwrap();
        }

        let report =
            upgrade_store(&mut store, &from, &to, &pepper, SaltSource::Random).unwrap();
        assert_eq!(
            report,
            MigrationReport {
                migrated: 3,
                skipped: 0,
                failed: 0
            }
        );

        // original passwords still authenticate after migration
        let registry = ChainRegistry::single(to.clone());
        for (name, pw) in users {
            assert_eq!(
                store.authenticate(name, pw, &registry, &pepper).unwrap(),
                VerificationOutcome::Accept
            );
        }
        // the MD5-colliding sibling survives migration
        assert_eq!(
            store
                .authenticate("bob", collision::STRING_B, &registry, &pepper)
                .unwrap(),
            VerificationOutcome::Accept
        );

        // idempotence
        let report =
            upgrade_store(&mut store, &from, &to, &pepper, SaltSource::Random).unwrap();
        assert_eq!(
            report,
            MigrationReport {
                migrated: 0,
                skipped: 3,
                failed: 0
            }
        );
    }

    #[test]
    fn upgrade_empty_store() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::create(dir.path().join("store")).unwrap();
        let report = upgrade_store(
            &mut store,
            &ChainSpec::md5_v0(),
            &fb_test_chain(),
            &Pepper::zero(),
            SaltSource::Random,
        )
        .unwrap();
        assert_eq!(report, MigrationReport::default());
    }

    #[test]
    fn upgrade_rejects_foreign_versions() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::create(dir.path().join("store")).unwrap();
        store
            .create_account(
                "dana",
                b"pw",
                &ChainSpec::sha256_v1(),
                &Pepper::zero(),
                SaltSource::Random,
            )
            .unwrap();
        assert!(matches!(
            upgrade_store(
                &mut store,
                &ChainSpec::md5_v0(),
                &fb_test_chain(),
                &Pepper::zero(),
                SaltSource::Random,
            ),
            Err(MigrationError::IncompatibleVersions { .. })
        ));
    }
}
