//! Hash and KDF primitives with bit-exact, test-vector-pinned contracts.
//!
//! MD5 and SHA-1 are here because the chains this crate models still depend on
//! them. They are marked legacy (see [`HashAlgorithm::is_legacy`]) and the
//! analyzer flags every stage that uses one.

mod hmac;
mod md5;
mod sha1;
mod scrypt;

use sha2::Digest as _;
use thiserror::Error;

/// Algorithms whose use in a chain triggers compliance findings.
pub const LEGACY_ALGORITHMS: &[HashAlgorithm] = &[HashAlgorithm::Md5, HashAlgorithm::Sha1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashAlgorithm {
    Md5,
    Sha1,
    Sha256,
}

impl HashAlgorithm {
    /// Digest width in octets.
    pub fn digest_len(self) -> usize {
        match self {
            HashAlgorithm::Md5 => 16,
            HashAlgorithm::Sha1 => 20,
            HashAlgorithm::Sha256 => 32,
        }
    }

    pub fn is_legacy(self) -> bool {
        LEGACY_ALGORITHMS.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            HashAlgorithm::Md5 => "md5",
            HashAlgorithm::Sha1 => "sha1",
            HashAlgorithm::Sha256 => "sha256",
        }
    }
}

/// A fixed-width hash output tagged with its algorithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digest {
    algorithm: HashAlgorithm,
    bytes: Vec<u8>,
}

impl Digest {
    fn new(algorithm: HashAlgorithm, bytes: Vec<u8>) -> Self {
        debug_assert_eq!(bytes.len(), algorithm.digest_len());
        Digest { algorithm, bytes }
    }

    pub fn algorithm(&self) -> HashAlgorithm {
        self.algorithm
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Canonical rendering: lowercase hex, no prefix, zero-padded.
    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }
}

pub fn md5(message: &[u8]) -> Digest {
    Digest::new(HashAlgorithm::Md5, md5::digest(message).to_vec())
}

pub fn sha1(message: &[u8]) -> Digest {
    Digest::new(HashAlgorithm::Sha1, sha1::digest(message).to_vec())
}

pub fn sha256(message: &[u8]) -> Digest {
    Digest::new(HashAlgorithm::Sha256, sha2::Sha256::digest(message).to_vec())
}

pub fn hmac_sha256(key: &[u8], message: &[u8]) -> Digest {
    Digest::new(HashAlgorithm::Sha256, hmac::hmac_sha256(key, message).to_vec())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScryptParamError {
    #[error("cost parameter n must be a power of two greater than 1, got {0}")]
    InvalidCost(u64),
    #[error("block size r must be at least 1")]
    InvalidBlockSize,
    #[error("parallelization p must be at least 1")]
    InvalidParallelization,
    #[error("r * p must be below 2^30, got {0}")]
    ProductTooLarge(u64),
    #[error("derived key length must be at least 16 octets, got {0}")]
    DerivedKeyTooShort(usize),
}

/// Validated scrypt cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScryptParams {
    n: u64,
    r: u32,
    p: u32,
    dk_len: usize,
}

impl ScryptParams {
    pub fn new(n: u64, r: u32, p: u32, dk_len: usize) -> Result<Self, ScryptParamError> {
        if n <= 1 || !n.is_power_of_two() {
            return Err(ScryptParamError::InvalidCost(n));
        }
        if r == 0 {
            return Err(ScryptParamError::InvalidBlockSize);
        }
        if p == 0 {
            return Err(ScryptParamError::InvalidParallelization);
        }
        let product = r as u64 * p as u64;
        if product >= 1 << 30 {
            return Err(ScryptParamError::ProductTooLarge(product));
        }
        if dk_len < 16 {
            return Err(ScryptParamError::DerivedKeyTooShort(dk_len));
        }
        Ok(ScryptParams { n, r, p, dk_len })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn dk_len(&self) -> usize {
        self.dk_len
    }
}

/// Derive `params.dk_len()` octets from `password` and `salt`.
pub fn scrypt_kdf(password: &[u8], salt: &[u8], params: &ScryptParams) -> Vec<u8> {
    scrypt::scrypt(password, salt, params.n, params.r, params.p, params.dk_len)
}
