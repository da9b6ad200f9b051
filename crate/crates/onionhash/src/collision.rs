//! The published MD5-colliding string pair used by the demo and the test
//! suites (Marc Stevens' TEXTCOLL pair, 2024). The two strings differ in a
//! single character yet share one MD5 digest.

/// First string of the colliding pair.
pub const STRING_A: &[u8] =
    b"TEXTCOLLBYfGiJUETHQ4hEcKSMd5zYpgqf1YRDhkmxHkhPWptrkoyz28wnI9V0aHeAuaKnak";

/// Second string of the colliding pair.
pub const STRING_B: &[u8] =
    b"TEXTCOLLBYfGiJUETHQ4hAcKSMd5zYpgqf1YRDhkmxHkhPWptrkoyz28wnI9V0aHeAuaKnak";

/// The shared MD5 digest of both strings, lowercase hex.
pub const SHARED_MD5_HEX: &str = "faad49866e9498fc1719f5289e7a0269";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{md5, sha1, sha256};

    #[test]
    fn pair_collides_under_md5() {
        assert_ne!(STRING_A, STRING_B);
        assert_eq!(md5(STRING_A).to_hex(), SHARED_MD5_HEX);
        assert_eq!(md5(STRING_B).to_hex(), SHARED_MD5_HEX);
    }

    #[test]
    fn pair_does_not_collide_under_sha1_or_sha256() {
        assert_eq!(
            sha1(STRING_A).to_hex(),
            "0a2263592a75484e1b888530b25d4ee1a847aa6c"
        );
        assert_eq!(
            sha1(STRING_B).to_hex(),
            "819293a9def038dedb582f465c1026a33cc8a9e9"
        );
        assert_eq!(
            sha256(STRING_A).to_hex(),
            "173fb01b24b000789aae6a599193908745b0a031810453a464367c68baa6d333"
        );
        assert_eq!(
            sha256(STRING_B).to_hex(),
            "cccc5da79fdfb699b8cdf1d79a8d7814fe46e06bde4f201628423495f6e2d195"
        );
    }
}
