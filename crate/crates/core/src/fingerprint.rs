use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`, truncated to 16 characters.
pub fn short_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Full hex-encoded SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
