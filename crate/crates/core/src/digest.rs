//! Content digests shared by identifiers, fixture keys and the stage cache.

use sha2::{Digest, Sha256};

/// Field separator used when hashing multi-part records.
const UNIT_SEP: u8 = 0x1f;

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Digest of an ordered list of fields, unambiguous for fields that do not
/// contain the unit separator.
pub fn digest_fields<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut hasher = Sha256::new();
    for (i, field) in fields.into_iter().enumerate() {
        if i > 0 {
            hasher.update([UNIT_SEP]);
        }
        hasher.update(field.as_ref().as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Short identifier: a prefix plus the first 16 hex digits of the digest.
pub fn short_id(prefix: &str, digest: &str) -> String {
    format!("{prefix}{}", &digest[..16])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_sha256() {
        assert_eq!(
            sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn field_boundaries_matter() {
        assert_ne!(digest_fields(["ab", "c"]), digest_fields(["a", "bc"]));
    }
}
