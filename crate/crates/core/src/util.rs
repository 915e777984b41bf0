//! Small hashing helpers for deterministic seeding and content fingerprints.

/// 64-bit FNV-1a over a byte stream.
pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Hex fingerprint of a token list, used to tie model files to a vocabulary.
pub fn vocab_fingerprint<S: AsRef<str>>(tokens: &[S]) -> String {
    let h = fnv1a64(
        tokens
            .iter()
            .flat_map(|t| t.as_ref().bytes().chain(std::iter::once(0u8))),
    );
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(*b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(*b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn fingerprint_separates_token_boundaries() {
        assert_ne!(vocab_fingerprint(&["ab", "c"]), vocab_fingerprint(&["a", "bc"]));
    }
}
