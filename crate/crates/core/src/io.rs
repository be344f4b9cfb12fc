//! Hashing and text-artifact helpers.
//!
//! All floating-point values in CSV artifacts are written with Rust's
//! shortest round-trip formatting, which is deterministic across thread
//! counts and platforms.

/// FNV-1a 64-bit content hash (identification only, not cryptographic).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hash of an arbitrary string, hex-encoded.
pub fn content_hash_hex(s: &str) -> String {
    format!("{:016x}", fnv1a64(s.as_bytes()))
}

/// Build a CSV table from a header and rows of already formatted cells.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // Standard FNV-1a test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn csv_shape() {
        let t = csv_table(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(t, "a,b\n1,2\n");
    }
}
