//! Small shared utilities: deterministic seed derivation, stable hashing and
//! the 9-significant-digit decimal formatting used by every CSV writer.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function. Used to derive independent seed streams from a
/// single run seed; statistically well-mixed and stable across platforms.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(seed, tag)`. Different tags give uncorrelated
/// streams; the same pair always gives the same child.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Constructs the crate's deterministic RNG for a `(seed, tag)` pair.
pub fn seeded_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, tag))
}

/// FNV-1a 64-bit hash; used for architecture-spec hashes, map hashes and
/// config fingerprints (stable, dependency-free, not cryptographic).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Formats a float with 9 significant decimal digits, the shortest width that
/// round-trips every `f32` exactly. Integral values keep a trailing `.0` so
/// the column type stays self-describing.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0.0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let formatted = format!("{:.*e}", 8, v);
    // Re-expand from scientific notation into plain decimal when the exponent
    // is small; keeps CSVs human-readable without losing digits.
    let (mantissa, exp) = formatted.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("numeric exponent");
    if (-4..9).contains(&exp) {
        let digits = 8 - exp;
        let s = format!("{:.*}", digits.max(0) as usize, v);
        trim_trailing_zeros(&s)
    } else {
        let m = trim_trailing_zeros(mantissa);
        format!("{m}e{exp}")
    }
}

fn trim_trailing_zeros(s: &str) -> String {
    if !s.contains('.') {
        return format!("{s}.0");
    }
    let t = s.trim_end_matches('0');
    let t = if t.ends_with('.') { &s[..t.len() + 1] } else { t };
    t.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix64_known_vectors() {
        // Reference outputs of the canonical SplitMix64 for states 0, 1, 2.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(1), 0x910a_2dec_8902_5cc1);
        assert_eq!(splitmix64(2), 0x9758_35de_1c97_56ce);
    }

    #[test]
    fn mix_seed_separates_tags() {
        let a = mix_seed(7, 0);
        let b = mix_seed(7, 1);
        let c = mix_seed(8, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mix_seed(7, 0));
    }

    #[test]
    fn fnv1a64_known_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn format_sig9_round_trips_f32() {
        let vals = [
            0.0f32,
            1.0,
            -1.0,
            0.1,
            1.0 / 3.0,
            1234.5678,
            -0.000123456,
            3.4e38,
            1.1754944e-38,
            16_777_216.0,
            0.99,
        ];
        for &v in &vals {
            let s = format_sig9(v as f64);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back as f32, v, "{v} formatted as {s}");
        }
    }

    #[test]
    fn format_sig9_plain_decimal_for_moderate_magnitudes() {
        assert_eq!(format_sig9(1.0), "1.0");
        assert_eq!(format_sig9(-2.5), "-2.5");
        assert_eq!(format_sig9(0.99), "0.99");
        assert_eq!(format_sig9(12345.0), "12345.0");
        assert_eq!(format_sig9(0.0), "0.0");
    }

    #[test]
    fn format_sig9_scientific_for_extremes() {
        let s = format_sig9(3.0e38);
        assert!(s.contains('e'), "{s}");
        let back: f64 = s.parse().unwrap();
        assert_eq!(back as f32, 3.0e38f32);
    }

    #[test]
    fn seeded_rng_reproducible() {
        use rand::RngCore;
        let mut a = seeded_rng(42, 3);
        let mut b = seeded_rng(42, 3);
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
