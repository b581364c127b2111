//! 4-wise independent polynomial hashing over the Mersenne prime 2^61 - 1.
//!
//! Each sketch row carries two degree-3 polynomial hashes: one mapping a
//! coordinate to a bucket, one to a sign in {-1, +1}. Coefficients are derived
//! deterministically from `(seed, row, role)`, so two sketches built from the
//! same config share the exact same hash family.

use crate::rng::mix64;

pub(crate) const MERSENNE_P: u64 = (1 << 61) - 1;

/// Reduces a value `< 2^122` modulo 2^61 - 1 using the Mersenne fold.
#[inline]
fn mod_p(x: u128) -> u64 {
    let folded = (x & u128::from(MERSENNE_P)) + (x >> 61);
    let folded = (folded & u128::from(MERSENNE_P)) + (folded >> 61);
    let mut r = folded as u64;
    if r >= MERSENNE_P {
        r -= MERSENNE_P;
    }
    r
}

/// Evaluates a degree-3 polynomial mod p by Horner's rule.
#[inline]
fn poly_eval(coeffs: &[u64; 4], x: u64) -> u64 {
    let x = u128::from(x % MERSENNE_P);
    let mut acc = u128::from(coeffs[3]);
    for k in (0..3).rev() {
        acc = u128::from(mod_p(acc * x)) + u128::from(coeffs[k]);
    }
    mod_p(acc)
}

const ROLE_BUCKET: u64 = 0;
const ROLE_SIGN: u64 = 1;

fn derive_coeff(seed: u64, row: u64, role: u64, k: u64) -> u64 {
    let mut h = mix64(seed ^ 0xD6E8_FEB8_6659_FD93);
    h = mix64(h ^ (row.wrapping_add(1)).wrapping_mul(0xA24B_AED4_963E_E407));
    h = mix64(h ^ (role.wrapping_add(1)).wrapping_mul(0x9FB2_1C65_1E98_DF25));
    h = mix64(h ^ (k.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    h % MERSENNE_P
}

/// The bucket and sign hash pair for one sketch row.
#[derive(Clone, Debug)]
pub(crate) struct RowHasher {
    bucket_coeffs: [u64; 4],
    sign_coeffs: [u64; 4],
    cols: u64,
}

impl RowHasher {
    #[inline]
    pub fn bucket(&self, coord: usize) -> usize {
        (poly_eval(&self.bucket_coeffs, coord as u64) % self.cols) as usize
    }

    #[inline]
    pub fn sign(&self, coord: usize) -> f64 {
        if poly_eval(&self.sign_coeffs, coord as u64) & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Derives the full per-row hash family for a sketch of `rows` x `cols`.
pub(crate) fn derive_rows(seed: u64, rows: usize, cols: usize) -> Vec<RowHasher> {
    (0..rows)
        .map(|r| {
            let mut bucket_coeffs = [0u64; 4];
            let mut sign_coeffs = [0u64; 4];
            for k in 0..4 {
                bucket_coeffs[k] = derive_coeff(seed, r as u64, ROLE_BUCKET, k as u64);
                sign_coeffs[k] = derive_coeff(seed, r as u64, ROLE_SIGN, k as u64);
            }
            RowHasher {
                bucket_coeffs,
                sign_coeffs,
                cols: cols as u64,
            }
        })
        .collect()
}
