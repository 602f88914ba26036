//! Reed–Solomon coding over GF(256) with generator roots α^0 .. α^(n-1).
//!
//! Codewords are laid out data first, parity last, highest-degree
//! coefficient first, as in QR symbols.

use super::gf256;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RsError {
    #[error("too many byte errors to correct")]
    TooManyErrors,
    #[error("invalid code length: {len} bytes with {parity_len} parity bytes")]
    InvalidLength { len: usize, parity_len: usize },
}

/// Result of a successful decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsCorrection {
    pub data: Vec<u8>,
    /// Byte positions (into the full codeword) that were changed.
    pub corrected_positions: Vec<usize>,
}

fn generator(parity_len: usize) -> Vec<u8> {
    // highest degree first, monic
    let mut g = vec![1u8];
    for i in 0..parity_len {
        let root = gf256::exp(i);
        let mut next = vec![0u8; g.len() + 1];
        for (j, &c) in g.iter().enumerate() {
            next[j] ^= c;
            next[j + 1] ^= gf256::mul(c, root);
        }
        g = next;
    }
    g
}

/// Returns the `parity_len` parity bytes for `data`.
pub fn rs_encode(data: &[u8], parity_len: usize) -> Result<Vec<u8>, RsError> {
    if parity_len == 0 || data.len() + parity_len > 255 {
        return Err(RsError::InvalidLength { len: data.len() + parity_len, parity_len });
    }
    let g = generator(parity_len);
    let mut rem = vec![0u8; parity_len];
    for &b in data {
        let factor = b ^ rem[0];
        rem.rotate_left(1);
        rem[parity_len - 1] = 0;
        for (r, &gc) in rem.iter_mut().zip(&g[1..]) {
            *r ^= gf256::mul(gc, factor);
        }
    }
    Ok(rem)
}

fn syndromes(codeword: &[u8], parity_len: usize) -> Vec<u8> {
    (0..parity_len).map(|j| gf256::poly_eval(codeword, gf256::exp(j))).collect()
}

/// Corrects up to ⌊parity_len/2⌋ byte errors and returns the data part.
pub fn rs_decode(codeword: &[u8], parity_len: usize) -> Result<Vec<u8>, RsError> {
    rs_decode_bounded(codeword, parity_len, parity_len / 2).map(|c| c.data)
}

/// Like [`rs_decode`] but refuses to correct more than `max_errors` bytes.
///
/// Symbologies that reserve parity for misdecode protection pass a bound
/// below ⌊parity_len/2⌋.
pub fn rs_decode_bounded(codeword: &[u8], parity_len: usize, max_errors: usize) -> Result<RsCorrection, RsError> {
    let n = codeword.len();
    if parity_len == 0 || n > 255 || n <= parity_len {
        return Err(RsError::InvalidLength { len: n, parity_len });
    }
    let max_errors = max_errors.min(parity_len / 2);
    let synd = syndromes(codeword, parity_len);
    if synd.iter().all(|&s| s == 0) {
        return Ok(RsCorrection { data: codeword[..n - parity_len].to_vec(), corrected_positions: Vec::new() });
    }
    if max_errors == 0 {
        return Err(RsError::TooManyErrors);
    }

    // Berlekamp–Massey; polynomials stored lowest degree first.
    let mut lambda = vec![1u8];
    let mut prev = vec![1u8];
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut prev_disc = 1u8;
    for step in 0..parity_len {
        let mut disc = synd[step];
        for i in 1..=l.min(lambda.len() - 1) {
            disc ^= gf256::mul(lambda[i], synd[step - i]);
        }
        if disc == 0 {
            shift += 1;
            continue;
        }
        let coef = gf256::div(disc, prev_disc);
        let mut next = lambda.clone();
        if next.len() < prev.len() + shift {
            next.resize(prev.len() + shift, 0);
        }
        for (i, &p) in prev.iter().enumerate() {
            next[i + shift] ^= gf256::mul(coef, p);
        }
        if 2 * l <= step {
            prev = std::mem::replace(&mut lambda, next);
            l = step + 1 - l;
            prev_disc = disc;
            shift = 1;
        } else {
            lambda = next;
            shift += 1;
        }
    }
    while lambda.len() > 1 && *lambda.last().unwrap() == 0 {
        lambda.pop();
    }
    let n_errors = lambda.len() - 1;
    if n_errors == 0 || n_errors != l || n_errors > max_errors {
        return Err(RsError::TooManyErrors);
    }

    // Chien search: byte index i has locator X = α^(n-1-i).
    let eval_low = |poly: &[u8], x: u8| poly.iter().rev().fold(0u8, |acc, &c| gf256::mul(acc, x) ^ c);
    let mut positions = Vec::with_capacity(n_errors);
    for i in 0..n {
        let power = n - 1 - i;
        let x_inv = gf256::exp(255 - power % 255);
        if eval_low(&lambda, x_inv) == 0 {
            positions.push(i);
        }
    }
    if positions.len() != n_errors {
        return Err(RsError::TooManyErrors);
    }

    // Forney with first consecutive root 0: e = X · Ω(X⁻¹) / Λ'(X⁻¹).
    let mut omega = vec![0u8; parity_len];
    for (i, &li) in lambda.iter().enumerate() {
        for (j, &sj) in synd.iter().enumerate() {
            if i + j < parity_len {
                omega[i + j] ^= gf256::mul(li, sj);
            }
        }
    }
    let lambda_deriv: Vec<u8> =
        lambda.iter().enumerate().skip(1).map(|(i, &c)| if i % 2 == 1 { c } else { 0 }).collect();
    let mut corrected = codeword.to_vec();
    for &i in &positions {
        let power = n - 1 - i;
        let x = gf256::exp(power);
        let x_inv = gf256::inv(x);
        let denom = eval_low(&lambda_deriv, x_inv);
        if denom == 0 {
            return Err(RsError::TooManyErrors);
        }
        let magnitude = gf256::mul(x, gf256::div(eval_low(&omega, x_inv), denom));
        corrected[i] ^= magnitude;
    }
    if syndromes(&corrected, parity_len).iter().any(|&s| s != 0) {
        return Err(RsError::TooManyErrors);
    }
    corrected.truncate(n - parity_len);
    Ok(RsCorrection { data: corrected, corrected_positions: positions })
}
