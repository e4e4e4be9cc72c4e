//! Reed–Solomon code of the 10×10 ECC200 symbol: 3 data + 5 check
//! codewords, generator roots α¹..α⁵.
//!
//! Decoding is syndrome based: Berlekamp–Massey for the error locator,
//! Chien search for positions and Forney for values.

use super::gf::{self, alpha_pow, eval_low_first, mul};
use super::{CodecError, DATA_CODEWORDS, ECC_CODEWORDS, TOTAL_CODEWORDS};

/// Generator polynomial, highest degree first (monic).
pub(crate) fn generator() -> [u8; ECC_CODEWORDS + 1] {
    let mut g = [0u8; ECC_CODEWORDS + 1];
    g[0] = 1;
    let mut deg = 0;
    for i in 1..=ECC_CODEWORDS as i32 {
        // multiply by (x + α^i)
        let root = alpha_pow(i);
        g[deg + 1] = 0;
        for j in (1..=deg + 1).rev() {
            g[j] ^= mul(g[j - 1], root);
        }
        deg += 1;
    }
    g
}

pub(crate) fn ecc_for(data: &[u8; DATA_CODEWORDS]) -> [u8; ECC_CODEWORDS] {
    let g = generator();
    let mut rem = [0u8; ECC_CODEWORDS];
    for &d in data {
        let factor = d ^ rem[0];
        rem.rotate_left(1);
        rem[ECC_CODEWORDS - 1] = 0;
        for j in 0..ECC_CODEWORDS {
            rem[j] ^= mul(g[j + 1], factor);
        }
    }
    rem
}

/// Syndromes S₁..S₅ of a codeword whose first byte is the x⁷ coefficient.
pub(crate) fn syndromes(cw: &[u8; TOTAL_CODEWORDS]) -> [u8; ECC_CODEWORDS] {
    let mut s = [0u8; ECC_CODEWORDS];
    for (j, sj) in s.iter_mut().enumerate() {
        let x = alpha_pow(j as i32 + 1);
        *sj = cw.iter().fold(0u8, |acc, &c| mul(acc, x) ^ c);
    }
    s
}

/// Corrects up to two codeword errors in place; returns how many were fixed.
pub(crate) fn correct(cw: &mut [u8; TOTAL_CODEWORDS]) -> Result<usize, CodecError> {
    let s = syndromes(cw);
    if s.iter().all(|&v| v == 0) {
        return Ok(0);
    }

    // Berlekamp–Massey, polynomials lowest degree first.
    let mut lambda = vec![1u8];
    let mut prev = vec![1u8];
    let mut l = 0usize;
    let mut shift = 1usize;
    let mut prev_disc = 1u8;
    for n in 0..ECC_CODEWORDS {
        let mut d = s[n];
        for i in 1..=l.min(lambda.len() - 1) {
            d ^= mul(lambda[i], s[n - i]);
        }
        if d == 0 {
            shift += 1;
            continue;
        }
        let coef = gf::div(d, prev_disc);
        let mut next = lambda.clone();
        if next.len() < prev.len() + shift {
            next.resize(prev.len() + shift, 0);
        }
        for (i, &p) in prev.iter().enumerate() {
            next[i + shift] ^= mul(coef, p);
        }
        if 2 * l <= n {
            l = n + 1 - l;
            prev = lambda;
            prev_disc = d;
            shift = 1;
        } else {
            shift += 1;
        }
        lambda = next;
    }
    while lambda.len() > 1 && *lambda.last().unwrap() == 0 {
        lambda.pop();
    }
    let degree = lambda.len() - 1;
    if degree == 0 || degree != l || degree > ECC_CODEWORDS / 2 {
        return Err(CodecError::Uncorrectable);
    }

    // Chien search over the 8 valid positions; power p is the x^p term.
    let mut powers = Vec::with_capacity(degree);
    for p in 0..TOTAL_CODEWORDS as i32 {
        if eval_low_first(&lambda, alpha_pow(-p)) == 0 {
            powers.push(p);
        }
    }
    if powers.len() != degree {
        return Err(CodecError::Uncorrectable);
    }

    // Forney: Ω = S·Λ mod x⁵, e = Ω(X⁻¹) / Λ'(X⁻¹) for first root α¹.
    let mut omega = [0u8; ECC_CODEWORDS];
    for (i, &li) in lambda.iter().enumerate() {
        for (j, &sj) in s.iter().enumerate() {
            if i + j < ECC_CODEWORDS {
                omega[i + j] ^= mul(li, sj);
            }
        }
    }
    let derivative: Vec<u8> = lambda.iter().enumerate().skip(1).map(|(i, &c)| if i % 2 == 1 { c } else { 0 }).collect();
    for &p in &powers {
        let x_inv = alpha_pow(-p);
        let denom = eval_low_first(&derivative, x_inv);
        if denom == 0 {
            return Err(CodecError::Uncorrectable);
        }
        let value = gf::div(eval_low_first(&omega, x_inv), denom);
        cw[TOTAL_CODEWORDS - 1 - p as usize] ^= value;
    }
    if syndromes(cw).iter().any(|&v| v != 0) {
        return Err(CodecError::Uncorrectable);
    }
    Ok(degree)
}
