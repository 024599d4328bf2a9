//! Independent reference computations shared by the oracle and acceptance
//! tests. Nothing here calls into the library's scoring or training code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use annotator_core::{PointCloud, VoxelCoord};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parses a decimal literal such as "0.05" into an exact rational.
pub fn decimal(text: &str) -> BigRational {
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    let digits: BigInt = format!("{int}{frac}").parse().unwrap();
    BigRational::new(digits, BigInt::from(10u32).pow(frac.len() as u32))
}

/// Floor of `x / size` in exact rational arithmetic, with `size` given
/// as the decimal it was written as.
pub fn exact_floor(x: f32, size: &str) -> i64 {
    let q = BigRational::from_float(f64::from(x)).unwrap() / decimal(size);
    q.floor().to_integer().to_i64().unwrap()
}

pub fn exact_voxel(p: [f32; 3], size: &str) -> [i64; 3] {
    [
        exact_floor(p[0], size),
        exact_floor(p[1], size),
        exact_floor(p[2], size),
    ]
}

/// Fixed-point arithmetic with `FRAC` fractional bits.
const FRAC: u32 = 256;

fn one_fp() -> BigInt {
    BigInt::one() << FRAC
}

fn to_fp(x: f64) -> BigInt {
    let r = BigRational::from_float(x).unwrap() * BigRational::from_integer(one_fp());
    r.floor().to_integer()
}

fn from_fp(x: &BigInt) -> f64 {
    BigRational::new(x.clone(), one_fp()).to_f64().unwrap()
}

fn mul_fp(a: &BigInt, b: &BigInt) -> BigInt {
    (a * b) >> FRAC
}

fn div_fp(a: &BigInt, b: &BigInt) -> BigInt {
    (a << FRAC).div_floor(b)
}

/// `e^x` to roughly 70 decimal digits for moderate `x`.
fn exp_fp(x: &BigInt) -> BigInt {
    // exp(x) = exp(x / 2^8)^(2^8)
    let reduced = x >> 8usize;
    let mut term = one_fp();
    let mut sum = one_fp();
    for n in 1..80u32 {
        term = mul_fp(&term, &reduced) / BigInt::from(n);
        if term.is_zero() {
            break;
        }
        sum += &term;
    }
    for _ in 0..8 {
        sum = mul_fp(&sum, &sum);
    }
    sum
}

/// Natural log for positive fixed-point `x`.
fn ln_fp(x: &BigInt) -> BigInt {
    assert!(x.is_positive());
    // ln x = 2 atanh((x - 1) / (x + 1)), after pulling out powers of two.
    let one = one_fp();
    let mut m = x.clone();
    let mut k: i64 = 0;
    while m > (&one << 1usize) {
        m >>= 1usize;
        k += 1;
    }
    while m < one {
        m <<= 1usize;
        k -= 1;
    }
    let t = div_fp(&(&m - &one), &(&m + &one));
    let t2 = mul_fp(&t, &t);
    let mut power = t.clone();
    let mut sum = t;
    for n in 1..400u32 {
        power = mul_fp(&power, &t2);
        let term = &power / BigInt::from(2 * n + 1);
        if term.is_zero() {
            break;
        }
        sum += term;
    }
    let ln2 = {
        let t = div_fp(&one, &(BigInt::from(3) * &one));
        let t2 = mul_fp(&t, &t);
        let mut power = t.clone();
        let mut s = t;
        for n in 1..400u32 {
            power = mul_fp(&power, &t2);
            let term = &power / BigInt::from(2 * n + 1);
            if term.is_zero() {
                break;
            }
            s += term;
        }
        s * 2
    };
    sum * 2 + ln2 * BigInt::from(k)
}

/// Softmax of `logits` in extended precision.
pub fn softmax_hp(logits: &[f64]) -> Vec<f64> {
    let e: Vec<BigInt> = logits.iter().map(|&l| exp_fp(&to_fp(l))).collect();
    let total: BigInt = e.iter().sum();
    e.iter().map(|v| from_fp(&div_fp(v, &total))).collect()
}

/// Shannon entropy (natural log) of a probability row in extended
/// precision.
pub fn entropy_hp(row: &[f64]) -> f64 {
    let mut acc = BigInt::zero();
    for &p in row.iter().filter(|&&p| p > 0.0) {
        let p = to_fp(p);
        acc -= mul_fp(&p, &ln_fp(&p));
    }
    from_fp(&acc)
}

/// Entropy of a label histogram computed from counts in class order.
pub fn histogram_entropy_hp(labels: &[u16]) -> f64 {
    let mut counts: BTreeMap<u16, u64> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let row: Vec<f64> = counts.values().map(|&c| c as f64 / n).collect();
    entropy_hp(&row)
}

/// `sqrt(x^2 + y^2 + z^2)` from exact squares.
pub fn range_hp(x: f32, y: f32, z: f32) -> f64 {
    let sq = |v: f32| {
        let r = BigRational::from_float(f64::from(v)).unwrap();
        &r * &r
    };
    let s = sq(x) + sq(y) + sq(z);
    let scaled = (s * BigRational::from_integer(one_fp() * one_fp()))
        .floor()
        .to_integer();
    from_fp(&num::integer::Roots::sqrt(&scaled))
}

pub fn plain_entropy(row: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

pub fn plain_margin(row: &[f64]) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted[0] - sorted[1]
}

pub fn first_argmax(row: &[f64]) -> u16 {
    let mut best = 0;
    for k in 1..row.len() {
        if row[k] > row[best] {
            best = k;
        }
    }
    best as u16 + 1
}

pub fn plain_vcd(labels: &[u16]) -> f64 {
    let mut counts: BTreeMap<u16, u64> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    counts
        .values()
        .map(|&c| c as f64 / n)
        .map(|p| -p * p.ln())
        .sum()
}

/// Buckets built by hashing exact floors, ordered lexicographically.
pub fn brute_buckets(cloud: &PointCloud, size: &str) -> BTreeMap<[i64; 3], Vec<u32>> {
    let mut out: BTreeMap<[i64; 3], Vec<u32>> = BTreeMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        out.entry(exact_voxel(p.xyz(), size))
            .or_default()
            .push(i as u32);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Highest,
    Lowest,
}

/// Exhaustive winner: best score, scores within 1e-12 count as tied,
/// ties go to the smallest coordinate.
pub fn brute_select(
    buckets: &BTreeMap<[i64; 3], Vec<u32>>,
    excluded: &BTreeSet<[i64; 3]>,
    score: impl Fn(&[u32]) -> f64,
    rule: Rule,
) -> Option<([i64; 3], f64)> {
    let scored: Vec<([i64; 3], f64)> = buckets
        .iter()
        .filter(|(c, _)| !excluded.contains(*c))
        .map(|(c, b)| (*c, score(b)))
        .collect();
    let best = scored
        .iter()
        .map(|s| s.1)
        .fold(None, |acc: Option<f64>, v| {
            Some(match (acc, rule) {
                (None, _) => v,
                (Some(a), Rule::Highest) => a.max(v),
                (Some(a), Rule::Lowest) => a.min(v),
            })
        })?;
    scored.into_iter().find(|(_, v)| (v - best).abs() <= 1e-12)
}

/// Random winner: uniform draw over the eligible coordinates in
/// lexicographic order.
pub fn brute_random(
    buckets: &BTreeMap<[i64; 3], Vec<u32>>,
    excluded: &BTreeSet<[i64; 3]>,
    seed: u64,
) -> Option<[i64; 3]> {
    let eligible: Vec<[i64; 3]> = buckets
        .keys()
        .filter(|c| !excluded.contains(*c))
        .copied()
        .collect();
    if eligible.is_empty() {
        return None;
    }
    Some(eligible[ChaCha8Rng::seed_from_u64(seed).random_range(0..eligible.len())])
}

pub fn coord_key(c: &VoxelCoord) -> [i64; 3] {
    [i64::from(c.a), i64::from(c.b), i64::from(c.c)]
}

/// Per-class IoU from a full confusion matrix over truth != 0.
pub fn confusion_miou(pred: &[u16], truth: &[u16], k: usize) -> (Vec<Option<f64>>, Option<f64>) {
    let mut m = vec![vec![0u64; k + 1]; k + 1];
    for (&p, &t) in pred.iter().zip(truth) {
        if t != 0 {
            m[usize::from(t)][usize::from(p)] += 1;
        }
    }
    let per: Vec<Option<f64>> = (1..=k)
        .map(|c| {
            let row: u64 = m[c].iter().sum();
            let col: u64 = (0..=k).map(|r| m[r][c]).sum();
            let union = row + col - m[c][c];
            (union > 0).then(|| m[c][c] as f64 / union as f64)
        })
        .collect();
    let present: Vec<f64> = per.iter().flatten().copied().collect();
    let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    (per, mean)
}

/// Random probability rows, some with exact ties.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * k);
    for _ in 0..n {
        let mut row: Vec<f64> = if rng.random_bool(0.1) {
            vec![1.0; k]
        } else {
            (0..k)
                .map(|_| rng.random_range(0.0..1.0f64).powi(3))
                .collect()
        };
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
        out.extend(row);
    }
    out
}
