//! Small numeric helpers shared across modules.

/// Binomial coefficient as a float (0 when `k > n`).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Multinomial coefficient `(sum k)! / prod(k_i!)`.
pub fn multinomial(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let mut acc = 1.0;
    let mut left = n;
    for &c in counts {
        acc *= binomial(left, c);
        left -= c;
    }
    acc
}
