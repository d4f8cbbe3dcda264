//! Analytic reference computations used by the validation suites:
//! a scaling-and-squaring matrix exponential (the exact flow of a linear
//! system) and a spectrum comparison helper.

use nalgebra::{Complex, DMatrix};

/// e^A by scaling-and-squaring: scale A below norm 1/2, sum a 20-term
/// Taylor series, square back.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm = a.norm();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Largest gap between the spectra of two matrices under greedy
/// nearest-neighbor pairing, relative to the largest eigenvalue modulus.
/// Robust against ordering differences, unlike sorting complex values.
pub fn spectral_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let ea = a.complex_eigenvalues();
    let eb = b.complex_eigenvalues();
    assert_eq!(ea.len(), eb.len(), "spectra of different sizes");
    let scale = ea
        .iter()
        .chain(eb.iter())
        .map(|v| v.norm())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let mut remaining: Vec<Complex<f64>> = eb.iter().copied().collect();
    let mut worst = 0.0f64;
    for va in ea.iter() {
        let (idx, dist) = remaining
            .iter()
            .enumerate()
            .map(|(i, vb)| (i, (va - vb).norm()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .expect("non-empty spectrum");
        worst = worst.max(dist);
        remaining.swap_remove(idx);
    }
    worst / scale
}
