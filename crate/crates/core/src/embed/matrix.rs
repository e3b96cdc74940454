use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

/// Row-major `f64` matrix that several training threads may update at once.
/// Each entry is an `AtomicU64` holding the float's bits; an update is a
/// relaxed load followed by a relaxed store, so concurrent writers can lose
/// updates but never tear a value. With one writer it behaves exactly like a
/// plain array.
pub struct SharedMatrix {
    rows: usize,
    dim: usize,
    data: Vec<AtomicU64>,
}

impl std::fmt::Debug for SharedMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SharedMatrix({}x{})", self.rows, self.dim)
    }
}

impl Clone for SharedMatrix {
    fn clone(&self) -> Self {
        SharedMatrix::from_values(self.rows, self.dim, &self.to_vec())
    }
}

impl SharedMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        let zero = 0f64.to_bits();
        SharedMatrix { rows, dim, data: (0..rows * dim).map(|_| AtomicU64::new(zero)).collect() }
    }

    /// Uniform in `[-0.5, 0.5) / dim`, the usual word2vec input init.
    pub fn uniform<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let scale = 1.0 / dim as f64;
        let data = (0..rows * dim).map(|_| AtomicU64::new(((rng.random::<f64>() - 0.5) * scale).to_bits())).collect();
        SharedMatrix { rows, dim, data }
    }

    pub fn from_values(rows: usize, dim: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * dim, "matrix shape");
        SharedMatrix { rows, dim, data: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn cell(&self, r: usize, c: usize) -> &AtomicU64 {
        &self.data[r * self.dim + c]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        f64::from_bits(self.cell(r, c).load(Ordering::Relaxed))
    }

    #[inline]
    pub fn set(&self, r: usize, c: usize, v: f64) {
        self.cell(r, c).store(v.to_bits(), Ordering::Relaxed);
    }

    pub fn read_row(&self, r: usize, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.get(r, c);
        }
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.read_row(r, &mut v);
        v
    }

    pub fn set_row(&self, r: usize, v: &[f64]) {
        for (c, &x) in v.iter().enumerate().take(self.dim) {
            self.set(r, c, x);
        }
    }

    /// `row[r] += a * x`
    #[inline]
    pub fn add_scaled(&self, r: usize, x: &[f64], a: f64) {
        for (c, &xv) in x.iter().enumerate().take(self.dim) {
            let cell = self.cell(r, c);
            let cur = f64::from_bits(cell.load(Ordering::Relaxed));
            cell.store((cur + a * xv).to_bits(), Ordering::Relaxed);
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.iter().map(|a| f64::from_bits(a.load(Ordering::Relaxed))).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| f64::from_bits(a.load(Ordering::Relaxed)).is_finite())
    }
}
