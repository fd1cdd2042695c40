//! Small numeric helpers shared across the crate.

/// Snap tolerance for coincident points, in problem coordinates.
pub const SNAP_TOL: f64 = 1e-9;

/// Relative tolerance for vertex mass residuals.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Error-free transformation: `a + b = hi + lo` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let hi = a + b;
    let a_virt = hi - b;
    let b_virt = hi - a_virt;
    let lo = (a - a_virt) + (b - b_virt);
    (hi, lo)
}

/// Accumulates f64 values as a nonoverlapping expansion, so the running sum
/// is exact until the final rounding. Order of insertion does not affect the
/// result, which keeps mass bookkeeping reproducible.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    parts: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn add(&mut self, value: f64) {
        let mut x = value;
        let mut kept = 0;
        for i in 0..self.parts.len() {
            let (hi, lo) = two_sum(x, self.parts[i]);
            if lo != 0.0 {
                self.parts[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.parts.truncate(kept);
        if x != 0.0 {
            self.parts.push(x);
        }
    }

    /// Rounded value of the exact accumulated sum.
    pub fn value(&self) -> f64 {
        // Components are nonoverlapping; summing small to large loses at
        // most one rounding of the true total.
        let mut sorted = self.parts.clone();
        sorted.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
        sorted.iter().sum()
    }
}

/// Exactly rounded sum of a slice.
pub fn sum_exact(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = ExactSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}
