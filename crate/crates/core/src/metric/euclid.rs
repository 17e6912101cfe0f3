//! Euclidean distance over dense vectors. Not a compressive metric; used
//! by the analysis tooling to study tree geometry on synthetic point
//! clouds where the radii-scaling argument is stated.

use super::Metric;

pub struct Euclidean;

impl Metric<Vec<f64>> for Euclidean {
    fn name(&self) -> &'static str {
        "euclidean"
    }

    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}
