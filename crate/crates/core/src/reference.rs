//! Reference estimates for the 2023 data challenge quantities. The
//! challenge data are not distributed, so these are stored for comparison
//! and serialization round trips, never as test targets for fitted output.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    /// 1-based variable indices of the five dependence groups.
    pub groups: Vec<Vec<usize>>,
    pub marginal_quantile: Estimate,
    pub marginal_quantile_truth: f64,
    /// Min-projection shape estimates for the two joint events.
    pub minproj_shape: [Estimate; 2],
    pub minproj_probability: [f64; 2],
    pub condex_probability: [Estimate; 2],
}

pub fn reference_groups() -> Vec<Vec<usize>> {
    vec![
        vec![4, 14, 19, 28, 30, 38, 43, 44],
        vec![3, 10, 15, 18, 22, 29, 45, 47],
        vec![8, 21, 25, 26, 32, 33, 34, 40, 41, 42, 48, 49, 50],
        vec![1, 2, 5, 7, 9, 17, 20, 31, 46],
        vec![6, 11, 12, 13, 16, 23, 24, 27, 35, 36, 37, 39],
    ]
}

/// The groups as 0-based indices, ordered by smallest member.
pub fn reference_partition() -> Vec<Vec<usize>> {
    let mut g: Vec<Vec<usize>> = reference_groups()
        .into_iter()
        .map(|g| g.into_iter().map(|i| i - 1).collect())
        .collect();
    g.sort_by_key(|v| v[0]);
    g
}

pub fn reference_values() -> ReferenceValues {
    let e = |value, lo, hi| Estimate { value, lo, hi };
    ReferenceValues {
        groups: reference_groups(),
        marginal_quantile: e(213.1, 209.3, 242.1),
        marginal_quantile_truth: 196.6,
        minproj_shape: [e(0.042, 0.01, 0.075), e(0.094, 0.059, 0.128)],
        minproj_probability: [1.480449e-5, 2.460666e-5],
        condex_probability: [
            e(1.093634e-26, 2.149591e-36, 1.359469e-24),
            e(1.075787e-31, 1.596381e-46, 1.850425e-29),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_covers_fifty() {
        let mut all: Vec<usize> = reference_groups().concat();
        all.sort_unstable();
        assert_eq!(all, (1..=50).collect::<Vec<_>>());
        let sizes: Vec<usize> = reference_groups().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![8, 8, 13, 9, 12]);
    }
}
