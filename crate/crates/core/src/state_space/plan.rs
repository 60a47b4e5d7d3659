use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dwell::{truncation_point, DwellSpec};
use crate::error::{Error, Result};

/// Sizes of the state aggregates and the layout of the expanded state space.
///
/// Expanded indices `0..live_len()` hold the aggregates in state order,
/// followed by the recently-dead and long-dead states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationPlan {
    pub sizes: Vec<usize>,
    pub offsets: Vec<usize>,
    pub total: usize,
    /// States whose truncation scan hit the size cap.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub capped: Vec<usize>,
}

impl AggregationPlan {
    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::validation("aggregation plan", "no states"));
        }
        if let Some(k) = sizes.iter().position(|&a| a == 0) {
            return Err(Error::validation(
                "aggregation plan",
                format!("aggregate size for state {} must be positive", k + 1),
            ));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &a in &sizes {
            offsets.push(acc);
            acc += a;
        }
        Ok(AggregationPlan {
            total: acc + 2,
            sizes,
            offsets,
            capped: Vec::new(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.sizes.len()
    }

    /// Number of live expanded states.
    pub fn live_len(&self) -> usize {
        self.total - 2
    }

    pub fn recently_dead(&self) -> usize {
        self.total - 2
    }

    pub fn long_dead(&self) -> usize {
        self.total - 1
    }

    /// Expanded indices of aggregate `k`.
    pub fn aggregate(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k] + self.sizes[k]
    }

    /// Which covariate state an expanded live index belongs to.
    pub fn state_of(&self, index: usize) -> Option<usize> {
        if index >= self.live_len() {
            return None;
        }
        Some(self.offsets.partition_point(|&o| o <= index) - 1)
    }
}

/// Sizes every aggregate, from explicit overrides or from the dwell tails.
pub fn build_aggregation(
    dwell: &[DwellSpec],
    epsilon: f64,
    overrides: Option<&[usize]>,
    max_size: usize,
) -> Result<AggregationPlan> {
    if dwell.is_empty() {
        return Err(Error::validation("aggregation plan", "no states"));
    }
    if let Some(sizes) = overrides {
        if sizes.len() != dwell.len() {
            return Err(Error::validation(
                "aggregation plan",
                format!("{} sizes given for {} states", sizes.len(), dwell.len()),
            ));
        }
        for d in dwell {
            d.validate()?;
        }
        return AggregationPlan::from_sizes(sizes.to_vec());
    }
    let mut sizes = Vec::with_capacity(dwell.len());
    let mut capped = Vec::new();
    for (k, d) in dwell.iter().enumerate() {
        let tr = truncation_point(d, epsilon, max_size)?;
        if tr.capped {
            capped.push(k);
        }
        sizes.push(tr.size);
    }
    let mut plan = AggregationPlan::from_sizes(sizes)?;
    plan.capped = capped;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_pair_gives_standard_dimension() {
        let d = vec![DwellSpec::geometric(0.3), DwellSpec::geometric(0.6)];
        let plan = build_aggregation(&d, 1e-6, None, 200).unwrap();
        assert_eq!(plan.sizes, vec![1, 1]);
        assert_eq!(plan.total, 4);
    }

    #[test]
    fn finite_support_table() {
        let d = vec![DwellSpec::tabulated(vec![0.2; 5])];
        let plan = build_aggregation(&d, 1e-6, None, 200).unwrap();
        assert_eq!(plan.sizes, vec![5]);
        assert_eq!(plan.total, 7);
    }

    #[test]
    fn section_three_dwell_mix() {
        let d = vec![
            DwellSpec::shifted_neg_binomial(4.0, 0.4),
            DwellSpec::shifted_poisson(4.0),
            DwellSpec::geometric(0.4),
        ];
        let plan = build_aggregation(&d, 1e-6, None, 200).unwrap();
        assert_eq!(plan.sizes[2], 1);
        for k in 0..2 {
            let a = plan.sizes[k];
            let s = d[k].survival_table(a);
            assert!(s[a] <= 1e-6);
            assert!(s[a - 1] > 1e-6);
        }
        assert_eq!(plan.offsets, vec![0, plan.sizes[0], plan.sizes[0] + plan.sizes[1]]);
        assert_eq!(plan.total, plan.sizes.iter().sum::<usize>() + 2);
    }

    #[test]
    fn overrides_and_bad_sizes() {
        let d = vec![DwellSpec::geometric(0.3), DwellSpec::geometric(0.6)];
        let plan = build_aggregation(&d, 1e-6, Some(&[3, 2]), 200).unwrap();
        assert_eq!(plan.sizes, vec![3, 2]);
        assert!(build_aggregation(&d, 1e-6, Some(&[0, 2]), 200).is_err());
        assert!(build_aggregation(&d, 1e-6, Some(&[1]), 200).is_err());
    }

    #[test]
    fn state_lookup() {
        let plan = AggregationPlan::from_sizes(vec![2, 1, 3]).unwrap();
        let owners: Vec<_> = (0..plan.total).map(|i| plan.state_of(i)).collect();
        assert_eq!(
            owners,
            vec![Some(0), Some(0), Some(1), Some(2), Some(2), Some(2), None, None]
        );
    }
}
