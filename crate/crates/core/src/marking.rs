//! Dörfler marking with minimal cardinality.

use std::collections::BTreeSet;

use crate::estimator::IndicatorField;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MarkResult {
    pub marked: BTreeSet<usize>,
    /// Σ_{T∈marked} η²_T / Σ_T η²_T
    pub achieved_fraction: f64,
    /// Set when the total indicator is zero and nothing needs marking.
    pub converged: bool,
}

/// Shortest prefix of the elements sorted by descending indicator (ties by
/// ascending id) whose indicator sum reaches θ times the total.
pub fn dorfler_mark(eta2: &[f64], theta: f64) -> Result<MarkResult> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("marking parameter {theta} outside (0, 1)")));
    }
    if let Some(bad) = eta2.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(format!("indicator {} of element {bad} is not a finite nonnegative number", eta2[bad])));
    }
    let total: f64 = eta2.iter().sum();
    if total == 0.0 {
        return Ok(MarkResult {
            marked: BTreeSet::new(),
            achieved_fraction: 1.0,
            converged: true,
        });
    }
    let mut order: Vec<usize> = (0..eta2.len()).collect();
    order.sort_by(|&a, &b| eta2[b].total_cmp(&eta2[a]).then(a.cmp(&b)));
    let target = theta * total;
    let mut sum = 0.0;
    let mut marked = BTreeSet::new();
    for &t in &order {
        marked.insert(t);
        sum += eta2[t];
        if sum >= target {
            break;
        }
    }
    Ok(MarkResult {
        marked,
        achieved_fraction: (sum / total).min(1.0),
        converged: false,
    })
}

pub fn dorfler_mark_field(field: &IndicatorField, theta: f64) -> Result<MarkResult> {
    dorfler_mark(&field.eta2, theta)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ids(r: &MarkResult) -> Vec<usize> {
        r.marked.iter().copied().collect()
    }

    #[test]
    fn examples() {
        let eta = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(ids(&dorfler_mark(&eta, 0.5).unwrap()), vec![0, 1]);
        assert_eq!(ids(&dorfler_mark(&eta, 0.25).unwrap()), vec![0]);
        assert_eq!(ids(&dorfler_mark(&eta, 0.95).unwrap()), vec![0, 1, 2, 3]);
        let r = dorfler_mark(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert_eq!(ids(&r), vec![2, 3]);
        assert!((r.achieved_fraction - 0.7).abs() < 1e-15);
    }

    #[test]
    fn ties_broken_by_id() {
        assert_eq!(ids(&dorfler_mark(&[1.0, 1.0, 1.0, 1.0], 0.4).unwrap()), vec![0, 1]);
    }

    #[test]
    fn zero_total_is_converged() {
        let r = dorfler_mark(&[0.0, 0.0], 0.5).unwrap();
        assert!(r.converged && r.marked.is_empty());
    }

    #[test]
    fn invalid_input() {
        assert!(dorfler_mark(&[1.0], 0.0).is_err());
        assert!(dorfler_mark(&[1.0], 1.0).is_err());
        assert!(dorfler_mark(&[1.0, f64::NAN], 0.5).is_err());
        assert!(dorfler_mark(&[1.0, -1.0], 0.5).is_err());
    }

    fn indicators() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..10.0f64, 1e-6..1e-3f64], 1..80)
            .prop_filter("positive total", |v| v.iter().sum::<f64>() > 0.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn dorfler_property_and_minimality(eta in indicators(), theta in 0.01..0.99f64) {
            let r = dorfler_mark(&eta, theta).unwrap();
            let total: f64 = eta.iter().sum();
            let sum: f64 = r.marked.iter().map(|&t| eta[t]).sum();
            prop_assert!(sum >= theta * total * (1.0 - 1e-12));
            let least = r.marked.iter().copied().min_by(|&a, &b| eta[a].total_cmp(&eta[b])).unwrap();
            prop_assert!(sum - eta[least] < theta * total);
        }

        #[test]
        fn permutation_invariance(eta in indicators(), theta in 0.01..0.99f64, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..eta.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<f64> = perm.iter().map(|&i| eta[i]).collect();
            let a = dorfler_mark(&eta, theta).unwrap();
            let b = dorfler_mark(&shuffled, theta).unwrap();
            let mut va: Vec<f64> = a.marked.iter().map(|&t| eta[t]).collect();
            let mut vb: Vec<f64> = b.marked.iter().map(|&t| shuffled[t]).collect();
            va.sort_by(f64::total_cmp);
            vb.sort_by(f64::total_cmp);
            prop_assert_eq!(va, vb);
            prop_assert_eq!(&a, &dorfler_mark(&eta, theta).unwrap());
        }

        #[test]
        fn monotone_in_theta(eta in indicators(), t1 in 0.01..0.99f64, t2 in 0.01..0.99f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = dorfler_mark(&eta, lo).unwrap();
            let b = dorfler_mark(&eta, hi).unwrap();
            prop_assert!(a.marked.is_subset(&b.marked));
        }
    }
}
