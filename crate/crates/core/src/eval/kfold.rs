//! Seeded k-fold assignment: shuffle indices, then chunk contiguously so
//! fold sizes differ by at most one.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    /// assignments[bag_index] = fold index
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| (f == fold).then_some(i))
            .collect()
    }

    pub fn train_indices(&self, held_out: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| (f != held_out).then_some(i))
            .collect()
    }
}

pub fn kfold_split(num_bags: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || k > num_bags {
        return Err(Error::Domain(format!(
            "cannot split {num_bags} bags into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..num_bags).collect();
    let mut rng = crate::rng::seeded(seed);
    order.shuffle(&mut rng);

    let base = num_bags / k;
    let extra = num_bags % k;
    let mut assignments = vec![0usize; num_bags];
    let mut cursor = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &bag in &order[cursor..cursor + size] {
            assignments[bag] = fold;
        }
        cursor += size;
    }
    Ok(FoldPlan {
        k,
        assignments,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_bags_ten_folds_is_one_each() {
        let plan = kfold_split(10, 10, 3).unwrap();
        for fold in 0..10 {
            assert_eq!(plan.fold_indices(fold).len(), 1);
        }
    }

    #[test]
    fn sizes_differ_by_at_most_one() {
        let plan = kfold_split(95, 10, 5).unwrap();
        let sizes: Vec<usize> = (0..10).map(|f| plan.fold_indices(f).len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 10).count(), 5);
        assert_eq!(sizes.iter().filter(|&&s| s == 9).count(), 5);
    }

    #[test]
    fn same_seed_same_plan() {
        assert_eq!(kfold_split(42, 7, 11).unwrap(), kfold_split(42, 7, 11).unwrap());
    }

    #[test]
    fn partition_is_exact() {
        let plan = kfold_split(31, 4, 2).unwrap();
        let mut seen = vec![false; 31];
        for fold in 0..4 {
            for i in plan.fold_indices(fold) {
                assert!(!seen[i], "bag {i} in two folds");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn k_larger_than_bags_is_domain_error() {
        assert!(kfold_split(5, 6, 0).is_err());
    }
}
