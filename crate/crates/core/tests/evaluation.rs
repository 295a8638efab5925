use banff_core::{accumulate, summarize, BanffGrade, ConfusionMatrix, Error, GradePair, Indicator};
use proptest::prelude::*;

fn g(v: u8) -> Option<BanffGrade> {
    Some(BanffGrade::new(v).unwrap())
}

/// Quadratic-weighted kappa from raw counts, in the 1 - sum(w O) / sum(w E) form.
fn kappa_oracle(m: &[[u64; 4]; 4]) -> f64 {
    let n: u64 = m.iter().flatten().sum();
    let rows: Vec<u64> = m.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..4).map(|j| m.iter().map(|r| r[j]).sum()).collect();
    let mut num = 0u128;
    let mut den = 0u128;
    for i in 0..4 {
        for j in 0..4 {
            let w = (i as i64 - j as i64).pow(2) as u128;
            num += w * m[i][j] as u128 * n as u128;
            den += w * rows[i] as u128 * cols[j] as u128;
        }
    }
    if den == 0 {
        1.0
    } else {
        1.0 - num as f64 / den as f64
    }
}

fn matrix(cells: [[u64; 4]; 4]) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::new(Indicator::G);
    cm.cells = cells;
    cm
}

#[test]
fn unscorable_pairs_are_excluded() {
    let pairs = [GradePair::new(g(1), g(1)), GradePair::new(None, g(2)), GradePair::new(g(0), None)];
    let cm = accumulate(pairs, Indicator::Ptc);
    assert_eq!(cm.n_sections(), 1);
    assert_eq!(cm.excluded, 2);
    assert!(cm.to_csv().contains("excluded,2"));
}

#[test]
fn empty_matrix_is_an_error() {
    assert!(matches!(summarize(&ConfusionMatrix::new(Indicator::V)), Err(Error::EmptyMatrix)));
}

#[test]
fn known_kappa() {
    // Hand-computed: observed weighted disagreement 2/9 / 4, expected 5/9 / 4.
    let cm = matrix([[1, 1, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1]]);
    let s = summarize(&cm).unwrap();
    assert!((s.quadratic_weighted_kappa - kappa_oracle(&cm.cells)).abs() < 1e-12);
    assert_eq!(s.exact_agreement, 0.75);
    assert_eq!(s.within_one_agreement, 1.0);
    assert_eq!(s.per_grade_recall, [Some(0.5), Some(1.0), None, Some(1.0)]);
}

proptest! {
    #[test]
    fn kappa_matches_oracle(cells in prop::array::uniform4(prop::array::uniform4(0u64..50))) {
        prop_assume!(cells.iter().flatten().sum::<u64>() > 0);
        let s = summarize(&matrix(cells)).unwrap();
        prop_assert!((s.quadratic_weighted_kappa - kappa_oracle(&cells)).abs() < 1e-12);
        prop_assert!(s.exact_agreement <= s.within_one_agreement);
    }

    #[test]
    fn summary_is_transpose_invariant(cells in prop::array::uniform4(prop::array::uniform4(0u64..50))) {
        prop_assume!(cells.iter().flatten().sum::<u64>() > 0);
        let cm = matrix(cells);
        let (a, b) = (summarize(&cm).unwrap(), summarize(&cm.transposed()).unwrap());
        prop_assert!((a.quadratic_weighted_kappa - b.quadratic_weighted_kappa).abs() < 1e-12);
        prop_assert_eq!(a.exact_agreement, b.exact_agreement);
        prop_assert_eq!(a.within_one_agreement, b.within_one_agreement);
    }

    #[test]
    fn merge_equals_joint_accumulation(pairs in prop::collection::vec((0u8..5, 0u8..5), 0..100), split in 0usize..100) {
        let gp: Vec<GradePair> = pairs
            .iter()
            .map(|&(p, e)| GradePair::new(BanffGrade::new(p).ok(), BanffGrade::new(e).ok()))
            .collect();
        let k = split.min(gp.len());
        let mut left = accumulate(gp[..k].iter().copied(), Indicator::G);
        left.merge(&accumulate(gp[k..].iter().copied(), Indicator::G));
        prop_assert_eq!(left, accumulate(gp.iter().copied(), Indicator::G));
    }
}
