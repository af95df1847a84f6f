use proptest::prelude::*;
use qmetrix::measures::{entropy_bipartite, ggm};
use qmetrix::states::{joint_index, local_digits, probe_from_json, probe_to_json, qfi, variance};
use qmetrix::{Generator, ProbeState};

fn raw_weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, len).prop_filter("non-zero", |v| v.iter().sum::<f64>() > 1e-3)
}

/// Weights with the party order reversed.
fn reverse_parties(w: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for (i, &x) in w.iter().enumerate() {
        let mut digits = local_digits(i, n, d);
        digits.reverse();
        out[joint_index(&digits, d)] = x;
    }
    out
}

proptest! {
    #[test]
    fn qubit_qfi_is_bounded_by_the_heisenberg_limit(raw in raw_weights(8)) {
        let s = ProbeState::from_unnormalized(3, 2, &raw).unwrap();
        let q = qfi(&s, &Generator::pauli_z(3).unwrap()).unwrap();
        prop_assert!((0.0..=36.0 + 1e-9).contains(&q));
    }

    #[test]
    fn qfi_is_four_times_the_variance(raw in raw_weights(9)) {
        let s = ProbeState::from_unnormalized(2, 3, &raw).unwrap();
        let g = Generator::spin_rescaled(2, 3).unwrap();
        prop_assert!((qfi(&s, &g).unwrap() - 4.0 * variance(&s, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn qfi_ignores_a_shift_of_the_local_spectrum(raw in raw_weights(9), shift in -5.0f64..5.0) {
        let s = ProbeState::from_unnormalized(2, 3, &raw).unwrap();
        let a = Generator::custom(2, &[0.0, 2.0, 3.0]).unwrap();
        let b = Generator::custom(2, &[shift, 2.0 + shift, 3.0 + shift]).unwrap();
        prop_assert!((qfi(&s, &a).unwrap() - qfi(&s, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn party_order_does_not_matter(raw in raw_weights(8)) {
        let s = ProbeState::from_unnormalized(3, 2, &raw).unwrap();
        let r = ProbeState::from_unnormalized(3, 2, &reverse_parties(s.weights(), 3, 2)).unwrap();
        let g = Generator::pauli_z(3).unwrap();
        prop_assert!((qfi(&s, &g).unwrap() - qfi(&r, &g).unwrap()).abs() < 1e-12);
        prop_assert!((ggm(&s).unwrap().value - ggm(&r).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn scaling_raw_weights_changes_nothing(raw in raw_weights(4), c in 0.1f64..10.0) {
        let a = ProbeState::from_unnormalized(2, 2, &raw).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|x| x * c).collect();
        let b = ProbeState::from_unnormalized(2, 2, &scaled).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            prop_assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn measures_stay_in_range(raw in raw_weights(16)) {
        let s = ProbeState::from_unnormalized(2, 4, &raw).unwrap();
        let g = ggm(&s).unwrap().value;
        let e = entropy_bipartite(&s).unwrap().value;
        prop_assert!((-1e-15..=0.75 + 1e-12).contains(&g));
        prop_assert!((-1e-15..=2.0 + 1e-12).contains(&e));
    }

    #[test]
    fn probe_json_round_trip_is_exact(raw in raw_weights(9)) {
        let s = ProbeState::from_unnormalized(2, 3, &raw).unwrap();
        let g = Generator::spin_rescaled(2, 3).unwrap();
        let (back, g2) = probe_from_json(&probe_to_json(&s, &g).unwrap()).unwrap();
        prop_assert_eq!(back.weights(), s.weights());
        prop_assert_eq!(g2, g);
    }
}
