use proptest::prelude::*;

use splicereg::network::{
    forward_representation, head_composite, head_multi_quantile_additive, head_multi_quantile_multiplicative, predict,
    HeadKind, NetworkConfig, NetworkParams,
};

fn head_strategy() -> impl Strategy<Value = HeadKind> {
    prop_oneof![
        Just(HeadKind::MultiQuantileAdditive),
        Just(HeadKind::MultiQuantileMultiplicative),
        Just(HeadKind::CompositeAdditive),
        Just(HeadKind::Mean),
    ]
}

fn levels_for(head: HeadKind, k: usize) -> Vec<f64> {
    match head {
        HeadKind::MultiQuantileAdditive | HeadKind::MultiQuantileMultiplicative => {
            (1..=k).map(|j| j as f64 / (k + 1) as f64).collect()
        }
        HeadKind::CompositeAdditive => vec![0.9],
        HeadKind::Mean => vec![],
    }
}

proptest! {
    #[test]
    fn outputs_are_ordered_and_positive(
        head in head_strategy(),
        k in 1usize..5,
        seed in any::<u64>(),
        scale in 0.1f64..20.0,
        x in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let cfg = NetworkConfig::new(3, vec![5, 4], head, levels_for(head, k), 0).unwrap();
        let mut params = NetworkParams::init(&cfg, seed);
        let off = params.head_offset();
        for (i, v) in params.values[off..].iter_mut().enumerate() {
            *v = scale * (((i as f64 + 1.0) * 0.7531 + seed as f64 * 1e-19).sin());
        }
        let mut input = vec![1.0];
        input.extend(&x);
        let out = predict(&input, &params, &cfg).unwrap();
        prop_assert_eq!(out.len(), cfg.n_heads());
        prop_assert!(out.iter().all(|o| o.is_finite() && *o > 0.0), "{:?}", out);
        prop_assert!(out.windows(2).all(|w| w[0] < w[1]), "{:?}", out);
    }

    #[test]
    fn params_round_trip_through_json(head in head_strategy(), seed in any::<u64>()) {
        let cfg = NetworkConfig::new(2, vec![4, 3], head, levels_for(head, 3), 0).unwrap();
        let params = NetworkParams::init(&cfg, seed);
        let text = serde_json::to_string(&params).unwrap();
        let back: NetworkParams = serde_json::from_str(&text).unwrap();
        prop_assert!(params.values.iter().zip(&back.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(params.shapes, back.shapes);
    }

    #[test]
    fn parameter_count_follows_the_layer_formula(
        input_dim in 0usize..12,
        hidden in prop::collection::vec(1usize..25, 1..4),
        head in head_strategy(),
        k in 1usize..5,
    ) {
        let cfg = NetworkConfig::new(input_dim, hidden.clone(), head, levels_for(head, k), 0).unwrap();
        let mut prev = input_dim;
        let mut expected = 0;
        for &r in &hidden {
            expected += r * (prev + 1);
            prev = r;
        }
        expected += cfg.n_heads() * (prev + 1);
        prop_assert_eq!(cfg.param_count(), expected);
        prop_assert_eq!(NetworkParams::init(&cfg, 1).values.len(), expected);
    }
}

#[test]
fn default_architecture_has_728_parameters_for_ten_inputs_and_three_heads() {
    let cfg = NetworkConfig::new(10, NetworkConfig::default_hidden(), HeadKind::CompositeAdditive, vec![0.9], 0).unwrap();
    assert_eq!(cfg.param_count(), 728);
}

#[test]
fn head_functions_match_their_closed_forms() {
    let z = [1.0, 0.5, -0.25];
    let b1 = [0.1, 0.2, 0.4];
    let b2 = [-1.0, 0.0, 0.0];
    let b3 = [0.0, 1.0, 2.0];
    let e = |b: &[f64]| b.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>().exp();
    let add = head_multi_quantile_additive(&z, &[&b1, &b2, &b3], &[0.1, 0.5, 0.9]).unwrap();
    let want = [e(&b1), e(&b1) + e(&b2), e(&b1) + e(&b2) + e(&b3)];
    for (a, w) in add.iter().zip(want) {
        assert!((a - w).abs() < 1e-14 * w);
    }
    let sig = |b: &[f64]| 1.0 / (1.0 + 1.0 / e(b));
    let mul = head_multi_quantile_multiplicative(&z, &[&b1, &b2, &b3], &[0.1, 0.5, 0.9]).unwrap();
    let top = e(&b3);
    let want = [sig(&b1) * sig(&b2) * top, sig(&b2) * top, top];
    for (a, w) in mul.iter().zip(want) {
        assert!((a - w).abs() < 1e-14 * w);
    }
    let t = head_composite(&z, &b1, &b2, &b3).unwrap();
    assert!((t.v - add[1]).abs() < 1e-14 && (t.e_plus - add[2]).abs() < 1e-14);
    assert!(head_multi_quantile_additive(&z, &[&b1], &[0.1, 0.9]).is_err());
    assert!(head_composite(&z, &b1[..2], &b2, &b3).is_err());
}

#[test]
fn representation_starts_with_the_constant() {
    let cfg = NetworkConfig::new(2, vec![3], HeadKind::Mean, vec![], 0).unwrap();
    let params = NetworkParams::init(&cfg, 5);
    let z = forward_representation(&[1.0, 0.3, 0.7], &params, &cfg).unwrap();
    assert_eq!(z.len(), 4);
    assert_eq!(z[0], 1.0);
    assert!(z[1..].iter().all(|v| v.abs() < 1.0));
    assert!(forward_representation(&[0.0, 0.3, 0.7], &params, &cfg).is_err());
    assert!(forward_representation(&[1.0, 0.3], &params, &cfg).is_err());
}
