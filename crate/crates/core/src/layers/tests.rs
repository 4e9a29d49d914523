use ndarray::Array2;
use proptest::prelude::*;

use super::*;
use crate::num::{Complex, RngStream};

fn random_state(batch: usize, n: usize, k: usize, scale: f64, rng: &mut RngStream) -> CapsuleState {
    let data = Array2::from_shape_simple_fn((batch, n * k), || scale * rng.normal());
    CapsuleState::new(data, n, k).unwrap()
}

fn random_element(k: usize, rng: &mut RngStream) -> GroupElement {
    if k == 2 {
        GroupElement::phase(rng.uniform_range(-3.0, 3.0))
    } else {
        GroupElement::random_orthogonal(k, rng).unwrap()
    }
}

fn commutation_error(w: &EquivariantWeights, g: &GroupElement, x: &CapsuleState) -> f64 {
    let a = group_act(g, &apply_layer(w, x).unwrap()).unwrap();
    let b = apply_layer(w, &group_act(g, x).unwrap()).unwrap();
    a.max_abs_diff(&b)
}

#[test]
fn radial_fixes_origin() {
    let x = CapsuleState::zeros(1, 3, 2);
    assert_eq!(radial_nonlinearity(&x, DEFAULT_EPS), x);
}

#[test]
fn radial_small_capsule_is_linear() {
    let z = Complex::from_polar(1e-6, 0.4);
    let y = radial_nonlinearity(&CapsuleState::from_complex(&[z]).unwrap(), DEFAULT_EPS);
    let out = y.complex_row(0).unwrap()[0];
    // ε = 1e-8 is not negligible against r = 1e-6: gain is 1/(1 + 0.01)
    let want = 1e-6f64.tanh() / (1e-6 + DEFAULT_EPS) * 1e-6;
    assert!((out.norm() - want).abs() < 1e-20);
    assert!((out.norm() - 1e-6).abs() < 0.011e-6);
    assert!((out.arg() - 0.4).abs() < 1e-12);
}

#[test]
fn radial_maps_magnitude_through_tanh() {
    let z = Complex::from_polar(3.0, 0.7);
    let y = radial_nonlinearity(&CapsuleState::from_complex(&[z]).unwrap(), DEFAULT_EPS);
    let out = y.complex_row(0).unwrap()[0];
    let want = 3.0f64.tanh() * 3.0 / (3.0 + DEFAULT_EPS);
    assert!((out.norm() - want).abs() < 1e-15);
    assert!((out.norm() - 0.9951).abs() < 1e-4);
    assert!((out.arg() - 0.7).abs() < 1e-14);
}

#[test]
fn radial_output_magnitudes_below_one() {
    let mut rng = RngStream::new(1);
    for k in [1, 2, 4] {
        let x = random_state(5, 7, k, 30.0, &mut rng);
        let y = radial_nonlinearity(&x, DEFAULT_EPS);
        assert!(y.magnitudes().iter().all(|&m| m < 1.0));
    }
}

#[test]
fn identity_weights_give_phi() {
    let mut rng = RngStream::new(2);
    for (family, k) in [(Family::U1, 2), (Family::Ok, 4), (Family::Generic, 3)] {
        let w = init_weights(family, 5, k, 1.0, InitScheme::Identity, &mut rng).unwrap();
        let x = random_state(3, 5, k, 1.5, &mut rng);
        let y = apply_layer(&w, &x).unwrap();
        assert_eq!(y, radial_nonlinearity(&x, DEFAULT_EPS));
    }
}

#[test]
fn ok_identity_preserves_directions() {
    let mut rng = RngStream::new(3);
    let w = init_weights(Family::Ok, 6, 4, 1.0, InitScheme::Identity, &mut rng).unwrap();
    let x = random_state(1, 6, 4, 2.0, &mut rng);
    let y = apply_layer(&w, &x).unwrap();
    for alpha in 0..6 {
        let a = x.capsule(0, alpha);
        let b = y.capsule(0, alpha);
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (p, q) in a.iter().zip(&b) {
            assert!((p / na - q / nb).abs() < 1e-14);
        }
    }
}

#[test]
fn u1_layer_commutes_with_phase_exactly_in_structure() {
    let mut rng = RngStream::new(4);
    let w = init_weights(Family::U1, 8, 2, 1.5, InitScheme::Gaussian, &mut rng).unwrap();
    let x = random_state(2, 8, 2, 1.0, &mut rng);
    let g = GroupElement::phase(0.9);
    assert!(commutation_error(&w, &g, &x) < 1e-14);
}

#[test]
fn all_equivariant_families_commute() {
    let mut rng = RngStream::new(5);
    for (family, k) in [
        (Family::U1, 2),
        (Family::So2, 2),
        (Family::Ok, 2),
        (Family::Ok, 4),
        (Family::Ok, 7),
    ] {
        for scheme in [InitScheme::Gaussian, InitScheme::Uniform] {
            let w = init_weights(family, 9, k, 1.5, scheme, &mut rng).unwrap();
            let x = random_state(3, 9, k, 1.0, &mut rng);
            let g = random_element(k, &mut rng);
            let err = commutation_error(&w, &g, &x);
            assert!(err <= 1e-10, "{family} k={k}: {err}");
        }
    }
}

#[test]
fn ok_layers_commute_with_reflections() {
    let mut rng = RngStream::new(6);
    let w = init_weights(Family::Ok, 5, 3, 1.2, InitScheme::Gaussian, &mut rng).unwrap();
    let x = random_state(2, 5, 3, 1.0, &mut rng);
    let mut o = Array2::<f64>::eye(3);
    o[[1, 1]] = -1.0;
    let g = GroupElement::orthogonal(o).unwrap();
    assert!(commutation_error(&w, &g, &x) < 1e-14);
}

#[test]
fn generic_family_breaks_equivariance() {
    let mut rng = RngStream::new(7);
    for k in [2, 4] {
        let w = init_weights(Family::Generic, 8, k, 1.5, InitScheme::Gaussian, &mut rng).unwrap();
        let x = random_state(1, 8, k, 1.0, &mut rng);
        let g = random_element(k, &mut rng);
        assert!(commutation_error(&w, &g, &x) > 1e-3);
    }
}

#[test]
fn twenty_layer_composition_stays_equivariant() {
    let mut rng = RngStream::new(8);
    for (family, k) in [(Family::U1, 2), (Family::Ok, 4)] {
        let net = Network::random(family, 10, k, 20, 1.5, InitScheme::Gaussian, &mut rng).unwrap();
        let x = random_state(2, 10, k, 1.0, &mut rng);
        let g = random_element(k, &mut rng);
        let a = group_act(&g, &net.forward(&x).unwrap()).unwrap();
        let b = net.forward(&group_act(&g, &x).unwrap()).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-10);
    }
}

#[test]
fn group_identity_inverse_and_homomorphism() {
    let mut rng = RngStream::new(9);
    let x = random_state(2, 6, 2, 1.0, &mut rng);
    assert_eq!(group_act(&GroupElement::phase(0.0), &x).unwrap(), x);
    let g = GroupElement::phase(1.3);
    let back = group_act(&g.inverse(), &group_act(&g, &x).unwrap()).unwrap();
    assert!(back.max_abs_diff(&x) < 1e-12);

    let x4 = random_state(2, 6, 4, 1.0, &mut rng);
    let o = GroupElement::random_orthogonal(4, &mut rng).unwrap();
    let twice = group_act(&o, &group_act(&o, &x4).unwrap()).unwrap();
    let squared = group_act(&o.compose(&o).unwrap(), &x4).unwrap();
    assert!(twice.max_abs_diff(&squared) < 1e-12);
}

#[test]
fn group_dimension_mismatch_rejected() {
    let x = CapsuleState::zeros(1, 3, 4);
    assert!(group_act(&GroupElement::phase(1.0), &x).is_err());
    let mut o = Array2::<f64>::eye(2);
    o[[0, 1]] = 0.1;
    assert!(GroupElement::orthogonal(o).is_err());
}

#[test]
fn identity_scheme_is_exact() {
    let mut rng = RngStream::new(10);
    match init_weights(Family::U1, 4, 2, 1.0, InitScheme::Identity, &mut rng).unwrap() {
        EquivariantWeights::U1 { re, im } => {
            assert_eq!(re, Array2::<f64>::eye(4));
            assert!(im.iter().all(|&v| v == 0.0));
        }
        _ => unreachable!(),
    }
}

#[test]
fn gaussian_component_variance() {
    // total complex variance σ²/N, split evenly between Re and Im
    let mut rng = RngStream::new(11);
    let n = 256;
    let sigma = 1.5;
    let w = init_weights(Family::U1, n, 2, sigma, InitScheme::Gaussian, &mut rng).unwrap();
    let EquivariantWeights::U1 { re, im } = w else {
        unreachable!()
    };
    let target = sigma * sigma / (2.0 * n as f64);
    for part in [re, im] {
        let mean = part.mean().unwrap();
        let var = part.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (part.len() - 1) as f64;
        assert!(((var - target) / target).abs() < 0.05, "{var} vs {target}");
    }
}

#[test]
fn ok_and_generic_gaussian_variance() {
    let mut rng = RngStream::new(12);
    let (n, k, sigma) = (128, 2, 1.2);
    let EquivariantWeights::Ok { a, .. } =
        init_weights(Family::Ok, n, k, sigma, InitScheme::Gaussian, &mut rng).unwrap()
    else {
        unreachable!()
    };
    let var = a.mapv(|v| v * v).mean().unwrap();
    assert!((var / (sigma * sigma / n as f64) - 1.0).abs() < 0.05);
    let EquivariantWeights::Generic { m, .. } =
        init_weights(Family::Generic, n, k, sigma, InitScheme::Gaussian, &mut rng).unwrap()
    else {
        unreachable!()
    };
    let var = m.mapv(|v| v * v).mean().unwrap();
    assert!((var / (sigma * sigma / (n * k) as f64) - 1.0).abs() < 0.05);
}

#[test]
fn uniform_scheme_bounds() {
    let mut rng = RngStream::new(13);
    let w = init_weights(Family::U1, 64, 2, 1.0, InitScheme::Uniform, &mut rng).unwrap();
    let EquivariantWeights::U1 { re, im } = w else {
        unreachable!()
    };
    assert!(re.iter().chain(im.iter()).all(|v| v.abs() <= 0.125));
    assert!(re.iter().any(|v| v.abs() > 0.1));
}

#[test]
fn invalid_combinations_rejected() {
    let mut rng = RngStream::new(14);
    assert!(init_weights(Family::U1, 4, 3, 1.0, InitScheme::Gaussian, &mut rng).is_err());
    assert!(init_weights(Family::Ok, 4, 3, 0.0, InitScheme::Gaussian, &mut rng).is_err());
    assert!(init_weights(Family::Ok, 4, 3, -1.0, InitScheme::Gaussian, &mut rng).is_err());
    let w = init_weights(Family::Ok, 4, 3, 1.0, InitScheme::Gaussian, &mut rng).unwrap();
    assert!(apply_layer(&w, &CapsuleState::zeros(1, 4, 2)).is_err());
}

#[test]
fn parameter_counts() {
    let mut rng = RngStream::new(15);
    let (n, k) = (12, 4);
    let ok = init_weights(Family::Ok, n, k, 1.0, InitScheme::Gaussian, &mut rng).unwrap();
    let generic = init_weights(Family::Generic, n, k, 1.0, InitScheme::Gaussian, &mut rng).unwrap();
    assert_eq!(ok.param_count(), n * n);
    assert_eq!(generic.param_count(), (n * k) * (n * k));
    let u1 = init_weights(Family::U1, n, 2, 1.0, InitScheme::Gaussian, &mut rng).unwrap();
    assert_eq!(u1.param_count(), 2 * n * n);
}

#[test]
fn ok_dense_form_never_mixes_components() {
    let mut rng = RngStream::new(16);
    let w = init_weights(Family::Ok, 5, 3, 1.0, InitScheme::Gaussian, &mut rng).unwrap();
    let d = w.dense();
    for r in 0..15 {
        for c in 0..15 {
            if r / 5 != c / 5 {
                assert_eq!(d[[r, c]], 0.0);
            }
        }
    }
}

#[test]
fn so2_pair_matches_explicit_block_matrix() {
    let mut rng = RngStream::new(17);
    let n = 6;
    let w = init_weights(Family::So2, n, 2, 1.0, InitScheme::Gaussian, &mut rng).unwrap();
    let pair = w.to_so2_pair().unwrap();
    // W_{αa;βb} = w_{αβ} δ_{ab} + u_{αβ} ε_{ab}, ε_{12} = 1, ε_{21} = −1
    let eps = [[0.0, 1.0], [-1.0, 0.0]];
    let delta = [[1.0, 0.0], [0.0, 1.0]];
    let mut explicit = Array2::<f64>::zeros((2 * n, 2 * n));
    for a in 0..2 {
        for b in 0..2 {
            for al in 0..n {
                for be in 0..n {
                    explicit[[a * n + al, b * n + be]] =
                        pair.w[[al, be]] * delta[a][b] + pair.u[[al, be]] * eps[a][b];
                }
            }
        }
    }
    assert_eq!(explicit, w.dense());
    let x = random_state(2, n, 2, 1.0, &mut rng);
    let via_dense = radial_nonlinearity(&x, DEFAULT_EPS).data().dot(&explicit.t());
    let via_layer = apply_layer(&w, &x).unwrap();
    let err = (&via_dense - via_layer.data())
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err < 1e-14);
    assert_eq!(EquivariantWeights::from_so2_pair(&pair).unwrap(), w);
}

#[test]
fn weights_round_trip_through_flat_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(18);
    for (family, k) in [(Family::U1, 2), (Family::Ok, 3), (Family::Generic, 2)] {
        let w = init_weights(family, 4, k, 1.1, InitScheme::Gaussian, &mut rng).unwrap();
        let meta = WeightMeta {
            family,
            n_capsules: 4,
            capsule_dim: k,
            scheme: InitScheme::Gaussian,
            sigma_w: 1.1,
            seed: 18,
        };
        let stem = dir.path().join(family.as_str());
        save_weights(&stem, &w, &meta).unwrap();
        let (back, meta_back) = load_weights(&stem).unwrap();
        assert_eq!(back, w);
        assert_eq!(meta_back, meta);
    }
}

#[test]
fn trace_has_depth_plus_one_entries() {
    let mut rng = RngStream::new(19);
    let net = Network::random(Family::U1, 4, 2, 3, 1.0, InitScheme::Gaussian, &mut rng).unwrap();
    let x = random_state(1, 4, 2, 1.0, &mut rng);
    let t = net.trace(&x).unwrap();
    assert_eq!(t.len(), 4);
    assert_eq!(t[0], x);
    assert_eq!(t[3], net.forward(&x).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn equivariance_holds_for_random_draws(seed in any::<u64>(), n in 1usize..10, fam in 0usize..3, k in 2usize..6) {
        let mut rng = RngStream::new(seed);
        let (family, k) = match fam {
            0 => (Family::U1, 2),
            1 => (Family::So2, 2),
            _ => (Family::Ok, k),
        };
        let sigma = rng.uniform_range(0.3, 2.5);
        let w = init_weights(family, n, k, sigma, InitScheme::Gaussian, &mut rng).unwrap();
        let x = random_state(2, n, k, rng.uniform_range(0.01, 5.0), &mut rng);
        let g = random_element(k, &mut rng);
        prop_assert!(commutation_error(&w, &g, &x) <= 1e-10);
    }

    #[test]
    fn radial_preserves_direction(seed in any::<u64>(), k in 1usize..6, scale in 1e-8f64..50.0) {
        let mut rng = RngStream::new(seed);
        let x = random_state(1, 3, k, scale, &mut rng);
        let y = radial_nonlinearity(&x, DEFAULT_EPS);
        let mx = x.magnitudes();
        let my = y.magnitudes();
        for alpha in 0..3 {
            prop_assert!(my[[0, alpha]] < 1.0);
            if mx[[0, alpha]] > 0.0 {
                let ratio = my[[0, alpha]] / mx[[0, alpha]];
                for (a, b) in x.capsule(0, alpha).iter().zip(y.capsule(0, alpha)) {
                    prop_assert!((a * ratio - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }
}
