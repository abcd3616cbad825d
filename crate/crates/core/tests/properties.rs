use std::f64::consts::{FRAC_PI_4, PI, TAU};

use linoptics::calibration::{closed_form, physical_probability};
use linoptics::experiment::{
    detector_intensities, phi_grid, prepare_state, reference_state, xf, ExperimentConfig, Pipeline,
};
use linoptics::optics::{loss_matrix, phase_matrix, splitter_matrix};
use linoptics::synthesis::{haar_unitary, qft3_circuit, qft_matrix, reck_decompose};
use linoptics::{apply, AmplitudeVector, CircuitDescription, OpticalElement};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn element(dim: usize, lossy: bool) -> impl Strategy<Value = OpticalElement> {
    let angle = -PI..PI;
    let pair = (0..dim, 1..dim).prop_map(move |(j, d)| (j, (j + d) % dim));
    prop_oneof![
        (pair, 0.0..FRAC_PI_4 * 2.0, angle.clone(), angle.clone()).prop_map(|((j, k), chi, alpha, theta)| {
            OpticalElement::Splitter {
                j,
                k,
                chi,
                alpha,
                theta,
            }
        }),
        (0..dim, angle.clone()).prop_map(|(j, beta)| OpticalElement::phase(j, beta)),
        (0..dim, angle).prop_map(|(j, psi)| OpticalElement::mirror(j, psi)),
        (0..dim, if lossy { 0.0..1.0f64 } else { 1.0..1.0000001f64 }).prop_map(|(j, t): (usize, f64)| OpticalElement::loss(j, t.min(1.0))),
    ]
}

fn circuit(lossy: bool) -> impl Strategy<Value = CircuitDescription> {
    (2usize..6).prop_flat_map(move |dim| {
        prop::collection::vec(element(dim, lossy), 0..24).prop_map(move |elements| CircuitDescription { dim, elements })
    })
}

proptest! {
    #[test]
    fn lossless_circuits_are_unitary(c in circuit(false)) {
        prop_assert!(c.compose().unwrap().unitarity_defect() < 1e-12);
    }

    #[test]
    fn lossy_circuits_are_passive(c in circuit(true)) {
        let m = c.compose().unwrap();
        prop_assert!(m.singular_values()[0] <= 1.0 + 1e-12);
        let v = apply(&m, &AmplitudeVector::phase_ramp(c.dim, 0.3)).unwrap();
        prop_assert!(v.norm_sqr() <= 1.0 + 1e-12);
    }

    #[test]
    fn composition_is_right_to_left(c in circuit(true)) {
        let mut expected = linoptics::TransferMatrix::identity(c.dim);
        for e in &c.elements {
            expected = &e.matrix(c.dim).unwrap() * &expected;
        }
        prop_assert!(c.compose().unwrap().max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn netlist_json_round_trip(c in circuit(true)) {
        let back = CircuitDescription::from_json(&c.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn decomposition_round_trip(seed in any::<u64>(), dim in 2usize..=8) {
        let u = haar_unitary(dim, &mut ChaCha8Rng::seed_from_u64(seed));
        let c = reck_decompose(&u, 1e-11).unwrap();
        prop_assert!(c.compose().unwrap().max_abs_diff(&u) < 1e-10);
    }
}

#[test]
fn splitter_leaves_other_modes_alone() {
    let m = splitter_matrix(5, 1, 3, 0.7, 0.4, -1.1).unwrap();
    for k in [0, 2, 4] {
        let out = apply(&m, &AmplitudeVector::basis(5, k).unwrap()).unwrap();
        assert_eq!(out, AmplitudeVector::basis(5, k).unwrap());
    }
    assert!(phase_matrix(3, 3, 0.1).is_err());
    assert!(loss_matrix(3, 0, 1.2).is_err());
}

#[test]
fn half_period_phase_convention_does_not_discriminate() {
    // With phi = m pi / d the Fourier output is not a basis state.
    let f = qft_matrix(3).unwrap();
    let out = apply(&f, &AmplitudeVector::phase_ramp(3, PI / 3.0)).unwrap().intensities();
    assert!(out.iter().all(|v| *v < 0.99));
    let out = apply(&f, &AmplitudeVector::phase_ramp(3, TAU / 3.0)).unwrap().intensities();
    assert!((out[1] - 1.0).abs() < 1e-12);
}

#[test]
fn curves_are_periodic() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cfg = ExperimentConfig::default().with_random_phases(&mut rng);
    let p = Pipeline::new(&cfg, cfg.x).unwrap();
    for phi in phi_grid(90) {
        let (a, b) = (p.intensities(phi), p.intensities(phi + TAU));
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn more_loss_never_adds_light() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let base = ExperimentConfig::default().with_random_phases(&mut rng);
    let total = |cfg: &ExperimentConfig, phi: f64| detector_intensities(cfg.x, phi, cfg).unwrap().iter().sum::<f64>();
    let tweaks: [fn(&mut ExperimentConfig); 3] = [|c| c.t_ps *= 0.9, |c| c.t_phi *= 0.8, |c| c.t_2phi *= 0.7];
    for tweak in tweaks {
        let mut lossier = base.clone();
        tweak(&mut lossier);
        for phi in phi_grid(72) {
            assert!(total(&lossier, phi) <= total(&base, phi) + 1e-12);
        }
    }
}

#[test]
fn lossless_fourier_point_is_ideal_transform_of_prepared_light() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let cfg = ExperimentConfig {
        chi0: FRAC_PI_4,
        t_ps: 1.0,
        t_phi: 1.0,
        t_2phi: 1.0,
        ..ExperimentConfig::default()
    }
    .with_random_phases(&mut rng);
    let f = qft3_circuit().compose().unwrap();
    let x = xf(&cfg);
    for phi in phi_grid(60) {
        let ideal = apply(&f, &reference_state(phi, &cfg)).unwrap().intensities();
        let got = detector_intensities(x, phi, &cfg).unwrap();
        for i in 0..3 {
            assert!((ideal[i] - got[i]).abs() < 1e-12);
        }
        assert!((prepare_state(phi, &cfg).unwrap().norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn closed_forms_hold_for_random_incidental_phases() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..20 {
        let cfg = ExperimentConfig::default().with_random_phases(&mut rng).at_fourier_point();
        for phi in [0.0, 1.3, 3.9] {
            for k in 0..24 {
                let dx = TAU * k as f64 / 24.0;
                for s in 1..=3u8 {
                    let sim = physical_probability(s, cfg.x[s as usize - 1] + dx, phi, &cfg).unwrap();
                    let cf = closed_form(s, dx, phi, &cfg).unwrap();
                    assert!((sim - cf).abs() < 1e-9, "p{s}");
                }
            }
        }
    }
}
