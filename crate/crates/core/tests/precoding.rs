use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use rofhp_core::arrays::{steering, ArrayKind};
use rofhp_core::channel::sample_paths;
use rofhp_core::montecarlo::rng_substream;
use rofhp_core::precoding::{
    build_oawg_weights, build_photonic_beamformer, carrier_assignment, default_combiners,
    effective_channel, mmse_baseband, normalize_total_power, zf_baseband,
};
use rofhp_core::{
    ArrayGeometry, CMatrix, CVector, CarrierPlan, ChannelRealization, GainModel, PrecoderSet,
};

const LAMBDA: f64 = 10.7e-3;

fn random_matrix(seed: u64, rows: usize, cols: usize) -> CMatrix {
    let mut rng = rng_substream(seed, 77);
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    })
}

struct Setup {
    channel: ChannelRealization,
    combiners: Vec<CVector>,
    set: PrecoderSet,
    h_p: CMatrix,
}

fn setup(seed: u64, m: usize, k: usize, n_r: usize, kind: ArrayKind) -> Setup {
    let tx = ArrayGeometry::new(kind, m, LAMBDA / 2.0).unwrap();
    let rx = ArrayGeometry::ula(1, LAMBDA / 2.0).unwrap();
    let plan = CarrierPlan::shared(LAMBDA, n_r).unwrap();
    let paths = sample_paths(&mut rng_substream(seed, 0), k, 1, kind, GainModel::Rayleigh).unwrap();
    let channel = ChannelRealization::build(paths, &tx, &rx, &plan).unwrap();
    let combiners = default_combiners(&channel.paths, &rx, LAMBDA).unwrap();
    let bf = build_photonic_beamformer(
        &channel.paths,
        &tx,
        &plan,
        &carrier_assignment(n_r, k).unwrap(),
    )
    .unwrap();
    let f = build_oawg_weights(&bf, k);
    let h_p = effective_channel(&channel, &combiners, &bf, &f).unwrap();
    let f_bb = zf_baseband(&h_p).unwrap();
    let set = PrecoderSet::new(bf, f, f_bb, combiners.clone()).unwrap();
    Setup {
        channel,
        combiners,
        set,
        h_p,
    }
}

#[test]
fn beamformer_columns_peak_at_user_departure_angles() {
    let m = 16;
    let tx = ArrayGeometry::ula(m, LAMBDA / 2.0).unwrap();
    let plan = CarrierPlan::shared(LAMBDA, 3).unwrap();
    let paths = sample_paths(
        &mut rng_substream(3, 0),
        3,
        1,
        ArrayKind::Ula,
        GainModel::Rayleigh,
    )
    .unwrap();
    let bf = build_photonic_beamformer(&paths, &tx, &plan, &[0, 1, 2]).unwrap();
    let angles: Vec<f64> = (0..=36_000)
        .map(|i| i as f64 * 2.0 * std::f64::consts::PI / 36_000.0)
        .collect();
    for (n, user) in paths.users.iter().enumerate() {
        let col = bf.blocks()[0].column(n).into_owned();
        let (best, _) = angles
            .iter()
            .map(|&a| (a, steering(a, 0.0, LAMBDA, &tx).dotc(&col).norm()))
            .fold((0.0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        // sin(φ) is what the ULA resolves.
        assert!((best.sin() - user.paths[0].aod_azimuth.sin()).abs() < 1e-3);
    }
}

#[test]
fn effective_channel_matches_single_product() {
    for seed in 0..30 {
        let s = setup(seed, 16, 3, 4, ArrayKind::Uspa);
        let mut h = CMatrix::zeros(3, 16);
        for (k, row) in s.channel.matrices.iter().enumerate() {
            let r = s.combiners[k].adjoint() * &row[0];
            h.set_row(k, &r.row(0));
        }
        // All carriers equal: the analog stage acts through H once per block.
        let carriers = s.set.f_rof.carriers() as f64;
        let sum: CMatrix = s
            .set
            .f_rof
            .blocks()
            .iter()
            .map(|b| &h * b)
            .fold(CMatrix::zeros(3, 4), |acc, x| acc + x);
        let diag = CMatrix::from_diagonal(&s.set.f_oawg);
        let want = sum * diag / Complex64::new(carriers.sqrt(), 0.0);
        assert!((&s.h_p - want).norm() < 1e-12 * s.h_p.norm());
    }
}

#[test]
fn zf_interference_is_negligible_relative_to_signal() {
    for seed in 0..200 {
        let s = setup(seed, 16, 3, 3, ArrayKind::Uspa);
        let set = normalize_total_power(s.set).unwrap();
        let g = &s.h_p * &set.f_bb;
        for k in 0..3 {
            let signal = g[(k, k)].norm_sqr();
            let leak: f64 = (0..3)
                .filter(|&m| m != k)
                .map(|m| g[(k, m)].norm_sqr())
                .sum();
            assert!(leak < 1e-12 * signal, "seed {seed}: {leak} vs {signal}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_constraints_hold(seed in 0u64..10_000, k in 1usize..4, extra in 0usize..3) {
        let n_r = k + extra;
        let s = setup(seed, 16, k, n_r, ArrayKind::Uspa);
        prop_assert!(s.set.f_rof.modulus_deviation() < 1e-12);
        prop_assert!((s.set.analog_stage().norm_squared() - k as f64).abs() < 1e-9);
        let norm = normalize_total_power(s.set).unwrap();
        prop_assert!((norm.composite().norm_squared() - (n_r * k) as f64).abs() < 1e-9);
        let again = normalize_total_power(norm.clone()).unwrap();
        prop_assert!((&again.f_bb - &norm.f_bb).norm() <= 4.0 * f64::EPSILON * norm.f_bb.norm());
    }

    #[test]
    fn zf_is_a_right_inverse(seed in 0u64..10_000, k in 1usize..5, extra in 0usize..4) {
        let h = random_matrix(seed, k, k + extra);
        let f = zf_baseband(&h).unwrap();
        prop_assert!((&h * &f - CMatrix::identity(k, k)).norm() < 1e-9);
        // Minimum norm: F lies in the row space of h.
        let proj = h.adjoint() * (&h * h.adjoint()).try_inverse().unwrap() * &h;
        prop_assert!((&proj * &f - &f).norm() < 1e-9 * f.norm());
    }

    #[test]
    fn mmse_shrinks_towards_zero(seed in 0u64..10_000, k in 1usize..4, snr in 0.01f64..100.0) {
        let h = random_matrix(seed, k, k + 1);
        let a = mmse_baseband(&h, snr, 1.0).unwrap();
        let zf = zf_baseband(&h).unwrap();
        prop_assert!(a.norm() <= zf.norm() * (1.0 + 1e-12));
        let direct = h.adjoint()
            * (&h * h.adjoint() + CMatrix::identity(k, k) * Complex64::new(1.0 / snr, 0.0))
                .try_inverse()
                .unwrap();
        prop_assert!((&a - direct).norm() < 1e-9 * a.norm());
    }
}
