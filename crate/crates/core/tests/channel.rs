use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rofhp_core::arrays::{steering, ArrayKind};
use rofhp_core::channel::{geometric_channel, sample_paths, sv_single_cluster_channel};
use rofhp_core::montecarlo::rng_substream;
use rofhp_core::{ArrayGeometry, CarrierPlan, ChannelRealization, GainModel, Path, PathSet};

const LAMBDA: f64 = 10.7e-3;

fn ula(m: usize) -> ArrayGeometry {
    ArrayGeometry::ula(m, LAMBDA / 2.0).unwrap()
}

fn uspa(m: usize) -> ArrayGeometry {
    ArrayGeometry::uspa(m, LAMBDA / 2.0).unwrap()
}

/// Element-by-element accumulation of `√(M/L) Σ_l α_l conj(a_t)`.
fn loop_channel(paths: &PathSet, tx: &ArrayGeometry) -> Vec<Vec<Complex64>> {
    let m = tx.elements();
    let side = tx.side();
    let k = 2.0 * PI / LAMBDA * tx.spacing();
    paths
        .users
        .iter()
        .map(|user| {
            let mut row = vec![Complex64::new(0.0, 0.0); m];
            let scale = (m as f64 / user.paths.len() as f64).sqrt() / (m as f64).sqrt();
            for p in &user.paths {
                for (idx, entry) in row.iter_mut().enumerate() {
                    let (r, c) = (idx / side, idx % side);
                    let phase = k
                        * (r as f64 * p.aod_azimuth.sin() * p.aod_elevation.sin()
                            + c as f64 * p.aod_elevation.cos());
                    *entry += p.gain * Complex64::from_polar(scale, -phase);
                }
            }
            row
        })
        .collect()
}

#[test]
fn sv_channel_matches_loop_reconstruction() {
    let tx = uspa(16);
    for seed in 0..20 {
        let paths = sample_paths(
            &mut rng_substream(seed, 0),
            3,
            4,
            ArrayKind::Uspa,
            GainModel::Rayleigh,
        )
        .unwrap();
        let fast = sv_single_cluster_channel(&paths, &tx, &ula(1), LAMBDA).unwrap();
        let slow = loop_channel(&paths, &tx);
        for (h, want) in fast.iter().zip(&slow) {
            for (m, w) in want.iter().enumerate() {
                assert!((h[(0, m)] - w).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn uspa_channel_norm_is_four_for_unit_gain() {
    let path = Path {
        gain: Complex64::new(1.0, 0.0),
        aod_azimuth: 1.1,
        aod_elevation: -0.4,
        aoa: 0.0,
    };
    let set = PathSet::new(vec![rofhp_core::channel::UserPaths { paths: vec![path] }]).unwrap();
    let h = sv_single_cluster_channel(&set, &uspa(16), &ula(1), LAMBDA).unwrap();
    assert!((h[0].norm() - 4.0).abs() < 1e-13);
}

#[test]
fn line_of_sight_norm_identity_per_realization() {
    let (m, n, k) = (16usize, 2usize, 4usize);
    for seed in 0..50 {
        let paths = sample_paths(
            &mut rng_substream(seed, 1),
            k,
            1,
            ArrayKind::Ula,
            GainModel::Rayleigh,
        )
        .unwrap();
        let h = geometric_channel(&paths, &ula(m), &ula(n), LAMBDA).unwrap();
        let total: f64 = h.iter().map(|x| x.norm_squared()).sum();
        let alpha: f64 = paths.gains_sq().iter().flatten().sum();
        let ratio = total * k as f64 / (m as f64 * alpha * n as f64 * k as f64);
        assert!((ratio - 1.0).abs() < 1e-9, "{ratio}");
    }
}

#[test]
fn mean_channel_energy_is_mn() {
    let (m, n, l) = (8usize, 2usize, 3usize);
    let draws = 10_000u64;
    let energies: Vec<f64> = (0..draws)
        .map(|t| {
            let paths = sample_paths(
                &mut rng_substream(99, t),
                1,
                l,
                ArrayKind::Ula,
                GainModel::Rayleigh,
            )
            .unwrap();
            geometric_channel(&paths, &ula(m), &ula(n), LAMBDA).unwrap()[0].norm_squared()
        })
        .collect();
    let mean = energies.iter().sum::<f64>() / draws as f64;
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    let se = (var / draws as f64).sqrt();
    let target = (m * n) as f64;
    assert!(
        (mean - target).abs() < 3.0 * se,
        "mean {mean} vs {target} (se {se})"
    );
}

#[test]
fn gain_and_azimuth_statistics() {
    let paths = sample_paths(
        &mut rng_substream(5, 0),
        1000,
        1000,
        ArrayKind::Uspa,
        GainModel::Rayleigh,
    )
    .unwrap();
    let all: Vec<&Path> = paths.users.iter().flat_map(|u| &u.paths).collect();
    let n = all.len() as f64;
    let power = all.iter().map(|p| p.gain.norm_sqr()).sum::<f64>() / n;
    assert!((power - 1.0).abs() < 0.005, "{power}");

    let mut az: Vec<f64> = all.iter().map(|p| p.aod_azimuth / (2.0 * PI)).collect();
    az.sort_by(f64::total_cmp);
    let ks = az
        .iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / n).abs().max((u - (i + 1) as f64 / n).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.005, "{ks}");
    assert!(all
        .iter()
        .all(|p| (-PI / 2.0..=PI / 2.0).contains(&p.aod_elevation)));
}

#[test]
fn fixture_path_set_loads() {
    let text = include_str!("fixtures/paths.json");
    let set = PathSet::from_json(text).unwrap();
    assert_eq!(set.num_users(), 2);
    assert_eq!(set.users[1].paths.len(), 2);
    assert_eq!(PathSet::from_json(&set.to_json()).unwrap(), set);
    assert!(PathSet::from_json(
        r#"{"users":[{"paths":[{"re":1,"im":0,"aod_az":0,"aod_el":0,"aoa":0,"x":1}]}]}"#
    )
    .is_err());
}

#[test]
fn equal_wavelengths_give_equal_carrier_channels() {
    let paths = sample_paths(
        &mut rng_substream(2, 2),
        3,
        2,
        ArrayKind::Uspa,
        GainModel::Rayleigh,
    )
    .unwrap();
    let real = ChannelRealization::build(
        paths,
        &uspa(16),
        &ula(1),
        &CarrierPlan::shared(LAMBDA, 3).unwrap(),
    )
    .unwrap();
    for user in &real.matrices {
        assert_eq!(user[0], user[1]);
        assert_eq!(user[0], user[2]);
    }
}

proptest! {
    #[test]
    fn steering_vectors_have_unit_norm(az in 0.0..2.0 * PI, el in -PI / 2.0..PI / 2.0, side in 1usize..9) {
        let g = ArrayGeometry::uspa(side * side, LAMBDA / 2.0).unwrap();
        prop_assert!((steering(az, el, LAMBDA, &g).norm() - 1.0).abs() < 1e-12);
        let g = ula(side * 3);
        prop_assert!((steering(az, el, LAMBDA, &g).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_is_linear_in_each_gain(seed in 0u64..1000, scale in 0.1f64..5.0) {
        let mut paths = sample_paths(&mut rng_substream(seed, 0), 2, 3, ArrayKind::Ula, GainModel::Rayleigh).unwrap();
        let (tx, rx) = (ula(8), ula(2));
        let base = geometric_channel(&paths, &tx, &rx, LAMBDA).unwrap();
        let mut only = paths.clone();
        for (l, p) in only.users[0].paths.iter_mut().enumerate() {
            if l != 1 { p.gain = Complex64::new(0.0, 0.0); }
        }
        let term = geometric_channel(&only, &tx, &rx, LAMBDA).unwrap();
        paths.users[0].paths[1].gain *= scale;
        let scaled = geometric_channel(&paths, &tx, &rx, LAMBDA).unwrap();
        let want = &base[0] + &term[0] * Complex64::new(scale - 1.0, 0.0);
        prop_assert!((&scaled[0] - want).norm() < 1e-12 * (1.0 + base[0].norm()));
        prop_assert_eq!(&scaled[1], &base[1]);
    }

    #[test]
    fn channel_rank_bounded_by_paths(seed in 0u64..1000, l in 1usize..4) {
        let paths = sample_paths(&mut rng_substream(seed, 3), 1, l, ArrayKind::Ula, GainModel::Rayleigh).unwrap();
        let h = geometric_channel(&paths, &ula(12), &ula(6), LAMBDA).unwrap().remove(0);
        let s = h.singular_values();
        let rank = s.iter().filter(|&&x| x > 1e-8 * s.max()).count();
        prop_assert!(rank <= l);
    }

    #[test]
    fn sampling_is_reproducible(seed in any::<u64>(), k in 1usize..5, l in 1usize..4) {
        let a = sample_paths(&mut rng_substream(seed, 0), k, l, ArrayKind::Uspa, GainModel::Rayleigh).unwrap();
        let b = sample_paths(&mut rng_substream(seed, 0), k, l, ArrayKind::Uspa, GainModel::Rayleigh).unwrap();
        prop_assert_eq!(a, b);
    }
}
