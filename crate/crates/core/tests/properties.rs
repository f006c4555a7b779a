use latent_spectra::dynamics::{cross_corr_analytic, expected_mode_strength, spearman, StrengthMethod, TimestepDist};
use latent_spectra::eigen::{channel_autocorr, cov_penalty_matrix, effective_rank, eigh, pc_project, SymMatrix};
use latent_spectra::masking::{apply_mask, gen_mask, MaskToken};
use latent_spectra::npy::{decode, encode, AnyBatch};
use latent_spectra::spectrum::{dct3, idct3, psd};
use latent_spectra::tensor::standardize;
use latent_spectra::{Dims, LatentBatch, LatentTensor};
use proptest::prelude::*;

fn small_dims() -> impl Strategy<Value = Dims> {
    (1usize..5, 1usize..7, 1usize..7, 1usize..5).prop_map(|(t, h, w, c)| Dims::new(t, h, w, c).unwrap())
}

fn tensor() -> impl Strategy<Value = LatentTensor<f64>> {
    small_dims().prop_flat_map(|d| {
        prop::collection::vec(-10.0f64..10.0, d.len()).prop_map(move |v| LatentTensor::from_vec(d, v).unwrap())
    })
}

fn batch(min_positions: usize) -> impl Strategy<Value = LatentBatch<f64>> {
    (2usize..4, 2usize..6, 2usize..6, 1usize..6, 1usize..4)
        .prop_filter("enough positions", move |(t, h, w, _, b)| t * h * w * b >= min_positions)
        .prop_flat_map(|(t, h, w, c, b)| {
            let d = Dims::new(t, h, w, c).unwrap();
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d.len()), b).prop_map(move |items| {
                LatentBatch::new(items.into_iter().map(|v| LatentTensor::from_vec(d, v).unwrap()).collect()).unwrap()
            })
        })
}

fn sym(n: usize) -> impl Strategy<Value = SymMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| SymMatrix::symmetrized(n, &v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dct_preserves_energy_and_inverts(x in tensor()) {
        let c = dct3(&x);
        let e = x.sum_squares();
        prop_assert!((c.energy() - e).abs() <= 1e-10 * e.max(1.0));
        prop_assert!(idct3(&c).max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn psd_is_a_distribution(b in batch(1), bins in 1usize..25) {
        let d = b.dims();
        let bins = 1 + (bins - 1) % (d.t * d.h * d.w);
        let curve = psd(&b, bins).unwrap();
        prop_assert_eq!(curve.energy.len(), bins);
        prop_assert!(curve.energy.iter().all(|e| *e >= 0.0));
        let total: f64 = curve.energy.iter().sum();
        prop_assert!(total == 0.0 || (total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn standardize_is_idempotent(b in batch(8)) {
        if let Ok((once, _)) = standardize(&b) {
            let (twice, _) = standardize(&once).unwrap();
            for (x, y) in once.items().iter().zip(twice.items()) {
                prop_assert!(x.max_abs_diff(y) < 1e-9);
            }
        }
    }

    #[test]
    fn eigh_reconstructs_and_orders(a in (1usize..9).prop_flat_map(sym)) {
        let e = eigh(&a).unwrap();
        let n = a.order();
        let rec = e.reconstruct();
        let scale = a.max_abs().max(1.0);
        for (r, x) in rec.iter().zip(a.data()) {
            prop_assert!((r - x).abs() < 1e-10 * scale);
        }
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|r| e.vectors[r * n + i] * e.vectors[r * n + j]).sum();
                let delta = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - delta).abs() < 1e-10);
            }
        }
        prop_assert!((e.values.iter().sum::<f64>() - a.trace()).abs() < 1e-10 * scale * n as f64);
    }

    #[test]
    fn autocorr_is_psd_and_penalty_bounded(b in batch(1), k in 0usize..6) {
        let sigma = channel_autocorr(&b);
        let e = eigh(&sigma).unwrap();
        let floor = -1e-9 * sigma.max_abs().max(1.0);
        prop_assert!(e.values.iter().all(|v| *v >= floor));
        let c = sigma.order();
        if k >= 1 && k < c {
            let p = cov_penalty_matrix(&sigma, k).unwrap();
            prop_assert!(p.value >= floor && p.value <= sigma.trace() + 1e-9);
        }
        if sigma.trace() > 1e-9 {
            let er = effective_rank(&e.values).unwrap();
            prop_assert!(er >= 1.0 - 1e-9 && er <= c as f64 + 1e-9);
        }
    }

    #[test]
    fn projection_is_idempotent(b in batch(1), pick in prop::collection::vec(0usize..5, 1..4)) {
        let e = eigh(&channel_autocorr(&b)).unwrap();
        let c = b.dims().c;
        let subset: Vec<usize> = pick.into_iter().map(|i| i % c).collect();
        let x = &b.items()[0];
        let once = pc_project(x, &e, &subset).unwrap();
        let twice = pc_project(&once, &e, &subset).unwrap();
        prop_assert!(once.max_abs_diff(&twice) < 1e-10);
        let all: Vec<usize> = (0..c).collect();
        prop_assert!(pc_project(x, &e, &all).unwrap().max_abs_diff(x) < 1e-10);
    }

    #[test]
    fn cross_correlation_shares_eigenbasis(a in (1usize..7).prop_flat_map(sym), t in 0.0f64..=1.0) {
        let r = cross_corr_analytic(&a, t).unwrap();
        prop_assert!(a.commutator_max(&r) < 1e-12 * a.max_abs().max(1.0));
        let ea = eigh(&a).unwrap();
        let er = eigh(&r).unwrap();
        let mut want: Vec<f64> = ea.values.iter().map(|l| t - (1.0 - t) * l).collect();
        want.sort_by(|x, y| y.total_cmp(x));
        for (g, w) in er.values.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-10);
        }
    }

    #[test]
    fn mode_strength_is_affine_in_lambda(l in prop::collection::vec(0.0f64..10.0, 1..10), m in -1.0f64..1.0, s in 0.3f64..2.0) {
        let dist = TimestepDist::logit_normal(m, s).unwrap();
        let c = expected_mode_strength(&l, &dist, StrengthMethod::Quadrature { nodes: 64 }).unwrap();
        for (lam, sb) in l.iter().zip(&c.s_bar) {
            prop_assert!((sb - (c.mean_t * (1.0 + lam) - lam)).abs() < 1e-12);
        }
        prop_assert!(c.mean_t > 0.0 && c.mean_t < 1.0);
    }

    #[test]
    fn spearman_is_bounded_and_rank_invariant(x in prop::collection::vec(-5.0f64..5.0, 3..20)) {
        let y: Vec<f64> = x.iter().map(|v| v * v * v + 1.0).collect();
        if let Ok(r) = spearman(&x, &y) {
            prop_assert!((r - 1.0).abs() < 1e-12);
        }
        let z: Vec<f64> = x.iter().rev().cloned().collect();
        if let Ok(r) = spearman(&x, &z) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }

    #[test]
    fn mask_counts_and_formula(
        t in 1usize..6, h in 2usize..10, w in 2usize..10, unit in 1usize..3,
        r in 0.0f64..=1.0, seed in any::<u64>(),
    ) {
        prop_assume!(h >= unit && w >= unit);
        let m = gen_mask([t, h, w], r, unit, seed).unwrap();
        prop_assert_eq!(m.dropped_blocks(), (r * m.blocks() as f64).round() as usize);
        prop_assert_eq!(&m, &gen_mask([t, h, w], r, unit, seed).unwrap());
        let d = Dims::new(t, h, w, 2).unwrap();
        let z = LatentTensor::from_fn(d, |a, b, c, ch| (a * 100 + b * 10 + c) as f64 + ch as f64 * 0.5).unwrap();
        let token = MaskToken::new(vec![-7.0, 9.0]).unwrap();
        let out = apply_mask(&z, &m, &token).unwrap();
        for (a, b, c) in (0..t).flat_map(|a| (0..h).flat_map(move |b| (0..w).map(move |c| (a, b, c)))) {
            for ch in 0..2 {
                let want = if m.kept(a, b, c) { z.get(a, b, c, ch) } else { token.values()[ch] };
                prop_assert_eq!(out.get(a, b, c, ch), want);
            }
        }
    }

    #[test]
    fn npy_round_trip(b in batch(1)) {
        prop_assert_eq!(decode(&encode(&b)).unwrap(), AnyBatch::F64(b.clone()));
        let f = b.cast::<f32>();
        prop_assert_eq!(decode(&encode(&f)).unwrap(), AnyBatch::F32(f));
    }
}
