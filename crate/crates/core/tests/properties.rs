mod common;

use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use supkde::data::Dataset;
use supkde::estimators::{a_hat, sup_norm_diff, BandwidthVector, Fitter};
use supkde::harness::mc::{fit_rate, risk_from_errors};
use supkde::kernels::{ConvolutionCache, Kernel};
use supkde::partitions::{diamond, enumerate_all, refines, Partition, PartitionFamily};

/// Random set partition of `{0..dim}` from a restricted growth string.
fn partition(dim: usize) -> impl Strategy<Value = Partition> {
    proptest::collection::vec(0usize..dim, dim).prop_map(move |raw| {
        let mut labels = Vec::with_capacity(dim);
        let mut next = 0;
        for r in raw {
            let l = r.min(next);
            if l == next {
                next += 1;
            }
            labels.push(l);
        }
        let mut blocks = vec![Vec::new(); next];
        for (j, l) in labels.into_iter().enumerate() {
            blocks[l].push(j);
        }
        Partition::new(dim, blocks).unwrap()
    })
}

fn dyadic_bandwidth(dim: usize) -> impl Strategy<Value = BandwidthVector> {
    proptest::collection::vec(0u32..4, dim).prop_map(|levels| BandwidthVector::dyadic(&levels))
}

fn kernel_data(n: usize, dim: usize) -> impl Strategy<Value = Dataset> {
    proptest::collection::vec(0.3f64..0.7, n * dim).prop_map(move |v| Dataset::from_row_major(n, dim, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn meet_is_a_lattice_meet(p in partition(7), q in partition(7), r in partition(7)) {
        let pq = diamond(&p, &q).unwrap();
        prop_assert_eq!(&pq, &diamond(&q, &p).unwrap());
        prop_assert_eq!(&diamond(&p, &p).unwrap(), &p);
        prop_assert_eq!(diamond(&pq, &r).unwrap(), diamond(&p, &diamond(&q, &r).unwrap()).unwrap());
        prop_assert_eq!(&pq, &brute_meet(&p, &q));
        prop_assert!(refines(&pq, &p).unwrap() && refines(&pq, &q).unwrap());
        if refines(&r, &p).unwrap() && refines(&r, &q).unwrap() {
            prop_assert!(refines(&r, &pq).unwrap());
        }
    }

    #[test]
    fn partition_text_forms_round_trip(p in partition(9)) {
        let json = serde_json::to_string(&p).unwrap();
        let back: Partition = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &p);
        let shown = p.to_string();
        prop_assert_eq!(shown.replace('{', "[").replace('}', "]"), json);
        prop_assert_eq!(p.blocks().iter().map(Vec::len).sum::<usize>(), 9);
    }

    #[test]
    fn families_always_contain_the_trivial_partition(ps in proptest::collection::vec(partition(5), 0..6)) {
        let fam = PartitionFamily::from_members(5, ps.clone()).unwrap();
        prop_assert_eq!(&fam.members()[0], &Partition::trivial(5));
        for p in &ps {
            prop_assert!(fam.contains(p));
        }
    }

    #[test]
    fn penalty_shrinks_as_volume_grows(h in dyadic_bandwidth(3), p in partition(3), f_bar in 1.0f64..5.0) {
        let n = 500;
        let a = a_hat(f_bar, &h, &p, n);
        let wider = BandwidthVector::new(h.as_slice().iter().map(|v| (2.0 * v).min(1.0)).collect()).unwrap();
        prop_assert!(a_hat(f_bar, &wider, &p, n) <= a);
        let finest = diamond(&p, &Partition::singletons(3)).unwrap();
        // V(h, P) = Σ_blocks V_{h_I} is largest for the finest partition.
        prop_assert!(a_hat(f_bar, &h, &finest, n) <= a);
    }

    #[test]
    fn sup_distance_is_a_metric(data in kernel_data(25, 2), h1 in dyadic_bandwidth(2), h2 in dyadic_bandwidth(2),
                                h3 in dyadic_bandwidth(2), p in partition(2)) {
        let kernel = Kernel::epanechnikov();
        let conv = ConvolutionCache::new(Arc::new(kernel), 257);
        let grid = Arc::new(square_grid(2, -0.8, 0.1, 27));
        let fitter = Fitter::new(&data, grid, &conv).unwrap();
        let a = fitter.plain(&h1, &p).unwrap();
        let b = fitter.plain(&h2, &p).unwrap();
        let c = fitter.pair(&h3, &p, &h1, &Partition::singletons(2)).unwrap();
        let ab = sup_norm_diff(&a, &b).unwrap();
        prop_assert_eq!(ab, sup_norm_diff(&b, &a).unwrap());
        prop_assert_eq!(sup_norm_diff(&a, &a).unwrap(), 0.0);
        let bound = sup_norm_diff(&a, &c).unwrap() + sup_norm_diff(&c, &b).unwrap();
        prop_assert!(ab <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn singleton_estimator_is_product_of_marginals(data in kernel_data(20, 2), h in dyadic_bandwidth(2)) {
        let kernel = Kernel::epanechnikov();
        let conv = ConvolutionCache::new(Arc::new(kernel.clone()), 257);
        let grid = Arc::new(square_grid(2, -0.8, 0.1, 27));
        let fitter = Fitter::new(&data, Arc::clone(&grid), &conv).unwrap();
        let est = fitter.plain(&h, &Partition::singletons(2)).unwrap().materialize().unwrap();
        let x = brute_marginal(&data, &kernel, &[0], &h.as_slice()[..1], &grid);
        let y = brute_marginal(&data, &kernel, &[1], &h.as_slice()[1..], &grid);
        for (k, v) in est.iter().enumerate() {
            prop_assert_eq!(*v, x[k / 27] * y[k % 27]);
        }
    }

    #[test]
    fn estimator_mass_is_one_when_the_grid_covers(data in kernel_data(30, 1), level in 0u32..4) {
        let kernel = Kernel::epanechnikov();
        let conv = ConvolutionCache::new(Arc::new(kernel), 257);
        let grid = Arc::new(square_grid(1, -0.5, 1.0 / 512.0, 1025));
        let fitter = Fitter::new(&data, Arc::clone(&grid), &conv).unwrap();
        let h = BandwidthVector::dyadic(&[level]);
        let est = fitter.plain(&h, &Partition::trivial(1)).unwrap();
        let mass = est.tables()[0].riemann_mass(&grid);
        prop_assert!((mass - 1.0).abs() < 1e-4, "mass {}", mass);
    }

    #[test]
    fn risk_of_constant_errors_is_that_constant(e in 0.01f64..3.0, m in 2usize..40, q in 1.0f64..4.0) {
        let (risk, se) = risk_from_errors(&vec![e; m], q);
        prop_assert!((risk - e).abs() <= 1e-12 * e);
        prop_assert!(se.abs() <= 1e-9 * e);
    }

    #[test]
    fn rate_fit_recovers_power_laws(c in 0.1f64..10.0, slope in -1.0f64..-0.05) {
        let ns = [250usize, 500, 1000, 2000, 4000];
        let risks: Vec<f64> = ns.iter().map(|&n| c * (n as f64 / (n as f64).ln()).powf(slope)).collect();
        let fit = fit_rate(&ns, &risks).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
    }
}

#[test]
fn every_enumerated_partition_round_trips_through_json() {
    for d in 1..=5 {
        for p in enumerate_all(d).unwrap().members() {
            let back: Partition = serde_json::from_str(&serde_json::to_string(p).unwrap()).unwrap();
            assert_eq!(&back, p);
        }
    }
}
