use matree::analytic::{
    composition_limit, degree_law_table, laplace_kernel, laplace_kernel_closed, laplace_kernel_series, malthusian,
    perron, KernelOptions, LatticeBounds, LatticeTable, MalthusianOptions, PerronOptions,
};
use matree::presets;
use matree::rates::RateSpec;
use proptest::prelude::*;

fn linear_spec(p: usize) -> impl Strategy<Value = RateSpec> {
    (
        prop::collection::vec(0.0f64..2.0, p * p),
        prop::collection::vec(0.1f64..3.0, p * p),
    )
        .prop_map(move |(g, b)| {
            let rows = |v: &[f64]| v.chunks(p).map(<[f64]>::to_vec).collect::<Vec<_>>();
            RateSpec::linear_total(rows(&g), rows(&b)).unwrap()
        })
}

fn max_row_gamma(spec: &RateSpec) -> f64 {
    let (gamma, _) = spec.linear_params().unwrap();
    gamma.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn perron_root_decreases_in_theta(spec in linear_spec(2), a in 0.05f64..2.0, d in 0.05f64..2.0) {
        let t0 = max_row_gamma(&spec) + a;
        let t1 = t0 + d;
        let rho = |t: f64| {
            let k = laplace_kernel_closed(&spec, t).unwrap().to_dense().unwrap();
            perron(&k, &PerronOptions::default()).unwrap().rho
        };
        prop_assert!(rho(t1) < rho(t0));
    }

    #[test]
    fn closed_and_series_kernels_agree(spec in linear_spec(2), a in 0.3f64..3.0) {
        let theta = max_row_gamma(&spec) + a;
        let closed = laplace_kernel_closed(&spec, theta).unwrap();
        let series = laplace_kernel_series(&spec, theta, &KernelOptions::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let (c, s) = (closed.get(i, j).unwrap(), series.get(i, j).unwrap());
                prop_assert!((c - s).abs() <= 1e-8 * c.max(1.0), "{c} vs {s}");
            }
        }
    }

    #[test]
    fn composition_is_a_distribution(spec in linear_spec(3)) {
        let sol = malthusian(&spec, &MalthusianOptions::default()).unwrap();
        let c = composition_limit(&sol);
        prop_assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(c.iter().all(|&x| x > 0.0));
        prop_assert!(sol.rho_residual.abs() <= 1e-10);
    }
}

#[test]
fn theta_times_lattice_mass_tends_to_one() {
    // theta * sum_n I_i(n, theta) = 1 when the lattice covers all mass.
    let spec = presets::cross_attachment(2.0);
    for theta in [4.0, 6.0, 10.0] {
        for i in 0..2 {
            let table = LatticeTable::compute(&spec, i, theta, LatticeBounds::Total(2000)).unwrap();
            let m = table.mass();
            assert!((m - 1.0).abs() < 1e-4, "theta={theta} i={i} mass={m}");
        }
    }
}

#[test]
fn degree_law_sums_to_composition() {
    let spec = presets::self_attachment(1.0);
    let sol = malthusian(&spec, &MalthusianOptions::default()).unwrap();
    let law = degree_law_table(&spec, &sol, 20_000).unwrap();
    for i in 0..2 {
        let s: f64 = (0..=law.k_max()).map(|k| law.limit_fraction(i, k)).sum();
        assert!((s - law.composition[i]).abs() < 1e-6, "type {i}: {s}");
    }
}

#[test]
fn lattice_kernel_approaches_closed_form() {
    let spec = presets::boosted_type2(1.0);
    let theta = 5.0;
    let closed = laplace_kernel_closed(&spec, theta).unwrap();
    let coarse = matree::analytic::laplace_kernel_lattice(&spec, theta, 100).unwrap();
    let fine = matree::analytic::laplace_kernel_lattice(&spec, theta, 400).unwrap();
    for i in 0..2 {
        assert!(fine.residual_mass[i] < coarse.residual_mass[i]);
        for j in 0..2 {
            let c = closed.get(i, j).unwrap();
            let (l0, l1) = (coarse.get(i, j).unwrap(), fine.get(i, j).unwrap());
            // Truncation only drops positive terms.
            assert!(l0 < l1 && l1 <= c + 1e-12, "{c} vs {l0}, {l1}");
            assert!((c - l1) / c < 1e-2);
        }
    }
    // The router picks the closed form for linear families.
    assert_eq!(laplace_kernel(&spec, theta, &KernelOptions::default()).unwrap(), closed);
}

#[test]
fn self_attachment_composition_is_monotone() {
    let comps: Vec<f64> = presets::SWEEP_GRID
        .iter()
        .map(|&g| {
            let sol = malthusian(&presets::self_attachment(g), &MalthusianOptions::default()).unwrap();
            composition_limit(&sol)[0]
        })
        .collect();
    assert!(comps.windows(2).all(|w| w[0] < w[1]), "{comps:?}");
    assert!((comps[2] - 0.5).abs() < 1e-9);
}
