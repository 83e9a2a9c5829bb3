use expsum::arith::{
    ramanujan_sum, ramanujan_sum_direct, sigma00_divisor_form, sigma00_mobius_form,
};
use expsum::bilinear;
use expsum::distribution::{self, D3Table};
use expsum::expsums::{
    hyper_kl3_degenerate_check, kloosterman_direct, kloosterman_split, HyperTable, KloosterTable,
};
use expsum::modarith::{gcd, inv_mod, is_prime};
use expsum::voronoi::{self, SmoothWeight};
use proptest::prelude::*;

#[test]
fn hyper_tables_agree_up_to_200() {
    for q in 1..=200u64 {
        let (fast, slow) = (HyperTable::new(q), HyperTable::direct(q));
        let worst = fast
            .values()
            .iter()
            .zip(slow.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-9 * q as f64, "q = {q}: {worst:e}");
    }
}

#[test]
fn kloosterman_tables_agree_up_to_300() {
    for q in 1..=300u64 {
        let (fast, slow) = (KloosterTable::new(q), KloosterTable::direct(q));
        let worst = fast
            .values()
            .iter()
            .zip(slow.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-9 * q as f64, "q = {q}: {worst:e}");
    }
}

#[test]
fn degeneration_corrected_form_holds() {
    let mut cases = 0;
    for q in 2..=60u64 {
        for n in 1..q as i64 {
            for b in [1i64, 2, 5] {
                if let Ok(r) = hyper_kl3_degenerate_check(1, n, b, q) {
                    assert!(
                        r.corrected_holds(1e-9 * q as f64),
                        "q = {q}, n = {n}, b = {b}: {r:?}"
                    );
                    cases += 1;
                }
            }
        }
    }
    assert!(cases > 100);
}

#[test]
fn kloosterman_sums_are_real() {
    for q in [7u64, 12, 25, 49] {
        for a in 0..q as i64 {
            assert!(kloosterman_direct(a, 3, q).im.abs() < 1e-9 * q as f64);
        }
    }
}

#[test]
fn voronoi_residual_small_for_small_moduli() {
    let h = SmoothWeight::new(50.0).unwrap();
    for q in [1u64, 3, 8] {
        for r in voronoi::voronoi_scan(q, &h).unwrap() {
            assert!(r.residual <= voronoi::RESIDUAL_TOL * r.lhs.norm(), "{r:?}");
        }
    }
}

#[test]
fn discrepancies_sum_to_zero() {
    let table = D3Table::new(20_000);
    for q in [4u64, 15, 27, 30] {
        let rows = distribution::ap_discrepancies(&table, q);
        let total = rows
            .iter()
            .fold(num_rational::Ratio::from_integer(0i128), |acc, r| {
                acc + r.delta
            });
        assert_eq!(total, num_rational::Ratio::from_integer(0), "q = {q}");
    }
}

#[test]
fn bilinear_csv_is_rectangular() {
    let family: Vec<_> = [1u64, 30, 125, 343]
        .iter()
        .map(|&q| {
            bilinear::BilinearConfig::new(q, 1, 2 * q, 1, bilinear::random_phases(3, q)).unwrap()
        })
        .collect();
    let csv = bilinear::to_csv(&bilinear::cancellation_scan(&family));
    let width = bilinear::CSV_HEADER.split(',').count();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().all(|l| l.split(',').count() == width), "{csv}");
    assert!(!csv.contains("-0.000"));
}

proptest! {
    #[test]
    fn split_is_multiplicative(q in 2u64..2000, a in -5000i64..5000, b in -5000i64..5000) {
        let split = kloosterman_split(a, b, q);
        let direct = kloosterman_direct(a, b, q);
        prop_assert!((split - direct).norm() <= 1e-9 * q as f64);
    }

    #[test]
    fn symmetric_in_arguments_and_unit_scaling(q in 2u64..600, a in 0i64..600, b in 0i64..600, c in 1u64..600) {
        prop_assume!(gcd(c % q, q) == 1);
        let ci = inv_mod(c % q, q).unwrap() as i64;
        let s = kloosterman_direct(a, b, q);
        prop_assert!((s - kloosterman_direct(b, a, q)).norm() <= 1e-9 * q as f64);
        prop_assert!((s - kloosterman_direct(a * c as i64, b * ci, q)).norm() <= 1e-9 * q as f64);
    }

    #[test]
    fn weil_bound_at_primes(
        p in prop::sample::select((3u64..400).filter(|&p| is_prime(p)).collect::<Vec<_>>()),
        a in 1i64..400,
        b in 1i64..400,
    ) {
        prop_assume!(a % p as i64 != 0);
        prop_assert!(kloosterman_direct(a, b, p).norm() <= 2.0 * (p as f64).sqrt() + 1e-9);
    }

    #[test]
    fn sigma00_forms_agree(k in 1u64..3000, l in 1u64..3000) {
        prop_assert_eq!(sigma00_divisor_form(k, l), sigma00_mobius_form(k, l));
    }

    #[test]
    fn ramanujan_closed_form(q in 1u64..500, n in -1000i64..1000) {
        let direct = ramanujan_sum_direct(q, n);
        prop_assert!((direct.re - ramanujan_sum(q, n) as f64).abs() <= 1e-8 * q as f64);
        prop_assert!(direct.im.abs() <= 1e-8 * q as f64);
    }
}
