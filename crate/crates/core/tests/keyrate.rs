use proptest::prelude::*;
use qan_core::capacity::{expected_tally, CapacityParams};
use qan_core::keyrate::*;
use qan_core::protocol::{Basis, Intensity};

fn link(p_opt: f64, n_z: f64) -> CapacityParams {
    CapacityParams {
        capacity: 1,
        active: 1,
        splitter_loss_db: 12.0,
        p_opt,
        n_z,
        ..Default::default()
    }
}

fn inputs(p: &CapacityParams, eps_sec: f64, f: f64) -> KeyRateInputs {
    let (tally, total) = expected_tally(p).unwrap();
    KeyRateInputs {
        tally,
        mu: p.mu,
        nu: p.nu,
        p_mu: p.p_mu,
        p_nu: 1.0 - p.p_mu,
        eps_sec,
        eps_cor: 1e-15,
        f_e: 1.16,
        frequency_hz: f,
        total_pulses: total,
        q: 0.5,
        budget: SecurityBudget::default(),
    }
}

#[test]
fn entropy_and_leakage_reference_values() {
    // Reference values evaluated independently to 10 digits.
    assert!((binary_entropy(0.0069).unwrap() - 0.059_456_569_8).abs() < 1e-9);
    assert!((lambda_ec(1e7, 0.0069, 1.16).unwrap() - 689_696.210).abs() < 0.01);
    assert_eq!(lambda_ec(1e7, 0.0, 1.16).unwrap(), 0.0);
    assert!((lambda_ec(5e6, 0.5, 1.0).unwrap() - 5e6).abs() < 1e-6);
}

#[test]
fn single_photon_bound_approaches_the_asymptotic_yield() {
    let p = link(0.01, 1e9);
    let (tally, _) = expected_tally(&p).unwrap();
    let b = decoy_bounds(&tally, (p.mu, p.nu), (p.p_mu, 1.0 - p.p_mu), 1e-9, &SecurityBudget::default()).unwrap();
    let eta = p.eta();
    let n1: f64 = [(Intensity::Signal, p.mu), (Intensity::Decoy, p.nu)]
        .iter()
        .map(|&(i, k)| tally.get(Basis::Z, i).sent * p.p_z * k * (-k).exp() * (eta + p.p_dc))
        .sum();
    assert!(b.s1_lower <= n1);

    // The same two-intensity bound with every statistical margin removed.
    let (mu, nu, pm, pn) = (p.mu, p.nu, p.p_mu, 1.0 - p.p_mu);
    let tau0 = pm * (-mu).exp() + pn * (-nu).exp();
    let tau1 = pm * mu * (-mu).exp() + pn * nu * (-nu).exp();
    let n_mu = mu.exp() / pm * tally.get(Basis::Z, Intensity::Signal).detected;
    let n_nu = nu.exp() / pn * tally.get(Basis::Z, Intensity::Decoy).detected;
    let s0_upper = 2.0 * tau0 * nu.exp() / pn * tally.get(Basis::Z, Intensity::Decoy).errors;
    let s1 = tau1 * mu / (nu * (mu - nu))
        * (n_nu - nu * nu / (mu * mu) * n_mu - (mu * mu - nu * nu) / (mu * mu) * s0_upper / tau0);
    assert!(b.s1_lower <= s1);
    assert!((s1 - b.s1_lower) / s1 <= 0.05, "{} vs {s1}", b.s1_lower);
}

#[test]
fn doubling_the_clock_doubles_the_rate() {
    let p = link(0.01, 1e7);
    let a = secure_key_rate(&inputs(&p, 1e-9, 50e6)).unwrap();
    let b = secure_key_rate(&inputs(&p, 1e-9, 100e6)).unwrap();
    assert!(a.rate_bps > 0.0);
    assert_eq!(a.length_bits, b.length_bits);
    assert!((b.rate_bps - 2.0 * a.rate_bps).abs() <= 1e-9 * b.rate_bps);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rate_does_not_grow_with_errors(p1 in 0.0f64..0.05, dp in 0.0f64..0.02, n_z in 1e6f64..1e9) {
        let a = secure_key_rate(&inputs(&link(p1, n_z), 1e-9, 50e6)).unwrap();
        let b = secure_key_rate(&inputs(&link(p1 + dp, n_z), 1e-9, 50e6)).unwrap();
        prop_assert!(b.e_z >= a.e_z);
        prop_assert!(b.rate_bps <= a.rate_bps + 1e-9);
        prop_assert!(a.length_bits >= 0.0 && b.length_bits >= 0.0);
    }

    #[test]
    fn tighter_secrecy_costs_key(p in 0.0f64..0.05, n_z in 1e6f64..1e9, e1 in -12.0f64..-3.0, de in 0.0f64..4.0) {
        let loose = secure_key_rate(&inputs(&link(p, n_z), 10f64.powf(e1), 50e6)).unwrap();
        let tight = secure_key_rate(&inputs(&link(p, n_z), 10f64.powf(e1 - de), 50e6)).unwrap();
        prop_assert!(tight.rate_bps <= loose.rate_bps + 1e-9);
    }

    #[test]
    fn phase_error_bound_covers_observed_x_errors(p in 0.0f64..0.1, n_z in 1e5f64..1e9) {
        let params = link(p, n_z);
        let (tally, _) = expected_tally(&params).unwrap();
        let b = decoy_bounds(&tally, (params.mu, params.nu), (params.p_mu, 1.0 - params.p_mu), 1e-9, &SecurityBudget::default()).unwrap();
        let e_x = tally.errors(Basis::X) / tally.detected(Basis::X);
        prop_assert!(b.phase_error >= e_x, "{} < {e_x}", b.phase_error);
    }
}
