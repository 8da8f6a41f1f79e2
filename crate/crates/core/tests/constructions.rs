use calib_core::constructions::*;
use calib_core::losses::{
    expected_loss, expected_loss_smoothed, expected_loss_smoothed_post, PostProcessing,
};
use calib_core::metrics::{smce, true_dce, udce_witness_cost};
use calib_core::omni::{omni_regret, OmniConfig};
use calib_core::smoothing::smooth;
use calib_core::transport::wasserstein_label_preserving;
use calib_core::CalibError;

#[test]
fn almost_balanced_expected_values() {
    for eps in [0.05, 0.1, 0.2] {
        let out = almost_balanced(eps).unwrap();
        assert!((out.pld.ece() - out.expected_value("ece").unwrap()).abs() < 1e-12);
        let s = smce(&out.pld).unwrap().0;
        assert!((s - eps * eps).abs() < 1e-9, "eps {eps}: {s}");
    }
}

#[test]
fn two_point_losses() {
    let out = two_point_family(0.1).unwrap();
    let l = out.companion_loss("loss_zero_one").unwrap();
    let good = expected_loss(&out.pld, l);
    let bad = expected_loss(out.companion_pld("pld_bad").unwrap(), l);
    let uni = expected_loss(out.companion_pld("pld_uniform").unwrap(), l);
    assert!((good - out.expected_value("loss_good").unwrap()).abs() < 1e-12);
    assert!((bad - out.expected_value("loss_bad").unwrap()).abs() < 1e-12);
    assert!((uni - out.expected_value("loss_uniform").unwrap()).abs() < 1e-12);
    // the flip of the bad predictor is the good one
    let flipped = out
        .companion_pld("pld_bad")
        .unwrap()
        .apply_postprocessing(&PostProcessing::one_minus())
        .unwrap();
    assert!(flipped.approx_eq(&out.pld, 1e-12));
}

#[test]
fn smoothing_necessity_values() {
    let eps = 0.03;
    let out = smoothing_necessity(eps).unwrap();
    let nu = out.companion_pld("nu").unwrap();
    let l = out.companion_loss("loss").unwrap();
    assert!((expected_loss(&out.pld, l) - 0.5).abs() < 1e-12);
    assert!((expected_loss(nu, l) + 0.5).abs() < 1e-12);
    assert!(smce(&out.pld).unwrap().0 <= 2.0 * eps + 1e-9);
    let kappa = out.companion_kappa("kappa").unwrap();
    assert!(out
        .pld
        .apply_postprocessing(kappa)
        .unwrap()
        .approx_eq(nu, 1e-12));
    for sigma in [0.01, 0.1, 0.5, 1.0] {
        let pz = expected_loss_smoothed(&smooth(&out.pld, sigma).unwrap(), l);
        let qz = expected_loss_smoothed(&smooth(nu, sigma).unwrap(), l);
        assert!(pz >= -1e-12 && qz <= 1e-12, "sigma {sigma}: {pz} {qz}");
    }
}

#[test]
fn lb1_regret_is_eps_over_two_sigma() {
    let eps = 0.04;
    let out = lb1(eps).unwrap();
    let nu = out.companion_pld("nu").unwrap();
    let (w, _) = wasserstein_label_preserving(&out.pld, nu).unwrap();
    assert!((w - eps).abs() < 1e-12);
    for sigma in [0.04, 0.1, 0.3, 1.0] {
        let r = omni_regret(
            &out.pld,
            nu,
            out.companion_loss("loss").unwrap(),
            &PostProcessing::identity(),
            sigma,
            &OmniConfig::default(),
        )
        .unwrap();
        assert!(
            (r.regret * sigma - eps / 2.0).abs() < 1e-12,
            "sigma {sigma}"
        );
    }
}

#[test]
fn lb2_components() {
    for (eps, sigma) in [(0.002, 0.04), (0.005, 0.08), (0.08, 0.08)] {
        let out = lb2(eps, sigma).unwrap();
        assert!(smce(&out.pld).unwrap().0 <= 2.0 * eps + 1e-6);
        let mu0 = out.companion_pld("mu0").unwrap();
        assert!(smce(mu0).unwrap().0 <= 2.0 * eps + 1e-6);
        let mu1 = out.companion_pld("mu1").unwrap();
        let l1 = out.companion_loss("loss1").unwrap();
        let s1 = smooth(mu1, sigma).unwrap();
        assert!((expected_loss_smoothed(&s1, l1) + sigma / 4.0).abs() < 1e-12);
        let k1 = out.companion_kappa("kappa1").unwrap();
        assert!((expected_loss_smoothed_post(&s1, k1, l1) + sigma / 2.0).abs() < 1e-12);
        // the stated κ beats the smoothed predictor on the whole mixture
        let spld = smooth(&out.pld, sigma).unwrap();
        let loss = out.companion_loss("loss").unwrap();
        let kappa = out.companion_kappa("kappa").unwrap();
        let gap =
            expected_loss_smoothed(&spld, loss) - expected_loss_smoothed_post(&spld, kappa, loss);
        assert!(
            gap >= out.expected_value("regret_lower").unwrap(),
            "{eps} {sigma}: {gap}"
        );
    }
}

#[test]
fn udce_case_values() {
    let eps = 0.1;
    let [a, b, c, d] = udce_cases(eps, 24, 7).unwrap();
    assert!((true_dce(a.task.as_ref().unwrap()).unwrap() - eps).abs() < 1e-9);
    assert!(
        (true_dce(b.task.as_ref().unwrap()).unwrap() - 2.0 * eps * eps / (1.0 + 2.0 * eps)).abs()
            < 1e-9
    );
    let half = PostProcessing::constant(0.5).unwrap();
    let uc = udce_witness_cost(&c.pld, &half).unwrap();
    assert!(uc >= eps / 2.0 && uc <= 1.5 * eps);
    let kd = d.companion_kappa("kappa_d").unwrap();
    let wd = udce_witness_cost(&d.pld, kd).unwrap();
    assert!(wd <= 3.0 * eps_prime(eps) * eps, "{wd}");
}

#[test]
fn case_d_group_mean_is_half() {
    let eps: f64 = 0.1;
    let ep = eps_prime(eps);
    let mean = (ep + (0.5 - ep) * (0.5 - eps)) / (ep + 0.5 - ep);
    assert!((mean - 0.5).abs() < 1e-15);
    // the pooled label frequency below 1/2 in case (d) equals that mean
    let [_, _, _, d] = udce_cases(eps, 24, 1).unwrap();
    let (mut m1, mut m) = (0.0, 0.0);
    for a in d.pld.atoms().iter().filter(|a| a.p < 0.5) {
        m += a.mass;
        if a.y == 1 {
            m1 += a.mass;
        }
    }
    assert!((m1 / m - 0.5).abs() < 1e-12);
}

#[test]
fn wide_perturbations_break_the_quadratic_witness_bound() {
    let eps = 0.1;
    let wide: Vec<f64> = (0..5)
        .map(|seed| {
            let [_, _, _, d] = udce_cases_with_spread(eps, 24, seed, eps / 2.0).unwrap();
            udce_witness_cost(&d.pld, d.companion_kappa("kappa_d").unwrap()).unwrap()
        })
        .collect();
    let mean = wide.iter().sum::<f64>() / wide.len() as f64;
    assert!(mean > 3.0 * eps_prime(eps) * eps, "{wide:?}");
}

#[test]
fn construction_seeds_are_reproducible() {
    let x = udce_cases(0.1, 24, 42).unwrap();
    let y = udce_cases(0.1, 24, 42).unwrap();
    let z = udce_cases(0.1, 24, 43).unwrap();
    assert_eq!(x[3].task, y[3].task);
    assert_ne!(x[3].task, z[3].task);
}

#[test]
fn perturbations_within_range() {
    let eps = 0.125;
    let [_, _, c, _] = udce_cases_with_spread(eps, 80, 3, eps / 2.0).unwrap();
    for p in c.task.unwrap().points() {
        let off = (p.prediction - 0.5).abs() - eps;
        assert!(off.abs() <= eps / 2.0 + 1e-15);
    }
}

#[test]
fn parameter_errors() {
    assert!(matches!(lb2(0.05, 0.1), Err(CalibError::ParameterOrder(_))));
    assert!(matches!(
        udce_cases(0.1, 23, 0),
        Err(CalibError::ParameterConstraint(_))
    ));
    assert!(matches!(
        udce_cases_with_spread(0.1, 24, 0, 0.06),
        Err(CalibError::ParameterConstraint(_))
    ));
    assert!(by_name("nope", 0.1, None, None, 0).is_err());
    assert_eq!(
        by_name("udce-cases", 0.1, None, Some(24), 0).unwrap().len(),
        4
    );
}
