use hybridssr::inference::{composite_control_weights, ipw_test, solve_estimating_equation};
use hybridssr::io::{read_dataset, write_dataset};
use hybridssr::propensity::{compute_weights, fit_propensity, log_likelihood, score, FitOptions, Propensities};
use hybridssr::rng::ReplicationStreams;
use hybridssr::sim::scenario::{generate_scenario_data, TRUE_GAMMA};
use hybridssr::sim::{run_study_sim, Scenario, SimConfig};
use hybridssr::ssr::{design_effect, ssr_strategy1, ssr_strategy2, z_sum};
use hybridssr::{AllocationRatio, Arm, Dataset, DesignParams, Study, SubjectRecord};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    data: Dataset,
    e: Vec<f64>,
}

// Two-covariate hybrid datasets with every group non-empty.
fn case() -> impl Strategy<Value = Case> {
    let subject = (
        0u8..3,
        -50.0..50.0f64,
        0.0..1.0f64,
        -3.0..3.0f64,
        0.0..1.0f64,
        0.02..0.98f64,
    );
    prop::collection::vec(subject, 6..60).prop_map(|rows| {
        let mut records = Vec::new();
        let mut e = Vec::new();
        for (i, (g, y, x1, x2, bin, p)) in rows.into_iter().enumerate() {
            // Force one of each group at the start.
            let g = if i < 3 { i as u8 } else { g };
            let (study, arm) = match g {
                0 => (Study::Current, Arm::Treated),
                1 => (Study::Current, Arm::Control),
                _ => (Study::Historical, Arm::Control),
            };
            let x = vec![x1 * 10.0 + x2, if bin < 0.5 { 0.0 } else { 1.0 }];
            records.push(SubjectRecord::new(format!("s{i}"), study, arm, x, Some(y)));
            e.push(p);
        }
        Case {
            data: Dataset::new(vec!["a".into(), "b".into()], records),
            e,
        }
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weight_mass_identities(c in case()) {
        let w = compute_weights(&c.data, Propensities::Fixed(&c.e)).unwrap();
        let n = c.data.len() as f64;
        // The current-study weights average to one half.
        prop_assert!((w.w_r1.iter().sum::<f64>() / n - 0.5).abs() < 1e-12);
        for (i, r) in c.data.records.iter().enumerate() {
            prop_assert!(w.w_r1[i] >= 0.0 && w.w_r0[i] >= 0.0);
            match r.study {
                Study::Current => prop_assert_eq!(w.w_r0[i], 0.0),
                Study::Historical => prop_assert_eq!(w.w_r1[i], 0.0),
            }
        }
        // Controls in the current study carry 1/P(A=0|R=1) times their w_r1.
        let cw = composite_control_weights(&c.data, &w).unwrap();
        let current_controls: f64 = c
            .data
            .records
            .iter()
            .zip(&cw)
            .filter(|(r, _)| r.study == Study::Current)
            .map(|(_, v)| v)
            .sum();
        prop_assert!((current_controls / n - 0.5).abs() < 1e-12);
    }

    #[test]
    fn strategy1_equal_weights_is_sample_variance(ys in prop::collection::vec(-100.0..100.0f64, 3..40)) {
        // Equal propensities and equal source sizes make every weight 1.
        let m = ys.len();
        let mut records = Vec::new();
        for (i, &y) in ys.iter().enumerate() {
            records.push(SubjectRecord::new(format!("c{i}"), Study::Current, Arm::Masked, vec![], Some(y)));
        }
        for (i, &y) in ys.iter().enumerate() {
            records.push(SubjectRecord::new(format!("h{i}"), Study::Historical, Arm::Control, vec![], Some(y)));
        }
        let d = Dataset::new(vec![], records);
        let w = compute_weights(&d, Propensities::Fixed(&vec![0.5; 2 * m])).unwrap();
        let r = ssr_strategy1(&d, &w, &DesignParams::default()).unwrap();
        let all: Vec<f64> = ys.iter().chain(&ys).copied().collect();
        let mu = mean(&all);
        let s2 = all.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / (all.len() as f64 - 1.0);
        prop_assert!((r.s1_sq.unwrap() - s2).abs() <= 1e-9 * s2.max(1.0));
    }

    #[test]
    fn design_effect_is_at_least_one(ws in prop::collection::vec(0.01..50.0f64, 1..80)) {
        let d = design_effect(&ws).unwrap();
        prop_assert!(d >= 1.0 - 1e-12);
        let constant = vec![ws[0]; ws.len()];
        prop_assert!((design_effect(&constant).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strategy2_inflation_never_shrinks(c in case()) {
        let w = compute_weights(&c.data, Propensities::Fixed(&c.e)).unwrap();
        let design = DesignParams::default();
        let r = ssr_strategy2(&c.data.without_outcomes(), &w, &design).unwrap();
        let (i1, i0) = r.inflation.unwrap();
        prop_assert!(i1 >= 1.0 - 1e-12 && i0 >= 1.0 - 1e-12);
        prop_assert!(r.sigma1_hat_sq.unwrap() >= design.sigma1_sq * (1.0 - 1e-12));
        prop_assert!(r.sigma0_hat_sq.unwrap() >= design.sigma0_sq * (1.0 - 1e-12));
    }

    #[test]
    fn strategy2_reduces_to_closed_form_without_inflation(n_c in 2usize..200, n_h in 2usize..200) {
        let mut records = Vec::new();
        for i in 0..n_c {
            records.push(SubjectRecord::new(format!("c{i}"), Study::Current, Arm::Masked, vec![], None));
        }
        for i in 0..n_h {
            records.push(SubjectRecord::new(format!("h{i}"), Study::Historical, Arm::Control, vec![], None));
        }
        let d = Dataset::new(vec![], records);
        let w = compute_weights(&d, Propensities::Fixed(&vec![0.5; n_c + n_h])).unwrap();
        let design = DesignParams::default();
        let r = ssr_strategy2(&d, &w, &design).unwrap();
        let k = n_c as f64 / n_h as f64;
        let z = z_sum(&design).unwrap();
        let want = (1.0 + k) * z * z * (100.0 / k + 100.0) / (3.5 * 3.5);
        prop_assert!((r.n_raw - want).abs() < 1e-9 * want);
        if n_c == n_h {
            prop_assert_eq!(r.n_hat, 257);
        }
    }

    #[test]
    fn estimating_equation_root_matches_hajek(c in case()) {
        let w = compute_weights(&c.data, Propensities::Fixed(&c.e)).unwrap();
        let cw = composite_control_weights(&c.data, &w).unwrap();
        let ys: Vec<f64> = c.data.records.iter().map(|r| r.y.unwrap()).collect();
        let hajek = cw.iter().zip(&ys).map(|(c, y)| c * y).sum::<f64>() / cw.iter().sum::<f64>();
        let [t1, t0] = solve_estimating_equation(&c.data, &w).unwrap();
        prop_assert!((t0 - hajek).abs() < 1e-9 * hajek.abs().max(1.0));
        let t = ipw_test(&c.data, &w, &DesignParams::default()).unwrap();
        prop_assert!((t.theta1_hat - t1).abs() < 1e-12 * t1.abs().max(1.0));
        prop_assert!(t.sigma_star_sq > 0.0);
        prop_assert!((0.0..=1.0).contains(&t.p_value));
    }

    #[test]
    fn dataset_csv_round_trip(c in case(), mask in any::<bool>()) {
        let d = if mask { c.data.masked_arms() } else { c.data.clone() };
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), "mem").unwrap();
        prop_assert_eq!(&back, &d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn irls_solves_the_score_equation(seed in any::<u64>(), id in 1u8..=5) {
        let s = Scenario::preset(id).unwrap();
        let streams = ReplicationStreams::new(seed, id, 0);
        let (cur, hist) = generate_scenario_data(&s, AllocationRatio::TWO_TO_ONE, 240, &streams).unwrap();
        let d = cur.concat(&hist).unwrap();
        let m = fit_propensity(&d, &FitOptions::default()).unwrap();
        prop_assert!(m.converged);
        let g = score(&d, &m.gamma).unwrap();
        let scale = d.len() as f64;
        prop_assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6 * scale);
        // A maximum: small moves in any coordinate lower the likelihood.
        let ll = log_likelihood(&d, &m.gamma).unwrap();
        for j in 0..m.gamma.len() {
            for h in [-1e-3, 1e-3] {
                let mut g2 = m.gamma.clone();
                g2[j] += h;
                prop_assert!(log_likelihood(&d, &g2).unwrap() <= ll + 1e-9);
            }
        }
    }

    #[test]
    fn score_matches_finite_differences(seed in any::<u64>(), shift in prop::collection::vec(-0.05..0.05f64, 5)) {
        let s = Scenario::preset(2).unwrap();
        let streams = ReplicationStreams::new(seed, 2, 0);
        let (cur, hist) = generate_scenario_data(&s, AllocationRatio::TWO_TO_ONE, 120, &streams).unwrap();
        let d = cur.concat(&hist).unwrap();
        let gamma: Vec<f64> = TRUE_GAMMA.iter().zip(&shift).map(|(g, s)| g + s).collect();
        let g = score(&d, &gamma).unwrap();
        for j in 0..gamma.len() {
            let h = 1e-6 * gamma[j].abs().max(1.0);
            let (mut up, mut dn) = (gamma.clone(), gamma.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (log_likelihood(&d, &up).unwrap() - log_likelihood(&d, &dn).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() < 1e-4 * g[j].abs().max(1.0), "j={} fd={} g={}", j, fd, g[j]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), threads in 1usize..5) {
        let sc = vec![Scenario::preset(1).unwrap(), Scenario::preset(5).unwrap()];
        let mut a = SimConfig::new(sc.clone(), 6, seed);
        a.threads = Some(1);
        let mut b = SimConfig::new(sc, 6, seed);
        b.threads = Some(threads);
        prop_assert_eq!(run_study_sim(&a).unwrap(), run_study_sim(&b).unwrap());
    }
}

#[test]
fn fitted_gamma_is_consistent() {
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Bernoulli, Distribution, Normal};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let n = 50_000;
    let (x1, x3, x4) = (
        Normal::new(75.0, 8.5).unwrap(),
        Normal::new(14.0, 2.8).unwrap(),
        Normal::new(21.0, 3.6).unwrap(),
    );
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let x = vec![
            x1.sample(&mut rng),
            f64::from(u8::from(Bernoulli::new(0.5).unwrap().sample(&mut rng))),
            x3.sample(&mut rng),
            x4.sample(&mut rng),
        ];
        let eta = TRUE_GAMMA[0] + TRUE_GAMMA[1..].iter().zip(&x).map(|(g, v)| g * v).sum::<f64>();
        let study = if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) {
            Study::Current
        } else {
            Study::Historical
        };
        let arm = if study == Study::Current {
            Arm::Masked
        } else {
            Arm::Control
        };
        records.push(SubjectRecord::new(format!("s{i}"), study, arm, x, None));
    }
    let d = Dataset::new(vec!["x1".into(), "x2".into(), "x3".into(), "x4".into()], records);
    let m = fit_propensity(&d, &FitOptions::default()).unwrap();

    // Standard errors from the observed information at the fit.
    let mut info = DMatrix::<f64>::zeros(5, 5);
    for r in &d.records {
        let z = DVector::from_iterator(5, std::iter::once(1.0).chain(r.x.iter().copied()));
        let eta = m.gamma[0] + m.gamma[1..].iter().zip(&r.x).map(|(g, v)| g * v).sum::<f64>();
        let p = 1.0 / (1.0 + (-eta).exp());
        info += &z * z.transpose() * (p * (1.0 - p));
    }
    let cov = info.try_inverse().unwrap();
    for j in 0..5 {
        let se = cov[(j, j)].sqrt();
        let dev = (m.gamma[j] - TRUE_GAMMA[j]).abs();
        assert!(
            dev < 3.0 * se,
            "gamma[{j}] = {} vs {} (se {se})",
            m.gamma[j],
            TRUE_GAMMA[j]
        );
    }
}
