mod common;

use causal_bias::closed_forms::{
    self, BinaryParams, ConcurrentSpec, ErrorMechanism, MeasurementParams, Target,
};
use causal_bias::error::Error;
use causal_bias::scm::{self, Structure};
use causal_bias::table::JointTable;
use common::{close, Brute};
use proptest::prelude::*;

/// (alpha, beta, gamma, delta, P(x1|a1), tau, lambda): every draw is a valid
/// parameterization, with epsilon implied by the two conditionals.
fn raw_params() -> impl Strategy<Value = [f64; 7]> {
    (
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.01f64..0.99,
        0.05f64..0.95,
    )
        .prop_map(|(a, b, c, d, q, t, l)| [a, b, c, d, q, t, l])
}

fn epsilon(r: &[f64; 7]) -> f64 {
    (1.0 - r[5]) * (1.0 - r[6]) + r[6] * r[4]
}

fn params(r: &[f64; 7]) -> BinaryParams {
    BinaryParams::new(r[0], r[1], r[2], r[3], epsilon(r), r[5], r[6]).unwrap()
}

/// Joint over (X, A, Y) from P(a) P(x|a) P(y|a,x).
fn brute(r: &[f64; 7], x: &str) -> Brute {
    let [al, be, ga, de, q, tau, lam] = *r;
    Brute::from_factors(&[x, "A", "Y"], |v| {
        let (x, a, y) = (v[0], v[1], v[2]);
        let pa = if a == 1 { lam } else { 1.0 - lam };
        let px1 = if a == 1 { q } else { 1.0 - tau };
        let px = if x == 1 { px1 } else { 1.0 - px1 };
        let py1 = [[al, be], [ga, de]][a as usize][x as usize];
        pa * px * if y == 1 { py1 } else { 1.0 - py1 }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn confounding_closed_form_equals_disparity_difference(r in raw_params()) {
        let b = brute(&r, "Z");
        let oracle = b.sd("Y", "A", &[]) - b.sd("Y", "A", &["Z"]);
        let p = params(&r);
        prop_assert!(close(closed_forms::conf_bias_binary(&p), oracle, 1e-12));
        let t = scm::enumerate_joint(&Structure::BinaryConfounding { params: p }).unwrap();
        prop_assert!(close(t.stat_disp("Y", "A").unwrap() - t.stat_disp_adjusted("Y", "A", &["Z"]).unwrap(), oracle, 1e-12));
    }

    #[test]
    fn balanced_form_agrees_with_general(mut r in raw_params()) {
        r[6] = 0.5;
        let p = params(&r);
        prop_assert!(close(closed_forms::conf_bias_binary_balanced(&p).unwrap(), closed_forms::conf_bias_binary(&p), 1e-12));
    }

    #[test]
    fn selection_closed_form_equals_disparity_difference(mut r in raw_params()) {
        r[6] = 0.5;
        let b = brute(&r, "W");
        let oracle = b.sd("Y", "A", &["W"]) - b.sd("Y", "A", &[]);
        let p = params(&r);
        prop_assert!(close(closed_forms::sel_bias_binary(&p).unwrap(), oracle, 1e-12));
        prop_assert_eq!(closed_forms::sel_bias_binary(&p).unwrap(), -closed_forms::conf_bias_binary_balanced(&p).unwrap());
        prop_assert!(close(closed_forms::sel_bias_binary_general(&p), oracle, 1e-12));
    }

    #[test]
    fn general_selection_form_equals_disparity_difference(r in raw_params()) {
        let b = brute(&r, "W");
        let oracle = b.sd("Y", "A", &["W"]) - b.sd("Y", "A", &[]);
        prop_assert!(close(closed_forms::sel_bias_binary_general(&params(&r)), oracle, 1e-12));
    }

    #[test]
    fn relabeling_confounder_levels_keeps_bias(r in raw_params()) {
        let p = params(&r);
        let swapped = BinaryParams::new(p.beta, p.alpha, p.delta, p.gamma, 1.0 - p.epsilon, 1.0 - p.tau, p.lambda).unwrap();
        prop_assert!(close(closed_forms::conf_bias_binary(&swapped), closed_forms::conf_bias_binary(&p), 1e-12));
        prop_assert_eq!(p.swap_levels().unwrap(), swapped);
    }

    #[test]
    fn balanced_bias_bounded_by_twice_first_factor(mut r in raw_params()) {
        r[6] = 0.5;
        let p = params(&r);
        let bound = 2.0 * (1.0 - p.tau - p.epsilon).abs();
        prop_assert!(closed_forms::conf_bias_binary_balanced(&p).unwrap().abs() <= bound + 1e-15);
    }

    #[test]
    fn perfect_proxy_removes_measurement_bias(r in raw_params()) {
        let m = MeasurementParams::new(params(&r), ErrorMechanism::new(0.0, 0.0).unwrap());
        prop_assert!(closed_forms::meas_bias_binary(&m).unwrap().abs() < 1e-12);
    }
}

#[test]
fn worked_confounding_example() {
    let r = [0.9, 0.1, 0.8, 0.2, 0.1, 0.3, 0.5];
    assert!(close(epsilon(&r), 0.4, 1e-15));
    let b = brute(&r, "Z");
    assert!(close(b.cond(&[("Y", 1)], &[("A", 1)]), 0.74, 1e-12));
    assert!(close(b.cond(&[("Y", 1)], &[("A", 0)]), 0.34, 1e-12));
    assert!(close(b.sd("Y", "A", &[]), 0.40, 1e-12));
    assert!(close(b.sd("Y", "A", &["Z"]), -0.02, 1e-12));
    let p = params(&r);
    assert!(close(closed_forms::conf_bias_binary(&p), 0.42, 1e-12));
    assert!(close(closed_forms::sel_bias_binary(&p).unwrap(), -0.42, 1e-12));

    // epsilon = 0.6 at lambda = 0.25, tau = 0.5.
    let r2 = [0.2, 0.6, 0.3, 0.7, (0.6 - 0.5 * 0.75) / 0.25, 0.5, 0.25];
    assert!(close(epsilon(&r2), 0.6, 1e-15));
    let b = brute(&r2, "Z");
    assert!(close(b.sd("Y", "A", &[]), 0.26, 1e-12));
    assert!(close(b.sd("Y", "A", &["Z"]), 0.10, 1e-12));
    assert!(close(closed_forms::conf_bias_binary(&params(&r2)), 0.16, 1e-12));
}

#[test]
fn peak_reached_at_extreme_conditionals() {
    for (a, b) in [(1.0, 0.0), (0.0, 1.0)] {
        let p = BinaryParams::new(a, b, a, b, 0.3, 0.4, 0.5).unwrap();
        let v = closed_forms::conf_bias_binary_balanced(&p).unwrap();
        assert!(close(v.abs(), 2.0 * (1.0f64 - 0.4 - 0.3).abs(), 1e-15));
    }
}

/// Random generative (Z, A, T, Y) model with T depending on Z only.
fn measurement_model(seed: u64) -> (Brute, [f64; 2]) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut u = || -> f64 { rng.random_range(0.02..0.98) };
    let pz = u();
    let pa = [u(), u()];
    let pt = loop {
        let t = [u(), u()];
        if (t[1] - t[0]).abs() > 0.05 {
            break t;
        }
    };
    let py = [[u(), u()], [u(), u()]];
    let b = Brute::from_factors(&["Z", "A", "T", "Y"], |v| {
        let (z, a, t, y) = (v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize);
        let bern = |p: f64, x: usize| if x == 1 { p } else { 1.0 - p };
        bern(pz, z) * bern(pa[z], a) * bern(pt[z], t) * bern(py[a][z], y)
    });
    (b, pt)
}

fn observed_params(b: &Brute) -> MeasurementParams {
    let c = |y: u8, a: u8, t: u8| b.cond(&[("Y", y)], &[("A", a), ("T", t)]);
    let observed = BinaryParams::new(
        c(1, 0, 0),
        c(1, 0, 1),
        c(1, 1, 0),
        c(1, 1, 1),
        b.prob(&[("T", 1)]),
        b.cond(&[("T", 0)], &[("A", 0)]),
        b.prob(&[("A", 1)]),
    )
    .unwrap();
    let mech = ErrorMechanism::new(b.cond(&[("T", 1)], &[("Z", 0)]), b.cond(&[("T", 0)], &[("Z", 1)])).unwrap();
    MeasurementParams::new(observed, mech)
}

#[test]
fn measurement_closed_form_on_generative_models() {
    for seed in 0..200 {
        let (b, _) = measurement_model(seed);
        let oracle = b.sd("Y", "A", &["T"]) - b.sd("Y", "A", &["Z"]);
        let m = observed_params(&b);
        let v = closed_forms::meas_bias_binary(&m).unwrap();
        assert!(close(v, oracle, 1e-9), "seed {seed}: closed {v} oracle {oracle}");
    }
}

#[test]
fn effect_restoration_recovers_adjusted_disparity() {
    for seed in 0..200 {
        let (b, _) = measurement_model(1000 + seed);
        let full = JointTable::parametric(
            &["Z", "A", "T", "Y"],
            JointTable::assignments(&["Z", "A", "T", "Y"])
                .iter()
                .map(|a| b.prob(a))
                .collect(),
        )
        .unwrap();
        let obs = full.marginal(&["A", "T", "Y"]).unwrap();
        let mech = observed_params(&b).error;
        let d1 = closed_forms::effect_restoration_do(&obs, "Y", "A", "T", &mech, 1).unwrap();
        let d0 = closed_forms::effect_restoration_do(&obs, "Y", "A", "T", &mech, 0).unwrap();
        let do_oracle = |a: u8| -> f64 {
            [0u8, 1]
                .iter()
                .map(|&z| b.cond(&[("Y", 1)], &[("A", a), ("Z", z)]) * b.prob(&[("Z", z)]))
                .sum()
        };
        assert!(close(d1, do_oracle(1), 1e-9), "seed {seed}");
        assert!(close(d1 - d0, b.sd("Y", "A", &["Z"]), 1e-9), "seed {seed}");
    }
}

#[test]
fn uninformative_proxy_is_singular_and_bias_equals_confounding() {
    // P(t1|z0) = P(t1|z1): the proxy carries no information about Z and the
    // proxy-adjusted disparity is the crude one.
    let eps = 0.4;
    let b = Brute::from_factors(&["Z", "A", "T", "Y"], |v| {
        let bern = |p: f64, x: u8| if x == 1 { p } else { 1.0 - p };
        let py = [[0.9, 0.1], [0.8, 0.2]][v[1] as usize][v[0] as usize];
        bern(0.3, v[0]) * bern([0.4, 0.7][v[0] as usize], v[1]) * bern(1.0 - eps, v[2]) * bern(py, v[3])
    });
    let truth = b.sd("Y", "A", &["T"]) - b.sd("Y", "A", &["Z"]);
    assert!(close(truth, b.sd("Y", "A", &[]) - b.sd("Y", "A", &["Z"]), 1e-12));
    let m = observed_params(&b);
    assert!(close(m.error.false_positive, 1.0 - eps, 1e-12));
    assert!(matches!(closed_forms::meas_bias_binary(&m), Err(Error::Singular { .. })));
}

fn random_table(names: &[&str], weights: &[f64]) -> JointTable {
    let total: f64 = weights.iter().sum();
    JointTable::parametric(names, weights.iter().map(|w| w / total).collect()).unwrap()
}

proptest! {
    #[test]
    fn unadjusted_disparity_is_empty_adjustment(w in proptest::collection::vec(0.01f64..1.0, 8)) {
        let t = random_table(&["Z", "A", "Y"], &w);
        prop_assert_eq!(t.stat_disp_adjusted("Y", "A", &[]).unwrap(), t.stat_disp("Y", "A").unwrap());
        let sd = t.stat_disp("Y", "A").unwrap();
        prop_assert!((-1.0..=1.0).contains(&sd));
        let sdz = t.stat_disp_adjusted("Y", "A", &["Z"]).unwrap();
        prop_assert!((-1.0..=1.0).contains(&sdz));
    }

    #[test]
    fn intersectional_decomposition_is_exact(w in proptest::collection::vec(0.01f64..1.0, 8)) {
        let t = random_table(&["A", "B", "Y"], &w);
        let b = Brute::from_table(&t);
        let int = t.interaction_term("Y", "A", "B").unwrap();
        let oracle_int = b.cell("Y", "A", 1, "B", 1) - b.cell("Y", "A", 0, "B", 1) - b.cell("Y", "A", 1, "B", 0) + b.cell("Y", "A", 0, "B", 0);
        prop_assert!(close(int, oracle_int, 1e-12));
        prop_assert!((-2.0..=2.0).contains(&int));
        let jd = b.cell("Y", "A", 1, "B", 1) - b.cell("Y", "A", 0, "B", 0);
        let sum = t.sd_no_interaction("Y", "A", "B").unwrap() + t.sd_no_interaction("Y", "B", "A").unwrap() + int;
        prop_assert!(close(jd, sum, 1e-12));
        prop_assert!(close(t.joint_disparity("Y", "A", "B").unwrap(), jd, 1e-12));
        prop_assert!(close(closed_forms::int_bias_intersectional(&t, "Y", "A", "B").unwrap(), int, 1e-12));
        let g = t.joint_group("A", "B", "G").unwrap();
        prop_assert!(close(g.stat_disp("Y", "G").unwrap(), jd, 1e-12));
    }

    #[test]
    fn individual_decomposition_under_independence(pa in 0.05f64..0.95, pb in 0.05f64..0.95, py in proptest::collection::vec(0.0f64..=1.0, 4)) {
        let b = Brute::from_factors(&["A", "B", "Y"], |v| {
            let bern = |p: f64, x: u8| if x == 1 { p } else { 1.0 - p };
            bern(pa, v[0]) * bern(pb, v[1]) * bern(py[(2 * v[0] + v[1]) as usize], v[2])
        });
        let t = JointTable::parametric(&["A", "B", "Y"], JointTable::assignments(&["A", "B", "Y"]).iter().map(|a| b.prob(a)).collect()).unwrap();
        let int = t.interaction_term("Y", "A", "B").unwrap();
        let sd = b.sd("Y", "A", &[]);
        let no_int = b.cell("Y", "A", 1, "B", 0) - b.cell("Y", "A", 0, "B", 0);
        prop_assert!(close(sd, no_int + pb * int, 1e-12));
        let ind = closed_forms::int_bias_individual(&t, "Y", "A", "B", Target::A, None).unwrap();
        prop_assert!(close(ind, pb * int, 1e-12));
        let ind_b = closed_forms::int_bias_individual(&t, "Y", "A", "B", Target::B, None).unwrap();
        prop_assert!(close(ind_b, pa * int, 1e-12));
    }
}

#[test]
fn interaction_worked_example() {
    let t = scm::enumerate_joint(&Structure::BinaryInteraction {
        spec: scm::BinaryInteractionSpec {
            p_a1: 0.5,
            p_b1: 0.5,
            y_given_ab: [0.1, 0.2, 0.3, 0.8],
        },
    })
    .unwrap();
    assert!(close(t.interaction_term("Y", "A", "B").unwrap(), 0.4, 1e-12));
    assert!(close(t.sd_no_interaction("Y", "A", "B").unwrap(), 0.2, 1e-12));
    assert!(close(
        closed_forms::int_bias_individual(&t, "Y", "A", "B", Target::A, None).unwrap(),
        0.2,
        1e-12
    ));
}

#[test]
fn dependent_sensitive_variables_rejected() {
    let t = random_table(&["A", "B", "Y"], &[5.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 5.0]);
    assert!(t.dependence("A", "B").unwrap() > 0.01);
    assert!(matches!(
        closed_forms::int_bias_individual(&t, "Y", "A", "B", Target::A, None),
        Err(Error::Dependence(_))
    ));
}

#[test]
fn random_four_variable_table_matches_brute_force() {
    let t = JointTable::random(&["Z", "W", "A", "Y"], 7).unwrap();
    let b = Brute::from_table(&t);
    assert!(close(t.stat_disp_adjusted("Y", "A", &["Z", "W"]).unwrap(), b.sd("Y", "A", &["Z", "W"]), 1e-12));
    assert!(close(t.stat_disp_adjusted("Y", "A", &["W"]).unwrap(), b.sd("Y", "A", &["W"]), 1e-12));
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn concurrent_totals_are_disparity_differences(w in weights(32)) {
        let t = random_table(&["Z", "A", "Y", "W", "T"], &w);
        let b = Brute::from_table(&t);
        let spec = ConcurrentSpec {
            outcome: "Y".into(),
            sensitive: "A".into(),
            confounders: vec!["Z".into()],
            collider: Some("W".into()),
            proxy: Some("T".into()),
            second_sensitive: None,
        };
        let out = closed_forms::concurrent_bias(&t, &spec).unwrap();
        let (sd, sz, sw, st, stw) = (
            b.sd("Y", "A", &[]),
            b.sd("Y", "A", &["Z"]),
            b.sd("Y", "A", &["W"]),
            b.sd("Y", "A", &["T"]),
            b.sd("Y", "A", &["T", "W"]),
        );
        prop_assert!(close(out.get("conf").unwrap(), sd - sz, 1e-12));
        prop_assert!(close(out.get("sel").unwrap(), sw - sd, 1e-12));
        prop_assert!(close(out.get("meas").unwrap(), st - sz, 1e-12));
        prop_assert!(close(out.get("conf+sel").unwrap(), sw - sz, 1e-12));
        prop_assert!(close(out.get("conf").unwrap() + out.get("sel").unwrap(), out.get("conf+sel").unwrap(), 1e-12));
        prop_assert!(close(out.get("conf+meas").unwrap(), sd - st, 1e-12));
        prop_assert!(close(out.get("conf+sel+meas").unwrap(), stw - sz, 1e-12));
    }

    #[test]
    fn confounding_splits_into_interaction_parts(pz in 0.05f64..0.95, pa in proptest::collection::vec(0.05f64..0.95, 2), pb in 0.05f64..0.95, py in proptest::collection::vec(0.0f64..=1.0, 8)) {
        // B independent of (A, Z).
        let b = Brute::from_factors(&["Z", "A", "B", "Y"], |v| {
            let bern = |p: f64, x: u8| if x == 1 { p } else { 1.0 - p };
            bern(pz, v[0]) * bern(pa[v[0] as usize], v[1]) * bern(pb, v[2]) * bern(py[(4 * v[0] + 2 * v[1] + v[2]) as usize], v[3])
        });
        let vars = ["Z", "A", "B", "Y"];
        let t = JointTable::parametric(&vars, JointTable::assignments(&vars).iter().map(|a| b.prob(a)).collect()).unwrap();
        let spec = ConcurrentSpec {
            outcome: "Y".into(),
            sensitive: "A".into(),
            confounders: vec!["Z".into()],
            second_sensitive: Some("B".into()),
            ..Default::default()
        };
        let out = closed_forms::concurrent_bias(&t, &spec).unwrap();
        let conf = b.sd("Y", "A", &[]) - b.sd("Y", "A", &["Z"]);
        prop_assert!(close(out.get("conf").unwrap(), conf, 1e-12));
        prop_assert!(close(out.get("conf.no_interaction").unwrap() + out.get("conf.interaction").unwrap(), conf, 1e-12));

        // Intersectional group: exact without any independence assumption.
        let adjusted = |i: u8, j: u8| -> f64 {
            [0u8, 1].iter().map(|&z| b.cond(&[("Y", 1)], &[("A", i), ("B", j), ("Z", z)]) * b.prob(&[("Z", z)])).sum()
        };
        let jd = b.cell("Y", "A", 1, "B", 1) - b.cell("Y", "A", 0, "B", 0);
        let jd_z = adjusted(1, 1) - adjusted(0, 0);
        prop_assert!(close(out.get("conf.intersectional").unwrap(), jd - jd_z, 1e-12));
        let parts = out.get("conf.no_interaction").unwrap()
            + out.get("conf.intersectional.interaction").unwrap()
            + out.get("conf.intersectional.second_sensitive").unwrap();
        prop_assert!(close(parts, jd - jd_z, 1e-12));
    }
}

#[test]
fn missing_concurrent_variable_is_structural() {
    let t = JointTable::random(&["Z", "A", "Y"], 3).unwrap();
    let spec = ConcurrentSpec {
        outcome: "Y".into(),
        sensitive: "A".into(),
        confounders: vec!["Z".into()],
        collider: Some("W".into()),
        ..Default::default()
    };
    assert!(matches!(closed_forms::concurrent_bias(&t, &spec), Err(Error::Structure(_))));
}

#[test]
fn positivity_violation_names_stratum() {
    // P(A=0, Z=1) = 0.
    let b = Brute::from_factors(&["Z", "A", "Y"], |v| {
        if v[0] == 1 && v[1] == 0 {
            0.0
        } else {
            1.0 / 6.0
        }
    });
    let vars = ["Z", "A", "Y"];
    let t = JointTable::parametric(&vars, JointTable::assignments(&vars).iter().map(|a| b.prob(a)).collect()).unwrap();
    match t.stat_disp_adjusted("Y", "A", &["Z"]) {
        Err(Error::Positivity(s)) => assert!(s.contains("A=0") && s.contains("Z=1"), "{s}"),
        other => panic!("expected positivity error, got {other:?}"),
    }
}
