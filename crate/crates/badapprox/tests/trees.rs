use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::f64::consts::LN_2;
use std::hash::{Hash, Hasher};

use badapprox::cf_oracle::window_hit;
use badapprox::core_theory::{eta, ApproxFunction, DimFunction, Dimensions, NormSpec};
use badapprox::fractal::*;
use badapprox::scheduler::constant_schedule;
use proptest::prelude::*;

fn scheme(d: Dimensions, ell: u64, depth: usize) -> CodingScheme {
    let psi = ApproxFunction::power_law(d, 1.0).unwrap();
    let s = constant_schedule(&psi, (ell as f64 - 0.5) * 0.5 * LN_2, 0.5, depth).unwrap();
    CodingScheme::new(s, d)
}

fn hashed_rule(seed: u64, keep_one_in: u64, d: usize, digits: u64) -> impl Fn(&Word) -> Vec<Vec<u64>> {
    move |w: &Word| {
        let total = digits.pow(d as u32);
        let mut kept: Vec<Vec<u64>> = (0..total)
            .filter(|&i| {
                let mut h = DefaultHasher::new();
                (seed, w, i).hash(&mut h);
                h.finish() % keep_one_in != 0
            })
            .map(|i| (0..d).rev().map(|j| (i / digits.pow(j as u32)) % digits).collect())
            .collect();
        if kept.is_empty() {
            kept.push(vec![0; d]);
        }
        kept
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rule_trees_keep_their_identities(seed in any::<u64>(), keep in 2u64..5, big in any::<bool>()) {
        let d = if big { Dimensions::new(1, 2).unwrap() } else { Dimensions::new(1, 1).unwrap() };
        let c = scheme(d, 2, 5);
        let t = Tree::from_rule(&c, &BuildOptions::new(5), hashed_rule(seed, keep, d.big_d(), 4)).unwrap();
        let levels = t.levels();
        // prefix closure and child counts
        for k in 1..levels.len() {
            let parents: HashSet<&Word> = levels[k - 1].iter().map(|n| &n.word).collect();
            for node in &levels[k] {
                let mut parent = node.word.clone();
                parent.letters.pop();
                prop_assert!(parents.contains(&parent));
            }
            let kept: u128 = levels[k - 1].iter().map(|n| n.kept.unwrap()).sum();
            prop_assert_eq!(kept, levels[k].len() as u128);
        }
        let total = 4f64.powi(d.big_d() as i32);
        for k in 1..=t.resolved_depth() {
            prop_assert!(t.p_minus(k) <= t.p_plus(k));
            prop_assert!((t.m_minus(k) - total * (1.0 - t.p_plus(k))).abs() < 1e-12);
            prop_assert!((t.m_plus(k) - total * (1.0 - t.p_minus(k))).abs() < 1e-12);
        }
        for i in 1..40 {
            let rho = (-(i as f64) * 0.25).exp2();
            prop_assert!(t.f_minus(rho).unwrap() <= t.f_plus(rho).unwrap() * (1.0 + 1e-12));
        }
        for s in [0.3, 0.7, 1.0] {
            let b = dimension_bounds(&t, &DimFunction::power(d, s).unwrap()).unwrap();
            prop_assert!(b.hausdorff_lower <= b.box_upper * (1.0 + 1e-12));
        }
    }

    #[test]
    fn box_counts_bracket_kept_cylinders(seed in any::<u64>()) {
        let d = Dimensions::new(1, 1).unwrap();
        let c = scheme(d, 2, 6);
        let t = Tree::from_rule(&c, &BuildOptions::new(6), hashed_rule(seed, 3, 1, 4)).unwrap();
        for k in 1..=6 {
            let rho = 0.5 * 4f64.powi(-(k as i32));
            let n = box_count_tree(&t, rho).unwrap();
            prop_assert_eq!(n, t.levels()[k].len() as u64);
            // the grid is aligned with the cylinders: twice the scale merges at most pairs
            let coarse = box_count_tree(&t, 2.0 * rho).unwrap();
            prop_assert!(2 * coarse >= n && coarse <= n);
        }
    }
}

#[test]
fn avoidance_rates_near_eta_beta() {
    let d = Dimensions::new(1, 1).unwrap();
    let kappa = 0.05;
    let beta = 0.5;
    let psi = ApproxFunction::power_law(d, kappa).unwrap();
    let s = constant_schedule(&psi, beta, 0.5, 3).unwrap();
    let c = CodingScheme::new(s.clone(), d);
    let mut opts = BuildOptions::new(3);
    opts.samples = 1;
    let t = build_avoidance_tree(&psi, 1.0, &c, &opts).unwrap();
    assert!(t.truncated());
    let eb = eta(d, &NormSpec::sup(1), &NormSpec::sup(1)).unwrap() * beta;
    for k in 1..=3 {
        let p = t.p_plus(k);
        assert!(p >= 0.5 * eb && p <= 2.0 * eb, "P_{k}^+ = {p}, eta*beta = {eb}");
    }
    for node in &t.levels()[3] {
        let (a, b) = t.midpoint(&node.word).unwrap();
        assert!(!window_hit(a, b, 1.0, s.q(3) * (1.0 - 1e-12), |q| psi.psi(q)));
    }
}
