use proptest::prelude::*;

use triplesurv::data::{assign_bin, crop, split_indices, TimeGrid};
use triplesurv::metrics::{c_index, kaplan_meier, time_average, KmTarget};
use triplesurv::model::{
    init_params, predict_risk, predict_survival, Checkpoint, Head, ModelConfig, Pmf,
};

fn logits(max_k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0..30.0f64, 2..max_k)
}

fn survival_data(max_n: usize) -> impl Strategy<Value = Vec<(f64, bool, f64)>> {
    prop::collection::vec((0u8..20, any::<bool>(), 0u8..6), 2..max_n)
        .prop_map(|v| v.into_iter().map(|(t, e, s)| (t as f64, e, s as f64)).collect())
}

proptest! {
    #[test]
    fn heads_emit_distributions(z in logits(30), mtlr in any::<bool>()) {
        let head = if mtlr { Head::Mtlr } else { Head::Cat };
        let p = head.pmf(&z).unwrap();
        let sum: f64 = p.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(p.probs().iter().all(|&x| x >= 0.0));
        prop_assert_eq!(p.k_bins(), if mtlr { z.len() + 1 } else { z.len() });
    }

    #[test]
    fn risk_stays_inside_midpoint_range(z in logits(30)) {
        let p = Head::Cat.pmf(&z).unwrap();
        let k = p.k_bins() as f64;
        let r = predict_risk(&p);
        prop_assert!(r >= 1.0 / (2.0 * k) && r <= 1.0 - 1.0 / (2.0 * k));
    }

    #[test]
    fn survival_is_non_increasing(z in logits(30)) {
        let p = Head::Cat.pmf(&z).unwrap();
        let s: Vec<f64> = (0..=p.k_bins()).map(|k| predict_survival(&p, k)).collect();
        prop_assert_eq!(s[0], 1.0);
        prop_assert_eq!(*s.last().unwrap(), 0.0);
        prop_assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn shifting_mass_later_lowers_risk(z in logits(20), from in 0usize..19) {
        let p = Head::Cat.pmf(&z).unwrap();
        let k = p.k_bins();
        let from = from % (k - 1);
        let mut q = p.probs().to_vec();
        let moved = q[from] / 2.0;
        q[from] -= moved;
        q[from + 1] += moved;
        let q = Pmf::new(q).unwrap();
        prop_assert!(predict_risk(&q) <= predict_risk(&p) + 1e-15);
    }

    #[test]
    fn c_index_matches_pair_count(data in survival_data(60)) {
        let t: Vec<f64> = data.iter().map(|d| d.0).collect();
        let e: Vec<bool> = data.iter().map(|d| d.1).collect();
        let s: Vec<f64> = data.iter().map(|d| d.2).collect();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..t.len() {
            for j in 0..t.len() {
                if e[i] && t[i] < t[j] {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        match c_index(&s, &t, &e) {
            Ok(c) => prop_assert_eq!(c, num / den),
            Err(_) => prop_assert_eq!(den, 0.0),
        }
    }

    #[test]
    fn c_index_flips_under_negation(data in survival_data(60)) {
        let t: Vec<f64> = data.iter().map(|d| d.0).collect();
        let e: Vec<bool> = data.iter().map(|d| d.1).collect();
        let s: Vec<f64> = data.iter().map(|d| d.2).collect();
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        if let (Ok(a), Ok(b)) = (c_index(&s, &t, &e), c_index(&neg, &t, &e)) {
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kaplan_meier_is_a_survival_curve(data in survival_data(80)) {
        let t: Vec<f64> = data.iter().map(|d| d.0).collect();
        let e: Vec<bool> = data.iter().map(|d| d.1).collect();
        let km = kaplan_meier(&t, &e, KmTarget::Event).unwrap();
        let vals: Vec<f64> = (0..=21).map(|x| km.eval(x as f64)).collect();
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        for x in 0..=21 {
            prop_assert!(km.eval_left(x as f64) >= km.eval(x as f64));
        }
    }

    #[test]
    fn split_is_a_partition(n in 5usize..500, seed in any::<u64>()) {
        let parts = split_indices(n, (0.6, 0.2, 0.2), seed).unwrap();
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, (0.6, 0.2, 0.2), seed).unwrap(), parts);
    }

    #[test]
    fn crop_lands_in_bounds(x in -1e6..1e6f64, a in -100.0..100.0f64, w in 0.0..100.0f64) {
        let c = crop(x, a, a + w).unwrap();
        prop_assert!(c >= a && c <= a + w);
        if x >= a && x <= a + w {
            prop_assert_eq!(c, x);
        }
    }

    #[test]
    fn normalized_times_are_monotone_and_binned(
        t_min in 0.0..50.0f64,
        span in 0.1..100.0f64,
        k in 3usize..60,
        mut ts in prop::collection::vec(0.0..200.0f64, 1..40),
    ) {
        let g = TimeGrid::from_event_range(t_min, t_min + span, k).unwrap();
        ts.sort_by(f64::total_cmp);
        let norm: Vec<f64> = ts.iter().map(|&t| g.normalize(t)).collect();
        prop_assert!(norm.windows(2).all(|w| w[0] <= w[1]));
        let top = (k - 1) as f64 / k as f64;
        for &x in &norm {
            prop_assert!((0.0..=top).contains(&x));
            let b = assign_bin(x, k).unwrap();
            prop_assert!((1..=k).contains(&b));
        }
        // observed events never land in the reserved last bin
        let last_event = g.normalize(t_min + span);
        prop_assert!(assign_bin(last_event, k).unwrap() < k);
        prop_assert_eq!(TimeGrid::from_text(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn time_average_of_a_constant_is_the_constant(c in -5.0..5.0f64, e in -8i32..8, neg in any::<bool>(), mut grid in prop::collection::vec(0.0..1.0f64, 2..30)) {
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        prop_assume!(grid.len() >= 2);
        let avg = time_average(&grid, &vec![c; grid.len()]).unwrap();
        prop_assert!((avg - c).abs() <= 1e-12 * c.abs().max(1.0));
        // powers of two survive the weighted mean without rounding
        let d = if neg { -1.0 } else { 1.0 } * 2f64.powi(e);
        prop_assert_eq!(time_average(&grid, &vec![d; grid.len()]).unwrap(), d);
    }

    #[test]
    fn checkpoint_text_roundtrips(seed in any::<u64>(), mtlr in any::<bool>(), k in 3usize..12) {
        let cfg = ModelConfig {
            input_dim: 3,
            hidden_dim: 4,
            n_blocks: 1,
            dropout_rate: 0.1,
            head: if mtlr { Head::Mtlr } else { Head::Cat },
            k_bins: k,
        };
        let ckpt = Checkpoint {
            params: init_params(&cfg, seed).unwrap(),
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            scaler: None,
            risk_cutoff: Some(0.25),
        };
        prop_assert_eq!(Checkpoint::from_text(&ckpt.to_text()).unwrap(), ckpt);
    }
}
