use std::collections::BTreeMap;

use proptest::prelude::*;

use nextgrade::eval::clip_prediction;
use nextgrade::importance::{decompose_fm, madimp_row, madimp_select, SelectionRule, Share};
use nextgrade::models::fm::{fm_predict, FmModel};
use nextgrade::synth::{generate_synthetic, SynthConfig};
use nextgrade::transcript::{
    academic_level, derive_all, grade_from_letter, letter_from_grade, Dataset, GradePoints, LETTER_SCALE,
};

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        n_students: 120,
        n_courses: 30,
        n_instructors: 20,
        n_terms: 5,
        ..Default::default()
    }
}

fn fm_case() -> impl Strategy<Value = (FmModel, Vec<u32>, Vec<f64>)> {
    (1usize..20, 1usize..6).prop_flat_map(|(p, k)| {
        (
            -2.0..2.0f64,
            prop::collection::vec(-2.0..2.0f64, p),
            prop::collection::vec(-1.0..1.0f64, p * k),
            prop::collection::vec(prop::option::of(-3.0..3.0f64), p),
        )
            .prop_map(move |(w0, w, v, x)| {
                let (idx, val): (Vec<u32>, Vec<f64>) = x
                    .iter()
                    .enumerate()
                    .filter_map(|(c, x)| x.map(|x| (c as u32, x)))
                    .unzip();
                (FmModel { w0, w, v, k }, idx, val)
            })
    })
}

proptest! {
    #[test]
    fn letter_grid_round_trips(i in 0usize..LETTER_SCALE.len()) {
        let (letter, points) = LETTER_SCALE[i];
        let g = grade_from_letter(letter).unwrap();
        prop_assert_eq!(g.value(), points);
        prop_assert_eq!(letter_from_grade(g), Some(letter));
    }

    #[test]
    fn out_of_range_points_are_rejected(x in prop_oneof![-100.0..-1e-9f64, 4.0 + 1e-9..100.0f64]) {
        prop_assert!(GradePoints::new(x).is_err());
    }

    #[test]
    fn academic_level_is_monotone(a in 0.0..300.0f64, b in 0.0..300.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(academic_level(lo) <= academic_level(hi));
        prop_assert!(academic_level(hi) <= 4);
    }

    #[test]
    fn clipped_predictions_stay_on_scale(x in -1e6..1e6f64) {
        let c = clip_prediction(x).unwrap();
        prop_assert!((0.0..=4.0).contains(&c));
        if (0.0..=4.0).contains(&x) {
            prop_assert_eq!(c, x);
        }
    }

    #[test]
    fn madimp_shares_are_a_distribution((m, idx, val) in fm_case()) {
        let d = decompose_fm(&m, &idx, &val);
        prop_assert!((d.total() - fm_predict(&m, &idx, &val)).abs() < 1e-9);
        if let Some(shares) = madimp_row(&d) {
            let sum: f64 = shares.values().map(|s| s.total).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            for s in shares.values() {
                prop_assert!(s.one_way >= 0.0 && s.two_way >= 0.0);
                prop_assert!((s.total - s.one_way - s.two_way).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn madimp_ignores_rescaled_deviation((m, idx, val) in fm_case(), scale in 0.1..10.0f64) {
        let mut scaled = m.clone();
        scaled.w.iter_mut().for_each(|w| *w *= scale);
        scaled.v.iter_mut().for_each(|v| *v *= scale.sqrt());
        let (a, b) = (madimp_row(&decompose_fm(&m, &idx, &val)), madimp_row(&decompose_fm(&scaled, &idx, &val)));
        if let (Some(a), Some(b)) = (a, b) {
            for (c, s) in &a {
                prop_assert!((s.total - b[c].total).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_threshold_keeps_everything(values in prop::collection::vec(0.0..1.0f64, 1..12)) {
        let shares: BTreeMap<String, Share> = values
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("f{i}"), Share { total: *v, one_way: *v, two_way: 0.0 }))
            .collect();
        let keep = madimp_select(&shares, SelectionRule::Threshold(0.0)).unwrap();
        prop_assert!(shares.keys().all(|k| keep.contains(k)));
        prop_assert!(keep.contains("sid") && keep.contains("cid"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn derived_features_ignore_current_and_later_grades(seed in 0u64..1000, cut in 1u32..5) {
        let records = generate_synthetic(&small_synth(seed)).unwrap().records;
        let before = derive_all(&records);
        let mut mutated = records.clone();
        for r in mutated.iter_mut().filter(|r| r.term.index >= cut) {
            if let Some(g) = r.grade {
                r.grade = Some(GradePoints::new(4.0 - g.value()).unwrap());
            }
        }
        let after = derive_all(&mutated);
        for (i, r) in records.iter().enumerate().filter(|(_, r)| r.term.index <= cut) {
            prop_assert_eq!(&before[i], &after[i], "record {} in term {}", i, r.term.index);
        }
    }

    #[test]
    fn derived_features_ignore_later_records(seed in 0u64..1000, cut in 0u32..5) {
        let records = generate_synthetic(&small_synth(seed)).unwrap().records;
        let full = derive_all(&records);
        let kept: Vec<usize> = (0..records.len()).filter(|&i| records[i].term.index <= cut).collect();
        let truncated: Vec<_> = kept.iter().map(|&i| records[i].clone()).collect();
        let partial = derive_all(&truncated);
        for (j, &i) in kept.iter().enumerate() {
            prop_assert_eq!(&full[i], &partial[j]);
        }
    }

    #[test]
    fn cold_start_classes_partition_each_term(seed in 0u64..1000) {
        let ds = Dataset::new(generate_synthetic(&small_synth(seed)).unwrap().records);
        for (term, counts) in ds.cold_start_summary() {
            prop_assert_eq!(counts.iter().sum::<usize>(), ds.term_rows(term.index).len());
        }
    }

    #[test]
    fn synthetic_generation_is_reproducible(seed in 0u64..1000) {
        let a = generate_synthetic(&small_synth(seed)).unwrap();
        let b = generate_synthetic(&small_synth(seed)).unwrap();
        prop_assert_eq!(a.records, b.records);
    }
}
