mod common;

use common::{censor, draw, eos, family};
use lshazard::{mml_estimate, predict_all, FamilySpec, MmlOptions, PredictorMethod};
use proptest::prelude::*;

const METHODS: [PredictorMethod; 2] = [PredictorMethod::PredictiveMml, PredictorMethod::Spacings];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn predictions_are_affine_equivariant(seed in 0u64..100_000, a in -50.0f64..50.0, b in 0.05f64..20.0, r in 5usize..20, j in 0usize..2) {
        let spec = [FamilySpec::sts(2, 0.0), FamilySpec::lts(3.0)][j];
        let f = family(spec);
        let m = eos(&f, 20);
        let s = censor(&draw(&f, 20, seed, 4), r);
        let moved = s.affine(a, b).unwrap();
        let opts = MmlOptions::default();
        let e0 = mml_estimate(&s, &f, &m, &opts).unwrap();
        let e1 = mml_estimate(&moved, &f, &m, &opts).unwrap();
        for method in METHODS {
            let p0 = predict_all(&s, &f, &m, &e0, method).unwrap();
            let p1 = predict_all(&moved, &f, &m, &e1, method).unwrap();
            prop_assert_eq!(&p0.indices, &p1.indices);
            for (x0, x1) in p0.values.iter().zip(&p1.values) {
                let want = a + b * x0;
                prop_assert!((x1 - want).abs() <= 1e-10 * (a.abs() + b * (1.0 + x0.abs())), "{} vs {}", x1, want);
            }
        }
    }

    #[test]
    fn completed_samples_are_sorted(seed in 0u64..100_000, r in 2usize..20) {
        let f = family(FamilySpec::sts(3, 1.0));
        let m = eos(&f, 20);
        let s = censor(&draw(&f, 20, seed, 5), r);
        let e = mml_estimate(&s, &f, &m, &MmlOptions::default()).unwrap();
        for method in METHODS {
            let p = predict_all(&s, &f, &m, &e, method).unwrap();
            let all = p.combined(&s);
            prop_assert_eq!(all.len(), 20);
            prop_assert!(all.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(p.values.iter().all(|&x| x >= s.last()));
        }
    }
}
