use bsc_cli::dataset::{escape_tsv, ingest, parse_jsonl, to_jsonl, RawFormat, ScoreScale};
use bsc_core::{PairRecord, Split};
use proptest::prelude::*;

fn record() -> impl Strategy<Value = PairRecord> {
    (
        any::<String>(),
        any::<String>(),
        0.0f64..=1.0,
        proptest::option::of(any::<String>()),
        prop::sample::select(vec![Split::Train, Split::Dev, Split::Test]),
    )
        .prop_map(|(q, a, label, group, split)| {
            let mut r = PairRecord::new("", q, a, label);
            r.group = group;
            r.split = split;
            r
        })
}

fn records() -> impl Strategy<Value = Vec<PairRecord>> {
    prop::collection::vec(record(), 0..20).prop_map(|mut v| {
        for (i, r) in v.iter_mut().enumerate() {
            r.id = format!("r{i}");
        }
        v
    })
}

proptest! {
    #[test]
    fn jsonl_round_trip_is_lossless(recs in records()) {
        let text = to_jsonl(&recs);
        prop_assert_eq!(parse_jsonl(&text, "p").unwrap(), recs);
    }

    #[test]
    fn tsv_ingest_keeps_texts_and_order(recs in records(), lo in -10.0f64..10.0, width in 0.5f64..10.0) {
        let scale = ScoreScale::new(lo, lo + width).unwrap();
        let mut text = String::new();
        for r in &recs {
            let raw = lo + r.label * width;
            text.push_str(&format!("{}\t{}\t{}\t{raw}\t\t{}\n", r.id, escape_tsv(&r.text_q), escape_tsv(&r.text_a), r.split));
        }
        let back = ingest(&text, "t", scale, RawFormat::Tsv).unwrap();
        prop_assert_eq!(back.len(), recs.len());
        for (b, r) in back.iter().zip(&recs) {
            prop_assert_eq!(&b.id, &r.id);
            prop_assert_eq!(&b.text_q, &r.text_q);
            prop_assert_eq!(&b.text_a, &r.text_a);
            prop_assert_eq!(b.split, r.split);
            prop_assert!((b.label - r.label).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&b.label));
        }
    }

    #[test]
    fn scale_is_affine_and_monotone(lo in -100.0f64..100.0, width in 1e-3f64..100.0, t in 0.0f64..=1.0, u in 0.0f64..=1.0) {
        let s = ScoreScale::new(lo, lo + width).unwrap();
        let (x, y) = (lo + t * width, lo + u * width);
        let (nx, ny) = (s.normalize(x).unwrap(), s.normalize(y).unwrap());
        prop_assert!((nx - t).abs() < 1e-9);
        if x <= y {
            prop_assert!(nx <= ny);
        }
        prop_assert!(s.normalize(lo + width * 1.01 + 1e-9).is_none());
        prop_assert!(s.normalize(lo - width * 0.01 - 1e-9).is_none());
    }
}
