mod common;

use common::{grown_vocab, repetitive_text, MIXED};
use dyntok::metrics::{group_matrix, write_group_csv, write_length_csv, write_scaling_csv, Series};
use dyntok::{bpc_report, fit_slope, improvement_table, Codec, NgramModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn groups_recombine_to_global(seed in any::<u64>(), len in 20usize..2000, steps in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = repetitive_text(&mut rng, MIXED, len);
        let vocab = grown_vocab(&mut rng, &text, steps, 200);
        let stream = Codec::new(&vocab).encode(&text).unwrap();
        let nll = NgramModel::fit(&stream.ids, vocab.len(), 3, 0.05).unwrap().nll_trace(&stream).unwrap();
        let r = bpc_report(&stream, &nll, &vocab).unwrap();

        prop_assert_eq!(r.n_chars as usize, text.chars().count());
        prop_assert_eq!(r.n_tokens as usize, stream.len());
        prop_assert_eq!(r.global_bpc, nll.bits_per_char(stream.text_len));
        for groups in [
            r.per_length.values().copied().collect::<Vec<_>>(),
            r.per_group.values().copied().collect::<Vec<_>>(),
        ] {
            prop_assert_eq!(groups.iter().map(|g| g.char_count).sum::<u64>(), r.n_chars);
            prop_assert_eq!(groups.iter().map(|g| g.token_count).sum::<u64>(), r.n_tokens);
            let weighted: f64 = groups.iter().map(|g| g.bpc * g.char_count as f64).sum::<f64>() / r.n_chars as f64;
            prop_assert!(rel(weighted, r.global_bpc) < 1e-9);
            prop_assert!(groups.iter().all(|g| g.bpc >= 0.0));
        }
        for (&len, g) in &r.per_length {
            prop_assert_eq!(g.char_count, len as u64 * g.token_count);
        }
    }
}

#[test]
fn exact_line() {
    let pts: Vec<(usize, f64)> = [10usize, 100, 1000, 10_000]
        .iter()
        .map(|&v| (v, 2.0 - 0.1 * (v as f64).log10()))
        .collect();
    let f = fit_slope(&pts).unwrap();
    assert!((f.slope + 0.1).abs() < 1e-12);
    assert!((f.intercept - 2.0).abs() < 1e-12);
    assert!((f.r2 - 1.0).abs() < 1e-12);
    assert!(fit_slope(&pts[..1]).is_err());
    assert!(fit_slope(&[(10, 1.0), (10, 2.0)]).is_err());
}

#[test]
fn improvements() {
    let t = improvement_table(&[1.4385, 1.3764, 1.0], &[1.5103, 1.4637, 1.0]).unwrap();
    assert!((t[0] - 4.75).abs() < 0.005);
    assert!((t[1] - 5.96).abs() < 0.005);
    assert_eq!(t[2], 0.0);
    assert!(improvement_table(&[1.0], &[0.0]).is_err());
    assert!(improvement_table(&[1.0], &[]).is_err());
}

#[test]
fn csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let text = repetitive_text(&mut rng, "abc d", 500);
    let vocab = grown_vocab(&mut rng, &text, 3, 50);
    let stream = Codec::new(&vocab).encode(&text).unwrap();
    let nll = NgramModel::fit(&stream.ids, vocab.len(), 2, 0.1)
        .unwrap()
        .nll_trace(&stream)
        .unwrap();
    let r = bpc_report(&stream, &nll, &vocab).unwrap();

    let p = dir.path().join("len.csv");
    write_length_csv(&r, &p).unwrap();
    let body = std::fs::read_to_string(&p).unwrap();
    assert!(body.starts_with("length,bpc,count\n1,"));
    assert_eq!(body.lines().count(), r.per_length.len() + 1);

    let p = dir.path().join("groups.csv");
    let cells = group_matrix(&[r.clone(), r.clone()]);
    write_group_csv(&cells, &p).unwrap();
    let body = std::fs::read_to_string(&p).unwrap();
    assert!(body.starts_with("group,stage,bpc\n0,0,"));
    assert!(cells
        .windows(2)
        .all(|w| (w[0].group, w[0].stage) < (w[1].group, w[1].stage)));

    let p = dir.path().join("scaling.csv");
    let series = [Series {
        name: "curriculum".into(),
        points: vec![(92, 1.7), (4359, 1.6)],
    }];
    write_scaling_csv(&series, &p).unwrap();
    assert_eq!(
        std::fs::read_to_string(&p).unwrap(),
        "vocab_size,bpc,series\n92,1.7,curriculum\n4359,1.6,curriculum\n"
    );
    assert!(write_scaling_csv(&series, dir.path().join("missing/x.csv")).is_err());
}
