//! Runs an expansion curriculum and its compute-matched baseline on the
//! synthetic corpus and prints one line per stage.
//!
//! Usage: `cargo run --release --example synthetic_curriculum -- [iterations] [chars] [seed]`

use dyntok::{synthetic_corpus, Corpus, Curriculum, CurriculumConfig, SynthConfig};

fn main() -> dyntok::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map_or(3, |a| a.parse().expect("iterations"));
    let chars = args.next().map_or(1_000_000, |a| a.parse().expect("chars"));
    let seed = args.next().map_or(0, |a| a.parse().expect("seed"));
    let text = synthetic_corpus(&SynthConfig {
        chars,
        seed,
        ..SynthConfig::default()
    });
    let corpus = Corpus::split(&text, 0.05)?;
    let cfg = CurriculumConfig {
        iterations,
        ..CurriculumConfig::default()
    };
    let curriculum = Curriculum::new(cfg, corpus)?;
    let state = curriculum.run()?;
    let baseline = curriculum.compute_matched_baseline(&state)?;
    println!("stage  vocab  train  validation  baseline  bpc(len>=4)  bpc(len=1)  ms");
    for (rec, base) in state.records.iter().zip(&baseline) {
        let report = rec.report.as_ref().expect("validation report");
        println!(
            "{:>5}  {:>5}  {:.4}  {:>10.4}  {:>8.4}  {:>11.4}  {:>10.4}  {}",
            rec.stage,
            rec.vocab_size,
            rec.train_bpc.unwrap_or(f64::NAN),
            rec.validation_bpc.unwrap_or(f64::NAN),
            base.validation_bpc.unwrap_or(f64::NAN),
            report.bpc_for_lengths_at_least(4).unwrap_or(f64::NAN),
            report.per_length.get(&1).map_or(f64::NAN, |s| s.bpc),
            rec.wall_ms,
        );
    }
    Ok(())
}
