//! End-to-end report assembly: compute the metric triple for a sequence of
//! checkpoints of a drifting encoder, collect the rows into a report, and
//! write both the canonical CSV and an SVG line chart to a scratch directory.
//!
//! This is the library-level equivalent of piping several `metrics` outputs
//! through the `report` subcommand.
//!
//! Run with: `cargo run --example render_report`

use std::fs;

use entalloc::cka::avg_utterance_cka;
use entalloc::dataio::{
    assemble_corpus, render_svg_lines, write_metrics_csv, MetricReport, MetricRow, SeriesKind,
};
use entalloc::synth::DriftSpec;
use entalloc::targets::metric_triple;

fn main() -> entalloc::Result<()> {
    let spec = DriftSpec {
        feature_dim: 16,
        frames_min: 6,
        frames_max: 12,
        utterances: 250,
        drift_rate: 0.000_25,
        noise_scale: 1.0,
        frame_jitter: 0.25,
        semantic_leak: 1.2,
        vocab_size: 40,
        phones_min: 4,
        phones_max: 10,
        embedding_dim: 12,
        seed: 21,
        checkpoint_steps: vec![200, 400, 600, 800, 1000],
        jolts: Vec::new(),
    };
    let corpus = entalloc::synth::generate(&spec)?;
    let reference = &corpus.checkpoints[0];

    let mut rows = Vec::new();
    for dump in &corpus.checkpoints {
        let items = assemble_corpus(dump, &corpus.manifest, &corpus.embeddings)?;
        let triple = metric_triple(
            &items,
            &corpus.vocab,
            8,
            1e-3,
            dump.checkpoint_step(),
            "synthetic",
        )?;
        let cka = avg_utterance_cka(reference, dump)?;
        rows.push(MetricRow::from_triple(&triple, Some(cka.value)));
    }
    let report = MetricReport::new(rows)?;

    println!("report rows:");
    println!("  step    nse       pai_bits  csai_bits cka_vs_ref");
    for row in report.rows() {
        println!(
            "  {:<7} {:.6}  {:.6}  {:.6}  {:.6}",
            row.checkpoint_step,
            row.nse,
            row.pai_bits,
            row.csai_bits,
            row.cka_vs_ref.unwrap()
        );
    }

    let csv = write_metrics_csv(&report);
    let svg = render_svg_lines(&report, &SeriesKind::all())?;

    let out_dir = std::env::temp_dir().join("entalloc_render_report");
    fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join("metrics.csv");
    let svg_path = out_dir.join("metrics.svg");
    fs::write(&csv_path, &csv)?;
    fs::write(&svg_path, &svg)?;

    println!();
    println!("wrote {} ({} bytes)", csv_path.display(), csv.len());
    println!("wrote {} ({} bytes)", svg_path.display(), svg.len());
    println!();
    println!("csv preview:");
    for line in csv.lines() {
        println!("  {line}");
    }
    Ok(())
}
