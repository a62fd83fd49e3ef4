//! The encoder hot-swap monitor as a replayable state machine.
//!
//! A reference checkpoint is pinned when monitoring starts; every scheduled
//! observation compares the current checkpoint to that reference. When CKA
//! drops strictly below the threshold, the encoder is swapped, the reference
//! resets to the triggering checkpoint, and the first swap additionally
//! starts the post-training alignment stage. At the pretraining end step the
//! encoder is swapped one final time regardless of CKA.
//!
//! This example feeds the monitor pre-computed CKA values reproducing a
//! two-crossing run at the published operating point (threshold 0.975,
//! monitoring from step 500k every 10k, pretraining ends at 2.0M), then
//! derives the cross-stage timeline.
//!
//! Run with: `cargo run --example hot_swap_schedule`

use entalloc::scheduler::{
    emit_iasft_timeline, format_event_table, format_timeline_table, run_schedule,
    CheckpointObservation, ScheduleConfig,
};

fn main() -> entalloc::Result<()> {
    let config = ScheduleConfig::published_defaults();
    println!(
        "threshold {}  monitor start {}  interval {}  pretrain end {}\n",
        config.tau,
        config.monitor_start_step,
        config.monitor_interval_steps,
        config.pretrain_end_step
    );

    // CKA stays healthy, dips below threshold at 1.01M and again at 1.32M.
    let mut observations = Vec::new();
    let mut step = config.monitor_start_step;
    while step <= config.pretrain_end_step {
        let cka = match step {
            1_010_000 => 0.9741,
            1_320_000 => 0.9699,
            _ => 0.9925,
        };
        observations.push(CheckpointObservation::from_cka_value(step, cka)?);
        step += config.monitor_interval_steps;
    }

    // Value-mode observations never need the dump loader.
    let mut no_loader = |_: &str, _: &str| -> entalloc::Result<f64> { unreachable!("value mode") };
    let events = run_schedule(&observations, &config, &mut no_loader)?;
    println!("event log:");
    print!("{}", format_event_table(&events));

    // Post-training stages run on their own step clocks: alignment takes
    // 1.3M steps, IA-SFT 1.0M. Swaps that fired during pretraining are
    // annotated with the stage window their step falls into.
    let timeline = emit_iasft_timeline(&events, 1_300_000, 1_000_000)?;
    println!("\ncross-stage timeline:");
    print!("{}", format_timeline_table(&timeline));
    Ok(())
}
