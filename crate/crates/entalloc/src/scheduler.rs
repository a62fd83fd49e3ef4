//! The CKA-guided encoder hot-swap state machine: reference-checkpoint
//! management, threshold triggers, stage markers, and a replayable event
//! log, plus the post-training timeline annotator.
//!
//! The machine watches a stream of pretraining checkpoints. Once the
//! monitoring start step arrives, that checkpoint becomes the reference;
//! afterwards every observation's average CKA against the current reference
//! is compared to a threshold. A strict drop below the threshold hot-swaps
//! the downstream encoder and resets the reference to the triggering
//! checkpoint (so CKA restarts near one), the first such swap additionally
//! marking the start of the post-training alignment stage. When the stream
//! reaches the pretraining end step a final swap fires unconditionally.
//!
//! Checkpoint dumps are referenced by opaque handle and never loaded here;
//! the caller supplies the capability that turns a (reference, observation)
//! handle pair into an average CKA. A value mode carrying precomputed CKA
//! numbers exists for tests, expressed per reference segment because a
//! fixed-baseline trajectory cannot describe reference resets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scheduler tuning: threshold, cadence, and the end-of-pretraining step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Hot-swap threshold: a strict drop below this average CKA triggers.
    pub tau: f64,
    /// First monitored step; its checkpoint seeds the reference.
    pub monitor_start_step: u64,
    /// Monitoring cadence in steps.
    pub monitor_interval_steps: u64,
    /// Pretraining end step, where the final swap fires unconditionally.
    pub pretrain_end_step: u64,
}

impl ScheduleConfig {
    /// Validating constructor.
    ///
    /// The end step must sit on the monitoring cadence: every observation is
    /// required to, and a run must be able to reach its own end marker.
    pub fn new(
        tau: f64,
        monitor_start_step: u64,
        monitor_interval_steps: u64,
        pretrain_end_step: u64,
    ) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 || tau >= 1.0 {
            return Err(Error::usage(format!(
                "tau must lie strictly inside (0, 1), got {tau}"
            )));
        }
        if monitor_interval_steps == 0 {
            return Err(Error::usage("monitor_interval_steps must be positive"));
        }
        if monitor_start_step >= pretrain_end_step {
            return Err(Error::usage(format!(
                "monitor_start_step {monitor_start_step} must come before pretrain_end_step {pretrain_end_step}"
            )));
        }
        if !(pretrain_end_step - monitor_start_step).is_multiple_of(monitor_interval_steps) {
            return Err(Error::usage(format!(
                "pretrain_end_step {pretrain_end_step} is off the monitoring cadence (start {monitor_start_step}, interval {monitor_interval_steps}): the run could never reach its end marker"
            )));
        }
        Ok(Self {
            tau,
            monitor_start_step,
            monitor_interval_steps,
            pretrain_end_step,
        })
    }

    /// The published defaults: threshold 0.975, monitoring from step 500k
    /// every 10k steps, pretraining ending at 2.0M steps.
    pub fn published_defaults() -> Self {
        Self::new(0.975, 500_000, 10_000, 2_000_000)
            .expect("published defaults are self-consistent")
    }
}

/// What a checkpoint observation carries.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationPayload {
    /// Dump mode: an opaque handle (for example a file path) resolved by
    /// the caller-supplied CKA capability. The scheduler never loads dumps.
    DumpRef(String),
    /// Value mode (testing): the average CKA of this checkpoint against the
    /// current reference segment.
    CkaValue(f64),
}

/// One checkpoint arriving at the scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointObservation {
    step: u64,
    payload: ObservationPayload,
}

impl CheckpointObservation {
    /// Dump-mode observation with an opaque dump handle.
    pub fn from_dump_ref(step: u64, handle: impl Into<String>) -> Result<Self> {
        let handle = handle.into();
        if handle.is_empty() {
            return Err(Error::usage("dump handle must not be empty"));
        }
        Ok(Self {
            step,
            payload: ObservationPayload::DumpRef(handle),
        })
    }

    /// Value-mode observation carrying a precomputed per-segment CKA.
    pub fn from_cka_value(step: u64, cka: f64) -> Result<Self> {
        if !cka.is_finite() || !(0.0..=1.0).contains(&cka) {
            return Err(Error::usage(format!(
                "precomputed CKA must lie in [0, 1], got {cka}"
            )));
        }
        Ok(Self {
            step,
            payload: ObservationPayload::CkaValue(cka),
        })
    }

    /// Pretraining step of this observation.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// The payload (dump handle or precomputed value).
    pub fn payload(&self) -> &ObservationPayload {
        &self.payload
    }
}

/// Where the machine is in its lifecycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// No reference yet; waiting for the monitoring start step.
    BeforeMonitoring,
    /// Reference set; threshold triggers live.
    Monitoring,
    /// Pretraining ended; no further observations are accepted.
    Done,
}

/// The kinds of events the scheduler can log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// Monitoring began; this checkpoint seeds the reference.
    ReferenceInit,
    /// CKA dropped strictly below the threshold: encoder hot-swapped and
    /// reference reset to this checkpoint.
    SwapAndReferenceUpdate,
    /// The post-training alignment stage starts (first swap only).
    AlignmentStart,
    /// The IA-SFT stage starts (derived timeline marker, never logged by
    /// the state machine itself).
    IasftStart,
    /// Unconditional last hot-swap at the pretraining end step.
    FinalSwap,
    /// Pretraining ended.
    PretrainEnd,
}

impl EventKind {
    /// Canonical name, as serialized.
    pub fn name(self) -> &'static str {
        match self {
            EventKind::ReferenceInit => "ReferenceInit",
            EventKind::SwapAndReferenceUpdate => "SwapAndReferenceUpdate",
            EventKind::AlignmentStart => "AlignmentStart",
            EventKind::IasftStart => "IasftStart",
            EventKind::FinalSwap => "FinalSwap",
            EventKind::PretrainEnd => "PretrainEnd",
        }
    }
}

/// One logged scheduler event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerEvent {
    /// What happened.
    pub kind: EventKind,
    /// Pretraining step it happened at.
    pub step: u64,
    /// The triggering CKA, present on threshold-triggered swaps (and the
    /// co-occurring alignment marker); absent elsewhere.
    pub cka_at_trigger: Option<f64>,
}

/// The replayable hot-swap state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    phase: Phase,
    reference: Option<(u64, ObservationPayload)>,
    trigger_count: u64,
    event_log: Vec<SchedulerEvent>,
    last_step: Option<u64>,
}

impl Default for SchedulerState {
    fn default() -> Self {
        Self::new()
    }
}

impl SchedulerState {
    /// A fresh machine, before monitoring has begun.
    pub fn new() -> Self {
        Self {
            phase: Phase::BeforeMonitoring,
            reference: None,
            trigger_count: 0,
            event_log: Vec::new(),
            last_step: None,
        }
    }

    /// Current lifecycle phase.
    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Step of the current reference checkpoint, once one exists.
    pub fn reference_step(&self) -> Option<u64> {
        self.reference.as_ref().map(|(s, _)| *s)
    }

    /// How many threshold triggers have fired.
    pub fn trigger_count(&self) -> u64 {
        self.trigger_count
    }

    /// The full event log so far, in emission order.
    pub fn event_log(&self) -> &[SchedulerEvent] {
        &self.event_log
    }

    /// Feeds one observation through the machine, returning the events it
    /// emitted (also appended to the internal log).
    ///
    /// `cka_fn` resolves a (reference handle, observation handle) pair to an
    /// average CKA; it is only invoked for dump-mode observations that need
    /// a threshold comparison, so the final checkpoint is never loaded.
    pub fn advance<F>(
        &mut self,
        obs: &CheckpointObservation,
        config: &ScheduleConfig,
        cka_fn: &mut F,
    ) -> Result<Vec<SchedulerEvent>>
    where
        F: FnMut(&str, &str) -> Result<f64>,
    {
        if let Some(last) = self.last_step {
            if obs.step <= last {
                return Err(Error::usage(format!(
                    "observations must arrive in strictly increasing step order: {last} then {}",
                    obs.step
                )));
            }
        }
        let mut emitted = Vec::new();
        match self.phase {
            Phase::Done => {
                return Err(Error::usage(format!(
                    "observation at step {} after pretraining already ended",
                    obs.step
                )));
            }
            Phase::BeforeMonitoring => {
                if obs.step < config.monitor_start_step {
                    return Err(Error::usage(format!(
                        "observation at step {} arrives before monitoring starts at step {}: no reference exists",
                        obs.step, config.monitor_start_step
                    )));
                }
                if obs.step > config.monitor_start_step {
                    return Err(Error::usage(format!(
                        "first observation must land exactly on the monitoring start step {}, got {}",
                        config.monitor_start_step, obs.step
                    )));
                }
                emitted.push(SchedulerEvent {
                    kind: EventKind::ReferenceInit,
                    step: obs.step,
                    cka_at_trigger: None,
                });
                self.reference = Some((obs.step, obs.payload.clone()));
                self.phase = Phase::Monitoring;
            }
            Phase::Monitoring => {
                if !(obs.step - config.monitor_start_step)
                    .is_multiple_of(config.monitor_interval_steps)
                {
                    return Err(Error::usage(format!(
                        "observation at step {} is off the monitoring cadence (start {}, interval {})",
                        obs.step, config.monitor_start_step, config.monitor_interval_steps
                    )));
                }
                if obs.step > config.pretrain_end_step {
                    return Err(Error::usage(format!(
                        "observation at step {} overshoots the pretraining end step {}",
                        obs.step, config.pretrain_end_step
                    )));
                }
                if obs.step == config.pretrain_end_step {
                    // The last hot-swap is unconditional, so the threshold
                    // rule is not evaluated and no CKA is computed.
                    emitted.push(SchedulerEvent {
                        kind: EventKind::FinalSwap,
                        step: obs.step,
                        cka_at_trigger: None,
                    });
                    emitted.push(SchedulerEvent {
                        kind: EventKind::PretrainEnd,
                        step: obs.step,
                        cka_at_trigger: None,
                    });
                    self.reference = Some((obs.step, obs.payload.clone()));
                    self.phase = Phase::Done;
                } else {
                    let cka = self.resolve_cka(obs, cka_fn)?;
                    if cka < config.tau {
                        emitted.push(SchedulerEvent {
                            kind: EventKind::SwapAndReferenceUpdate,
                            step: obs.step,
                            cka_at_trigger: Some(cka),
                        });
                        if self.trigger_count == 0 {
                            emitted.push(SchedulerEvent {
                                kind: EventKind::AlignmentStart,
                                step: obs.step,
                                cka_at_trigger: Some(cka),
                            });
                        }
                        self.trigger_count += 1;
                        self.reference = Some((obs.step, obs.payload.clone()));
                    }
                }
            }
        }
        self.last_step = Some(obs.step);
        self.event_log.extend(emitted.iter().cloned());
        Ok(emitted)
    }

    fn resolve_cka<F>(&self, obs: &CheckpointObservation, cka_fn: &mut F) -> Result<f64>
    where
        F: FnMut(&str, &str) -> Result<f64>,
    {
        match &obs.payload {
            ObservationPayload::CkaValue(v) => Ok(*v),
            ObservationPayload::DumpRef(handle) => {
                let (_, ref_payload) = self
                    .reference
                    .as_ref()
                    .expect("reference always exists in the Monitoring phase");
                match ref_payload {
                    ObservationPayload::DumpRef(ref_handle) => {
                        let v = cka_fn(ref_handle, handle)?;
                        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                            return Err(Error::numerical(format!(
                                "CKA capability returned {v}, outside [0, 1]"
                            )));
                        }
                        Ok(v)
                    }
                    ObservationPayload::CkaValue(_) => Err(Error::usage(
                        "cannot compare a dump observation against a value-mode reference",
                    )),
                }
            }
        }
    }
}

/// Folds a whole observation stream through a fresh machine and returns the
/// complete event log. An empty stream yields an empty log.
pub fn run_schedule<F>(
    observations: &[CheckpointObservation],
    config: &ScheduleConfig,
    cka_fn: &mut F,
) -> Result<Vec<SchedulerEvent>>
where
    F: FnMut(&str, &str) -> Result<f64>,
{
    let mut state = SchedulerState::new();
    for obs in observations {
        state.advance(obs, config, cka_fn)?;
    }
    Ok(state.event_log)
}

/// Serializes an event log as JSON lines: one compact object per event with
/// fields `kind`, `step`, `cka_at_trigger` (null when absent).
pub fn event_log_to_json_lines(events: &[SchedulerEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("event serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Parses an event log from JSON lines (the inverse of
/// [`event_log_to_json_lines`]); blank lines are ignored.
pub fn event_log_from_json_lines(text: &str) -> Result<Vec<SchedulerEvent>> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: SchedulerEvent = serde_json::from_str(line)
            .map_err(|err| Error::format(format!("event log line {}: {err}", i + 1)))?;
        events.push(e);
    }
    Ok(events)
}

/// Renders an event log as an aligned human-readable table.
pub fn format_event_table(events: &[SchedulerEvent]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>12} {:>16}\n",
        "kind", "step", "cka_at_trigger"
    ));
    for e in events {
        let cka = match e.cka_at_trigger {
            Some(v) => format!("{v:.6}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<24} {:>12} {:>16}\n",
            e.kind.name(),
            e.step,
            cka
        ));
    }
    out
}

/// One record of the annotated post-training timeline.
///
/// `pretrain_step` is the pretraining clock; `post_training_step` is the
/// composite post-training clock that starts at zero when alignment begins
/// and continues through IA-SFT. Derived stage markers carry only the
/// latter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineRecord {
    /// Event or marker name.
    pub label: String,
    /// Step on the pretraining clock, for events observed there.
    pub pretrain_step: Option<u64>,
    /// Step on the composite post-training clock, for stage markers.
    pub post_training_step: Option<u64>,
    /// Triggering CKA carried over from the event log.
    pub cka_at_trigger: Option<f64>,
    /// For hot-swaps: which post-training window the swap lands in
    /// ("alignment", "IA-SFT", or "post-IASFT").
    pub annotation: Option<String>,
}

/// Annotates an event log with the post-training stage structure.
///
/// The alignment and IA-SFT stages run on their own step clocks,
/// independent of the pretraining clock, so no clock conversion is
/// attempted: a swap's raw pretraining step is compared against the
/// post-training windows `[0, alignment_duration)` and
/// `[alignment_duration, alignment_duration + iasft_duration]` directly.
/// Derived `AlignmentEnd` and `IasftStart` markers (both at
/// `alignment_duration` on the post-training clock) are inserted right
/// after the `AlignmentStart` record.
pub fn emit_iasft_timeline(
    events: &[SchedulerEvent],
    alignment_duration_steps: u64,
    iasft_duration_steps: u64,
) -> Result<Vec<TimelineRecord>> {
    if !events.iter().any(|e| e.kind == EventKind::AlignmentStart) {
        return Err(Error::data(
            "event log has no AlignmentStart: nothing anchors the post-training timeline",
        ));
    }
    let iasft_end = alignment_duration_steps
        .checked_add(iasft_duration_steps)
        .ok_or_else(|| Error::usage("stage durations overflow the step counter"))?;
    let window_of = |step: u64| -> String {
        if step < alignment_duration_steps {
            "alignment".to_string()
        } else if step <= iasft_end {
            "IA-SFT".to_string()
        } else {
            "post-IASFT".to_string()
        }
    };
    let mut records = Vec::with_capacity(events.len() + 2);
    for e in events {
        let annotation = match e.kind {
            EventKind::SwapAndReferenceUpdate | EventKind::FinalSwap => Some(window_of(e.step)),
            _ => None,
        };
        let post_training_step = if e.kind == EventKind::AlignmentStart {
            Some(0)
        } else {
            None
        };
        records.push(TimelineRecord {
            label: e.kind.name().to_string(),
            pretrain_step: Some(e.step),
            post_training_step,
            cka_at_trigger: e.cka_at_trigger,
            annotation,
        });
        if e.kind == EventKind::AlignmentStart {
            records.push(TimelineRecord {
                label: "AlignmentEnd".to_string(),
                pretrain_step: None,
                post_training_step: Some(alignment_duration_steps),
                cka_at_trigger: None,
                annotation: None,
            });
            records.push(TimelineRecord {
                label: EventKind::IasftStart.name().to_string(),
                pretrain_step: None,
                post_training_step: Some(alignment_duration_steps),
                cka_at_trigger: None,
                annotation: None,
            });
        }
    }
    Ok(records)
}

/// Serializes a timeline as JSON lines.
pub fn timeline_to_json_lines(records: &[TimelineRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

/// Renders a timeline as an aligned human-readable table.
pub fn format_timeline_table(records: &[TimelineRecord]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>14} {:>19} {:>16} {:<12}\n",
        "label", "pretrain_step", "post_training_step", "cka_at_trigger", "annotation"
    ));
    let opt_u64 = |v: Option<u64>| v.map_or("-".to_string(), |x| x.to_string());
    for r in records {
        let cka = match r.cka_at_trigger {
            Some(v) => format!("{v:.6}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<24} {:>14} {:>19} {:>16} {:<12}\n",
            r.label,
            opt_u64(r.pretrain_step),
            opt_u64(r.post_training_step),
            cka,
            r.annotation.as_deref().unwrap_or("-")
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cka::avg_utterance_cka;
    use crate::dataio::RepresentationDump;
    use crate::numerics::Matrix;
    use crate::targets::UtteranceRepresentation;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::collections::HashMap;

    /// A cka_fn for value-mode streams; must never be called.
    fn no_dumps(_: &str, _: &str) -> crate::error::Result<f64> {
        panic!("value-mode streams must not consult the CKA capability");
    }

    fn published() -> ScheduleConfig {
        ScheduleConfig::published_defaults()
    }

    /// Value-mode stream on the published cadence with per-segment CKA
    /// chosen by a closure.
    fn value_stream(
        config: &ScheduleConfig,
        mut cka_at: impl FnMut(u64) -> f64,
    ) -> Vec<CheckpointObservation> {
        let mut out = Vec::new();
        let mut step = config.monitor_start_step;
        while step <= config.pretrain_end_step {
            out.push(CheckpointObservation::from_cka_value(step, cka_at(step)).unwrap());
            step += config.monitor_interval_steps;
        }
        out
    }

    fn kinds_and_steps(events: &[SchedulerEvent]) -> Vec<(EventKind, u64)> {
        events.iter().map(|e| (e.kind, e.step)).collect()
    }

    #[test]
    fn published_trajectory_reproduces_the_expected_event_sequence() {
        let config = published();
        let stream = value_stream(&config, |step| match step {
            1_010_000 => 0.9741,
            1_320_000 => 0.9699,
            _ => 0.9900,
        });
        let log = run_schedule(&stream, &config, &mut no_dumps).unwrap();
        assert_eq!(
            kinds_and_steps(&log),
            vec![
                (EventKind::ReferenceInit, 500_000),
                (EventKind::SwapAndReferenceUpdate, 1_010_000),
                (EventKind::AlignmentStart, 1_010_000),
                (EventKind::SwapAndReferenceUpdate, 1_320_000),
                (EventKind::FinalSwap, 2_000_000),
                (EventKind::PretrainEnd, 2_000_000),
            ]
        );
        assert_eq!(log[0].cka_at_trigger, None);
        assert_eq!(log[1].cka_at_trigger, Some(0.9741));
        assert_eq!(log[2].cka_at_trigger, Some(0.9741));
        assert_eq!(log[3].cka_at_trigger, Some(0.9699));
        assert_eq!(log[4].cka_at_trigger, None);
        assert_eq!(log[5].cka_at_trigger, None);
    }

    #[test]
    fn trajectory_never_below_threshold_swaps_only_at_the_end() {
        let config = published();
        let stream = value_stream(&config, |_| 0.99);
        let log = run_schedule(&stream, &config, &mut no_dumps).unwrap();
        assert_eq!(
            kinds_and_steps(&log),
            vec![
                (EventKind::ReferenceInit, 500_000),
                (EventKind::FinalSwap, 2_000_000),
                (EventKind::PretrainEnd, 2_000_000),
            ]
        );
    }

    #[test]
    fn cka_exactly_at_threshold_never_triggers() {
        let config = published();
        let stream = value_stream(&config, |_| 0.975);
        let log = run_schedule(&stream, &config, &mut no_dumps).unwrap();
        assert!(log
            .iter()
            .all(|e| e.kind != EventKind::SwapAndReferenceUpdate));
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn empty_stream_yields_empty_log() {
        let config = published();
        let log = run_schedule(&[], &config, &mut no_dumps).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn minimal_stream_yields_init_and_final_events() {
        let config = ScheduleConfig::new(0.975, 100, 100, 200).unwrap();
        let stream = vec![
            CheckpointObservation::from_cka_value(100, 0.99).unwrap(),
            CheckpointObservation::from_cka_value(200, 0.99).unwrap(),
        ];
        let log = run_schedule(&stream, &config, &mut no_dumps).unwrap();
        assert_eq!(
            kinds_and_steps(&log),
            vec![
                (EventKind::ReferenceInit, 100),
                (EventKind::FinalSwap, 200),
                (EventKind::PretrainEnd, 200),
            ]
        );
    }

    #[test]
    fn config_validation_is_loud() {
        assert!(matches!(
            ScheduleConfig::new(0.0, 0, 10, 100),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            ScheduleConfig::new(1.0, 0, 10, 100),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            ScheduleConfig::new(f64::NAN, 0, 10, 100),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            ScheduleConfig::new(0.9, 0, 0, 100),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            ScheduleConfig::new(0.9, 100, 10, 100),
            Err(Error::Usage(_))
        ));
        // End marker off the cadence can never be reached.
        assert!(matches!(
            ScheduleConfig::new(0.9, 0, 10, 105),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn stream_ordering_and_cadence_violations_are_usage_errors() {
        let config = ScheduleConfig::new(0.975, 100, 100, 500).unwrap();
        let mut state = SchedulerState::new();
        // Before monitoring start.
        let early = CheckpointObservation::from_cka_value(50, 0.99).unwrap();
        assert!(matches!(
            state.advance(&early, &config, &mut no_dumps),
            Err(Error::Usage(_))
        ));
        // First observation skipping the start step.
        let skipped = CheckpointObservation::from_cka_value(200, 0.99).unwrap();
        assert!(matches!(
            state.advance(&skipped, &config, &mut no_dumps),
            Err(Error::Usage(_))
        ));
        // Proper start.
        let start = CheckpointObservation::from_cka_value(100, 0.99).unwrap();
        state.advance(&start, &config, &mut no_dumps).unwrap();
        assert_eq!(state.phase(), Phase::Monitoring);
        // Off cadence.
        let off = CheckpointObservation::from_cka_value(250, 0.99).unwrap();
        assert!(matches!(
            state.advance(&off, &config, &mut no_dumps),
            Err(Error::Usage(_))
        ));
        // Non-increasing.
        let back = CheckpointObservation::from_cka_value(100, 0.99).unwrap();
        assert!(matches!(
            state.advance(&back, &config, &mut no_dumps),
            Err(Error::Usage(_))
        ));
        // Overshooting the end.
        let over = CheckpointObservation::from_cka_value(600, 0.99).unwrap();
        assert!(matches!(
            state.advance(&over, &config, &mut no_dumps),
            Err(Error::Usage(_))
        ));
        // Finish, then observe again.
        for step in [200, 300, 400, 500] {
            let obs = CheckpointObservation::from_cka_value(step, 0.99).unwrap();
            state.advance(&obs, &config, &mut no_dumps).unwrap();
        }
        assert_eq!(state.phase(), Phase::Done);
        let late = CheckpointObservation::from_cka_value(600, 0.99).unwrap();
        assert!(matches!(
            state.advance(&late, &config, &mut no_dumps),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn observation_constructors_validate_payloads() {
        assert!(matches!(
            CheckpointObservation::from_cka_value(0, f64::NAN),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            CheckpointObservation::from_cka_value(0, 1.5),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            CheckpointObservation::from_dump_ref(0, ""),
            Err(Error::Usage(_))
        ));
    }

    fn random_rep(
        rng: &mut ChaCha12Rng,
        id: &str,
        rows: usize,
        cols: usize,
    ) -> UtteranceRepresentation {
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect();
        UtteranceRepresentation::new(id, Matrix::from_row_major(rows, cols, data).unwrap()).unwrap()
    }

    /// Dump-mode run: the reference reset is observable because the fourth
    /// dump equals the third (CKA 1 against the NEW reference) while being
    /// unrelated to the first (would trigger against the OLD reference).
    #[test]
    fn dump_mode_resets_the_reference_on_swap() {
        let mut rng = ChaCha12Rng::seed_from_u64(0xD07);
        let config = ScheduleConfig::new(0.975, 100, 100, 500).unwrap();
        let base: Vec<UtteranceRepresentation> = (0..6)
            .map(|i| random_rep(&mut rng, &format!("u{i}"), 8, 4))
            .collect();
        let jittered: Vec<UtteranceRepresentation> = base
            .iter()
            .map(|u| {
                let mut vals = u.frames().to_row_major();
                for v in &mut vals {
                    *v += 1e-6 * rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
                UtteranceRepresentation::new(
                    u.utterance_id(),
                    Matrix::from_row_major(8, 4, vals).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let scrambled: Vec<UtteranceRepresentation> = (0..6)
            .map(|i| random_rep(&mut rng, &format!("u{i}"), 8, 4))
            .collect();
        let mut store: HashMap<String, RepresentationDump> = HashMap::new();
        store.insert(
            "h100".into(),
            RepresentationDump::new(base, 100, "enc").unwrap(),
        );
        store.insert(
            "h200".into(),
            RepresentationDump::new(jittered, 200, "enc").unwrap(),
        );
        let scrambled_dump = RepresentationDump::new(scrambled, 300, "enc").unwrap();
        store.insert("h300".into(), scrambled_dump.clone());
        let mut same_again = scrambled_dump.clone();
        // Re-wrap with a new step for clarity; contents identical.
        same_again = RepresentationDump::new(same_again.utterances().to_vec(), 400, "enc").unwrap();
        store.insert("h400".into(), same_again);
        store.insert(
            "h500".into(),
            RepresentationDump::new(
                (0..6)
                    .map(|i| random_rep(&mut rng, &format!("u{i}"), 8, 4))
                    .collect(),
                500,
                "enc",
            )
            .unwrap(),
        );

        let mut calls: Vec<(String, String)> = Vec::new();
        let mut cka_fn = |r: &str, o: &str| -> crate::error::Result<f64> {
            calls.push((r.to_string(), o.to_string()));
            Ok(avg_utterance_cka(&store[r], &store[o])?.value)
        };
        let stream: Vec<CheckpointObservation> = [100u64, 200, 300, 400, 500]
            .iter()
            .map(|&s| CheckpointObservation::from_dump_ref(s, format!("h{s}")).unwrap())
            .collect();
        let log = run_schedule(&stream, &config, &mut cka_fn).unwrap();
        assert_eq!(
            kinds_and_steps(&log),
            vec![
                (EventKind::ReferenceInit, 100),
                (EventKind::SwapAndReferenceUpdate, 300),
                (EventKind::AlignmentStart, 300),
                (EventKind::FinalSwap, 500),
                (EventKind::PretrainEnd, 500),
            ]
        );
        // The capability saw exactly the per-segment comparisons: 200 and
        // 300 against the initial reference, 400 against the new one; the
        // final checkpoint is never compared.
        assert_eq!(
            calls,
            vec![
                ("h100".to_string(), "h200".to_string()),
                ("h100".to_string(), "h300".to_string()),
                ("h300".to_string(), "h400".to_string()),
            ]
        );
        // Triggering CKA matches a direct recomputation of the same pair.
        let direct = avg_utterance_cka(&store["h100"], &store["h300"])
            .unwrap()
            .value;
        assert_eq!(log[1].cka_at_trigger, Some(direct));
        assert!(direct < config.tau);
        // And the identical 400-vs-300 comparison scored exactly 1.
        let repeat = avg_utterance_cka(&store["h300"], &store["h400"])
            .unwrap()
            .value;
        assert!((repeat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_lines_serialization_is_exact_and_replayable() {
        let config = published();
        let stream = value_stream(&config, |step| match step {
            1_010_000 => 0.9741,
            1_320_000 => 0.9699,
            _ => 0.9900,
        });
        let log = run_schedule(&stream, &config, &mut no_dumps).unwrap();
        let jsonl = event_log_to_json_lines(&log);
        let first = jsonl.lines().next().unwrap();
        assert_eq!(
            first,
            r#"{"kind":"ReferenceInit","step":500000,"cka_at_trigger":null}"#
        );
        assert!(jsonl.lines().nth(1).unwrap().starts_with(
            r#"{"kind":"SwapAndReferenceUpdate","step":1010000,"cka_at_trigger":0.9741"#
        ));
        // Round trip.
        let back = event_log_from_json_lines(&jsonl).unwrap();
        assert_eq!(back, log);
        // Replay determinism: identical stream, identical bytes.
        let log2 = run_schedule(&stream, &config, &mut no_dumps).unwrap();
        assert_eq!(event_log_to_json_lines(&log2), jsonl);
    }

    #[test]
    fn human_table_lists_every_event() {
        let config = published();
        let stream = value_stream(&config, |_| 0.99);
        let log = run_schedule(&stream, &config, &mut no_dumps).unwrap();
        let table = format_event_table(&log);
        assert!(table.contains("ReferenceInit"));
        assert!(table.contains("FinalSwap"));
        assert!(table.contains("2000000"));
    }

    fn published_log() -> Vec<SchedulerEvent> {
        let config = published();
        let stream = value_stream(&config, |step| match step {
            1_010_000 => 0.9741,
            1_320_000 => 0.9699,
            _ => 0.9900,
        });
        run_schedule(&stream, &config, &mut no_dumps).unwrap()
    }

    #[test]
    fn timeline_places_the_second_swap_inside_the_iasft_window() {
        let log = published_log();
        let records = emit_iasft_timeline(&log, 1_300_000, 1_000_000).unwrap();
        let labels: Vec<&str> = records.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            vec![
                "ReferenceInit",
                "SwapAndReferenceUpdate",
                "AlignmentStart",
                "AlignmentEnd",
                "IasftStart",
                "SwapAndReferenceUpdate",
                "FinalSwap",
                "PretrainEnd",
            ]
        );
        // Anchor and derived markers on the post-training clock.
        assert_eq!(records[2].post_training_step, Some(0));
        assert_eq!(records[3].post_training_step, Some(1_300_000));
        assert_eq!(records[4].post_training_step, Some(1_300_000));
        assert_eq!(records[3].pretrain_step, None);
        // First swap (pretrain step 1.01M) precedes the alignment window's
        // end; second swap (1.32M) lands inside the IA-SFT window
        // [1.3M, 2.3M]; the final swap (2.0M) does too.
        assert_eq!(records[1].annotation.as_deref(), Some("alignment"));
        assert_eq!(records[5].annotation.as_deref(), Some("IA-SFT"));
        assert_eq!(records[6].annotation.as_deref(), Some("IA-SFT"));
        assert_eq!(records[0].annotation, None);
        assert_eq!(records[7].annotation, None);
        // Non-swap stage markers carry no CKA or annotation.
        assert_eq!(records[4].cka_at_trigger, None);
        assert_eq!(records[4].annotation, None);

        let jsonl = timeline_to_json_lines(&records);
        assert!(jsonl.lines().count() == records.len());
        let table = format_timeline_table(&records);
        assert!(table.contains("IasftStart") && table.contains("IA-SFT"));
    }

    #[test]
    fn timeline_annotates_swaps_beyond_the_iasft_window() {
        let mut log = published_log();
        // Shrink the windows so the final swap at 2.0M falls past IA-SFT.
        let records = emit_iasft_timeline(&log, 1_300_000, 500_000).unwrap();
        let final_swap = records.iter().find(|r| r.label == "FinalSwap").unwrap();
        assert_eq!(final_swap.annotation.as_deref(), Some("post-IASFT"));
        // Zero alignment duration: IasftStart coincides with the anchor.
        let records0 = emit_iasft_timeline(&log, 0, 1_000_000).unwrap();
        let iasft = records0.iter().find(|r| r.label == "IasftStart").unwrap();
        assert_eq!(iasft.post_training_step, Some(0));
        // Logs without an AlignmentStart cannot be annotated.
        log.retain(|e| e.kind != EventKind::AlignmentStart);
        assert!(matches!(
            emit_iasft_timeline(&log, 1, 1),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn state_accessors_reflect_progress() {
        let config = ScheduleConfig::new(0.5, 0, 10, 30).unwrap();
        let mut state = SchedulerState::new();
        assert_eq!(state.phase(), Phase::BeforeMonitoring);
        assert_eq!(state.reference_step(), None);
        let mut f = no_dumps;
        state
            .advance(
                &CheckpointObservation::from_cka_value(0, 0.9).unwrap(),
                &config,
                &mut f,
            )
            .unwrap();
        assert_eq!(state.reference_step(), Some(0));
        state
            .advance(
                &CheckpointObservation::from_cka_value(10, 0.4).unwrap(),
                &config,
                &mut f,
            )
            .unwrap();
        assert_eq!(state.trigger_count(), 1);
        assert_eq!(state.reference_step(), Some(10));
        // Second trigger emits no further AlignmentStart.
        state
            .advance(
                &CheckpointObservation::from_cka_value(20, 0.3).unwrap(),
                &config,
                &mut f,
            )
            .unwrap();
        assert_eq!(state.trigger_count(), 2);
        let alignment_starts = state
            .event_log()
            .iter()
            .filter(|e| e.kind == EventKind::AlignmentStart)
            .count();
        assert_eq!(alignment_starts, 1);
        state
            .advance(
                &CheckpointObservation::from_cka_value(30, 0.9).unwrap(),
                &config,
                &mut f,
            )
            .unwrap();
        assert_eq!(state.phase(), Phase::Done);
        // Every swap recorded a CKA strictly below the threshold.
        for e in state.event_log() {
            if e.kind == EventKind::SwapAndReferenceUpdate {
                assert!(e.cka_at_trigger.unwrap() < config.tau);
            }
        }
    }
}
