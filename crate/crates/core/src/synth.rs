//! Deterministic synthetic corpora with a controllable two-modality class
//! signal.
//!
//! Every record is the same five-letter word, each letter a sinusoid-modulated
//! arc drawn as one pen-down stroke and joined by short in-air moves. Subjects
//! differ by random effects (size, slant, speed, pressure level, pen angles)
//! shared by all their records. DYG subjects additionally carry two
//! independent perturbation families:
//!
//! * dynamic: pressure-variance inflation, extra pen lifts that resume at the
//!   lift point, and speed modulation. These leave the drawn image unchanged.
//! * shape: per-letter size, baseline and slant irregularity plus a smooth
//!   wobble of the trace.
//!
//! `severity * complementarity` scales the dynamic family and
//! `severity * (1 - complementarity)` the shape family. Each DYG subject
//! expresses each family at an independently drawn level, so some subjects
//! are only detectable through one modality.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_pen_stream, Dataset, HandwritingRecord, Label, PenSample, Task};
use crate::par::{self, Execution};
use crate::seed::{self, TAG_SYNTH};

/// Seed of the shipped reference corpus.
pub const GOLDEN_SEED: u64 = 20_240_611;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub records_per_subject: usize,
    /// Fraction of DYG subjects.
    pub class_balance: f64,
    pub severity: f64,
    /// Share of the class signal routed to the dynamic channels.
    pub complementarity: f64,
    pub seed: u64,
    pub task: Task,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 40,
            records_per_subject: 3,
            class_balance: 0.5,
            severity: 1.0,
            complementarity: 0.5,
            seed: GOLDEN_SEED,
            task: Task::Word,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_subjects < 2 {
            return bad("synth needs at least 2 subjects");
        }
        if self.records_per_subject == 0 {
            return bad("records_per_subject must be positive");
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return bad("class_balance must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.severity) {
            return bad("severity must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.complementarity) {
            return bad("complementarity must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Letter templates: (horizontal wiggle amplitude, wiggle frequency, wiggle
/// phase, vertical humps, relative width).
const LETTERS: [(f64, f64, f64, f64, f64); 5] = [
    (0.25, 1.0, 0.0, 1.0, 1.0),
    (0.15, 2.0, 1.2, 2.0, 1.2),
    (0.30, 1.0, 2.5, 1.0, 0.8),
    (0.10, 3.0, 0.4, 2.0, 1.1),
    (0.20, 1.5, 3.6, 1.0, 0.9),
];

const LETTER_WIDTH: f64 = 1000.0;
const LETTER_HEIGHT: f64 = 1400.0;
const SAMPLES_PER_LETTER: f64 = 48.0;
const AIR_SAMPLES: usize = 6;
const LIFT_SAMPLES: usize = 3;

// Effect sizes at unit strength.
const PRESSURE_NOISE: f64 = 12.0;
const PRESSURE_INFLATION: f64 = 5.0;
const LIFT_RATE: f64 = 0.5;
const SPEED_MOD: f64 = 0.6;
const SIZE_JITTER: f64 = 0.3;
const BASELINE_JITTER: f64 = 0.25;
const SLANT_JITTER: f64 = 0.3;
const WOBBLE: f64 = 0.08;
// Mild irregularity present in everyone's writing.
const BASE_SHAPE_NOISE: f64 = 0.08;
/// Probability that a DYG subject expresses a given perturbation family.
const EXPRESSION_PROB: f64 = 0.7;

#[derive(Debug, Clone)]
struct Subject {
    id: String,
    label: Label,
    scale: f64,
    slant: f64,
    speed: f64,
    pressure: f64,
    pressure_swing: f64,
    azimuth: f64,
    altitude: f64,
    dynamic: f64,
    shape: f64,
}

fn expression(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<f64>() < EXPRESSION_PROB {
        rng.random_range(0.7..1.3)
    } else {
        rng.random_range(0.0..0.2)
    }
}

fn draw_subject(id: String, label: Label, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Subject {
    let scale = (rng.random_range(-0.5f64..0.5)).exp();
    let slant = rng.random_range(-0.3..0.3);
    let speed = rng.random_range(0.75..1.3);
    let pressure = rng.random_range(250.0..750.0);
    let pressure_swing = rng.random_range(40.0..120.0);
    let azimuth = rng.random_range(1200.0..2400.0);
    let altitude = rng.random_range(400.0..800.0);
    let (e_dyn, e_shape) = (expression(rng), expression(rng));
    let (dynamic, shape) = match label {
        Label::Td => (0.0, 0.0),
        Label::Dyg => (
            cfg.severity * cfg.complementarity * e_dyn,
            cfg.severity * (1.0 - cfg.complementarity) * e_shape,
        ),
    };
    Subject {
        id,
        label,
        scale,
        slant,
        speed,
        pressure,
        pressure_swing,
        azimuth,
        altitude,
        dynamic,
        shape,
    }
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

struct Writer {
    samples: Vec<PenSample>,
    t: i64,
}

impl Writer {
    fn emit(&mut self, x: f64, y: f64, on: bool, pressure: f64, az: f64, alt: f64) {
        self.samples.push(PenSample {
            x: x.round().max(0.0) as i64,
            y: y.round().max(0.0) as i64,
            t: self.t,
            on_surface: on,
            azimuth: az.round().max(0.0) as i64,
            altitude: alt.round().max(0.0) as i64,
            pressure: if on { pressure.round().clamp(1.0, 2047.0) as i64 } else { 0 },
        });
        self.t += 1;
    }

    fn last_xy(&self) -> (f64, f64) {
        let s = self.samples.last().expect("nonempty");
        (s.x as f64, s.y as f64)
    }
}

fn write_record(subject: &Subject, rng: &mut ChaCha8Rng) -> Vec<PenSample> {
    let mut w = Writer {
        samples: Vec::new(),
        t: 0,
    };
    let width = LETTER_WIDTH * subject.scale;
    let height = LETTER_HEIGHT * subject.scale;
    let irregular = BASE_SHAPE_NOISE + subject.shape;
    let d = subject.dynamic;
    let az = subject.azimuth + 30.0 * std_normal(rng);
    let alt = subject.altitude + 20.0 * std_normal(rng);
    let mut x0 = 3000.0;
    let base_y = 6000.0;

    for (k, &(amp, fx, phx, humps, rel_w)) in LETTERS.iter().enumerate() {
        let size = (1.0 + SIZE_JITTER * irregular * std_normal(rng)).clamp(0.4, 2.0);
        let baseline = base_y + BASELINE_JITTER * irregular * height * std_normal(rng);
        let slant = subject.slant + SLANT_JITTER * irregular * std_normal(rng);
        let wobble_amp = WOBBLE * subject.shape * height;
        let wobble_phase = rng.random_range(0.0..2.0 * PI);
        let lw = width * rel_w;
        let lh = height * size;

        // speed profile: cumulative, normalized arc parameter
        let n = (SAMPLES_PER_LETTER / subject.speed * rng.random_range(0.9..1.1)).round() as usize;
        let n = n.max(8);
        let m = (SPEED_MOD * d).min(0.9);
        let mod_phase = rng.random_range(0.0..2.0 * PI);
        let mod_freq = rng.random_range(2.0..4.0);
        let mut us = Vec::with_capacity(n);
        let mut acc = 0.0;
        for j in 0..n {
            us.push(acc);
            acc += 1.0 + m * (2.0 * PI * mod_freq * j as f64 / n as f64 + mod_phase).sin();
        }
        let us: Vec<f64> = us.iter().map(|u| u / us[n - 1]).collect();

        let lift_at = if rng.random::<f64>() < (LIFT_RATE * d).min(1.0) {
            Some(rng.random_range(n / 4..3 * n / 4))
        } else {
            None
        };
        let sigma = PRESSURE_NOISE * (1.0 + PRESSURE_INFLATION * d);
        let p_phase = rng.random_range(0.0..2.0 * PI);

        let point = |u: f64| -> (f64, f64) {
            let wob = wobble_amp * (2.0 * PI * 1.5 * u + wobble_phase).sin();
            let yy = lh * (0.5 - 0.5 * (2.0 * PI * humps * u).cos()) + wob;
            let xx = lw * (u + amp * (2.0 * PI * fx * u + phx).sin()) + 0.5 * wob;
            (x0 + xx + slant * yy, baseline + yy)
        };

        if k > 0 {
            // in-air move to the start of this letter
            let (ax, ay) = w.last_xy();
            let (bx, by) = point(0.0);
            for j in 1..=AIR_SAMPLES {
                let f = j as f64 / (AIR_SAMPLES + 1) as f64;
                let lift = 200.0 * subject.scale * (PI * f).sin();
                w.emit(ax + f * (bx - ax), ay + f * (by - ay) + lift, false, 0.0, az, alt);
            }
        }
        for (j, &u) in us.iter().enumerate() {
            let (x, y) = point(u);
            let p = subject.pressure
                + subject.pressure_swing * (PI * u).sin()
                + sigma * (0.5 * std_normal(rng) + 0.5 * (6.0 * PI * u + p_phase).sin());
            let jitter = 2.0;
            w.emit(
                x + jitter * std_normal(rng),
                y + jitter * std_normal(rng),
                true,
                p,
                az,
                alt,
            );
            if lift_at == Some(j) {
                let (lx, ly) = w.last_xy();
                for _ in 0..LIFT_SAMPLES {
                    w.emit(lx, ly, false, 0.0, az, alt);
                }
            }
        }
        x0 += lw * 1.3;
    }
    w.samples
}

/// Generates the corpus described by `config`. Identical configs give
/// identical datasets.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let n = config.n_subjects;
    let n_dyg = ((n as f64 * config.class_balance).round() as usize).clamp(1, n - 1);
    // labels are shuffled so subject ids carry no class information
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < n_dyg { Label::Dyg } else { Label::Td })
        .collect();
    let mut shuffle = seed::rng(seed::derive(config.seed, &[TAG_SYNTH]));
    for i in (1..n).rev() {
        let j = shuffle.random_range(0..=i);
        labels.swap(i, j);
    }

    let task = config.task.clone();
    let records: Vec<Vec<HandwritingRecord>> = par::map_range(Execution::default(), n, |i| {
        let mut rng = seed::rng(seed::derive(config.seed, &[TAG_SYNTH, i as u64 + 1]));
        let subject = draw_subject(format!("S{:03}", i + 1), labels[i], config, &mut rng);
        (0..config.records_per_subject)
            .map(|r| HandwritingRecord {
                subject_id: subject.id.clone(),
                task: task.clone(),
                label: subject.label,
                samples: write_record(&subject, &mut rng),
                sample_id: format!("{}_{}_{}", subject.id, task.token(), r + 1),
            })
            .collect()
    });
    Dataset::new(config.task.clone(), records.into_iter().flatten().collect())
}

/// Writes `streams/<sample_id>.txt` and `metadata.csv` under `dir`.
pub fn write_corpus(dataset: &Dataset, dir: &Path) -> Result<()> {
    let streams = dir.join("streams");
    std::fs::create_dir_all(&streams).map_err(|e| Error::io(&streams, e))?;
    let mut meta = String::from("subject_id,label,task,file\n");
    for r in &dataset.records {
        let file = format!("{}.txt", r.sample_id);
        let path = streams.join(&file);
        std::fs::write(&path, write_pen_stream(&r.samples)).map_err(|e| Error::io(&path, e))?;
        meta += &format!("{},{},{},{}\n", r.subject_id, r.label, r.task, file);
    }
    let path = dir.join("metadata.csv");
    std::fs::write(&path, meta).map_err(|e| Error::io(&path, e))
}
