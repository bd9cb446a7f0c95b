//! Online (pen-stream) feature extraction.
//!
//! The catalog has 141 entries in three blocks:
//!
//! * 12 channels (`vx vy v ax ay a jx jy j pressure altitude azimuth`) times
//!   10 statistics (`mean median std min max range iqr skewness kurtosis rms`),
//!   channel-major;
//! * 6 per-stroke scalars (path, horizontal and vertical length, width,
//!   height, duration) aggregated over strokes by mean and std;
//! * 9 record globals.
//!
//! Derivatives are forward differences inside each stroke and never cross a
//! pen lift. Velocity samples sit at the midpoints of consecutive sample times;
//! acceleration and jerk are differenced against the spacing of those
//! midpoints, which reduces to plain `Δt` on uniformly sampled strokes.
//! Samples with a repeated timestamp are dropped (the first one is kept).
//!
//! All geometry is computed relative to the first on-surface sample in
//! integer arithmetic first, which makes the vector bit-identical under
//! translation of coordinates and shifting of time.

use crate::features::{Category, FeatureManifest, FeatureMap, FeatureVector, ManifestEntry};
use crate::ingest::{segment_strokes, Dataset, HandwritingRecord, PenSample, Stroke};
use crate::par::{self, Execution};

pub const ONLINE_VERSION: &str = "online-v1";
pub const ONLINE_FEATURE_COUNT: usize = 141;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Vx,
    Vy,
    V,
    Ax,
    Ay,
    A,
    Jx,
    Jy,
    J,
    Pressure,
    Altitude,
    Azimuth,
}

impl Channel {
    pub const ALL: [Channel; 12] = [
        Channel::Vx,
        Channel::Vy,
        Channel::V,
        Channel::Ax,
        Channel::Ay,
        Channel::A,
        Channel::Jx,
        Channel::Jy,
        Channel::J,
        Channel::Pressure,
        Channel::Altitude,
        Channel::Azimuth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Vx => "vx",
            Channel::Vy => "vy",
            Channel::V => "v",
            Channel::Ax => "ax",
            Channel::Ay => "ay",
            Channel::A => "a",
            Channel::Jx => "jx",
            Channel::Jy => "jy",
            Channel::J => "j",
            Channel::Pressure => "pressure",
            Channel::Altitude => "altitude",
            Channel::Azimuth => "azimuth",
        }
    }

    fn category(self) -> Category {
        match self {
            Channel::Pressure | Channel::Altitude | Channel::Azimuth => Category::Dynamic,
            _ => Category::Kinematic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries {
    pub channel: Channel,
    pub values: Vec<f64>,
}

pub const STATISTICS: [&str; 10] = [
    "mean", "median", "std", "min", "max", "range", "iqr", "skewness", "kurtosis", "rms",
];

const STROKE_SCALARS: [(&str, Category); 6] = [
    ("stroke_path_length", Category::Spatial),
    ("stroke_horizontal_length", Category::Spatial),
    ("stroke_vertical_length", Category::Spatial),
    ("stroke_width", Category::Spatial),
    ("stroke_height", Category::Spatial),
    ("stroke_duration", Category::Temporal),
];

const GLOBALS: [&str; 9] = [
    "pen_lifts",
    "total_duration",
    "total_path_length",
    "word_width",
    "word_height",
    "first_last_stroke_dy",
    "stroke_mean_y_variance",
    "velocity_extrema",
    "acceleration_extrema",
];

pub fn online_manifest() -> FeatureManifest {
    let mut entries = Vec::with_capacity(ONLINE_FEATURE_COUNT);
    for ch in Channel::ALL {
        for stat in STATISTICS {
            entries.push(ManifestEntry {
                name: format!("{}_{}", ch.name(), stat),
                category: ch.category(),
            });
        }
    }
    for (name, category) in STROKE_SCALARS {
        for agg in ["mean", "std"] {
            entries.push(ManifestEntry {
                name: format!("{name}_{agg}"),
                category,
            });
        }
    }
    for name in GLOBALS {
        entries.push(ManifestEntry {
            name: name.to_string(),
            category: Category::Global,
        });
    }
    FeatureManifest::new(ONLINE_VERSION, entries).expect("catalog names are unique")
}

/// Summary statistics of a series. Empty series give all zeros; a constant
/// series has zero std, skewness and (excess) kurtosis. Moments are population
/// moments.
pub fn describe(values: &[f64]) -> [f64; 10] {
    if values.is_empty() {
        return [0.0; 10];
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let mean = values.iter().sum::<f64>() / n;
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let median = quantile(&sorted, 0.5);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);

    let (std, skew, kurt) = if min == max {
        (0.0, 0.0, 0.0)
    } else {
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= n;
        m3 /= n;
        m4 /= n;
        if m2 > 0.0 {
            (m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0, 0.0)
        }
    };
    [mean, median, std, min, max, max - min, iqr, skew, kurt, rms]
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let s = describe(values);
    (s[0], s[2])
}

/// Counts interior strict extrema. A plateau counts once when the nearest
/// differing neighbours on both sides lie on the same side of it; plateaus
/// touching either end of the series are not extrema.
pub fn count_local_extrema(series: &[f64]) -> usize {
    if series.len() < 3 {
        return 0;
    }
    // collapse plateaus into runs
    let mut runs: Vec<f64> = Vec::with_capacity(series.len());
    for &v in series {
        if runs.last() != Some(&v) {
            runs.push(v);
        }
    }
    runs.windows(3)
        .filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]))
        .count()
}

/// Drops samples whose timestamp repeats the previous one.
fn collapse_duplicate_times(samples: &[PenSample]) -> Vec<PenSample> {
    let mut out: Vec<PenSample> = Vec::with_capacity(samples.len());
    for s in samples {
        if out.last().map(|p| p.t) != Some(s.t) {
            out.push(*s);
        }
    }
    out
}

/// Per-stroke kinematics in seconds and tablet units.
struct StrokeKinematics {
    vx: Vec<f64>,
    vy: Vec<f64>,
    ax: Vec<f64>,
    ay: Vec<f64>,
    jx: Vec<f64>,
    jy: Vec<f64>,
}

/// Forward differences of `values` sampled at `times`. Returns the
/// derivative and the midpoint times it lives at.
fn difference(values: &[f64], times: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = values.len().saturating_sub(1);
    let mut d = Vec::with_capacity(n);
    let mut mid = Vec::with_capacity(n);
    for i in 0..n {
        let dt = times[i + 1] - times[i];
        d.push((values[i + 1] - values[i]) / dt);
        mid.push(0.5 * (times[i] + times[i + 1]));
    }
    (d, mid)
}

fn kinematics(samples: &[PenSample], origin: (i64, i64, i64), tick_seconds: f64) -> StrokeKinematics {
    // Differences are taken in tick units, where integer inputs keep them
    // exact, and converted to seconds once per derivative order.
    let xs: Vec<f64> = samples.iter().map(|s| (s.x - origin.0) as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|s| (s.y - origin.1) as f64).collect();
    let ts: Vec<f64> = samples.iter().map(|s| (s.t - origin.2) as f64).collect();
    let (vx, tv) = difference(&xs, &ts);
    let (vy, _) = difference(&ys, &ts);
    let (ax, ta) = difference(&vx, &tv);
    let (ay, _) = difference(&vy, &tv);
    let (jx, _) = difference(&ax, &ta);
    let (jy, _) = difference(&ay, &ta);
    let scaled = |v: Vec<f64>, order: i32| -> Vec<f64> {
        let f = tick_seconds.powi(order);
        v.into_iter().map(|x| x / f).collect()
    };
    StrokeKinematics {
        vx: scaled(vx, 1),
        vy: scaled(vy, 1),
        ax: scaled(ax, 2),
        ay: scaled(ay, 2),
        jx: scaled(jx, 3),
        jy: scaled(jy, 3),
    }
}

fn magnitude(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x.hypot(*y)).collect()
}

fn record_origin(strokes: &[Stroke]) -> (i64, i64, i64) {
    let s = strokes[0].samples[0];
    (s.x, s.y, s.t)
}

/// Computes the 12 channel series over `strokes`, concatenated stroke by
/// stroke. Coordinates are used relative to the first sample of the first
/// stroke.
pub fn compute_channels(strokes: &[Stroke], tick_seconds: f64) -> Vec<ChannelSeries> {
    let mut series: Vec<ChannelSeries> = Channel::ALL
        .iter()
        .map(|&channel| ChannelSeries {
            channel,
            values: Vec::new(),
        })
        .collect();
    if strokes.is_empty() || strokes[0].samples.is_empty() {
        return series;
    }
    let origin = record_origin(strokes);
    for stroke in strokes {
        let samples = collapse_duplicate_times(&stroke.samples);
        let k = kinematics(&samples, origin, tick_seconds);
        let v = magnitude(&k.vx, &k.vy);
        let a = magnitude(&k.ax, &k.ay);
        let j = magnitude(&k.jx, &k.jy);
        let per_channel: [Vec<f64>; 12] = [
            k.vx,
            k.vy,
            v,
            k.ax,
            k.ay,
            a,
            k.jx,
            k.jy,
            j,
            samples.iter().map(|s| s.effective_pressure() as f64).collect(),
            samples.iter().map(|s| s.altitude as f64).collect(),
            samples.iter().map(|s| s.azimuth as f64).collect(),
        ];
        for (dst, src) in series.iter_mut().zip(per_channel) {
            dst.values.extend(src);
        }
    }
    series
}

#[derive(Debug, Clone, Copy, Default)]
struct StrokeShape {
    path: f64,
    horizontal: f64,
    vertical: f64,
    width: f64,
    height: f64,
    duration: f64,
    mean_y: f64,
}

fn stroke_shape(samples: &[PenSample], origin: (i64, i64, i64), tick_seconds: f64) -> StrokeShape {
    let mut shape = StrokeShape::default();
    for w in samples.windows(2) {
        let dx = (w[1].x - w[0].x) as f64;
        let dy = (w[1].y - w[0].y) as f64;
        shape.path += dx.hypot(dy);
        shape.horizontal += dx.abs();
        shape.vertical += dy.abs();
    }
    let (min_x, max_x) = min_max(samples.iter().map(|s| s.x));
    let (min_y, max_y) = min_max(samples.iter().map(|s| s.y));
    shape.width = (max_x - min_x) as f64;
    shape.height = (max_y - min_y) as f64;
    shape.duration = (samples[samples.len() - 1].t - samples[0].t) as f64 * tick_seconds;
    shape.mean_y =
        samples.iter().map(|s| (s.y - origin.1) as f64).sum::<f64>() / samples.len() as f64;
    shape
}

fn min_max(it: impl Iterator<Item = i64>) -> (i64, i64) {
    it.fold((i64::MAX, i64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Extracts the 141 online features of `record`, in the order of
/// [`online_manifest`].
pub fn extract_online(record: &HandwritingRecord, manifest: &FeatureManifest, tick_seconds: f64) -> FeatureVector {
    assert_eq!(
        manifest.len(),
        ONLINE_FEATURE_COUNT,
        "extract_online needs the online manifest"
    );
    let seg = segment_strokes(record);
    let strokes: Vec<Stroke> = seg
        .strokes
        .iter()
        .map(|s| Stroke {
            samples: collapse_duplicate_times(&s.samples),
            index: s.index,
        })
        .collect();

    let mut values = Vec::with_capacity(ONLINE_FEATURE_COUNT);
    if strokes.is_empty() {
        values.resize(ONLINE_FEATURE_COUNT, 0.0);
    } else {
        let channels = compute_channels(&strokes, tick_seconds);
        for ch in &channels {
            values.extend(describe(&ch.values));
        }

        let origin = record_origin(&strokes);
        let shapes: Vec<StrokeShape> = strokes
            .iter()
            .map(|s| stroke_shape(&s.samples, origin, tick_seconds))
            .collect();
        let scalar_columns: [fn(&StrokeShape) -> f64; 6] = [
            |s| s.path,
            |s| s.horizontal,
            |s| s.vertical,
            |s| s.width,
            |s| s.height,
            |s| s.duration,
        ];
        for col in scalar_columns {
            let xs: Vec<f64> = shapes.iter().map(col).collect();
            let (m, sd) = mean_std(&xs);
            values.push(m);
            values.push(sd);
        }

        let on_surface: Vec<&PenSample> = strokes.iter().flat_map(|s| &s.samples).collect();
        let (min_x, max_x) = min_max(on_surface.iter().map(|s| s.x));
        let (min_y, max_y) = min_max(on_surface.iter().map(|s| s.y));
        let record_mean_y = on_surface
            .iter()
            .map(|s| (s.y - origin.1) as f64)
            .sum::<f64>()
            / on_surface.len() as f64;
        let mean_y_var = shapes
            .iter()
            .map(|s| (s.mean_y - record_mean_y).powi(2))
            .sum::<f64>()
            / shapes.len() as f64;

        let mut v_extrema = 0;
        let mut a_extrema = 0;
        for s in &strokes {
            let k = kinematics(&s.samples, origin, tick_seconds);
            v_extrema += count_local_extrema(&magnitude(&k.vx, &k.vy));
            a_extrema += count_local_extrema(&magnitude(&k.ax, &k.ay));
        }

        values.extend([
            (strokes.len() - 1) as f64,
            shapes.iter().map(|s| s.duration).sum(),
            shapes.iter().map(|s| s.path).sum(),
            (max_x - min_x) as f64,
            (max_y - min_y) as f64,
            shapes[shapes.len() - 1].mean_y - shapes[0].mean_y,
            mean_y_var,
            v_extrema as f64,
            a_extrema as f64,
        ]);
    }
    debug_assert_eq!(values.len(), ONLINE_FEATURE_COUNT);
    // zero-duration strokes cannot produce infinities after the collapse,
    // but keep the vector finite regardless of input
    for v in &mut values {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    FeatureVector {
        values,
        manifest_version: manifest.version.clone(),
        sample_id: record.sample_id.clone(),
    }
}

/// Online features for every record of `dataset`, keyed by sample id.
pub fn extract_online_dataset(
    dataset: &Dataset,
    tick_seconds: f64,
    exec: Execution,
) -> (FeatureManifest, FeatureMap) {
    let manifest = online_manifest();
    let vectors = par::map(exec, &dataset.records, |r| extract_online(r, &manifest, tick_seconds));
    let map = vectors.into_iter().map(|v| (v.sample_id.clone(), v)).collect();
    (manifest, map)
}
