//! Offline (image) features: a built-in zoning descriptor, and ingestion of
//! externally computed CNN embeddings.
//!
//! Embedding file format: UTF-8 text, first non-comment line `dim=<D>`, then
//! one line per sample `<sample_id> v1 .. vD`. Lines starting with `#` are
//! comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::{Category, FeatureManifest, FeatureMap, FeatureVector, ManifestEntry};
use crate::ingest::Dataset;
use crate::par::{self, Execution};
use crate::raster::RasterImage;

pub const DEFAULT_GRID: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum OfflineExtractorKind {
    Zoning { grid: usize },
    ExternalEmbedding { path: PathBuf },
}

impl Default for OfflineExtractorKind {
    fn default() -> Self {
        OfflineExtractorKind::Zoning { grid: DEFAULT_GRID }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: BTreeMap<String, Vec<f64>>,
}

pub fn zoning_len(grid: usize) -> usize {
    grid * grid + 2 * grid + 8
}

pub fn zoning_version(grid: usize) -> String {
    format!("zoning-g{grid}-v1")
}

pub fn zoning_manifest(grid: usize) -> FeatureManifest {
    let mut names = Vec::with_capacity(zoning_len(grid));
    for r in 0..grid {
        for c in 0..grid {
            names.push(format!("zone_{r}_{c}"));
        }
    }
    names.extend((0..grid).map(|i| format!("row_proj_{i}")));
    names.extend((0..grid).map(|i| format!("col_proj_{i}")));
    names.extend(
        [
            "ink_fraction",
            "bbox_width_frac",
            "bbox_height_frac",
            "bbox_aspect",
            "centroid_x_frac",
            "centroid_y_frac",
            "second_moment_x",
            "second_moment_y",
        ]
        .map(String::from),
    );
    entries_manifest(zoning_version(grid), names)
}

pub fn embedding_manifest(dim: usize) -> FeatureManifest {
    entries_manifest(
        format!("embedding-d{dim}-v1"),
        (0..dim).map(|i| format!("emb_{i}")).collect(),
    )
}

fn entries_manifest(version: String, names: Vec<String>) -> FeatureManifest {
    FeatureManifest::new(
        version,
        names
            .into_iter()
            .map(|name| ManifestEntry {
                name,
                category: Category::Offline,
            })
            .collect(),
    )
    .expect("generated names are unique")
}

/// Cell boundaries splitting `len` pixels into `grid` bands.
fn band_edges(len: usize, grid: usize) -> Vec<usize> {
    (0..=grid).map(|i| i * len / grid).collect()
}

fn band_of(edges: &[usize], idx: usize) -> usize {
    // edges is sorted; the band is the last edge <= idx
    edges.partition_point(|&e| e <= idx) - 1
}

/// Zoning descriptor of length `g² + 2g + 8`:
/// per-cell ink density, row and column band projections normalized to sum
/// one (uniform when there is no ink), then ink fraction, ink bounding-box
/// width/height fractions and aspect, centroid fractions and normalized
/// second moments.
pub fn extract_zoning(image: &RasterImage, grid: usize, sample_id: &str) -> FeatureVector {
    assert!(grid >= 2, "zoning grid must be at least 2");
    let (w, h) = (image.width, image.height);
    let col_edges = band_edges(w, grid);
    let row_edges = band_edges(h, grid);

    let mut cell_ink = vec![0usize; grid * grid];
    let mut row_proj = vec![0usize; grid];
    let mut col_proj = vec![0usize; grid];
    let mut ink = 0usize;
    let (mut min_c, mut max_c, mut min_r, mut max_r) = (usize::MAX, 0, usize::MAX, 0);
    let (mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0);

    for r in 0..h {
        let rb = band_of(&row_edges, r);
        for c in 0..w {
            if !image.is_ink(c, r) {
                continue;
            }
            let cb = band_of(&col_edges, c);
            cell_ink[rb * grid + cb] += 1;
            row_proj[rb] += 1;
            col_proj[cb] += 1;
            ink += 1;
            min_c = min_c.min(c);
            max_c = max_c.max(c);
            min_r = min_r.min(r);
            max_r = max_r.max(r);
            let x = (c as f64 + 0.5) / w as f64;
            let y = (r as f64 + 0.5) / h as f64;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
        }
    }

    let mut values = Vec::with_capacity(zoning_len(grid));
    for rb in 0..grid {
        for cb in 0..grid {
            let area = (row_edges[rb + 1] - row_edges[rb]) * (col_edges[cb + 1] - col_edges[cb]);
            values.push(if area == 0 {
                0.0
            } else {
                cell_ink[rb * grid + cb] as f64 / area as f64
            });
        }
    }
    for proj in [&row_proj, &col_proj] {
        if ink == 0 {
            values.extend(std::iter::repeat_n(1.0 / grid as f64, grid));
        } else {
            values.extend(proj.iter().map(|&p| p as f64 / ink as f64));
        }
    }
    if ink == 0 {
        values.extend([0.0; 8]);
    } else {
        let n = ink as f64;
        let bw = (max_c - min_c + 1) as f64;
        let bh = (max_r - min_r + 1) as f64;
        let cx = sx / n;
        let cy = sy / n;
        values.extend([
            n / (w * h) as f64,
            bw / w as f64,
            bh / h as f64,
            bw / bh,
            cx,
            cy,
            (sxx / n - cx * cx).max(0.0),
            (syy / n - cy * cy).max(0.0),
        ]);
    }
    FeatureVector {
        values,
        manifest_version: zoning_version(grid),
        sample_id: sample_id.to_string(),
    }
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedHeader("empty embedding file".into()))?;
    let dim: usize = header
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::MalformedHeader(format!("expected dim=<D>, found {header:?}")))?;

    let mut rows = BTreeMap::new();
    for line in lines {
        let mut toks = line.split_whitespace();
        let id = toks.next().expect("line is nonempty").to_string();
        let mut vals = Vec::with_capacity(dim);
        for tok in toks {
            let v: f64 = tok.parse().map_err(|_| Error::NonFiniteValue(id.clone()))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(id));
            }
            vals.push(v);
        }
        if vals.len() != dim {
            return Err(Error::DimMismatch {
                sample_id: id,
                expected: dim,
                found: vals.len(),
            });
        }
        if rows.insert(id.clone(), vals).is_some() {
            return Err(Error::DuplicateSampleId(id));
        }
    }
    Ok(EmbeddingTable { dim, rows })
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_embeddings(&text)
}

/// Offline features for every record of `dataset`. Zoning reads from
/// `images`; the embedding extractor reads its table from disk and copies
/// rows verbatim.
pub fn extract_offline(
    dataset: &Dataset,
    images: &BTreeMap<String, RasterImage>,
    extractor: &OfflineExtractorKind,
    exec: Execution,
) -> Result<(FeatureManifest, FeatureMap)> {
    match extractor {
        OfflineExtractorKind::Zoning { grid } => {
            if *grid < 2 {
                return Err(Error::InvalidConfig("zoning grid must be at least 2".into()));
            }
            let vectors = par::try_map(exec, &dataset.records, |r| {
                images
                    .get(&r.sample_id)
                    .map(|img| extract_zoning(img, *grid, &r.sample_id))
                    .ok_or_else(|| Error::MissingSample(r.sample_id.clone()))
            })?;
            Ok((
                zoning_manifest(*grid),
                vectors.into_iter().map(|v| (v.sample_id.clone(), v)).collect(),
            ))
        }
        OfflineExtractorKind::ExternalEmbedding { path } => {
            let table = load_embeddings(path)?;
            embeddings_for(dataset, &table)
        }
    }
}

pub fn embeddings_for(dataset: &Dataset, table: &EmbeddingTable) -> Result<(FeatureManifest, FeatureMap)> {
    let manifest = embedding_manifest(table.dim);
    let mut out = FeatureMap::new();
    for r in &dataset.records {
        let row = table
            .rows
            .get(&r.sample_id)
            .ok_or_else(|| Error::MissingSample(r.sample_id.clone()))?;
        out.insert(
            r.sample_id.clone(),
            FeatureVector {
                values: row.clone(),
                manifest_version: manifest.version.clone(),
                sample_id: r.sample_id.clone(),
            },
        );
    }
    Ok((manifest, out))
}
