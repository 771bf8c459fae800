use std::collections::BTreeMap;

use serde::Serialize;

use super::manifest::GenerationManifest;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Fraction of values strictly below zero.
    pub negative_fraction: f64,
    pub bins: Vec<Bin>,
}

impl Histogram {
    /// Equal-width bins spanning the observed range; the last bin is closed.
    pub fn from_values(values: &[f64], bins: usize) -> Option<Histogram> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let negative_fraction = values.iter().filter(|&&v| v < 0.0).count() as f64 / n as f64;
        let bins = if max > min { bins.max(1) } else { 1 };
        let width = (max - min) / bins as f64;
        let mut out: Vec<Bin> = (0..bins)
            .map(|k| Bin {
                lo: min + width * k as f64,
                hi: if k + 1 == bins { max } else { min + width * (k + 1) as f64 },
                count: 0,
            })
            .collect();
        for &v in values {
            let k = if width > 0.0 {
                (((v - min) / width) as usize).min(bins - 1)
            } else {
                0
            };
            out[k].count += 1;
        }
        Some(Histogram {
            count: n,
            min,
            max,
            mean,
            negative_fraction,
            bins: out,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodStats {
    pub count: usize,
    pub lambda: Option<Histogram>,
    pub lesion_volume: Option<Histogram>,
    pub donor_usage: BTreeMap<String, usize>,
    pub host_usage: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub total: usize,
    pub methods: BTreeMap<String, MethodStats>,
}

pub fn dataset_stats(manifest: &GenerationManifest) -> DatasetStats {
    let mut grouped: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (k, r) in manifest.records.iter().enumerate() {
        grouped.entry(r.method.as_str().to_owned()).or_default().push(k);
    }
    let methods = grouped
        .into_iter()
        .map(|(name, idx)| {
            let recs: Vec<_> = idx.iter().map(|&k| &manifest.records[k]).collect();
            let lambdas: Vec<f64> = recs.iter().map(|r| r.lambda).collect();
            let volumes: Vec<f64> = recs.iter().map(|r| r.lesion_voxels).collect();
            let mut donor_usage = BTreeMap::new();
            let mut host_usage = BTreeMap::new();
            for r in &recs {
                *donor_usage.entry(r.donor_id.clone()).or_insert(0) += 1;
                *host_usage.entry(r.host_id.clone()).or_insert(0) += 1;
            }
            let stats = MethodStats {
                count: recs.len(),
                lambda: Histogram::from_values(&lambdas, HISTOGRAM_BINS),
                lesion_volume: Histogram::from_values(&volumes, HISTOGRAM_BINS),
                donor_usage,
                host_usage,
            };
            (name, stats)
        })
        .collect();
    DatasetStats {
        total: manifest.len(),
        methods,
    }
}
