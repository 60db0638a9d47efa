#![allow(dead_code)]

use std::path::Path;

use fuselab::data::class_names;
use fuselab::eval::{tables_from_csv, ConfusionMatrix, MetricsTable};

/// Published row-normalised confusion matrices, one block per variant.
pub const REFERENCE_CONFUSION: [(&str, [[f64; 5]; 5]); 6] = [
    (
        "single-b",
        [
            [0.9, 0.0, 0.02, 0.0, 0.081],
            [0.0, 0.85, 0.15, 0.0, 0.0],
            [0.0, 0.21, 0.64, 0.1, 0.051],
            [0.0, 0.0, 0.32, 0.66, 0.02],
            [0.03, 0.0, 0.02, 0.099, 0.85],
        ],
    ),
    (
        "single-a",
        [
            [0.88, 0.0, 0.0, 0.12, 0.0],
            [0.0, 0.9, 0.09, 0.01, 0.0],
            [0.0, 0.15, 0.71, 0.14, 0.0],
            [0.0, 0.02, 0.059, 0.92, 0.0],
            [0.3, 0.0, 0.0, 0.16, 0.54],
        ],
    ),
    (
        "early",
        [
            [0.89, 0.0, 0.0, 0.0, 0.11],
            [0.0, 0.78, 0.17, 0.02, 0.03],
            [0.0, 0.11, 0.65, 0.21, 0.03],
            [0.0, 0.0099, 0.27, 0.66, 0.059],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ],
    ),
    (
        "joint",
        [
            [0.98, 0.0, 0.0, 0.0, 0.02],
            [0.0, 0.81, 0.13, 0.06, 0.0],
            [0.0, 0.071, 0.78, 0.14, 0.01],
            [0.0, 0.0, 0.24, 0.75, 0.0099],
            [0.0, 0.0, 0.0, 0.02, 0.98],
        ],
    ),
    (
        "late-mean",
        [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.95, 0.05, 0.0, 0.0],
            [0.0, 0.17, 0.74, 0.071, 0.02],
            [0.0, 0.0099, 0.28, 0.7, 0.0099],
            [0.059, 0.0, 0.0, 0.089, 0.85],
        ],
    ),
    (
        "late-weighted",
        [
            [0.92, 0.0, 0.0, 0.0, 0.081],
            [0.0, 0.9, 0.09, 0.01, 0.0],
            [0.0, 0.15, 0.71, 0.12, 0.02],
            [0.0, 0.02, 0.059, 0.91, 0.0099],
            [0.03, 0.0, 0.0, 0.099, 0.87],
        ],
    ),
];

/// Published macro averages of F1 per variant.
pub const REFERENCE_AVERAGE_F1: [(&str, f64); 6] = [
    ("single-b", 0.78),
    ("single-a", 0.79),
    ("early", 0.80),
    ("joint", 0.86),
    ("late-mean", 0.85),
    ("late-weighted", 0.86),
];

/// Display rounding of the published two-decimal values.
pub const ROUNDING_TOLERANCE: f64 = 0.015;

/// Counts for balanced classes of 1000 samples each.
pub fn reference_counts(fractions: &[[f64; 5]; 5]) -> ConfusionMatrix {
    let counts = fractions
        .iter()
        .map(|row| row.iter().map(|f| (f * 1000.0).round() as u64).collect())
        .collect();
    ConfusionMatrix::new(counts, class_names(5)).unwrap()
}

pub const REFERENCE_METRICS_CSV: &str = include_str!("../fixtures/reference_metrics.csv");

pub fn reference_metrics_path() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/reference_metrics.csv"))
}

/// Published per-class metric tables keyed by variant name.
pub fn reference_tables() -> Vec<(String, MetricsTable)> {
    tables_from_csv(REFERENCE_METRICS_CSV, reference_metrics_path()).unwrap()
}

pub fn reference_table(name: &str) -> MetricsTable {
    reference_tables().into_iter().find(|(n, _)| n == name).unwrap().1
}

pub fn diagonal(m: &[[f64; 5]; 5]) -> Vec<f64> {
    (0..5).map(|i| m[i][i]).collect()
}
