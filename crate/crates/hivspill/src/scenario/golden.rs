//! Reference 2020-2030 incidence tables used for validation.

use crate::model::Variant;

#[derive(Clone, Debug, PartialEq)]
pub struct GoldenRow {
    pub group: &'static str,
    pub additional_persons: f64,
    /// Prevented infections per reporting column.
    pub prevented: &'static [f64],
}

impl GoldenRow {
    pub fn prevented_total(&self) -> f64 {
        self.prevented.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoldenTable {
    pub name: &'static str,
    pub variant: Variant,
    pub baseline: &'static [f64],
    pub rows: Vec<GoldenRow>,
}

impl GoldenTable {
    pub fn baseline_total(&self) -> f64 {
        self.baseline.iter().sum()
    }
}

fn row(group: &'static str, additional_persons: f64, prevented: &'static [f64]) -> GoldenRow {
    GoldenRow {
        group,
        additional_persons,
        prevented,
    }
}

pub fn basic_reference() -> GoldenTable {
    GoldenTable {
        name: "basic",
        variant: Variant::Basic,
        baseline: &[22_824.0, 4_021.0, 2_174.0],
        rows: vec![
            row("msm", 10_000.0, &[2_346.0, 58.0, 2.0]),
            row("msm", 25_000.0, &[5_673.0, 139.0, 7.0]),
            row("msm", 50_000.0, &[10_730.0, 252.0, 11.0]),
            row("hetf", 10_000.0, &[0.0, 14.0, 0.0]),
            row("hetf", 25_000.0, &[0.0, 31.0, 2.0]),
            row("hetf", 50_000.0, &[0.0, 64.0, 4.0]),
            row("hetm", 10_000.0, &[0.0, 2.0, 5.0]),
            row("hetm", 25_000.0, &[0.0, 2.0, 18.0]),
            row("hetm", 50_000.0, &[0.0, 4.0, 34.0]),
        ],
    }
}

pub fn risk_reference() -> GoldenTable {
    GoldenTable {
        name: "risk",
        variant: Variant::Risk,
        baseline: &[22_783.0, 4_132.0, 2_729.0],
        rows: vec![
            row("msm", 10_000.0, &[2_342.0, 56.0, 4.0]),
            row("msm", 25_000.0, &[5_661.0, 134.0, 11.0]),
            row("msm", 50_000.0, &[10_705.0, 253.0, 19.0]),
            row("hetf_h", 10_000.0, &[1.0, 85.0, 10.0]),
            row("hetf_h", 25_000.0, &[2.0, 210.0, 27.0]),
            row("hetf_h", 50_000.0, &[6.0, 421.0, 54.0]),
            row("hetf_l", 10_000.0, &[0.0, 8.0, 0.0]),
            row("hetf_l", 25_000.0, &[0.0, 17.0, 0.0]),
            row("hetf_l", 50_000.0, &[0.0, 36.0, 0.0]),
            row("hetm", 10_000.0, &[0.0, 2.0, 11.0]),
            row("hetm", 25_000.0, &[0.0, 3.0, 23.0]),
            row("hetm", 50_000.0, &[0.0, 5.0, 48.0]),
        ],
    }
}

/// Reporting columns; the risk model's two HETF strata share one column.
pub const COLUMNS: [&str; 3] = ["msm", "hetf", "hetm"];

/// Reporting column of model group `j`.
pub fn column_of(variant: Variant, j: usize) -> usize {
    match variant {
        Variant::Basic => j,
        Variant::Risk => [0, 1, 1, 2][j],
    }
}

/// Sums per-group values into reporting columns.
pub fn to_columns(variant: Variant, per_group: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (j, v) in per_group.iter().enumerate() {
        out[column_of(variant, j)] += v;
    }
    out
}

pub fn for_variant(variant: Variant) -> GoldenTable {
    match variant {
        Variant::Basic => basic_reference(),
        Variant::Risk => risk_reference(),
    }
}
