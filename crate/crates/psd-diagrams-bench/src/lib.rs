//! Shared inputs for the benchmarks.

use psd_diagrams::assembly::expand_series;
use psd_diagrams::{ApproximationSeries, CutExpansion, Family, GridSpec, SystemSpec};

pub fn system(levels: usize) -> SystemSpec {
    SystemSpec::random(42, levels, 2.0, 0.8, 0.05)
}

pub fn series(family: Family, order: usize) -> CutExpansion {
    expand_series(ApproximationSeries { family, max_order: order }, family != Family::SecondBorn).expect("series expands")
}

pub fn grid(points: usize) -> GridSpec {
    GridSpec { min: -4.0, max: 4.0, points }
}
