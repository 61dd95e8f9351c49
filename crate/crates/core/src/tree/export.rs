use std::io::Write;

use serde::{Deserialize, Serialize};

use super::CateTree;
use crate::error::{CateError, Result};

/// Raster of predicted effects over a rectangle of the score plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectGrid {
    /// Cell centers along the propensity axis.
    pub e_centers: Vec<f64>,
    /// Cell centers along the prognostic axis.
    pub p_centers: Vec<f64>,
    /// Row-major by prognostic index: `values[ip * e_centers.len() + ie]`.
    pub values: Vec<f64>,
}

impl EffectGrid {
    pub fn get(&self, ie: usize, ip: usize) -> f64 {
        self.values[ip * self.e_centers.len() + ie]
    }

    /// CSV with columns `e, p, effect`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["e", "p", "effect"])?;
        for (ip, p) in self.p_centers.iter().enumerate() {
            for (ie, e) in self.e_centers.iter().enumerate() {
                w.write_record(&[e.to_string(), p.to_string(), self.get(ie, ip).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn centers(range: (f64, f64), res: usize, name: &'static str) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(CateError::param(name, format!("empty range [{lo}, {hi}]")));
    }
    let step = (hi - lo) / res as f64;
    Ok((0..res).map(|i| lo + (i as f64 + 0.5) * step).collect())
}

/// Predict at the center of each cell of a `resolution.0 x resolution.1` grid.
pub fn export_grid(tree: &CateTree, e_range: (f64, f64), p_range: (f64, f64), resolution: (usize, usize)) -> Result<EffectGrid> {
    if resolution.0 < 2 || resolution.1 < 2 {
        return Err(CateError::param("resolution", "need at least 2 cells per axis"));
    }
    let e_centers = centers(e_range, resolution.0, "e_range")?;
    let p_centers = centers(p_range, resolution.1, "p_range")?;
    let mut values = Vec::with_capacity(e_centers.len() * p_centers.len());
    for &p in &p_centers {
        for &e in &e_centers {
            values.push(tree.predict_point([e, p]));
        }
    }
    Ok(EffectGrid {
        e_centers,
        p_centers,
        values,
    })
}
