// SPDX-License-Identifier: Apache-2.0

//! Recall over a grid of photon levels and signal-to-background ratios.

use std::fmt::Write as _;

use serde::Serialize;

use super::{simulate_cube, SceneSpec};
use crate::error::{Error, Result};
use crate::eval::{baseline_xcorr, evaluate};
use crate::reconstruct::{reconstruct, ReconConfig};

/// One grid cell, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Target mean signal photons per pixel.
    pub signal_ppp: f64,
    pub sbr: f64,
    pub seeds: usize,
    pub recall: f64,
    pub recall_std: f64,
    pub depth_rmse: f64,
    pub false_rate: f64,
    pub baseline_recall: f64,
}

/// Recalibrates `spec` to every `(signal_ppp, sbr)` pair, simulates one
/// cube per seed, reconstructs and scores it against the truth at `tau`.
pub fn sweep_operating_conditions(
    spec: &SceneSpec,
    config: &ReconConfig,
    signal_ppp: &[f64],
    sbr: &[f64],
    seeds: &[u64],
    tau: f64,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::argument("sweep needs at least one seed"));
    }
    let mut rows = Vec::new();
    for &ppp in signal_ppp {
        for &ratio in sbr {
            let cell = spec.calibrated(ppp, ratio)?;
            let mut recalls = Vec::new();
            let (mut rmse, mut false_rate, mut base) = (0.0, 0.0, 0.0);
            for &seed in seeds {
                let (cube, report) = simulate_cube(&cell, seed)?;
                let rec = reconstruct(&cube, &cell.sensor, config)?;
                let m = evaluate(&rec.cloud, &report.truth, tau)?;
                let b = evaluate(&baseline_xcorr(&cube, &cell.sensor)?, &report.truth, tau)?;
                recalls.push(m.recall);
                rmse += m.depth_rmse;
                false_rate += m.false_rate;
                base += b.recall;
            }
            let n = seeds.len() as f64;
            let mean = recalls.iter().sum::<f64>() / n;
            let var = recalls.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
            rows.push(SweepRow {
                signal_ppp: ppp,
                sbr: ratio,
                seeds: seeds.len(),
                recall: mean,
                recall_std: var.sqrt(),
                depth_rmse: rmse / n,
                false_rate: false_rate / n,
                baseline_recall: base / n,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("signal_ppp,sbr,seeds,recall,recall_std,depth_rmse,false_rate,baseline_recall\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.signal_ppp, r.sbr, r.seeds, r.recall, r.recall_std, r.depth_rmse, r.false_rate, r.baseline_recall
        );
    }
    out
}
