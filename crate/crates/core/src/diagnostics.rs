//! Per-step functionals, monotonicity audits and exponential rate fits.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::flow::{FlowKind, FlowState};
use crate::numerics::pairwise_sum;
use crate::surface::enclosed_volume;

pub const CSV_HEADER: &str =
    "t,area,volume,avg_speed,max_dev,l2_dev,iso_ratio,kappa_min,kappa_max,max_ring,min_chi,max_gradH";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagRow {
    pub step: usize,
    pub t: f64,
    pub area: f64,
    pub volume: f64,
    pub avg_speed: f64,
    pub max_dev: f64,
    pub l2_dev: f64,
    pub iso_ratio: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub max_ring: f64,
    pub min_chi: f64,
    pub max_grad_h: f64,
    /// `min H`, used to gate the volume audit of the area-preserving flow.
    pub min_h: f64,
}

impl DiagRow {
    pub fn csv_line(&self) -> String {
        let v = [
            self.t,
            self.area,
            self.volume,
            self.avg_speed,
            self.max_dev,
            self.l2_dev,
            self.iso_ratio,
            self.kappa_min,
            self.kappa_max,
            self.max_ring,
            self.min_chi,
            self.max_grad_h,
        ];
        v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
    }
}

pub fn record(state: &FlowState) -> Result<DiagRow> {
    let f = &state.fields;
    let h = f.mean_curvature();
    let avg = state.average_speed()?;
    let dmu = f.area_elements();
    let area = pairwise_sum(&dmu);
    let volume = enclosed_volume(&state.graph)?;
    let sq: Vec<f64> = h.iter().zip(&dmu).map(|(v, w)| (v - avg) * (v - avg) * w).collect();
    let (kappa_min, kappa_max) = f.kappa_range();
    Ok(DiagRow {
        step: state.step_index,
        t: state.t,
        area,
        volume,
        avg_speed: avg,
        max_dev: h.iter().map(|v| (v - avg).abs()).fold(0.0, f64::max),
        l2_dev: pairwise_sum(&sq).max(0.0).sqrt(),
        iso_ratio: area.powi(3) / (volume * volume),
        kappa_min,
        kappa_max,
        max_ring: f.max_ring(),
        min_chi: f.min_chi(),
        max_grad_h: f.max_grad_h(),
        min_h: h.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

pub fn series_csv(rows: &[DiagRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 200 + 100);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateField {
    MaxDev,
    L2Dev,
}

impl RateField {
    fn get(self, row: &DiagRow) -> f64 {
        match self {
            RateField::MaxDev => row.max_dev,
            RateField::L2Dev => row.l2_dev,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub lambda: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Least-squares fit of `log(value) = a − λ t` over rows with `t` in the window.
pub fn fit_rate(series: &[DiagRow], field: RateField, window: (f64, f64)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series.iter().map(|r| (r.t, field.get(r))).collect();
    fit_exponential(&pts, window)
}

/// The fit behind [`fit_rate`] on raw `(t, value)` samples; points outside
/// the window are ignored.
pub fn fit_exponential(samples: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::Domain(format!(
            "rate fit needs at least {MIN_FIT_SAMPLES} samples in [{}, {}], found {}",
            window.0,
            window.1,
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "nonpositive sample {v} at t={t}: the window must end before the precision floor"
        )));
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let y_mean = y.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for (p, yi) in pts.iter().zip(&y) {
        let dt = p.0 - t_mean;
        let dy = yi - y_mean;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::Degenerate("all samples share one time".into()));
    }
    let scale = y_mean.abs().max(1.0);
    if syy <= (1e-24 * scale * scale) * n {
        return Err(Error::Degenerate("series is constant, no decay rate".into()));
    }
    let slope = sty / stt;
    let r2 = (sty * sty / (stt * syy)).clamp(0.0, 1.0);
    Ok(RateFit {
        lambda: -slope,
        r2,
        window,
        samples: pts.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditTolerances {
    /// Relative deviation allowed in the conserved quantity.
    pub conserved_rel: f64,
    /// Absolute per-step slack for the monotone quantities.
    pub per_step: f64,
    /// Relative slack for the isoperimetric ratio and its floor.
    pub iso_rel: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        Self {
            conserved_rel: 1e-8,
            per_step: 1e-10,
            iso_rel: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditField {
    VolumeDrift,
    AreaIncrease,
    AreaDrift,
    VolumeDecrease,
    IsoIncrease,
    IsoBelowFloor,
}

impl AuditField {
    pub fn name(self) -> &'static str {
        match self {
            AuditField::VolumeDrift => "volume_drift",
            AuditField::AreaIncrease => "area_increase",
            AuditField::AreaDrift => "area_drift",
            AuditField::VolumeDecrease => "volume_decrease",
            AuditField::IsoIncrease => "iso_increase",
            AuditField::IsoBelowFloor => "iso_below_floor",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub field: AuditField,
    /// Signed excess over the tolerance direction (positive = wrong way).
    pub amount: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, field: AuditField) -> usize {
        self.violations.iter().filter(|v| v.field == field).count()
    }
}

/// Check the conservation and monotonicity laws along a series. `iso_floor`
/// is the coordinate-sphere isoperimetric ratio at the conserved volume of
/// the volume-preserving flow; pass `None` to check monotonicity only.
pub fn audit_monotonicity(
    series: &[DiagRow],
    kind: FlowKind,
    tol: &AuditTolerances,
    iso_floor: Option<f64>,
) -> AuditReport {
    let mut report = AuditReport::default();
    let Some(first) = series.first() else {
        return report;
    };
    let mut push = |index, field, amount: f64| {
        report.violations.push(Violation { index, field, amount });
    };
    for (i, row) in series.iter().enumerate() {
        match kind {
            FlowKind::Volume => {
                let drift = (row.volume - first.volume).abs() / first.volume;
                if drift > tol.conserved_rel {
                    push(i, AuditField::VolumeDrift, drift - tol.conserved_rel);
                }
            }
            FlowKind::Area => {
                let drift = (row.area - first.area).abs() / first.area;
                if drift > tol.conserved_rel {
                    push(i, AuditField::AreaDrift, drift - tol.conserved_rel);
                }
            }
        }
        if let (Some(floor), FlowKind::Volume) = (iso_floor, kind) {
            let excess = floor * (1.0 - tol.iso_rel) - row.iso_ratio;
            if excess > 0.0 {
                push(i, AuditField::IsoBelowFloor, excess);
            }
        }
    }
    let mut skipped = Vec::new();
    for (i, w) in series.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let idx = i + 1;
        match kind {
            FlowKind::Volume => {
                let up = b.area - a.area;
                if up > tol.per_step {
                    push(idx, AuditField::AreaIncrease, up);
                }
                let up = b.iso_ratio - a.iso_ratio;
                if up > tol.iso_rel * a.iso_ratio {
                    push(idx, AuditField::IsoIncrease, up);
                }
            }
            FlowKind::Area => {
                if a.min_h > 0.0 && b.min_h > 0.0 {
                    let down = a.volume - b.volume;
                    if down > tol.per_step {
                        push(idx, AuditField::VolumeDecrease, down);
                    }
                } else {
                    skipped.push(idx);
                }
            }
        }
    }
    if !skipped.is_empty() {
        report.notes.push(format!(
            "volume monotonicity skipped on {} interval(s) where min H <= 0 (first at row {})",
            skipped.len(),
            skipped[0]
        ));
    }
    report
}
