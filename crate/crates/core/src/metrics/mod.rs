//! Matting error measures over the unknown trimap region.
//!
//! All four are reported in the usual scaled units: SAD, Grad and Conn as
//! raw sums divided by 1000, MSE as the mean squared error times 1000.

mod conn;
mod grad;
mod report;

use log::warn;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use conn::{conn_metric, connectivity_levels, largest_component, CONN_DEAD_ZONE, CONN_STEP};
pub use grad::{gaussian_derivative_kernels, grad_metric, gradient_magnitude, reflect_index, GRAD_SIGMA};
pub use report::{mean_row, write_csv_report, write_jsonl_report, ReportRow};

/// Factor between raw and reported values.
pub const REPORT_SCALE: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Sad,
    Mse,
    Grad,
    Conn,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Sad, Metric::Mse, Metric::Grad, Metric::Conn];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Sad => "sad",
            Metric::Mse => "mse",
            Metric::Grad => "grad",
            Metric::Conn => "conn",
        }
    }

    /// Raw value (sum, or mean for MSE) to reported units.
    pub fn to_reported(self, raw: f64) -> f64 {
        match self {
            Metric::Mse => raw * REPORT_SCALE,
            _ => raw / REPORT_SCALE,
        }
    }

    pub fn to_raw(self, reported: f64) -> f64 {
        match self {
            Metric::Mse => reported / REPORT_SCALE,
            _ => reported * REPORT_SCALE,
        }
    }
}

/// The four measures for one prediction, in reported units.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MetricReport {
    pub sad: f64,
    pub mse: f64,
    pub grad: f64,
    pub conn: f64,
    pub n_unknown: usize,
    /// Set when the trimap has no unknown pixels; every measure is then 0.
    pub empty_mask: bool,
}

impl MetricReport {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Sad => self.sad,
            Metric::Mse => self.mse,
            Metric::Grad => self.grad,
            Metric::Conn => self.conn,
        }
    }
}

/// Height and width of a `[H, W]` or `[1, H, W]` matte.
pub(crate) fn plane(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] | [1, h, w] => Ok((*h, *w)),
        s => Err(Error::shape(format!("expected a [H, W] or [1, H, W] matte, got {s:?}"))),
    }
}

/// Validated plane size and selected pixels.
pub(crate) struct Masked {
    pub h: usize,
    pub w: usize,
    pub mask: Vec<bool>,
}

impl Masked {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Checks that `pred`, `gt` and `mask` cover the same plane and that both
/// mattes lie in `[0, 1]`. Non-zero mask entries select pixels.
pub(crate) fn prepare(pred: &Tensor, gt: &Tensor, mask: &Tensor) -> Result<Masked> {
    let (h, w) = plane(pred)?;
    if plane(gt)? != (h, w) || plane(mask)? != (h, w) {
        return Err(Error::shape(format!(
            "prediction {:?}, ground truth {:?} and mask {:?} differ",
            pred.shape(),
            gt.shape(),
            mask.shape()
        )));
    }
    for (name, t) in [("prediction", pred), ("ground truth", gt)] {
        if let Some(v) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::input(format!("{name} alpha {v} outside [0, 1]")));
        }
    }
    Ok(Masked { h, w, mask: mask.data().iter().map(|m| *m != 0.0).collect() })
}

fn warn_if_empty(m: &Masked, what: &str) -> bool {
    let empty = m.count() == 0;
    if empty {
        warn!("{what}: empty evaluation mask, reporting 0");
    }
    empty
}

/// Sum of absolute differences over the mask, divided by 1000.
pub fn sad(pred: &Tensor, gt: &Tensor, mask: &Tensor) -> Result<f64> {
    let m = prepare(pred, gt, mask)?;
    warn_if_empty(&m, "sad");
    let raw: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .zip(&m.mask)
        .filter(|(_, on)| **on)
        .map(|((p, g), _)| (p - g).abs())
        .sum();
    Ok(Metric::Sad.to_reported(raw))
}

/// Mean squared difference over the mask, times 1000.
pub fn mse(pred: &Tensor, gt: &Tensor, mask: &Tensor) -> Result<f64> {
    let m = prepare(pred, gt, mask)?;
    if warn_if_empty(&m, "mse") {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .zip(&m.mask)
        .filter(|(_, on)| **on)
        .map(|((p, g), _)| (p - g) * (p - g))
        .sum();
    Ok(Metric::Mse.to_reported(sum / m.count() as f64))
}

/// 1 where the trimap is 0.5. Fails on any value other than 0, 0.5 or 1.
pub fn unknown_region(trimap: &Tensor) -> Result<Tensor> {
    if let Some(v) = trimap.data().iter().find(|v| ![0.0, 0.5, 1.0].contains(*v)) {
        return Err(Error::input(format!("trimap value {v} is not 0, 0.5 or 1")));
    }
    Ok(trimap.map(|v| if v == 0.5 { 1.0 } else { 0.0 }))
}

/// All four measures over the unknown region of `trimap`.
pub fn evaluate(pred: &Tensor, gt: &Tensor, trimap: &Tensor) -> Result<MetricReport> {
    let mask = unknown_region(trimap)?;
    let n_unknown = prepare(pred, gt, &mask)?.count();
    if n_unknown == 0 {
        warn!("trimap has no unknown pixels, reporting zeros");
        return Ok(MetricReport { sad: 0.0, mse: 0.0, grad: 0.0, conn: 0.0, n_unknown, empty_mask: true });
    }
    Ok(MetricReport {
        sad: sad(pred, gt, &mask)?,
        mse: mse(pred, gt, &mask)?,
        grad: grad_metric(pred, gt, &mask, GRAD_SIGMA)?,
        conn: conn_metric(pred, gt, &mask, CONN_STEP)?,
        n_unknown,
        empty_mask: false,
    })
}
