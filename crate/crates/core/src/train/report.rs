use toml::{Table, Value};

use super::config::TrainConfig;
use crate::objectives::IouReport;

/// Scores over one sample set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub samples: usize,
    /// Scored on valid pixels of the range images.
    pub pixel: IouReport,
    /// Scored on the original points after back-projecting the predicted
    /// label image; `None` when back-projection was not requested.
    pub point: Option<IouReport>,
    /// Mean wall-clock time of one single-scan forward pass.
    pub forward_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub config: TrainConfig,
    pub param_count: usize,
    pub loss_trace: Vec<f64>,
    pub train: EvalMetrics,
    pub val: Option<EvalMetrics>,
    pub train_seconds: f64,
}

fn iou_values(r: &IouReport) -> Value {
    Value::Array(
        r.per_class
            .iter()
            .map(|v| Value::Float(v.unwrap_or(f64::NAN)))
            .collect(),
    )
}

fn metrics_table(m: &EvalMetrics) -> Table {
    let mut t = Table::new();
    t.insert("samples".into(), Value::Integer(m.samples as i64));
    t.insert("pixel_miou".into(), Value::Float(m.pixel.mean.unwrap_or(f64::NAN)));
    t.insert("pixel_iou".into(), iou_values(&m.pixel));
    if let Some(p) = &m.point {
        t.insert("point_miou".into(), Value::Float(p.mean.unwrap_or(f64::NAN)));
        t.insert("point_iou".into(), iou_values(p));
    }
    t.insert("forward_ms".into(), Value::Float(m.forward_ms));
    t
}

impl RunReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_trace.last().copied()
    }

    /// Key-value text (TOML). Undefined IoUs are written as `nan`.
    pub fn to_text(&self) -> String {
        let mut root = Table::new();
        root.insert("param_count".into(), Value::Integer(self.param_count as i64));
        root.insert("steps".into(), Value::Integer(self.loss_trace.len() as i64));
        root.insert("final_loss".into(), Value::Float(self.final_loss().unwrap_or(f64::NAN)));
        root.insert("train_seconds".into(), Value::Float(self.train_seconds));
        root.insert(
            "loss_trace".into(),
            Value::Array(self.loss_trace.iter().map(|&l| Value::Float(l)).collect()),
        );
        root.insert("train".into(), Value::Table(metrics_table(&self.train)));
        if let Some(v) = &self.val {
            root.insert("val".into(), Value::Table(metrics_table(v)));
        }
        if let Ok(cfg) = Value::try_from(&self.config) {
            root.insert("config".into(), cfg);
        }
        toml::to_string(&root).unwrap_or_default()
    }
}
