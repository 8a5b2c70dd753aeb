use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::net::{LayerParams, TrainingGraph};
use crate::params::ParameterStore;

/// Fixed-width counts over `[-range, range]` of one layer's weights and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHistogram {
    pub layer: String,
    pub range: f64,
    pub counts: Vec<usize>,
    pub std: f64,
}

impl LayerHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let width = 2.0 * self.range / self.counts.len() as f64;
        (-self.range + bin as f64 * width, -self.range + (bin + 1) as f64 * width)
    }
}

/// Histogram of `values` over a symmetric range set by the largest
/// magnitude (1 when every value is zero).
pub fn histogram(layer: &str, values: &[f64], bins: usize) -> Result<LayerHistogram> {
    if bins == 0 {
        return Err(config_err("histogram needs at least one bin"));
    }
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let range = if peak > 0.0 { peak } else { 1.0 };
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v + range) / (2.0 * range) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LayerHistogram {
        layer: layer.to_string(),
        range,
        counts,
        std,
    })
}

pub(crate) fn layer_values(store: &ParameterStore, p: LayerParams) -> Vec<f64> {
    let mut v = store.value(p.weight).data().to_vec();
    v.extend_from_slice(store.value(p.bias).data());
    v
}

/// Histograms of every parametric layer head 1 depends on. With `dir`
/// set, also writes `hist_<layer>.csv` per layer and `weight_std.csv`.
pub fn export_weight_histograms(graph: &TrainingGraph, bins: usize, dir: Option<&Path>) -> Result<Vec<LayerHistogram>> {
    let hists = graph
        .head_layers(0)
        .into_iter()
        .map(|(_, name, p)| histogram(&name, &layer_values(graph.store(), p), bins))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = dir {
        write_histograms(&hists, dir)?;
    }
    Ok(hists)
}

pub fn write_histograms(hists: &[LayerHistogram], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for h in hists {
        let mut w = csv::Writer::from_path(dir.join(format!("hist_{}.csv", h.layer)))?;
        w.write_record(["bin", "lower", "upper", "count"])?;
        for (b, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(b);
            w.write_record([b.to_string(), lo.to_string(), hi.to_string(), c.to_string()])?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("weight_std.csv"))?;
    w.write_record(["layer", "params", "std", "range"])?;
    for h in hists {
        w.write_record([
            h.layer.clone(),
            h.total().to_string(),
            h.std.to_string(),
            h.range.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
