use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    coverage_efficiency_curve, coverage_report, downstream_accuracy, ece, efficiency, ks_mean,
    wasserstein_mean, width_vs_density, MetricsError, DEFAULT_LEVELS,
};
use crate::conformal::Calibrator;
use crate::data::LabeledDataset;
use crate::nn::MlpModel;

/// Two-column numeric table written as CSV with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub columns: [String; 2],
    pub rows: Vec<[f64; 2]>,
}

impl CurveTable {
    pub fn new(x: &str, y: &str, rows: Vec<[f64; 2]>) -> Self {
        Self {
            columns: [x.to_string(), y.to_string()],
            rows,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MetricsError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record([format!("{:?}", r[0]), format!("{:?}", r[1])])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), MetricsError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Everything `evaluate` reports. Conformal fields are present only when a
/// calibrator was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_at_alpha: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ece: Option<f64>,
    pub ks_mean: f64,
    pub wasserstein_mean: f64,
    pub downstream_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_density_spearman: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub curves: BTreeMap<String, CurveTable>,
}

/// Significance levels of the coverage-efficiency curve, largest first.
pub const CURVE_ALPHAS: [f64; 10] = [0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.075, 0.05, 0.025];

impl MetricsReport {
    /// KS, Wasserstein and downstream accuracy of `synth` against `real`.
    pub fn fidelity(real: &LabeledDataset, synth: &LabeledDataset) -> Result<Self, MetricsError> {
        if real.dim() != synth.dim() {
            return Err(MetricsError::DimensionMismatch {
                real: real.dim(),
                synth: synth.dim(),
            });
        }
        Ok(Self {
            coverage_at_alpha: None,
            efficiency: None,
            ece: None,
            ks_mean: ks_mean(real.features(), synth.features())?,
            wasserstein_mean: wasserstein_mean(real.features(), synth.features())?,
            downstream_accuracy: downstream_accuracy(synth, real)?,
            width_density_spearman: None,
            curves: BTreeMap::new(),
        })
    }

    /// Adds coverage, efficiency and ECE of `samples` under `calibrator`,
    /// together with the three curve tables.
    pub fn add_conformal(
        &mut self,
        calibrator: &Calibrator,
        calib: &LabeledDataset,
        samples: &LabeledDataset,
        disc: &MlpModel,
        k_nn: usize,
    ) -> Result<(), MetricsError> {
        let grid = coverage_report(calibrator, samples, disc, &DEFAULT_LEVELS)?;
        self.coverage_at_alpha = Some(
            grid.rows
                .iter()
                .map(|r| (format!("{}", r.nominal), r.empirical))
                .collect(),
        );
        self.efficiency = Some(efficiency(calibrator));
        self.ece = Some(ece(&grid)?);
        let fig2 = coverage_efficiency_curve(calibrator, samples, disc, &CURVE_ALPHAS)?;
        let fig3 = grid.rows.iter().map(|r| [r.nominal, r.empirical]).collect();
        let fig4 = width_vs_density(calibrator, calib, samples, disc, k_nn)?;
        self.width_density_spearman = Some(fig4.spearman);
        self.curves.insert(
            "fig2_coverage_efficiency".into(),
            CurveTable::new("set_size", "coverage", fig2),
        );
        self.curves.insert(
            "fig3_calibration".into(),
            CurveTable::new("nominal", "empirical", fig3),
        );
        self.curves.insert(
            "fig4_width_density".into(),
            CurveTable::new("density", "mean_radius", fig4.rows),
        );
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, MetricsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json` and one CSV per curve into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), MetricsError> {
        std::fs::create_dir_all(dir)?;
        let mut json = self.to_json()?;
        json.push('\n');
        std::fs::write(dir.join("report.json"), json)?;
        for (name, table) in &self.curves {
            table.save_csv(&dir.join(format!("{name}.csv")))?;
        }
        Ok(())
    }
}
