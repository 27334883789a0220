use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FunnelViolation,
    GainSingularity,
    StageSingularity,
    NonFinite,
    FiniteEscape,
    OperatorError,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

/// Sampled closed-loop trajectory.
///
/// Vector-valued columns are stored per sample; `e_stack` is the flattened
/// `r × m` error stack and `xi` the flattened stage signals the controller
/// produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrajectoryLog {
    pub controller: String,
    pub r: usize,
    pub m: usize,
    pub state_labels: Vec<String>,
    pub t: Vec<f64>,
    pub state: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub y_ref: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub e_stack: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub norm_e: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub gain: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub stage_gains: Vec<Vec<f64>>,
    pub events: Vec<Event>,
}

fn component_names(base: &str, m: usize) -> Vec<String> {
    if m == 1 {
        vec![base.to_string()]
    } else {
        (1..=m).map(|c| format!("{base}_{c}")).collect()
    }
}

impl TrajectoryLog {
    pub fn new(controller: &str, r: usize, m: usize, state_labels: Vec<String>) -> Self {
        Self { controller: controller.to_string(), r, m, state_labels, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `t,<state>,y,yref,e,psi,norm_e,xi1,…,xir,w,gain,u`.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(self.state_labels.iter().cloned());
        for base in ["y", "yref", "e"] {
            h.extend(component_names(base, self.m));
        }
        h.push("psi".into());
        h.push("norm_e".into());
        for i in 1..=self.r {
            h.extend(component_names(&format!("xi{i}"), self.m));
        }
        h.push("w".into());
        h.push("gain".into());
        h.extend(component_names("u", self.m));
        h
    }

    pub fn csv_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![self.t[i]];
        row.extend(&self.state[i]);
        row.extend(&self.y[i]);
        row.extend(&self.y_ref[i]);
        row.extend(&self.e[i]);
        row.push(self.psi[i]);
        row.push(self.norm_e[i]);
        row.extend(&self.xi[i]);
        row.push(self.w[i]);
        row.push(self.gain[i]);
        row.extend(&self.u[i]);
        row
    }

    /// Column by CSV header name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.csv_header().iter().position(|h| h == name)?;
        Some((0..self.len()).map(|i| self.csv_row(i)[idx]).collect())
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for i in 0..self.len() {
            w.write_record(self.csv_row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn save_events_json(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, &self.events)?;
        Ok(())
    }

    /// `sup_t ‖u(t)‖` over the logged samples.
    pub fn sup_u(&self) -> f64 {
        self.u.iter().map(|u| crate::errchain::norm(u)).fold(0.0, f64::max)
    }

    /// Root mean square of `‖e‖` over the logged samples.
    pub fn rms_error(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (self.norm_e.iter().map(|v| v * v).sum::<f64>() / self.len() as f64).sqrt()
    }
}
