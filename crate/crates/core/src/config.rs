//! JSON scenario files.
//!
//! Every section rejects unknown keys. Optional fields are kept as `Option`
//! so that a parsed file serializes back to the same document.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::controllers::{Controller, GainFunctions, LegacyFunnelController, NFunction, NewFunnelController};
use crate::errchain::ErrorChainParams;
use crate::funnels::{FunnelFamily, FunnelFunction};
use crate::plants::{AffineDynamics, CausalOperator, Disturbance, FdePlant, History, MassOnCarPlant, Plant};
use crate::sim::{IntegratorConfig, Method, PolynomialSpline, ReferenceSignal};
use crate::{Error, Result};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_LOG_STRIDE: usize = 10;
pub const DEFAULT_STAGE_SCALE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantSpec,
    /// Values keyed by the plant's state labels.
    pub initial_state: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controllers: Option<Vec<ControllerSpec>>,
    pub reference: ReferenceSpec,
    pub funnel: FunnelSpec,
    pub integrator: IntegratorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    MassOnCar {
        m1: f64,
        m2: f64,
        c: f64,
        delta: f64,
        theta: f64,
    },
    /// `y^{(r)} = G_T T(y…) + G_u u + g_d d`.
    Fde {
        r: usize,
        m: usize,
        op_gain: Vec<Vec<f64>>,
        input_gain: Vec<Vec<f64>>,
        dist_gain: Vec<f64>,
        operator: OperatorSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        disturbance: Option<DisturbanceSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    None,
    /// Delay of the full stack; the initial trajectory is constant.
    Delay { tau: f64, history: Vec<f64> },
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
        eta0: Vec<f64>,
    },
    Play { sigma: f64, w0: Vec<f64> },
    Relay {
        on_level: f64,
        off_level: f64,
        out_hi: f64,
        out_lo: f64,
        state0: Vec<bool>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    Zero,
    Constant { level: f64 },
    Sinusoid { amplitude: f64, frequency: f64, phase: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSpec {
    NewFc {
        k: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<NFunction>,
    },
    LegacyFc {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stage_scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<NFunction>,
    },
}

impl ControllerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ControllerSpec::NewFc { .. } => "new_fc",
            ControllerSpec::LegacyFc { .. } => "legacy_fc",
        }
    }

    pub fn n_function(&self) -> NFunction {
        match self {
            ControllerSpec::NewFc { n, .. } | ControllerSpec::LegacyFc { n, .. } => n.unwrap_or_default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Zero,
    Cosine { amplitude: f64, frequency: f64, phase: f64 },
    Spline { knots: Vec<f64>, coefficients: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunnelSpec {
    /// `ψ(t) = a e^{−λt} + c`.
    Exponential { a: f64, lambda: f64, c: f64, alpha: f64, beta: f64 },
    Constant { c: f64, alpha: f64, beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSpec {
    Rk4,
    Rk45,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub method: MethodSpec,
    /// Fixed step for RK4, initial step for RK45.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::config(format!("{name}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Sets `path = value` in a JSON document. Path segments are object keys or
/// array indices separated by dots; `value` is parsed as JSON and falls back
/// to a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::usage(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(Error::usage(format!("override `{assignment}` has an empty key")));
        }
        let last = i + 1 == keys.len();
        cur = match cur {
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| Error::usage(format!("`{key}` is not an index into an array in `{path}`")))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| Error::usage(format!("index {idx} out of range in `{path}`")))?
            }
            Value::Object(map) => map.entry(key.to_string()).or_insert(if last { Value::Null } else { Value::Object(Default::default()) }),
            _ => return Err(Error::usage(format!("cannot descend into `{key}` in `{path}`"))),
        };
    }
    *cur = value;
    Ok(())
}

impl ScenarioConfig {
    pub fn from_value(doc: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?)
    }

    /// Reads a scenario file and applies `key=value` overrides before parsing.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let mut doc: Value =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_value(doc)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config is always serializable")
    }

    /// Copy with `key=value` overrides applied.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut doc = self.to_value();
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_value(doc)
    }

    /// Builds every component once so dimensional mismatches surface before
    /// any run.
    pub fn validate(&self) -> Result<()> {
        let specs = self.controller_specs()?;
        let plant = self.build_plant()?;
        self.initial_state_for(plant.as_ref())?;
        let funnel = self.build_funnel()?;
        for s in specs {
            self.build_controller(s, plant.order(), plant.dim(), &funnel)?;
        }
        let reference = self.build_reference()?;
        if let ReferenceSignal::PolynomialSpline(s) = &reference {
            s.check_smoothness(plant.order(), 1e-9)?;
        }
        self.build_integrator()?;
        Ok(())
    }

    /// The configured controllers, from either `controller` or `controllers`.
    pub fn controller_specs(&self) -> Result<Vec<&ControllerSpec>> {
        let mut out: Vec<&ControllerSpec> = self.controller.iter().collect();
        if let Some(list) = &self.controllers {
            out.extend(list.iter());
        }
        if out.is_empty() {
            return Err(Error::config("no controller configured"));
        }
        Ok(out)
    }

    /// Design parameter k used for feasibility checks and monitors: the
    /// first constant-gain controller's k, otherwise the smallest admissible
    /// value `α + 2`.
    pub fn chain_k(&self) -> Result<f64> {
        let specs = self.controller_specs()?;
        for s in specs {
            if let ControllerSpec::NewFc { k, .. } = s {
                return Ok(*k);
            }
        }
        Ok(self.build_funnel()?.alpha() + 2.0)
    }

    pub fn chain_params(&self, r: usize, m: usize) -> Result<ErrorChainParams> {
        ErrorChainParams::new(self.chain_k()?, r, m)
    }

    pub fn build_plant(&self) -> Result<Box<dyn Plant>> {
        match &self.plant {
            PlantSpec::MassOnCar { m1, m2, c, delta, theta } => {
                Ok(Box::new(MassOnCarPlant::new(*m1, *m2, *c, *delta, *theta)?))
            }
            PlantSpec::Fde { r, m, op_gain, input_gain, dist_gain, operator, disturbance } => {
                let op = build_operator(operator, *r, *m)?;
                let op_gain = matrix("op_gain", op_gain)?;
                let input_gain = matrix("input_gain", input_gain)?;
                if op_gain.nrows() != *m || op_gain.ncols() != op.output_dim() {
                    return Err(Error::config(format!(
                        "op_gain must be {m}x{}, got {}x{}",
                        op.output_dim(),
                        op_gain.nrows(),
                        op_gain.ncols()
                    )));
                }
                if input_gain.nrows() != *m || input_gain.ncols() != *m {
                    return Err(Error::config(format!("input_gain must be {m}x{m}")));
                }
                if dist_gain.len() != *m {
                    return Err(Error::config(format!("dist_gain must have {m} entries")));
                }
                let dist = match disturbance.as_ref().unwrap_or(&DisturbanceSpec::Zero) {
                    DisturbanceSpec::Zero => Disturbance::Zero,
                    DisturbanceSpec::Constant { level } => Disturbance::Constant(*level),
                    DisturbanceSpec::Sinusoid { amplitude, frequency, phase } => Disturbance::Sinusoid {
                        amplitude: *amplitude,
                        frequency: *frequency,
                        phase: *phase,
                    },
                };
                let f = AffineDynamics { op_gain, input_gain, dist_gain: DVector::from_column_slice(dist_gain) };
                Ok(Box::new(FdePlant::new(*r, *m, Box::new(f), op, dist)?))
            }
        }
    }

    /// Initial state vector in the plant's label order. Missing operator
    /// states (`eta*`) default to the operator's own initial values.
    pub fn initial_state_for(&self, plant: &dyn Plant) -> Result<Vec<f64>> {
        let labels = plant.state_labels();
        if let Some(unknown) = self.initial_state.keys().find(|k| !labels.contains(k)) {
            return Err(Error::config(format!(
                "initial_state.{unknown} is not a state of this plant (expected {})",
                labels.join(", ")
            )));
        }
        let defaults = match &self.plant {
            PlantSpec::Fde { r, m, operator, .. } => build_operator(operator, *r, *m)?.initial_continuous(),
            PlantSpec::MassOnCar { .. } => Vec::new(),
        };
        let first_eta = labels.len() - defaults.len();
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| match self.initial_state.get(l) {
                Some(v) if v.is_finite() => Ok(*v),
                Some(v) => Err(Error::config(format!("initial_state.{l} = {v} is not finite"))),
                None if i >= first_eta => Ok(defaults[i - first_eta]),
                None => Err(Error::config(format!("initial_state.{l} is missing"))),
            })
            .collect()
    }

    pub fn build_funnel(&self) -> Result<FunnelFunction> {
        match self.funnel {
            FunnelSpec::Exponential { a, lambda, c, alpha, beta } => {
                FunnelFunction::new(FunnelFamily::Exponential { a, lambda, c }, alpha, beta)
            }
            FunnelSpec::Constant { c, alpha, beta } => FunnelFunction::constant(c, alpha, beta),
        }
    }

    pub fn build_reference(&self) -> Result<ReferenceSignal> {
        Ok(match &self.reference {
            ReferenceSpec::Zero => ReferenceSignal::Zero,
            ReferenceSpec::Cosine { amplitude, frequency, phase } => ReferenceSignal::Cosine {
                amplitude: *amplitude,
                frequency: *frequency,
                phase: *phase,
            },
            ReferenceSpec::Spline { knots, coefficients } => {
                ReferenceSignal::PolynomialSpline(PolynomialSpline::new(knots.clone(), coefficients.clone())?)
            }
        })
    }

    pub fn build_integrator(&self) -> Result<IntegratorConfig> {
        let s = &self.integrator;
        let dt = s.dt.unwrap_or(DEFAULT_DT);
        let method = match s.method {
            MethodSpec::Rk4 => Method::Rk4 { dt },
            MethodSpec::Rk45 => Method::Rk45 {
                rtol: s.rtol.unwrap_or(1e-8),
                atol: s.atol.unwrap_or(1e-10),
                dt_min: s.dt_min.unwrap_or(1e-12),
                dt_init: dt,
                dt_max: s.dt_max.unwrap_or(0.1_f64.max(dt)),
            },
        };
        let cfg = IntegratorConfig {
            method,
            t0: s.t0.unwrap_or(0.0),
            t_end: s.t_end,
            log_stride: s.log_stride.unwrap_or(DEFAULT_LOG_STRIDE),
            hold: s.hold.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build_controller(
        &self,
        spec: &ControllerSpec,
        r: usize,
        m: usize,
        funnel: &FunnelFunction,
    ) -> Result<Box<dyn Controller>> {
        let gains = GainFunctions::new(spec.n_function(), Default::default());
        Ok(match spec {
            ControllerSpec::NewFc { k, .. } => {
                Box::new(NewFunnelController::new(ErrorChainParams::new(*k, r, m)?, funnel, gains))
            }
            ControllerSpec::LegacyFc { stage_scale, .. } => {
                let scale = stage_scale.unwrap_or(DEFAULT_STAGE_SCALE);
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::config(format!("stage_scale must be positive, got {scale}")));
                }
                Box::new(LegacyFunnelController::with_stage_scale(funnel, r, m, scale, gains)?)
            }
        })
    }
}

fn build_operator(spec: &OperatorSpec, r: usize, m: usize) -> Result<CausalOperator> {
    match spec {
        OperatorSpec::None => Ok(FdePlant::null_operator(r, m)),
        OperatorSpec::Delay { tau, history } => {
            if history.len() != r * m {
                return Err(Error::config(format!("delay history must have r*m = {} entries", r * m)));
            }
            let h = History::from_fn(-tau, 0.0, 2, |_| history.clone())?;
            CausalOperator::delay(*tau, h)
        }
        OperatorSpec::Linear { a, b, c, d, eta0 } => CausalOperator::linear(
            matrix("a", a)?,
            matrix("b", b)?,
            matrix("c", c)?,
            matrix("d", d)?,
            DVector::from_column_slice(eta0),
        ),
        OperatorSpec::Play { sigma, w0 } => CausalOperator::play(*sigma, w0.clone()),
        OperatorSpec::Relay { on_level, off_level, out_hi, out_lo, state0 } => {
            CausalOperator::relay(*on_level, *off_level, *out_hi, *out_lo, state0.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BENCH: &str = r#"{
        "name": "bench",
        "plant": {"type": "mass_on_car", "m1": 4, "m2": 1, "c": 2, "delta": 1, "theta": 0},
        "initial_state": {"z": -0.3, "zdot": -0.21, "s": 1, "sdot": 1},
        "controller": {"type": "new_fc", "k": 3},
        "reference": {"type": "cosine", "amplitude": 1, "frequency": 1, "phase": 0},
        "funnel": {"type": "exponential", "a": 3, "lambda": 1, "c": 0.1, "alpha": 1, "beta": 0.1},
        "integrator": {"method": "rk4", "dt": 1e-4, "t_end": 10, "log_stride": 10}
    }"#;

    fn normalize(v: Value) -> Value {
        match v {
            Value::Number(n) => serde_json::json!(n.as_f64().unwrap()),
            Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
            Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
            other => other,
        }
    }

    #[test]
    fn round_trip() {
        let cfg = ScenarioConfig::from_json_str(BENCH).unwrap();
        let input: Value = serde_json::from_str(BENCH).unwrap();
        assert_eq!(normalize(cfg.to_value()), normalize(input));
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut doc: Value = serde_json::from_str(BENCH).unwrap();
        doc["funnel"]["gamma"] = serde_json::json!(1);
        assert!(matches!(ScenarioConfig::from_value(doc), Err(Error::Config(_))));
        let mut doc: Value = serde_json::from_str(BENCH).unwrap();
        doc["colour"] = serde_json::json!("red");
        assert!(ScenarioConfig::from_value(doc).is_err());
    }

    #[test]
    fn initial_state_by_label() {
        let cfg = ScenarioConfig::from_json_str(BENCH).unwrap();
        let plant = cfg.build_plant().unwrap();
        assert_eq!(cfg.initial_state_for(plant.as_ref()).unwrap(), vec![-0.3, 1.0, -0.21, 1.0]);
        let bad = cfg.with_overrides(&["initial_state.q=1".into()]);
        assert!(bad.is_err());
    }

    #[test]
    fn overrides() {
        let cfg = ScenarioConfig::from_json_str(BENCH).unwrap();
        let cfg2 = cfg
            .with_overrides(&["controller.k=4".into(), "integrator.dt=0.001".into(), "name=other".into()])
            .unwrap();
        assert_eq!(cfg2.chain_k().unwrap(), 4.0);
        assert_eq!(cfg2.build_integrator().unwrap().nominal_dt(), 1e-3);
        assert_eq!(cfg2.name, "other");
        assert!(cfg.with_overrides(&["controller".into()]).is_err());
    }

    #[test]
    fn controller_dimension_checked() {
        let mut doc: Value = serde_json::from_str(BENCH).unwrap();
        doc["controller"]["k"] = serde_json::json!(-1);
        assert!(ScenarioConfig::from_value(doc).is_err());
        let mut doc: Value = serde_json::from_str(BENCH).unwrap();
        doc.as_object_mut().unwrap().remove("controller");
        assert!(ScenarioConfig::from_value(doc).is_err());
    }

    #[test]
    fn fde_plant_config() {
        let text = r#"{
            "name": "play",
            "plant": {"type": "fde", "r": 1, "m": 1, "op_gain": [[0.5]], "input_gain": [[1]],
                      "dist_gain": [0.1], "operator": {"type": "play", "sigma": 0.2, "w0": [0]},
                      "disturbance": {"type": "sinusoid", "amplitude": 1, "frequency": 2, "phase": 0}},
            "initial_state": {"y0_0": 0.5},
            "controller": {"type": "new_fc", "k": 3},
            "reference": {"type": "zero"},
            "funnel": {"type": "constant", "c": 1, "alpha": 1, "beta": 0.2},
            "integrator": {"method": "rk4", "dt": 1e-3, "t_end": 1}
        }"#;
        let cfg = ScenarioConfig::from_json_str(text).unwrap();
        let plant = cfg.build_plant().unwrap();
        assert_eq!(cfg.initial_state_for(plant.as_ref()).unwrap(), vec![0.5]);
    }
}
