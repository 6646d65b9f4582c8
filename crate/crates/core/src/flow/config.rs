use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimator selector. Unknown names resolve through the registry.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethod {
    HornSchunck,
    LucasKanade,
    Tvl1,
    #[serde(untagged)]
    External(String),
}

impl FlowMethod {
    pub const BUILTIN: [FlowMethod; 3] = [FlowMethod::HornSchunck, FlowMethod::LucasKanade, FlowMethod::Tvl1];

    pub fn name(&self) -> &str {
        match self {
            FlowMethod::HornSchunck => "horn_schunck",
            FlowMethod::LucasKanade => "lucas_kanade",
            FlowMethod::Tvl1 => "tvl1",
            FlowMethod::External(n) => n,
        }
    }

    /// Parses a name, mapping built-in names to their variants.
    pub fn from_name(name: &str) -> FlowMethod {
        match name {
            "horn_schunck" => FlowMethod::HornSchunck,
            "lucas_kanade" => FlowMethod::LucasKanade,
            "tvl1" => FlowMethod::Tvl1,
            other => FlowMethod::External(other.to_string()),
        }
    }
}

impl std::fmt::Display for FlowMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HornSchunckParams {
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for HornSchunckParams {
    fn default() -> Self {
        HornSchunckParams {
            alpha: 15.0,
            iterations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LucasKanadeParams {
    pub window_radius: usize,
    pub min_eigenvalue: f64,
    /// Gauss–Newton refinements per pyramid level.
    pub iterations: usize,
}

impl Default for LucasKanadeParams {
    fn default() -> Self {
        LucasKanadeParams {
            window_radius: 7,
            min_eigenvalue: 1e-4,
            iterations: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tvl1Params {
    pub lambda: f64,
    pub theta: f64,
    pub tau: f64,
    pub warps: usize,
    pub inner_iterations: usize,
}

impl Default for Tvl1Params {
    fn default() -> Self {
        Tvl1Params {
            lambda: 0.15,
            theta: 0.3,
            tau: 0.25,
            warps: 5,
            inner_iterations: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub method: FlowMethod,
    pub horn_schunck: HornSchunckParams,
    pub lucas_kanade: LucasKanadeParams,
    pub tvl1: Tvl1Params,
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            method: FlowMethod::Tvl1,
            horn_schunck: HornSchunckParams::default(),
            lucas_kanade: LucasKanadeParams::default(),
            tvl1: Tvl1Params::default(),
            pyramid_levels: 3,
            pyramid_scale: 0.5,
        }
    }
}

impl FlowConfig {
    pub fn with_method(method: FlowMethod) -> Self {
        FlowConfig {
            method,
            ..FlowConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "flow parameter {name} must be positive, got {v}"
                )))
            }
        };
        let hs = &self.horn_schunck;
        let lk = &self.lucas_kanade;
        let tv = &self.tvl1;
        pos("horn_schunck.alpha", hs.alpha)?;
        pos("horn_schunck.iterations", hs.iterations as f64)?;
        pos("lucas_kanade.window_radius", lk.window_radius as f64)?;
        pos("lucas_kanade.min_eigenvalue", lk.min_eigenvalue)?;
        pos("lucas_kanade.iterations", lk.iterations as f64)?;
        pos("tvl1.lambda", tv.lambda)?;
        pos("tvl1.theta", tv.theta)?;
        pos("tvl1.tau", tv.tau)?;
        pos("tvl1.warps", tv.warps as f64)?;
        pos("tvl1.inner_iterations", tv.inner_iterations as f64)?;
        pos("pyramid_levels", self.pyramid_levels as f64)?;
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::invalid(format!(
                "pyramid_scale must lie in (0, 1), got {}",
                self.pyramid_scale
            )));
        }
        Ok(())
    }
}
