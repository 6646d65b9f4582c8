use std::collections::BTreeMap;
use std::sync::Arc;

use super::config::{FlowConfig, FlowMethod};
use super::field::FlowField;
use super::{horn_schunck::horn_schunck, lucas_kanade::lucas_kanade, tvl1::tvl1};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;

/// A pluggable dense flow estimator.
pub trait FlowEstimator: Send + Sync {
    fn estimate(&self, onset: &GrayImage, apex: &GrayImage, config: &FlowConfig) -> Result<FlowField>;
}

impl<F> FlowEstimator for F
where
    F: Fn(&GrayImage, &GrayImage, &FlowConfig) -> Result<FlowField> + Send + Sync,
{
    fn estimate(&self, onset: &GrayImage, apex: &GrayImage, config: &FlowConfig) -> Result<FlowField> {
        self(onset, apex, config)
    }
}

/// Built-in estimators plus externally registered ones.
#[derive(Clone, Default)]
pub struct FlowRegistry {
    external: BTreeMap<String, Arc<dyn FlowEstimator>>,
}

impl std::fmt::Debug for FlowRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowRegistry").field("methods", &self.names()).finish()
    }
}

impl FlowRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an estimator under `name`. Built-in names and names already
    /// registered are rejected.
    pub fn register(&mut self, name: &str, estimator: Arc<dyn FlowEstimator>) -> Result<()> {
        if name.is_empty() {
            return Err(Error::Registry("estimator name is empty".into()));
        }
        if FlowMethod::BUILTIN.iter().any(|m| m.name() == name) {
            return Err(Error::Registry(format!("'{name}' is a built-in estimator")));
        }
        if self.external.contains_key(name) {
            return Err(Error::Registry(format!("'{name}' is already registered")));
        }
        self.external.insert(name.to_string(), estimator);
        Ok(())
    }

    pub fn contains(&self, method: &FlowMethod) -> bool {
        match method {
            FlowMethod::External(n) => self.external.contains_key(n),
            _ => true,
        }
    }

    /// Built-in names first, then registered names in sorted order.
    pub fn names(&self) -> Vec<String> {
        FlowMethod::BUILTIN
            .iter()
            .map(|m| m.name().to_string())
            .chain(self.external.keys().cloned())
            .collect()
    }

    pub fn methods(&self) -> Vec<FlowMethod> {
        self.names().iter().map(|n| FlowMethod::from_name(n)).collect()
    }

    pub fn estimate(&self, onset: &GrayImage, apex: &GrayImage, config: &FlowConfig) -> Result<FlowField> {
        if !onset.same_extent(apex) {
            return Err(Error::shape(
                "estimate_flow apex",
                &[onset.height(), onset.width()],
                &[apex.height(), apex.width()],
            ));
        }
        if !onset.as_plane().is_finite() || !apex.as_plane().is_finite() {
            return Err(Error::NonFinite("estimate_flow input image".into()));
        }
        config.validate()?;
        let (a, b) = (onset.as_plane(), apex.as_plane());
        let flow = match &config.method {
            FlowMethod::HornSchunck => horn_schunck(a, b, config)?,
            FlowMethod::LucasKanade => lucas_kanade(a, b, config)?,
            FlowMethod::Tvl1 => tvl1(a, b, config)?,
            FlowMethod::External(name) => {
                let est = self
                    .external
                    .get(name)
                    .ok_or_else(|| Error::Registry(format!("unknown flow method '{name}'")))?;
                est.estimate(onset, apex, config)?
            }
        };
        if flow.width() != onset.width() || flow.height() != onset.height() {
            return Err(Error::shape(
                "estimator output",
                &[onset.height(), onset.width()],
                &[flow.height(), flow.width()],
            ));
        }
        if !flow.is_finite() {
            return Err(Error::NonFinite(format!("{} produced non-finite flow", config.method)));
        }
        Ok(flow)
    }
}
