use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelFamily;
use crate::multiscale::{DEFAULT_REPLICATES, DEFAULT_SCALE_COUNT, DEFAULT_SCALE_RANGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    MultiMmd,
    MultiHsic,
    PolyMmd,
    PolyHsic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::MultiMmd => "MultiMMD",
            Self::MultiHsic => "MultiHSIC",
            Self::PolyMmd => "PolyMMD",
            Self::PolyHsic => "PolyHSIC",
        }
    }

    pub fn is_mmd(self) -> bool {
        matches!(self, Self::MultiMmd | Self::PolyMmd)
    }

    pub fn is_multiscale(self) -> bool {
        matches!(self, Self::MultiMmd | Self::MultiHsic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmdEstimator {
    /// Random pair design of size round(r·n).
    Incomplete,
    /// Fixed consecutive-pair design of size ⌊n/2⌋.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HsicEstimator {
    Incomplete,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    /// Fixed Gaussian bandwidth for every feature; `None` selects the
    /// per-feature median heuristic.
    pub bandwidth: Option<f64>,
    pub imq_offset: f64,
    /// Fixed Gaussian bandwidth for the HSIC response; `None` selects the
    /// median heuristic.
    pub response_bandwidth: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: KernelFamily::Gaussian,
            bandwidth: None,
            imq_offset: 1.0,
            response_bandwidth: None,
        }
    }
}

/// Every knob of a selective test run. A copy is embedded in each report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub k: usize,
    pub alpha: f64,
    pub r: f64,
    pub mmd_estimator: MmdEstimator,
    pub hsic_estimator: HsicEstimator,
    pub block_size: usize,
    pub scale_count: usize,
    pub scale_range: [f64; 2],
    pub replicates_per_scale: usize,
    pub seed: u64,
    pub kernel: KernelConfig,
}

impl RunConfig {
    pub fn new(method: Method, k: usize, seed: u64) -> Self {
        Self {
            method,
            k,
            alpha: 0.05,
            r: 1.0,
            mmd_estimator: MmdEstimator::Incomplete,
            hsic_estimator: HsicEstimator::Incomplete,
            block_size: 5,
            scale_count: DEFAULT_SCALE_COUNT,
            scale_range: [DEFAULT_SCALE_RANGE.0, DEFAULT_SCALE_RANGE.1],
            replicates_per_scale: DEFAULT_REPLICATES,
            seed,
            kernel: KernelConfig::default(),
        }
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self {
            method,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} not in (0, 1)", self.alpha));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r {} must be positive", self.r));
        }
        if self.block_size < 4 {
            return bad(format!("block size {} < 4", self.block_size));
        }
        if self.scale_count < 3 {
            return bad(format!("{} scales; need at least 3", self.scale_count));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("scale range [{lo}, {hi}]"));
        }
        if self.replicates_per_scale == 0 {
            return bad("zero replicates per scale".into());
        }
        if let Some(bw) = self.kernel.bandwidth.into_iter().chain(self.kernel.response_bandwidth).find(|b| !(*b > 0.0 && b.is_finite())) {
            return bad(format!("bandwidth {bw}"));
        }
        if !(self.kernel.imq_offset > 0.0 && self.kernel.imq_offset.is_finite()) {
            return bad(format!("IMQ offset {}", self.kernel.imq_offset));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::new(Method::MultiMmd, 3, 1);
        c.validate().unwrap();
        assert_eq!(c.replicates_per_scale, 2000);
        assert_eq!(c.block_size, 5);
    }

    #[test]
    fn rejects_out_of_range_values() {
        let base = RunConfig::new(Method::PolyHsic, 3, 1);
        let cases = [
            RunConfig { k: 0, ..base.clone() },
            RunConfig { alpha: 1.0, ..base.clone() },
            RunConfig { r: 0.0, ..base.clone() },
            RunConfig { block_size: 3, ..base.clone() },
            RunConfig { scale_count: 2, ..base.clone() },
            RunConfig { scale_range: [2.0, 0.5], ..base.clone() },
            RunConfig { replicates_per_scale: 0, ..base.clone() },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn serializes_round_trip() {
        let c = RunConfig::new(Method::MultiHsic, 4, 99);
        let s = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
    }
}
