//! Experiment specifications and their TOML configuration files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fparith::PrecisionSpec;
use crate::net::{NormVariant, Placement, SoftmaxKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Error per layer of a deep stack of identical blocks.
    DepthSweep,
    /// Final-layer error as `W_q` is scaled by `λ`, for several depths.
    WkwqScaling,
    /// Error of one self-attention application as the input is scaled by `s`.
    AttentionInputScaling,
    /// Error per layer with the normalization before or after the attention.
    NormalizationPlacement,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::DepthSweep,
        ExperimentKind::WkwqScaling,
        ExperimentKind::AttentionInputScaling,
        ExperimentKind::NormalizationPlacement,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::DepthSweep => "depth_sweep",
            ExperimentKind::WkwqScaling => "wkwq_scaling",
            ExperimentKind::AttentionInputScaling => "attention_input_scaling",
            ExperimentKind::NormalizationPlacement => "normalization_placement",
        }
    }

    /// Short alias, `fig1` to `fig4`.
    pub fn alias(&self) -> &'static str {
        match self {
            ExperimentKind::DepthSweep => "fig1",
            ExperimentKind::WkwqScaling => "fig2",
            ExperimentKind::AttentionInputScaling => "fig3",
            ExperimentKind::NormalizationPlacement => "fig4",
        }
    }

    /// Name of the swept parameter in the CSV output.
    pub fn grid_name(&self) -> &'static str {
        match self {
            ExperimentKind::WkwqScaling => "lambda",
            ExperimentKind::AttentionInputScaling => "scale",
            _ => "none",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.alias() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Problem sizes: model dimension `d`, sequence length `n`, perceptron width
/// `hidden` and number of blocks `layers`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d: usize,
    pub n: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// Swept parameters; each experiment reads only its own grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Depths at which the final-layer error is recorded (`wkwq_scaling`).
    pub depths: Vec<usize>,
    /// Factors applied to `W_q` (`wkwq_scaling`).
    pub lambda: Vec<f64>,
    /// Factors applied to the input (`attention_input_scaling`).
    pub scale: Vec<f64>,
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub which: ExperimentKind,
    pub seed: u64,
    pub reps: usize,
    pub precisions: Vec<PrecisionSpec>,
    pub variant: NormVariant,
    pub placements: Vec<Placement>,
    pub softmax: SoftmaxKind,
    /// Record the per-instance deep-stack bound (`depth_sweep` only).
    pub bounds: bool,
    pub dims: Dims,
    pub grids: Grids,
}

/// `k` points spaced evenly in `log₁₀` from `10^lo` to `10^hi`.
pub fn logspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..k).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (k - 1) as f64)).collect()
}

impl ExperimentSpec {
    /// Desk-scale defaults for each experiment.
    pub fn defaults(which: ExperimentKind) -> ExperimentSpec {
        let decimals = vec![PrecisionSpec::DecimalDigits(4), PrecisionSpec::DecimalDigits(6), PrecisionSpec::DecimalDigits(8)];
        let base = ExperimentSpec {
            which,
            seed: 1,
            reps: 100,
            precisions: decimals,
            variant: NormVariant::LayerNorm,
            placements: vec![Placement::PreAttention],
            softmax: SoftmaxKind::Unshifted,
            bounds: false,
            dims: Dims { d: 20, n: 20, hidden: 20, layers: 40 },
            grids: Grids::default(),
        };
        match which {
            ExperimentKind::DepthSweep => ExperimentSpec { reps: 200, bounds: true, ..base },
            ExperimentKind::WkwqScaling => ExperimentSpec {
                precisions: vec![PrecisionSpec::DecimalDigits(6)],
                dims: Dims { layers: 20, ..base.dims },
                grids: Grids { depths: vec![10, 15, 20], lambda: logspace(-2.0, -1.0, 6), scale: Vec::new() },
                ..base
            },
            ExperimentKind::AttentionInputScaling => ExperimentSpec {
                softmax: SoftmaxKind::Shifted,
                dims: Dims { d: 10, n: 10, hidden: 10, layers: 1 },
                grids: Grids { scale: logspace(0.0, 3.0, 7), ..Grids::default() },
                ..base
            },
            ExperimentKind::NormalizationPlacement => ExperimentSpec {
                placements: vec![Placement::PreAttention, Placement::PostAttention],
                dims: Dims { d: 10, n: 10, hidden: 10, layers: 20 },
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.reps == 0 {
            return fail("reps must be at least 1".into());
        }
        if self.dims.d < 2 || self.dims.n == 0 || self.dims.hidden == 0 {
            return fail(format!("invalid dimensions {:?}", self.dims));
        }
        if self.precisions.is_empty() {
            return fail("at least one precision is required".into());
        }
        for p in &self.precisions {
            p.validate()?;
        }
        if self.placements.is_empty() {
            return fail("at least one placement is required".into());
        }
        match self.which {
            ExperimentKind::WkwqScaling => {
                if self.grids.depths.is_empty() || self.grids.lambda.is_empty() {
                    return fail("wkwq_scaling needs nonempty depth and lambda grids".into());
                }
                if self.grids.depths.contains(&0) {
                    return fail("depths must be positive".into());
                }
                if self.grids.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                    return fail("lambda values must be finite and nonnegative".into());
                }
            }
            ExperimentKind::AttentionInputScaling => {
                if self.grids.scale.is_empty() {
                    return fail("attention_input_scaling needs a nonempty scale grid".into());
                }
                if self.grids.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return fail("scale values must be finite and positive".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Number of blocks an instance needs.
    pub fn instance_depth(&self) -> usize {
        match self.which {
            ExperimentKind::WkwqScaling => self.grids.depths.iter().copied().max().unwrap_or(0),
            ExperimentKind::AttentionInputScaling => 1,
            _ => self.dims.layers,
        }
    }

    /// Parses a configuration file; keys not given take the defaults of the
    /// experiment named by `which`.
    pub fn from_toml(text: &str) -> Result<ExperimentSpec> {
        let ov: SpecOverrides = toml::from_str(text)?;
        let which = ov.which.ok_or_else(|| Error::Config("configuration must set `which`".into()))?;
        let mut spec = ExperimentSpec::defaults(which);
        spec.apply(ov);
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces every field that `ov` sets. `which` is ignored.
    pub fn apply(&mut self, ov: SpecOverrides) {
        macro_rules! set {
            ($($field:ident).+ <- $value:expr) => {
                if let Some(v) = $value {
                    self.$($field).+ = v;
                }
            };
        }
        set!(seed <- ov.seed);
        set!(reps <- ov.reps);
        set!(precisions <- ov.precisions);
        set!(variant <- ov.variant);
        set!(placements <- ov.placements);
        set!(softmax <- ov.softmax);
        set!(bounds <- ov.bounds);
        if let Some(d) = ov.dims {
            set!(dims.d <- d.d);
            set!(dims.n <- d.n);
            set!(dims.hidden <- d.hidden);
            set!(dims.layers <- d.layers);
        }
        if let Some(g) = ov.grids {
            set!(grids.depths <- g.depths);
            set!(grids.lambda <- g.lambda);
            set!(grids.scale <- g.scale);
        }
    }
}

/// A partial [`ExperimentSpec`], as read from a configuration file or the
/// command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecOverrides {
    pub which: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub precisions: Option<Vec<PrecisionSpec>>,
    pub variant: Option<NormVariant>,
    pub placements: Option<Vec<Placement>>,
    pub softmax: Option<SoftmaxKind>,
    pub bounds: Option<bool>,
    pub dims: Option<DimsOverrides>,
    pub grids: Option<GridsOverrides>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsOverrides {
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsOverrides {
    pub depths: Option<Vec<usize>>,
    pub lambda: Option<Vec<f64>>,
    pub scale: Option<Vec<f64>>,
}
