//! The TOML problem description.
//!
//! ```toml
//! T = 1.0
//! normalize = true      # optional, default true
//! k_max = 60            # optional ULC/β scan range
//! k_reach = 200         # optional state-space bound for simulation
//!
//! [f]
//! family = "gaussian_like"
//! q = 0.7
//! s = 1.0
//!
//! [tolerances]          # optional
//! rel_tail = 1e-14
//! abs_floor = 1e-300
//! ```
//!
//! Tables are given as `family = "table"`, `values = [...]` and an optional
//! `extension` of `"geometric"` (default), `"poisson_tail"` or
//! `{ ratio = r }`. Unknown keys are rejected everywhere.

use poisson_mlsi::{DensityFunction, Family, ProblemSpec, SeriesTolerance, SpecOptions, TableExtension};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_reach: Option<usize>,
    pub f: FamilySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Geometric {
        a: f64,
        b: f64,
    },
    GaussianLike {
        q: f64,
        s: f64,
    },
    PoissonKernel {
        c: f64,
    },
    Table {
        values: Vec<f64>,
        #[serde(default)]
        extension: ExtensionSpec,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ExtensionSpec {
    #[default]
    Geometric,
    PoissonTail,
    Ratio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tail: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_floor: Option<f64>,
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec files always serialize")
    }

    pub fn family(&self) -> Family {
        match &self.f {
            &FamilySpec::Geometric { a, b } => Family::Geometric { a, b },
            &FamilySpec::GaussianLike { q, s } => Family::GaussianLike { q, s },
            &FamilySpec::PoissonKernel { c } => Family::PoissonKernel { c },
            FamilySpec::Table { values, extension } => Family::Table {
                values: values.clone(),
                extension: match *extension {
                    ExtensionSpec::Geometric => TableExtension::Geometric,
                    ExtensionSpec::PoissonTail => TableExtension::PoissonTail,
                    ExtensionSpec::Ratio(r) => TableExtension::Ratio(r),
                },
            },
        }
    }

    /// The series tolerance, with `rel_tail_override` (from `--tol`) winning
    /// over the file.
    pub fn tolerance(&self, rel_tail_override: Option<f64>) -> poisson_mlsi::Result<SeriesTolerance> {
        let default = SeriesTolerance::default();
        let file = self.tolerances.unwrap_or(Tolerances {
            rel_tail: None,
            abs_floor: None,
        });
        SeriesTolerance::new(
            rel_tail_override.or(file.rel_tail).unwrap_or(default.rel_tail),
            file.abs_floor.unwrap_or(default.abs_floor),
        )
    }

    pub fn build(&self, rel_tail_override: Option<f64>) -> poisson_mlsi::Result<ProblemSpec> {
        let density = DensityFunction::new(self.family())?;
        ProblemSpec::new(
            self.horizon,
            density,
            SpecOptions {
                normalize: self.normalize,
                tol: self.tolerance(rel_tail_override)?,
                k_reach: self.k_reach,
            },
        )
    }
}
