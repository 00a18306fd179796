//! Bundle configuration: plain-text TOML with coefficient arrays, parsed and
//! validated into the full analysis + congruence frame, with diagnostics that
//! name the violated invariant.

use crate::arith::ArithContext;
use crate::forms::{analyze_bundle, BinaryForm, BundleAnalysis, BundleError, ConicBundle};
use crate::local::{build_local_frame, Box2D, FrameError, LocalData, Rat};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid bundle: {0}")]
    Bundle(#[from] BundleError),
    #[error("invalid frame: {0}")]
    Frame(#[from] FrameError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    pub name: String,
    /// Coefficient lists, c_j multiplying s^(d-j) t^j.
    pub f11: Vec<i64>,
    pub f12: Vec<i64>,
    pub f13: Vec<i64>,
    pub f22: Vec<i64>,
    pub f23: Vec<i64>,
    pub f33: Vec<i64>,
    pub base_point: [i64; 2],
    #[serde(rename = "box")]
    pub bx: BoxConfig,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub s_min: [i64; 2],
    pub s_max: [i64; 2],
    pub t_min: [i64; 2],
    pub t_max: [i64; 2],
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub d0_floor: Option<u64>,
    pub varpi: Option<f64>,
    pub spf_size: Option<usize>,
    pub rho_budget: Option<u32>,
    pub workers: Option<usize>,
    pub sieve_y_exponent: Option<f64>,
    pub cert_budget: Option<usize>,
}

fn rat(pair: [i64; 2], what: &str) -> Result<Rat, ConfigError> {
    if pair[1] == 0 {
        return Err(ConfigError::Invalid(format!("{what}: zero denominator")));
    }
    Ok(Rat::new(pair[0], pair[1]))
}

impl BundleConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn arith_context(&self) -> ArithContext {
        ArithContext::new(
            self.overrides.spf_size.unwrap_or(crate::arith::DEFAULT_SPF_SIZE),
            self.overrides.rho_budget.unwrap_or(crate::arith::DEFAULT_RHO_BUDGET),
        )
    }

    pub fn bundle(&self) -> Result<ConicBundle, ConfigError> {
        let form = |c: &Vec<i64>, name: &str| -> Result<BinaryForm, ConfigError> {
            if c.is_empty() {
                return Err(ConfigError::Invalid(format!("{name}: empty coefficient list")));
            }
            Ok(BinaryForm::new(c.iter().map(|&x| x as i128).collect()))
        };
        Ok(ConicBundle::from_entries(
            form(&self.f11, "f11")?,
            form(&self.f12, "f12")?,
            form(&self.f13, "f13")?,
            form(&self.f22, "f22")?,
            form(&self.f23, "f23")?,
            form(&self.f33, "f33")?,
        ))
    }

    pub fn box2d(&self) -> Result<Box2D, ConfigError> {
        let s_min = rat(self.bx.s_min, "box.s_min")?;
        let s_max = rat(self.bx.s_max, "box.s_max")?;
        let t_min = rat(self.bx.t_min, "box.t_min")?;
        let t_max = rat(self.bx.t_max, "box.t_max")?;
        if s_min >= s_max || t_min >= t_max {
            return Err(ConfigError::Invalid("box: degenerate rectangle".into()));
        }
        Ok(Box2D::new(s_min, s_max, t_min, t_max))
    }

    /// Full pipeline: bundle validation, fibre analysis, frame build.
    pub fn build(
        &self,
        ctx: &ArithContext,
    ) -> Result<(ConicBundle, BundleAnalysis, LocalData), ConfigError> {
        let bundle = self.bundle()?;
        let analysis = analyze_bundle(&bundle, ctx)?;
        if analysis.rank > 3 {
            eprintln!(
                "warning: bundle '{}' has rank {} > 3; outside the supported theorem range",
                self.name, analysis.rank
            );
        }
        let frame = build_local_frame(
            &bundle,
            &analysis,
            (self.base_point[0], self.base_point[1]),
            self.box2d()?,
            self.overrides.d0_floor.unwrap_or(2),
            ctx,
        )?;
        Ok((bundle, analysis, frame))
    }
}

/// The two reference configurations, used by tests and committed under
/// bundles/.
pub fn e1_toml() -> &'static str {
    r#"name = "e1"

# x^2 + y^2 - s t z^2
f11 = [1]
f12 = [0]
f13 = [0]
f22 = [1]
f23 = [0]
f33 = [0, -1, 0]

base_point = [1, 1]

[box]
s_min = [1, 2]
s_max = [3, 2]
t_min = [1, 2]
t_max = [3, 2]
"#
}

pub fn e2_toml() -> &'static str {
    r#"name = "e2"

# x^2 + y^2 - (s^2 + 2 t^2) z^2
f11 = [1]
f12 = [0]
f13 = [0]
f22 = [1]
f23 = [0]
f33 = [-1, 0, -2]

base_point = [1, 2]

[box]
s_min = [1, 2]
s_max = [3, 2]
t_min = [1, 2]
t_max = [7, 2]
"#
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_configs_build() {
        for (text, d0, w) in [(e1_toml(), 2, 16u64), (e2_toml(), 3, 216)] {
            let cfg: BundleConfig = toml::from_str(text).unwrap();
            let ctx = ArithContext::new(100_000, 100_000);
            let (_, analysis, frame) = cfg.build(&ctx).unwrap();
            assert!(analysis.rank <= 3);
            assert_eq!(frame.d0, d0);
            assert_eq!(frame.w, w);
        }
    }

    #[test]
    fn rejections_name_the_invariant() {
        // odd-degree f33
        let bad = e1_toml().replace("f33 = [0, -1, 0]", "f33 = [1, 0]");
        let cfg: BundleConfig = toml::from_str(&bad).unwrap();
        let ctx = ArithContext::new(50_000, 50_000);
        let err = cfg.build(&ctx).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("minor"), "got: {msg}");

        // non-separable discriminant
        let bad = e1_toml().replace("f33 = [0, -1, 0]", "f33 = [0, 0, -1, 0, 0]");
        let cfg: BundleConfig = toml::from_str(&bad).unwrap();
        let err = cfg.build(&ctx).unwrap_err();
        assert!(format!("{err}").contains("separable"));

        // singular base point
        let bad = e1_toml().replace("base_point = [1, 1]", "base_point = [1, 0]");
        let cfg: BundleConfig = toml::from_str(&bad).unwrap();
        let err = cfg.build(&ctx).unwrap_err();
        assert!(format!("{err}").contains("singular"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{}\nbogus_key = 3\n", e1_toml());
        assert!(toml::from_str::<BundleConfig>(&bad).is_err());
    }
}
