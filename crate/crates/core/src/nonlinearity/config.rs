use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::data::InitialData;
use crate::error::{ForgeError, Result};
use crate::expr::parse;

use super::{NonlinearitySpec, PartialKey, Preset};

/// On-disk layout of a user-defined equation.
///
/// ```toml
/// name = "gardner"
/// f = "-z3 - 6*z0*z1 + 6*z0^2*z1"
/// claims_a2 = true
/// claims_a3 = true
///
/// [partials]
/// f_z3 = "-1"
///
/// [decomposition]
/// g_d = "0"
/// g_h = "0"
/// ```
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub name: String,
    pub f: String,
    #[serde(default)]
    pub claims_a2: bool,
    #[serde(default)]
    pub claims_a3: bool,
    pub max_order: Option<usize>,
    #[serde(default)]
    pub partials: BTreeMap<String, String>,
    pub decomposition: Option<DecompositionFile>,
    pub data: Option<InitialData>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionFile {
    pub g_d: String,
    #[serde(default = "zero")]
    pub g_h: String,
}

fn zero() -> String {
    "0".into()
}

pub fn parse_spec_toml(text: &str) -> Result<Preset> {
    let file: SpecFile = toml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))?;
    let f = parse(&file.f)?;
    let mut spec = NonlinearitySpec::from_expr(file.name.clone(), f, file.max_order.unwrap_or(7))?
        .with_claims(file.claims_a2, file.claims_a3);
    for (label, src) in &file.partials {
        let key = PartialKey::parse_label(label)?;
        spec = spec.with_partial(key, parse(src)?)?;
    }
    if let Some(d) = &file.decomposition {
        spec = spec.with_decomposition(parse(&d.g_d)?, parse(&d.g_h)?)?;
    }
    let data = file.data.clone().unwrap_or(InitialData::Gaussian {
        amplitude: 0.5,
        width: 2.0,
        center: None,
    });
    Ok(Preset { spec, data })
}

pub fn load_spec_file(path: &Path) -> Result<Preset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ForgeError::Config(format!("{}: {e}", path.display())))?;
    parse_spec_toml(&text)
}
