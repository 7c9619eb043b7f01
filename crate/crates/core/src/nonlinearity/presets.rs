use crate::data::InitialData;
use crate::error::{ForgeError, Result};
use crate::expr::parse;

use super::{NonlinearitySpec, MAX_PARTIAL_ORDER};

/// A named equation with its default initial profile.
#[derive(Clone, Debug)]
pub struct Preset {
    pub spec: NonlinearitySpec,
    pub data: InitialData,
}

struct Entry {
    name: &'static str,
    f: &'static str,
    decomposition: Option<(&'static str, &'static str)>,
    claims_a2: bool,
    claims_a3: bool,
    note: Option<&'static str>,
}

const CATALOGUE: &[Entry] = &[
    Entry {
        name: "kdv",
        f: "-z3 - 6*z0*z1",
        decomposition: Some(("0", "0")),
        claims_a2: true,
        claims_a3: true,
        note: None,
    },
    Entry {
        name: "k22",
        f: "-2*z0*z3 - 6*z1*z2 - 2*z0*z1",
        decomposition: Some(("3*ln(z0)", "0")),
        claims_a2: true,
        claims_a3: true,
        note: Some("dispersion degenerates where u = 0; use data bounded away from zero"),
    },
    Entry {
        name: "harry_dym",
        f: "z0^3*z3",
        decomposition: Some(("0", "0")),
        claims_a2: true,
        claims_a3: true,
        note: Some("dispersion degenerates where u = 0; use data bounded away from zero"),
    },
    Entry {
        name: "pilod_illposed",
        f: "-z3 - z0*z2",
        decomposition: None,
        claims_a2: false,
        claims_a3: true,
        note: Some("g_M = u is not a total derivative plus a cubic remainder"),
    },
    Entry {
        name: "linear_backwards",
        f: "z3 - z2",
        decomposition: None,
        claims_a2: false,
        claims_a3: true,
        note: Some("Fourier symbol -i xi^3 + xi^2: mode k grows like exp(xi_k^2 t)"),
    },
    Entry {
        name: "linear_gauged",
        f: "z3 + 0.5*cos(x)*z2",
        decomposition: Some(("0.5*sin(x)", "0")),
        claims_a2: true,
        claims_a3: true,
        note: Some("coefficients are 2*pi periodic in x; use L a multiple of 2*pi"),
    },
    Entry {
        name: "airy",
        f: "z3",
        decomposition: Some(("0", "0")),
        claims_a2: true,
        claims_a3: true,
        note: None,
    },
];

pub fn preset_names() -> Vec<&'static str> {
    CATALOGUE.iter().map(|e| e.name).collect()
}

fn default_data(name: &str) -> InitialData {
    match name {
        "kdv" => InitialData::Soliton { kappa: 0.5, center: None },
        "k22" | "harry_dym" => InitialData::Bump {
            base: 2.0,
            amplitude: 0.5,
            width: 2.0,
            center: None,
        },
        "linear_backwards" => InitialData::Mode { k: 1, amplitude: 1.0 },
        _ => InitialData::Gaussian {
            amplitude: 0.5,
            width: 2.0,
            center: None,
        },
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    let entry = CATALOGUE
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| ForgeError::UnknownPreset {
            name: name.to_string(),
            available: preset_names().join(", "),
        })?;
    let f = parse(entry.f)?;
    let mut spec = NonlinearitySpec::from_expr(entry.name, f, MAX_PARTIAL_ORDER)?
        .with_claims(entry.claims_a2, entry.claims_a3);
    if let Some((g_d, g_h)) = entry.decomposition {
        spec = spec.with_decomposition(parse(g_d)?, parse(g_h)?)?;
    }
    if let Some(note) = entry.note {
        spec = spec.with_note(note);
    }
    Ok(Preset {
        spec,
        data: default_data(entry.name),
    })
}
