//! The built-in scenario library, embedded from `scenarios/*.toml`.

use super::{LabError, Scenario};

macro_rules! library {
    ($($name:literal),* $(,)?) => {
        /// Names of the built-in scenarios, in suite order.
        pub const BUILTIN_NAMES: &[&str] = &[$($name),*];
        const SOURCES: &[&str] = &[$(include_str!(concat!("../../scenarios/", $name, ".toml"))),*];
    };
}

library!(
    "identity-square",
    "linear-map",
    "corner-acute",
    "corner-right",
    "corner-obtuse",
    "corner-halfspace",
    "no-homog-corner",
    "degenerate-k1",
    "degenerate-k2",
    "mixed-m1-k1",
    "holder-perturbed",
);

/// Every built-in scenario.
pub fn builtin() -> Result<Vec<Scenario>, LabError> {
    SOURCES.iter().map(|s| Scenario::from_toml(s)).collect()
}

pub fn builtin_named(name: &str) -> Result<Option<Scenario>, LabError> {
    match BUILTIN_NAMES.iter().position(|n| *n == name) {
        Some(i) => Scenario::from_toml(SOURCES[i]).map(Some),
        None => Ok(None),
    }
}
