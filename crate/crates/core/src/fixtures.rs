//! Built-in example machines.

use crate::error::{Error, Result};
use crate::machine::{parse_spec, MachineSpec};

const FIXTURES: &[(&str, &str)] = &[
    ("H_I", include_str!("../fixtures/H_I.qbm")),
    ("H_II_n2", include_str!("../fixtures/H_II_n2.qbm")),
    ("H_II_n3", include_str!("../fixtures/H_II_n3.qbm")),
    ("H_II_n4", include_str!("../fixtures/H_II_n4.qbm")),
    ("H_III_n2", include_str!("../fixtures/H_III_n2.qbm")),
    ("H_III_n3", include_str!("../fixtures/H_III_n3.qbm")),
    ("H_IV", include_str!("../fixtures/H_IV.qbm")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(name, _)| *name)
}

pub fn document(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, doc)| *doc)
}

pub fn load(name: &str) -> Result<MachineSpec> {
    let doc = document(name).ok_or_else(|| Error::Input(format!("unknown fixture {name:?}")))?;
    parse_spec(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_parse() {
        for name in names() {
            let spec = load(name).unwrap();
            assert_eq!(spec.name, name);
        }
        assert_eq!(load("H_II_n4").unwrap().terms.len(), 14);
        assert_eq!(load("H_III_n3").unwrap().terms.len(), 18);
        assert!(load("H_V").is_err());
    }
}
