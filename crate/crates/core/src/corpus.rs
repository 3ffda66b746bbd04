//! Theories shipped with the crate.

use crate::error::{Error, Result};

pub struct Entry {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
}

pub const ENTRIES: &[Entry] = &[
    Entry {
        name: "nsl-xor",
        summary: "Needham-Schroeder-Lowe with XOR in message 2 (secrecy attack)",
        source: include_str!("../corpus/nsl-xor.hl"),
    },
    Entry {
        name: "nsl-xor-fix",
        summary: "NSL with XOR, second message hashed with the responder nonce",
        source: include_str!("../corpus/nsl-xor-fix.hl"),
    },
    Entry {
        name: "nsl-xor-auth",
        summary: "NSL with XOR, begin/end events and session ids (authentication)",
        source: include_str!("../corpus/nsl-xor-auth.hl"),
    },
    Entry {
        name: "cca-0",
        summary: "IBM 4758 CCA key management, full command set, intruder is a key part holder",
        source: include_str!("../corpus/cca-0.hl"),
    },
    Entry {
        name: "cca-2b",
        summary: "CCA subset: key part import and KeyImport",
        source: include_str!("../corpus/cca-2b.hl"),
    },
    Entry {
        name: "cca-2c",
        summary: "CCA subset: key part import, KeyExport and KeyTranslate",
        source: include_str!("../corpus/cca-2c.hl"),
    },
    Entry {
        name: "cca-2e",
        summary: "CCA subset: everything except key part import",
        source: include_str!("../corpus/cca-2e.hl"),
    },
];

pub fn get(name: &str) -> Result<&'static Entry> {
    ENTRIES.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownCorpus(name.to_string()))
}

/// Reads `corpus:<name>` from the bundle, anything else from disk.
pub fn load(spec: &str) -> Result<String> {
    match spec.strip_prefix("corpus:") {
        Some(name) => Ok(get(name)?.source.to_string()),
        None => Ok(std::fs::read_to_string(spec)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_parses() {
        for e in ENTRIES {
            let p = crate::parser::parse_theory(e.source).unwrap_or_else(|d| panic!("{}: {d:?}", e.name));
            assert!(!p.queries.is_empty(), "{} has no query", e.name);
        }
    }

    #[test]
    fn lookup() {
        assert!(load("corpus:nsl-xor").unwrap().contains("m(a, a)"));
        assert!(matches!(load("corpus:nope"), Err(Error::UnknownCorpus(_))));
    }
}
