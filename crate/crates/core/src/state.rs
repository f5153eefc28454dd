//! Program states and the labeled state repository.
//!
//! A repository holds correct states (positives) and incorrect states
//! (negatives, each produced by a named mutant). Identical variable maps are
//! stored once with a multiplicity counter.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{VarSignature, VarType};

pub const DEFAULT_PRECISION: u32 = 9;

/// A boolean or finite numeric variable value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Bool(bool),
    Num(f64),
}

impl Value {
    pub fn var_type(self) -> VarType {
        match self {
            Value::Bool(_) => VarType::Boolean,
            Value::Num(_) => VarType::Number,
        }
    }

    pub(crate) fn key_bits(self) -> u64 {
        match self {
            Value::Bool(b) => b as u64,
            Value::Num(n) => (n + 0.0).to_bits(),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        const EXACT_INT: f64 = 9_007_199_254_740_992.0;
        match *self {
            Value::Bool(b) => serializer.serialize_bool(b),
            Value::Num(n) if n.fract() == 0.0 && n.abs() < EXACT_INT => serializer.serialize_i64(n as i64),
            Value::Num(n) => serializer.serialize_f64(n),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = Value;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a boolean or a number")
            }

            fn visit_bool<E>(self, v: bool) -> Result<Value, E> {
                Ok(Value::Bool(v))
            }

            fn visit_i64<E>(self, v: i64) -> Result<Value, E> {
                Ok(Value::Num(v as f64))
            }

            fn visit_u64<E>(self, v: u64) -> Result<Value, E> {
                Ok(Value::Num(v as f64))
            }

            fn visit_f64<E>(self, v: f64) -> Result<Value, E> {
                Ok(Value::Num(v))
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

#[derive(Debug, Error)]
pub enum StateError {
    #[error("non-finite value for `{0}`")]
    NonFinite(String),
    #[error("state does not match the signature: {0}")]
    SignatureMismatch(String),
    #[error("incorrect state is missing its mutant id")]
    MissingMutant,
    #[error("correct state must not carry a mutant id (found `{0}`)")]
    UnexpectedMutant(String),
    #[error("multiplicity must be at least 1")]
    ZeroMultiplicity,
    #[error("malformed state file: {0}")]
    Malformed(serde_json::Error),
    #[error("state file violates the schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl StateError {
    /// Schema-level problem with an input file (as opposed to I/O).
    pub fn is_schema(&self) -> bool {
        !matches!(self, StateError::Io(_))
    }
}

/// Half-even rounding of `v` to `digits` decimal places.
pub fn round_value(v: f64, digits: u32) -> Result<f64, StateError> {
    if v.is_finite() {
        Ok(round_finite(v, digits))
    } else {
        Err(StateError::NonFinite(v.to_string()))
    }
}

/// Like [`round_value`] but passes non-finite input through unchanged.
/// Values whose scaled magnitude reaches 2^50 have no representable
/// digits left to round and are returned as-is.
pub fn round_finite(v: f64, digits: u32) -> f64 {
    const LIMIT: f64 = (1u64 << 50) as f64;
    if !v.is_finite() || digits > 300 {
        return v;
    }
    let scale = 10f64.powi(digits as i32);
    let scaled = v * scale;
    if !scaled.is_finite() || scaled.abs() >= LIMIT {
        return v + 0.0;
    }
    scaled.round_ties_even() / scale + 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    InitTest,
    DeficiencyFp,
    DeficiencyFn,
    Validation,
}

/// One capture of an execution at the assertion point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramState {
    pub vars: BTreeMap<String, Value>,
    pub origin: Origin,
    /// Fingerprint of the input that produced this state, e.g. `x=0.3`.
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutant: Option<String>,
    /// The execution faulted before reaching the assertion point.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub faulted: bool,
}

impl ProgramState {
    /// Values in signature order, rounded to `precision`.
    pub fn aligned(&self, sig: &VarSignature, precision: u32) -> Result<Vec<Value>, StateError> {
        if self.vars.len() != sig.len() {
            let extra: Vec<&str> = self
                .vars
                .keys()
                .filter(|k| sig.position(k).is_none())
                .map(String::as_str)
                .collect();
            if !extra.is_empty() {
                return Err(StateError::SignatureMismatch(format!("unexpected variables {extra:?}")));
            }
        }
        sig.decls()
            .iter()
            .map(|d| match self.vars.get(&d.name) {
                None => Err(StateError::SignatureMismatch(format!("missing variable `{}`", d.name))),
                Some(Value::Num(n)) if d.ty == VarType::Number => {
                    if n.is_finite() {
                        Ok(Value::Num(round_finite(*n, precision)))
                    } else {
                        Err(StateError::NonFinite(d.name.clone()))
                    }
                }
                Some(v @ Value::Bool(_)) if d.ty == VarType::Boolean => Ok(*v),
                Some(_) => Err(StateError::SignatureMismatch(format!(
                    "variable `{}` should be a {}",
                    d.name, d.ty
                ))),
            })
            .collect()
    }

    /// Same variable map as `other`.
    pub fn same_vars(&self, other: &ProgramState) -> bool {
        self.vars.len() == other.vars.len()
            && self
                .vars
                .iter()
                .zip(&other.vars)
                .all(|((ka, va), (kb, vb))| ka == kb && va.key_bits() == vb.key_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

/// A stored state with its dedup multiplicity and evaluation-ready values.
#[derive(Debug, Clone, PartialEq)]
pub struct RepoEntry {
    pub state: ProgramState,
    pub multiplicity: u64,
    values: Vec<Value>,
}

impl RepoEntry {
    /// Variable values in signature order.
    pub fn values(&self) -> &[Value] {
        &self.values
    }
}

/// Labeled collections of correct and incorrect states over one signature.
#[derive(Debug, Clone)]
pub struct StateRepo {
    signature: VarSignature,
    precision: u32,
    positives: Vec<RepoEntry>,
    negatives: Vec<RepoEntry>,
    seen_pos: HashMap<Vec<u64>, usize>,
    seen_neg: HashMap<Vec<u64>, usize>,
}

impl PartialEq for StateRepo {
    fn eq(&self, other: &Self) -> bool {
        self.signature == other.signature
            && self.precision == other.precision
            && self.positives == other.positives
            && self.negatives == other.negatives
    }
}

impl StateRepo {
    pub fn new(signature: VarSignature) -> Self {
        Self::with_precision(signature, DEFAULT_PRECISION)
    }

    pub fn with_precision(signature: VarSignature, precision: u32) -> Self {
        StateRepo {
            signature,
            precision,
            positives: Vec::new(),
            negatives: Vec::new(),
            seen_pos: HashMap::new(),
            seen_neg: HashMap::new(),
        }
    }

    pub fn signature(&self) -> &VarSignature {
        &self.signature
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn positives(&self) -> &[RepoEntry] {
        &self.positives
    }

    pub fn negatives(&self) -> &[RepoEntry] {
        &self.negatives
    }

    pub fn entries(&self, label: Label) -> &[RepoEntry] {
        match label {
            Label::Positive => &self.positives,
            Label::Negative => &self.negatives,
        }
    }

    /// Total multiplicity of one side.
    pub fn weight(&self, label: Label) -> u64 {
        self.entries(label).iter().map(|e| e.multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    /// Rounds, validates and stores `state` under `label`. A state whose
    /// variable map is already present only bumps that entry's multiplicity.
    pub fn ingest(&mut self, state: ProgramState, label: Label) -> Result<(), StateError> {
        self.ingest_weighted(state, label, 1)
    }

    fn ingest_weighted(&mut self, mut state: ProgramState, label: Label, weight: u64) -> Result<(), StateError> {
        if weight == 0 {
            return Err(StateError::ZeroMultiplicity);
        }
        match (&state.mutant, label) {
            (None, Label::Negative) => return Err(StateError::MissingMutant),
            (Some(m), Label::Positive) => return Err(StateError::UnexpectedMutant(m.clone())),
            _ => {}
        }
        let values = state.aligned(&self.signature, self.precision)?;
        for (decl, v) in self.signature.decls().iter().zip(&values) {
            state.vars.insert(decl.name.clone(), *v);
        }
        let key: Vec<u64> = values.iter().map(|v| v.key_bits()).collect();
        let (entries, seen) = match label {
            Label::Positive => (&mut self.positives, &mut self.seen_pos),
            Label::Negative => (&mut self.negatives, &mut self.seen_neg),
        };
        if let Some(&i) = seen.get(&key) {
            entries[i].multiplicity += weight;
        } else {
            seen.insert(key, entries.len());
            entries.push(RepoEntry {
                state,
                multiplicity: weight,
                values,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = RepoFile {
            signature: self.signature.clone(),
            precision: self.precision,
            positives: self.positives.iter().map(EntryFile::from).collect(),
            negatives: self.negatives.iter().map(EntryFile::from).collect(),
        };
        serde_json::to_string_pretty(&file).expect("repository serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, StateError> {
        let file: RepoFile = serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => StateError::Schema(e.to_string()),
            _ => StateError::Malformed(e),
        })?;
        let mut repo = StateRepo::with_precision(file.signature, file.precision);
        for (label, entries) in [(Label::Positive, file.positives), (Label::Negative, file.negatives)] {
            for entry in entries {
                let state = ProgramState {
                    vars: entry.vars,
                    origin: entry.origin,
                    input: entry.input,
                    mutant: entry.mutant,
                    faulted: entry.faulted,
                };
                repo.ingest_weighted(state, label, entry.multiplicity)
                    .map_err(|e| match e {
                        StateError::Schema(_) | StateError::Malformed(_) | StateError::Io(_) => e,
                        other => StateError::Schema(other.to_string()),
                    })?;
            }
        }
        Ok(repo)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StateError> {
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StateError> {
        StateRepo::from_json(&fs::read_to_string(path)?)
    }
}

fn default_precision() -> u32 {
    DEFAULT_PRECISION
}

fn one() -> u64 {
    1
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RepoFile {
    signature: VarSignature,
    #[serde(default = "default_precision")]
    precision: u32,
    positives: Vec<EntryFile>,
    negatives: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    vars: BTreeMap<String, Value>,
    origin: Origin,
    input: String,
    #[serde(default = "one")]
    multiplicity: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mutant: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    faulted: bool,
}

impl From<&RepoEntry> for EntryFile {
    fn from(e: &RepoEntry) -> Self {
        EntryFile {
            vars: e.state.vars.clone(),
            origin: e.state.origin,
            input: e.state.input.clone(),
            multiplicity: e.multiplicity,
            mutant: e.state.mutant.clone(),
            faulted: e.state.faulted,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn floor_sig() -> VarSignature {
        VarSignature::new([
            ("old_x", VarType::Number),
            ("x", VarType::Number),
            ("y", VarType::Number),
            ("result", VarType::Number),
        ])
        .unwrap()
    }

    fn state(pairs: &[(&str, f64)], mutant: Option<&str>) -> ProgramState {
        ProgramState {
            vars: pairs.iter().map(|(k, v)| (k.to_string(), Value::Num(*v))).collect(),
            origin: Origin::InitTest,
            input: "x=0.3".into(),
            mutant: mutant.map(str::to_string),
            faulted: false,
        }
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_value(1.0000000004, 9).unwrap(), 1.0);
        assert_eq!(round_value(0.125, 2).unwrap(), 0.12);
        assert_eq!(round_value(-2.5, 0).unwrap(), -2.0);
        assert_eq!(round_value(-0.2, 0).unwrap().to_bits(), 0.0f64.to_bits());
        assert!(matches!(round_value(f64::NAN, 9), Err(StateError::NonFinite(_))));
        assert!(round_value(f64::INFINITY, 9).is_err());
        assert_eq!(round_value(1e300, 9).unwrap(), 1e300);
    }

    #[test]
    fn ingest_dedups_with_multiplicity() {
        let mut repo = StateRepo::new(floor_sig());
        let s = state(&[("old_x", 0.3), ("x", 0.3), ("y", 0.0), ("result", 0.0)], None);
        repo.ingest(s.clone(), Label::Positive).unwrap();
        repo.ingest(s, Label::Positive).unwrap();
        assert_eq!(repo.positives().len(), 1);
        assert_eq!(repo.positives()[0].multiplicity, 2);
        assert_eq!(repo.weight(Label::Positive), 2);
    }

    #[test]
    fn ingest_rounds_values() {
        let mut repo = StateRepo::new(floor_sig());
        let s = state(&[("old_x", 0.30000000001), ("x", 0.30000000001), ("y", 0.0), ("result", 0.0)], None);
        repo.ingest(s, Label::Positive).unwrap();
        assert_eq!(repo.positives()[0].state.vars["x"], Value::Num(0.3));
        assert_eq!(repo.positives()[0].values()[1], Value::Num(0.3));
    }

    #[test]
    fn ingest_rejects_mismatches() {
        let mut repo = StateRepo::new(floor_sig());
        let missing = state(&[("x", 0.3), ("y", 0.0), ("result", 0.0)], None);
        assert!(matches!(repo.ingest(missing, Label::Positive), Err(StateError::SignatureMismatch(_))));

        let extra = state(&[("old_x", 0.3), ("x", 0.3), ("y", 0.0), ("result", 0.0), ("z", 1.0)], None);
        assert!(matches!(repo.ingest(extra, Label::Positive), Err(StateError::SignatureMismatch(_))));

        let nan = state(&[("old_x", f64::NAN), ("x", 0.3), ("y", 0.0), ("result", 0.0)], None);
        assert!(matches!(repo.ingest(nan, Label::Positive), Err(StateError::NonFinite(_))));

        let mut typed = state(&[("old_x", 0.3), ("x", 0.3), ("y", 0.0), ("result", 0.0)], None);
        typed.vars.insert("y".into(), Value::Bool(true));
        assert!(matches!(repo.ingest(typed, Label::Positive), Err(StateError::SignatureMismatch(_))));

        let full = [("old_x", 0.3), ("x", 0.3), ("y", -1.0), ("result", -1.0)];
        assert!(matches!(repo.ingest(state(&full, None), Label::Negative), Err(StateError::MissingMutant)));
        assert!(matches!(
            repo.ingest(state(&full, Some("M1")), Label::Positive),
            Err(StateError::UnexpectedMutant(_))
        ));
        assert!(repo.is_empty());
    }

    #[test]
    fn empty_repo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("repo.json");
        let repo = StateRepo::new(floor_sig());
        repo.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"positives\": []"));
        assert_eq!(StateRepo::load(&path).unwrap(), repo);
    }

    #[test]
    fn populated_repo_round_trips_byte_stable() {
        let mut repo = StateRepo::new(floor_sig());
        repo.ingest(state(&[("old_x", 0.3), ("x", 0.3), ("y", 0.0), ("result", 0.0)], None), Label::Positive)
            .unwrap();
        repo.ingest(state(&[("old_x", 5.0), ("x", 5.0), ("y", 5.0), ("result", 5.0)], None), Label::Positive)
            .unwrap();
        repo.ingest(
            state(&[("old_x", 0.3), ("x", 0.3), ("y", -1.0), ("result", -1.0)], Some("M1")),
            Label::Negative,
        )
        .unwrap();
        let text = repo.to_json();
        assert!(text.contains("\"y\": -1"), "{text}");
        assert!(text.contains("\"mutant\": \"M1\""));
        let back = StateRepo::from_json(&text).unwrap();
        assert_eq!(back, repo);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn string_value_is_a_schema_error() {
        let text = r#"{"signature":[{"name":"x","type":"number"}],
            "positives":[{"vars":{"x":"oops"},"origin":"init-test","input":"x=1","multiplicity":1}],
            "negatives":[]}"#;
        assert!(matches!(StateRepo::from_json(text), Err(StateError::Schema(_))));
    }

    #[test]
    fn malformed_and_schema_errors_are_distinguished() {
        assert!(matches!(StateRepo::from_json("{\"signature\": ["), Err(StateError::Malformed(_))));
        let bad_origin = r#"{"signature":[{"name":"x","type":"number"}],
            "positives":[{"vars":{"x":1},"origin":"somewhere","input":"x=1"}],"negatives":[]}"#;
        assert!(matches!(StateRepo::from_json(bad_origin), Err(StateError::Schema(_))));
        let unlabeled = r#"{"signature":[{"name":"x","type":"number"}],
            "positives":[],"negatives":[{"vars":{"x":1},"origin":"init-test","input":"x=1"}]}"#;
        assert!(matches!(StateRepo::from_json(unlabeled), Err(StateError::Schema(_))));
        let dup_sig = r#"{"signature":[{"name":"x","type":"number"},{"name":"x","type":"number"}],
            "positives":[],"negatives":[]}"#;
        assert!(matches!(StateRepo::from_json(dup_sig), Err(StateError::Schema(_))));
    }

    #[test]
    fn duplicate_file_entries_merge() {
        let text = r#"{"signature":[{"name":"x","type":"number"}],
            "positives":[{"vars":{"x":1},"origin":"init-test","input":"x=1","multiplicity":2},
                         {"vars":{"x":1.0},"origin":"validation","input":"x=1","multiplicity":3}],
            "negatives":[]}"#;
        let repo = StateRepo::from_json(text).unwrap();
        assert_eq!(repo.positives().len(), 1);
        assert_eq!(repo.weight(Label::Positive), 5);
    }

    proptest! {
        #[test]
        fn rounding_is_idempotent(v in -1e12f64..1e12, digits in 0u32..12) {
            let once = round_value(v, digits).unwrap();
            prop_assert_eq!(round_value(once, digits).unwrap().to_bits(), once.to_bits());
        }

        #[test]
        fn rounding_moves_at_most_half_a_unit(v in -1e6f64..1e6, digits in 0u32..9) {
            let r = round_value(v, digits).unwrap();
            let unit = 10f64.powi(-(digits as i32));
            prop_assert!((r - v).abs() <= unit / 2.0 + 1e-9);
        }
    }
}
