//! Reversed and unrelated distractors for each conclusion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::Conclusion;
use crate::gateway::{ChatSession, Gateway, GatewayError, ProviderRole, Reply, Role};
use crate::text::{normalize, render};

pub const DEFAULT_NO_RELATION_PHRASES: [&str; 4] = [
    "no relationship",
    "no effect",
    "not associated",
    "no correlation",
];

#[derive(Debug, Error)]
pub enum VariantError {
    #[error("generated variant repeats its input: {0:?}")]
    EqualOutput(String),
    #[error("generated variant is empty")]
    EmptyOutput,
    #[error("preprocessor refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl VariantError {
    pub fn is_fixture_miss(&self) -> bool {
        matches!(self, VariantError::Gateway(e) if e.is_fixture_miss())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConclusionTriple {
    pub conclusion_id: String,
    pub original: String,
    pub reversed: String,
    pub unrelated: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TripleFailure {
    Empty { field: String },
    NotDistinct { first: String, second: String },
    MissingNoRelationPhrase,
}

impl std::fmt::Display for TripleFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TripleFailure::Empty { field } => write!(f, "{field} is empty"),
            TripleFailure::NotDistinct { first, second } => {
                write!(f, "{first} and {second} are identical")
            }
            TripleFailure::MissingNoRelationPhrase => {
                f.write_str("unrelated variant lacks a no-relation phrase")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub failures: Vec<TripleFailure>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A conclusion whose variants failed validation twice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantinedTriple {
    pub conclusion_id: String,
    pub original: String,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TripleOutcome {
    Admitted(ConclusionTriple),
    Quarantined(QuarantinedTriple),
}

pub const REVERSED_TEMPLATE: &str = "\
Below is a conclusion from a field experiment. Write its reversed variant: the same statement with the direction of the effect inverted, so that for example \"increases\" becomes \"decreases\". Keep everything else unchanged. Reply with the reversed sentence only.

Conclusion: ${Original}";

pub const UNRELATED_TEMPLATE: &str = "\
Below are a conclusion from a field experiment and its reversed variant. Write an unrelated variant: one sentence stating that there is no relationship between the treatment and the outcome they mention, such as \"There is no relationship between X and Y\". Reply with that sentence only.

Conclusion: ${Original}
Reversed variant: ${Reversed}";

fn reply_sentence(reply: Reply) -> Result<String, VariantError> {
    match reply {
        Reply::Refused(reason) => Err(VariantError::Refused(reason)),
        Reply::Text(t) => {
            let t = t.trim().trim_matches('"').trim().to_string();
            if t.is_empty() {
                Err(VariantError::EmptyOutput)
            } else {
                Ok(t)
            }
        }
    }
}

pub fn generate_reversed(
    gateway: &Gateway,
    session: &mut ChatSession,
    original: &str,
    attempt: u32,
) -> Result<String, VariantError> {
    session.require_role(Role::Preprocessor)?;
    let prompt = render(REVERSED_TEMPLATE, &[("Original", original)]).expect("template is well-formed");
    let reversed = reply_sentence(gateway.send(session, &prompt, attempt)?)?;
    if normalize(&reversed) == normalize(original) {
        return Err(VariantError::EqualOutput(reversed));
    }
    Ok(reversed)
}

pub fn generate_unrelated(
    gateway: &Gateway,
    session: &mut ChatSession,
    original: &str,
    reversed: &str,
    attempt: u32,
) -> Result<String, VariantError> {
    session.require_role(Role::Preprocessor)?;
    let prompt = render(
        UNRELATED_TEMPLATE,
        &[("Original", original), ("Reversed", reversed)],
    )
    .expect("template is well-formed");
    let unrelated = reply_sentence(gateway.send(session, &prompt, attempt)?)?;
    let n = normalize(&unrelated);
    if n == normalize(original) || n == normalize(reversed) {
        return Err(VariantError::EqualOutput(unrelated));
    }
    Ok(unrelated)
}

/// Checks non-emptiness, pairwise distinctness and the no-relation phrase.
pub fn validate_triple(triple: &ConclusionTriple, phrases: &[String]) -> ValidationReport {
    let mut failures = Vec::new();
    let fields = [
        ("original", normalize(&triple.original)),
        ("reversed", normalize(&triple.reversed)),
        ("unrelated", normalize(&triple.unrelated)),
    ];
    for (name, value) in &fields {
        if value.is_empty() {
            failures.push(TripleFailure::Empty {
                field: name.to_string(),
            });
        }
    }
    for i in 0..3 {
        for j in i + 1..3 {
            if fields[i].1 == fields[j].1 {
                failures.push(TripleFailure::NotDistinct {
                    first: fields[i].0.to_string(),
                    second: fields[j].0.to_string(),
                });
            }
        }
    }
    let unrelated = &fields[2].1;
    if !phrases.iter().any(|p| unrelated.contains(&p.to_lowercase())) {
        failures.push(TripleFailure::MissingNoRelationPhrase);
    }
    ValidationReport { failures }
}

/// Generates and validates a triple, regenerating once before quarantining.
pub fn build_triple(
    gateway: &Gateway,
    role: &ProviderRole,
    conclusion: &Conclusion,
    phrases: &[String],
) -> Result<TripleOutcome, VariantError> {
    let mut reasons = Vec::new();
    for attempt in 0..2 {
        let mut session = gateway.open_session(role)?;
        let reversed = match generate_reversed(gateway, &mut session, &conclusion.text, attempt) {
            Ok(r) => r,
            Err(VariantError::Gateway(e)) => return Err(e.into()),
            Err(e) => {
                reasons.push(format!("attempt {attempt}: reversed: {e}"));
                continue;
            }
        };
        let mut session = gateway.open_session(role)?;
        let unrelated =
            match generate_unrelated(gateway, &mut session, &conclusion.text, &reversed, attempt) {
                Ok(u) => u,
                Err(VariantError::Gateway(e)) => return Err(e.into()),
                Err(e) => {
                    reasons.push(format!("attempt {attempt}: unrelated: {e}"));
                    continue;
                }
            };
        let triple = ConclusionTriple {
            conclusion_id: conclusion.id.clone(),
            original: conclusion.text.clone(),
            reversed,
            unrelated,
        };
        let report = validate_triple(&triple, phrases);
        if report.is_valid() {
            return Ok(TripleOutcome::Admitted(triple));
        }
        reasons.extend(
            report
                .failures
                .iter()
                .map(|f| format!("attempt {attempt}: {f}")),
        );
    }
    Ok(TripleOutcome::Quarantined(QuarantinedTriple {
        conclusion_id: conclusion.id.clone(),
        original: conclusion.text.clone(),
        reasons,
    }))
}

pub fn default_phrases() -> Vec<String> {
    DEFAULT_NO_RELATION_PHRASES.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gateway::ScriptedProvider;

    const ORIGINAL: &str = "receiving housing vouchers reduces quarterly employment rates";
    const REVERSED: &str = "receiving housing vouchers increases quarterly employment rates";
    const UNRELATED: &str =
        "There is no relationship between receiving housing vouchers and quarterly employment rates";

    fn pre() -> ProviderRole {
        ProviderRole::new(Role::Preprocessor, "pre")
    }

    fn gw(p: ScriptedProvider) -> Gateway {
        Gateway::builder().bind(pre(), Arc::new(p)).build().unwrap()
    }

    fn housing() -> ConclusionTriple {
        ConclusionTriple {
            conclusion_id: "p-c1".into(),
            original: ORIGINAL.into(),
            reversed: REVERSED.into(),
            unrelated: UNRELATED.into(),
        }
    }

    #[test]
    fn reversed_housing_example() {
        let g = gw(ScriptedProvider::constant(REVERSED));
        let mut s = g.open_session(&pre()).unwrap();
        assert_eq!(generate_reversed(&g, &mut s, ORIGINAL, 0).unwrap(), REVERSED);
    }

    #[test]
    fn reversed_scripted_inversion_and_echo() {
        let g = gw(ScriptedProvider::constant("X decreases Y"));
        let mut s = g.open_session(&pre()).unwrap();
        assert_eq!(generate_reversed(&g, &mut s, "X increases Y", 0).unwrap(), "X decreases Y");

        let g = gw(ScriptedProvider::constant("x increases  y."));
        let mut s = g.open_session(&pre()).unwrap();
        assert!(matches!(
            generate_reversed(&g, &mut s, "X increases Y", 0),
            Err(VariantError::EqualOutput(_))
        ));
    }

    #[test]
    fn unrelated_examples() {
        let g = gw(ScriptedProvider::constant(UNRELATED));
        let mut s = g.open_session(&pre()).unwrap();
        assert_eq!(generate_unrelated(&g, &mut s, ORIGINAL, REVERSED, 0).unwrap(), UNRELATED);

        let g = gw(ScriptedProvider::constant("There is no relationship between X and Y"));
        let mut s = g.open_session(&pre()).unwrap();
        assert_eq!(
            generate_unrelated(&g, &mut s, "X increases Y", "X decreases Y", 0).unwrap(),
            "There is no relationship between X and Y"
        );

        let g = gw(ScriptedProvider::constant("X increases Y"));
        let mut s = g.open_session(&pre()).unwrap();
        assert!(matches!(
            generate_unrelated(&g, &mut s, "X increases Y", "X decreases Y", 0),
            Err(VariantError::EqualOutput(_))
        ));
    }

    #[test]
    fn validation_rules() {
        let phrases = default_phrases();
        assert!(validate_triple(&housing(), &phrases).is_valid());

        let mut same = housing();
        same.reversed = same.original.clone();
        let report = validate_triple(&same, &phrases);
        assert_eq!(
            report.failures,
            vec![TripleFailure::NotDistinct {
                first: "original".into(),
                second: "reversed".into()
            }]
        );

        let mut vague = housing();
        vague.unrelated = "Housing vouchers matter sometimes".into();
        assert_eq!(
            validate_triple(&vague, &phrases).failures,
            vec![TripleFailure::MissingNoRelationPhrase]
        );

        let mut empty = housing();
        empty.unrelated = "  ".into();
        assert!(validate_triple(&empty, &phrases)
            .failures
            .contains(&TripleFailure::Empty { field: "unrelated".into() }));
    }

    fn conclusion() -> Conclusion {
        Conclusion {
            id: "p-c1".into(),
            text: ORIGINAL.into(),
            paper_id: "p".into(),
            dequantified: false,
        }
    }

    #[test]
    fn regenerates_once_then_admits() {
        // first round echoes the input, second round behaves
        let p = ScriptedProvider::sequence([ORIGINAL, REVERSED, UNRELATED]);
        let g = gw(p);
        let out = build_triple(&g, &pre(), &conclusion(), &default_phrases()).unwrap();
        assert_eq!(out, TripleOutcome::Admitted(housing()));
    }

    #[test]
    fn quarantines_after_second_failure() {
        let p = ScriptedProvider::sequence([REVERSED, "vague", REVERSED, "still vague"]);
        let g = gw(p);
        match build_triple(&g, &pre(), &conclusion(), &default_phrases()).unwrap() {
            TripleOutcome::Quarantined(q) => {
                assert_eq!(q.reasons.len(), 2);
                assert!(q.reasons[1].starts_with("attempt 1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
