//! Candidate papers, keyword filtering, two-stage verification and manual checks.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatSession, Gateway, GatewayError, Reply, Role};
use crate::text::{normalize, render, truncate_head_tail};

pub const DEFAULT_KEYWORDS: [&str; 3] = [
    "field experiment",
    "randomized controlled trial",
    "natural field experiment",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate paper id {0:?}")]
    DuplicateId(String),
    #[error("paper {id}: year {year} outside [1900, 2100]")]
    InvalidYear { id: String, year: i32 },
    #[error("paper {id}: cannot move from {from:?} to {to:?}")]
    BadTransition {
        id: String,
        from: PaperStatus,
        to: PaperStatus,
    },
    #[error("paper {id}: verifier answer is neither yes nor no: {response:?}")]
    UnparseableAnswer { id: String, response: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl CorpusError {
    pub fn is_fixture_miss(&self) -> bool {
        matches!(self, CorpusError::Gateway(e) if e.is_fixture_miss())
    }
}

/// Ordered pipeline states; `Rejected` is terminal and reachable from any state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaperStatus {
    #[default]
    Candidate,
    KeywordPassed,
    Stage1Passed,
    Stage2Passed,
    ManualAccepted,
    Rejected,
}

impl PaperStatus {
    pub fn can_move_to(self, to: PaperStatus) -> bool {
        match (self, to) {
            (PaperStatus::Rejected, _) => false,
            (_, PaperStatus::Rejected) => true,
            (from, to) => to > from,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperEntry {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub full_text: String,
    pub journal: String,
    pub year: i32,
    #[serde(default)]
    pub status: PaperStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_reason: Option<String>,
}

impl PaperEntry {
    /// Moves the entry forward (or to `Rejected`).
    pub fn advance(&mut self, to: PaperStatus) -> Result<(), CorpusError> {
        if !self.status.can_move_to(to) {
            return Err(CorpusError::BadTransition {
                id: self.id.clone(),
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub is_field_experiment: bool,
    pub raw_response: String,
}

/// Full text cut down to fit the verifier's context budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationEvent {
    pub paper_id: String,
    pub original_chars: usize,
    pub kept_chars: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManualDecision {
    Accept,
    Reject,
}

/// One line of a manual-check file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualCheck {
    pub paper_id: String,
    pub decision: ManualDecision,
    pub reason: String,
}

/// Reads a JSONL corpus, skipping blank lines.
pub fn load_corpus(path: &Path) -> Result<Vec<PaperEntry>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(std::io::BufReader::new(file), path)
}

pub fn parse_corpus<R: BufRead>(reader: R, path: &Path) -> Result<Vec<PaperEntry>, CorpusError> {
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: PaperEntry = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !(1900..=2100).contains(&entry.year) {
            return Err(CorpusError::InvalidYear {
                id: entry.id,
                year: entry.year,
            });
        }
        if !seen.insert(entry.id.clone()) {
            return Err(CorpusError::DuplicateId(entry.id));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// True iff some keyword occurs case-insensitively in the title or abstract.
pub fn keyword_filter(entry: &PaperEntry, keywords: &[String]) -> bool {
    let title = entry.title.to_lowercase();
    let abs = entry.abstract_text.to_lowercase();
    keywords.iter().any(|k| {
        let k = k.to_lowercase();
        title.contains(&k) || abs.contains(&k)
    })
}

/// Reads a yes/no verdict: a leading yes/no token or an explicit
/// "is (not) a field experiment" phrase.
pub fn parse_yes_no(response: &str) -> Option<bool> {
    let n = normalize(response);
    let first: String = n
        .split_whitespace()
        .next()
        .unwrap_or("")
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect();
    match first.as_str() {
        "yes" => return Some(true),
        "no" => return Some(false),
        _ => {}
    }
    if n.contains("is not a field experiment") {
        Some(false)
    } else if n.contains("is a field experiment") {
        Some(true)
    } else {
        None
    }
}

pub const STAGE1_TEMPLATE: &str = "\
Below are the title and abstract of an economics paper.

Title: ${Title}
Abstract: ${Abstract}

Does this paper design and implement a field experiment? Answer \"Yes\" or \"No\".";

pub const STAGE2_TEMPLATE: &str = "\
Below is the full text of an economics paper.

${FullText}

Does this paper design and implement a field experiment? Answer \"Yes\" or \"No\".";

fn ask_verdict(
    gateway: &Gateway,
    session: &mut ChatSession,
    entry: &PaperEntry,
    prompt: &str,
) -> Result<Verdict, CorpusError> {
    session.require_role(Role::Preprocessor)?;
    let reply = gateway.send(session, prompt, 0)?;
    let raw = reply.to_wire();
    let parsed = match &reply {
        Reply::Text(t) => parse_yes_no(t),
        Reply::Refused(_) => None,
    };
    match parsed {
        Some(v) => Ok(Verdict {
            is_field_experiment: v,
            raw_response: raw,
        }),
        None => Err(CorpusError::UnparseableAnswer {
            id: entry.id.clone(),
            response: raw,
        }),
    }
}

fn check_status(entry: &PaperEntry, required: PaperStatus, to: PaperStatus) -> Result<(), CorpusError> {
    if entry.status != required {
        return Err(CorpusError::BadTransition {
            id: entry.id.clone(),
            from: entry.status,
            to,
        });
    }
    Ok(())
}

/// First verification layer on title and abstract.
///
/// An unreadable answer leaves the status unchanged.
pub fn verify_title_abstract(
    gateway: &Gateway,
    session: &mut ChatSession,
    entry: &mut PaperEntry,
) -> Result<Verdict, CorpusError> {
    check_status(entry, PaperStatus::KeywordPassed, PaperStatus::Stage1Passed)?;
    let prompt = render(
        STAGE1_TEMPLATE,
        &[("Title", &entry.title), ("Abstract", &entry.abstract_text)],
    )
    .expect("template is well-formed");
    let verdict = ask_verdict(gateway, session, entry, &prompt)?;
    entry.advance(if verdict.is_field_experiment {
        PaperStatus::Stage1Passed
    } else {
        PaperStatus::Rejected
    })?;
    Ok(verdict)
}

/// Second verification layer on the full text, truncated to `budget_chars`.
pub fn verify_full_text(
    gateway: &Gateway,
    session: &mut ChatSession,
    entry: &mut PaperEntry,
    budget_chars: usize,
) -> Result<(Verdict, Option<TruncationEvent>), CorpusError> {
    check_status(entry, PaperStatus::Stage1Passed, PaperStatus::Stage2Passed)?;
    let (text, truncated) = truncate_head_tail(&entry.full_text, budget_chars);
    let event = truncated.then(|| TruncationEvent {
        paper_id: entry.id.clone(),
        original_chars: entry.full_text.chars().count(),
        kept_chars: text.chars().count(),
    });
    let prompt = render(STAGE2_TEMPLATE, &[("FullText", &text)]).expect("template is well-formed");
    let verdict = ask_verdict(gateway, session, entry, &prompt)?;
    entry.advance(if verdict.is_field_experiment {
        PaperStatus::Stage2Passed
    } else {
        PaperStatus::Rejected
    })?;
    Ok((verdict, event))
}

pub fn record_manual_check(
    entry: &PaperEntry,
    decision: ManualDecision,
    reason: &str,
) -> Result<PaperEntry, CorpusError> {
    let to = match decision {
        ManualDecision::Accept => PaperStatus::ManualAccepted,
        ManualDecision::Reject => PaperStatus::Rejected,
    };
    check_status(entry, PaperStatus::Stage2Passed, to)?;
    let mut out = entry.clone();
    out.advance(to)?;
    out.manual_reason = Some(reason.to_string());
    Ok(out)
}

pub fn default_keywords() -> Vec<String> {
    DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    use super::*;
    use crate::gateway::{ProviderRole, ScriptedProvider};

    fn entry(id: &str, title: &str, abs: &str) -> PaperEntry {
        PaperEntry {
            id: id.into(),
            title: title.into(),
            abstract_text: abs.into(),
            full_text: "Body text.".into(),
            journal: "J".into(),
            year: 2020,
            status: PaperStatus::Candidate,
            manual_reason: None,
        }
    }

    fn pre() -> ProviderRole {
        ProviderRole::new(Role::Preprocessor, "pre")
    }

    fn gw(reply: &str) -> Gateway {
        Gateway::builder()
            .bind(pre(), Arc::new(ScriptedProvider::constant(reply)))
            .build()
            .unwrap()
    }

    fn parse(text: &str) -> Result<Vec<PaperEntry>, CorpusError> {
        parse_corpus(std::io::Cursor::new(text), Path::new("mem"))
    }

    fn line(id: &str) -> String {
        serde_json::to_string(&entry(id, "t", "a")).unwrap()
    }

    #[test]
    fn loading() {
        assert!(parse("").unwrap().is_empty());
        let three = [line("a"), line("b"), line("c")].join("\n");
        let ids: Vec<_> = parse(&three).unwrap().into_iter().map(|e| e.id).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let dup = [line("p1"), line("p1")].join("\n");
        assert!(matches!(parse(&dup), Err(CorpusError::DuplicateId(id)) if id == "p1"));
        let bad = [line("a"), "{not json".to_string()].join("\n");
        assert!(matches!(parse(&bad), Err(CorpusError::Malformed { line: 2, .. })));
        assert!(matches!(
            load_corpus(Path::new("/nonexistent/corpus.jsonl")),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn abstract_key_and_default_status() {
        let text = r#"{"id":"x","title":"t","abstract":"a","full_text":"f","journal":"j","year":2001}"#;
        let e = &parse(text).unwrap()[0];
        assert_eq!(e.abstract_text, "a");
        assert_eq!(e.status, PaperStatus::Candidate);
    }

    #[test]
    fn keyword_examples() {
        let kw = vec!["field experiment".to_string()];
        assert!(keyword_filter(&entry("a", "A Field Experiment on giving", ""), &kw));
        assert!(!keyword_filter(&entry("b", "Survey of theory", "Models only."), &kw));
        let corpus: Vec<_> = (0..10)
            .map(|i| {
                let abs = if i % 3 == 0 { "We run a field experiment." } else { "A model." };
                entry(&format!("p{i}"), "Paper", abs)
            })
            .collect();
        assert_eq!(corpus.iter().filter(|e| keyword_filter(e, &kw)).count(), 4);
    }

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no("Yes"), Some(true));
        assert_eq!(parse_yes_no("  no, it is a survey"), Some(false));
        assert_eq!(parse_yes_no("The paper is a field experiment."), Some(true));
        assert_eq!(parse_yes_no("This is not a field experiment"), Some(false));
        assert_eq!(parse_yes_no("Maybe"), None);
        assert_eq!(parse_yes_no("Nobody knows"), None);
    }

    #[test]
    fn stage_one() {
        let mut e = entry("a", "t", "a");
        e.status = PaperStatus::KeywordPassed;
        let g = gw("Yes");
        let mut s = g.open_session(&pre()).unwrap();
        let v = verify_title_abstract(&g, &mut s, &mut e).unwrap();
        assert!(v.is_field_experiment);
        assert_eq!(e.status, PaperStatus::Stage1Passed);

        let mut e = entry("b", "t", "a");
        e.status = PaperStatus::KeywordPassed;
        let g = gw("No");
        let mut s = g.open_session(&pre()).unwrap();
        assert!(!verify_title_abstract(&g, &mut s, &mut e).unwrap().is_field_experiment);
        assert_eq!(e.status, PaperStatus::Rejected);

        let mut e = entry("c", "t", "a");
        e.status = PaperStatus::KeywordPassed;
        let g = gw("Maybe");
        let mut s = g.open_session(&pre()).unwrap();
        assert!(matches!(
            verify_title_abstract(&g, &mut s, &mut e),
            Err(CorpusError::UnparseableAnswer { .. })
        ));
        assert_eq!(e.status, PaperStatus::KeywordPassed);
    }

    #[test]
    fn stage_two_with_truncation() {
        let mut e = entry("a", "t", "a");
        e.status = PaperStatus::Stage1Passed;
        e.full_text = "x".repeat(500);
        let g = gw("Yes");
        let mut s = g.open_session(&pre()).unwrap();
        let (v, ev) = verify_full_text(&g, &mut s, &mut e, 100).unwrap();
        assert!(v.is_field_experiment);
        assert_eq!(e.status, PaperStatus::Stage2Passed);
        let ev = ev.unwrap();
        assert_eq!((ev.original_chars, ev.kept_chars), (500, 100));

        let mut e = entry("b", "t", "a");
        e.status = PaperStatus::Stage1Passed;
        let g = gw("No");
        let mut s = g.open_session(&pre()).unwrap();
        let (_, ev) = verify_full_text(&g, &mut s, &mut e, 100).unwrap();
        assert!(ev.is_none());
        assert_eq!(e.status, PaperStatus::Rejected);
    }

    #[test]
    fn manual_checks() {
        let mut e = entry("a", "t", "a");
        e.status = PaperStatus::Stage2Passed;
        let ok = record_manual_check(&e, ManualDecision::Accept, "settings contain no conclusions").unwrap();
        assert_eq!(ok.status, PaperStatus::ManualAccepted);
        assert_eq!(ok.manual_reason.as_deref(), Some("settings contain no conclusions"));
        let no = record_manual_check(&e, ManualDecision::Reject, "conclusion nonexistent in text").unwrap();
        assert_eq!(no.status, PaperStatus::Rejected);
        let c = entry("c", "t", "a");
        assert!(matches!(
            record_manual_check(&c, ManualDecision::Accept, "x"),
            Err(CorpusError::BadTransition { .. })
        ));
    }

    const ALL: [PaperStatus; 6] = [
        PaperStatus::Candidate,
        PaperStatus::KeywordPassed,
        PaperStatus::Stage1Passed,
        PaperStatus::Stage2Passed,
        PaperStatus::ManualAccepted,
        PaperStatus::Rejected,
    ];

    proptest! {
        #[test]
        fn status_never_moves_backward(steps in proptest::collection::vec(0usize..6, 0..20)) {
            let mut e = entry("a", "t", "a");
            for s in steps {
                let before = e.status;
                if e.advance(ALL[s]).is_ok() {
                    prop_assert!(e.status == PaperStatus::Rejected || e.status > before);
                } else {
                    prop_assert_eq!(e.status, before);
                }
            }
        }

        #[test]
        fn filter_matches_naive_scan(
            title in "[a-zA-Z ]{0,40}",
            abs in "[a-zA-Z ]{0,80}",
            kws in proptest::collection::vec("[a-zA-Z ]{1,6}", 1..4),
        ) {
            let e = entry("a", &title, &abs);
            let naive = kws.iter().any(|k| {
                let k = k.to_lowercase();
                let t = title.to_lowercase();
                let a = abs.to_lowercase();
                (0..t.len()).any(|i| t[i..].starts_with(&k)) || (0..a.len()).any(|i| a[i..].starts_with(&k))
            });
            prop_assert_eq!(keyword_filter(&e, &kws), naive);
        }
    }
}
