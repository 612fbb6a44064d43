//! Extraction of experiment settings and standalone conclusions from paper text.
//!
//! One preprocessor session fills a seven-item form (A–F settings, G the
//! conclusions paragraph). A fresh session then splits G into single-claim
//! sentences, and conclusions carrying numbers are sent for dequantification.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatSession, Gateway, GatewayError, ProviderRole, Reply, Role};
use crate::text::{contains_numeral, normalize, render};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("paper text is empty")]
    EmptyPaper,
    #[error("extraction response is missing sections {0:?}")]
    Incomplete(Vec<char>),
    #[error("conclusion split returned no conclusions")]
    EmptySplit,
    #[error("dequantification returned an empty sentence")]
    EmptyRewrite,
    #[error("preprocessor refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl ExtractionError {
    pub fn is_fixture_miss(&self) -> bool {
        matches!(self, ExtractionError::Gateway(e) if e.is_fixture_miss())
    }
}

/// The six context fields shown to the predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub goal: String,
    pub treatments: String,
    pub duration: String,
    pub outcomes: String,
    pub participants: String,
    pub workflow: String,
}

impl ExperimentSettings {
    /// `(heading, value)` pairs in form order.
    pub fn fields(&self) -> [(&'static str, &str); 6] {
        [
            ("Goal", &self.goal),
            ("Treatments", &self.treatments),
            ("Duration", &self.duration),
            ("Outcomes", &self.outcomes),
            ("Participants", &self.participants),
            ("Workflow", &self.workflow),
        ]
    }

    pub fn is_complete(&self) -> bool {
        self.fields().iter().all(|(_, v)| !v.trim().is_empty())
    }

    /// Multi-line "Heading: value" rendering used inside prompts.
    pub fn background_block(&self) -> String {
        self.fields()
            .iter()
            .map(|(h, v)| format!("{h}: {}", v.trim()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conclusion {
    pub id: String,
    pub text: String,
    pub paper_id: String,
    pub dequantified: bool,
}

/// A settings field that repeats an extracted conclusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningFlag {
    pub conclusion_id: String,
    pub field: String,
}

/// Persisted per-paper extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub paper_id: String,
    pub settings: ExperimentSettings,
    pub conclusions: Vec<Conclusion>,
}

pub const EXTRACTION_TEMPLATE: &str = "\
You are helping to catalogue published field experiments. Read the paper below and complete the information form.

Information form:
A. Goal: the general goal of the experiment, for example exploring the impact of job training on income.
B. Treatments: the treatments that were assigned, for example receiving job training or not.
C. Duration: how long the experiment ran, for example seven weeks.
D. Outcomes: the outcomes that were measured, for example income.
E. Participants: who took part and where, for example people seeking jobs in New England.
F. Workflow: how the experiment was carried out, for example when and how training was given and when outcomes were recorded.
G. Conclusions: one paragraph stating the conclusions of the experiment.

Instructions:
- Items A to F describe the experimental settings only. They must not mention, hint at or anticipate any result or conclusion.
- Item G is the only place where results and conclusions appear.
- Answer with exactly seven sections labeled A to G, in order, and nothing else.

Paper:
${Paper}";

pub const SPLIT_TEMPLATE: &str = "\
The paragraph below states the conclusions of a field experiment. Separate it into standalone conclusions.

Instructions:
- Each conclusion is a single declarative sentence that states one relationship between a treatment and an outcome.
- Each conclusion must be understandable on its own, without the other sentences.
- Reply with a numbered list, one conclusion per line, and nothing else.

Paragraph:
${Conclusions}";

pub const DEQUANTIFY_TEMPLATE: &str = "\
Rewrite the conclusion below so that it states only the direction of the effect, without any numerical magnitude such as percentages, amounts or counts. Keep the same treatment and outcome. If the conclusion states no numerical treatment effect, repeat it unchanged. Reply with the rewritten sentence only.

Conclusion: ${Conclusion}";

pub fn build_extraction_prompt(paper_text: &str) -> Result<String, ExtractionError> {
    if paper_text.trim().is_empty() {
        return Err(ExtractionError::EmptyPaper);
    }
    Ok(render(EXTRACTION_TEMPLATE, &[("Paper", paper_text)]).expect("template is well-formed"))
}

static LABEL_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:[-*#>]+\s*)?(?:\*\*)?\(?([A-G])(?:\*\*)?\s*[.):](?:\*\*)?\s*(.*)$").unwrap()
});

/// Field-name words that may follow a label, e.g. `A. Goal: ...`.
const LABEL_WORDS: [&str; 7] = [
    "goal",
    "treatment",
    "duration",
    "outcome",
    "participant",
    "workflow",
    "conclusion",
];

fn strip_field_name(label: usize, content: &str) -> &str {
    let Some((head, rest)) = content.split_once(':') else {
        return content;
    };
    let head = head.trim().trim_matches('*').to_lowercase();
    if head.len() <= 40 && head.contains(LABEL_WORDS[label]) {
        rest.trim_start_matches('*').trim()
    } else {
        content
    }
}

/// Maps labeled sections A–F onto settings and returns G's paragraph.
///
/// Labels may be written `A.`, `A)` or `A:`; they must appear in order.
pub fn parse_extraction_response(
    response: &str,
) -> Result<(ExperimentSettings, String), ExtractionError> {
    let mut sections: [Option<String>; 7] = Default::default();
    let mut current: Option<usize> = None;
    for line in response.lines() {
        if let Some(caps) = LABEL_LINE.captures(line) {
            let idx = (caps[1].as_bytes()[0] - b'A') as usize;
            let advances = current.is_none_or(|c| idx > c);
            if advances && sections[idx].is_none() {
                let body = strip_field_name(idx, caps[2].trim());
                sections[idx] = Some(body.to_string());
                current = Some(idx);
                continue;
            }
        }
        if let Some(c) = current {
            let s = sections[c].get_or_insert_with(String::new);
            if !line.trim().is_empty() {
                if !s.is_empty() {
                    s.push('\n');
                }
                s.push_str(line.trim());
            }
        }
    }
    let missing: Vec<char> = sections
        .iter()
        .enumerate()
        .filter(|(_, s)| s.as_deref().is_none_or(|s| s.trim().is_empty()))
        .map(|(i, _)| (b'A' + i as u8) as char)
        .collect();
    if !missing.is_empty() {
        return Err(ExtractionError::Incomplete(missing));
    }
    let [a, b, c, d, e, f, g] = sections.map(|s| s.unwrap_or_default().trim().to_string());
    Ok((
        ExperimentSettings {
            goal: a,
            treatments: b,
            duration: c,
            outcomes: d,
            participants: e,
            workflow: f,
        },
        g,
    ))
}

static LIST_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\d+\s*[.)]|[-*•])\s+(.*)$").unwrap());

/// Reads a numbered or bulleted list; plain lines are used when no markers exist.
pub fn parse_conclusion_list(text: &str) -> Vec<String> {
    let marked: Vec<String> = text
        .lines()
        .filter_map(|l| LIST_MARKER.captures(l).map(|c| c[1].trim().to_string()))
        .filter(|s| !s.is_empty())
        .collect();
    if !marked.is_empty() {
        return marked;
    }
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn expect_text(reply: Reply) -> Result<String, ExtractionError> {
    match reply {
        Reply::Text(t) => Ok(t),
        Reply::Refused(reason) => Err(ExtractionError::Refused(reason)),
    }
}

/// Splits the conclusions paragraph into single-claim sentences.
///
/// Ids are `<paper_id>-c<ordinal>`, starting at 1.
pub fn split_conclusions(
    gateway: &Gateway,
    session: &mut ChatSession,
    paper_id: &str,
    raw_conclusions: &str,
) -> Result<Vec<Conclusion>, ExtractionError> {
    session.require_role(Role::Preprocessor)?;
    if raw_conclusions.trim().is_empty() {
        return Err(ExtractionError::EmptySplit);
    }
    let prompt = render(SPLIT_TEMPLATE, &[("Conclusions", raw_conclusions)])
        .expect("template is well-formed");
    let reply = expect_text(gateway.send(session, &prompt, 0)?)?;
    let sentences = parse_conclusion_list(&reply);
    if sentences.is_empty() {
        return Err(ExtractionError::EmptySplit);
    }
    Ok(sentences
        .into_iter()
        .enumerate()
        .map(|(i, text)| Conclusion {
            id: format!("{paper_id}-c{}", i + 1),
            text,
            paper_id: paper_id.to_string(),
            dequantified: false,
        })
        .collect())
}

/// Removes numeric magnitudes from a conclusion.
///
/// Only conclusions containing a digit or number word reach the model.
pub fn dequantify(
    gateway: &Gateway,
    session: &mut ChatSession,
    conclusion: &Conclusion,
) -> Result<Conclusion, ExtractionError> {
    session.require_role(Role::Preprocessor)?;
    if !contains_numeral(&conclusion.text) {
        return Ok(conclusion.clone());
    }
    let prompt = render(DEQUANTIFY_TEMPLATE, &[("Conclusion", &conclusion.text)])
        .expect("template is well-formed");
    let reply = expect_text(gateway.send(session, &prompt, 0)?)?;
    let rewritten = reply.trim().trim_matches('"').trim().to_string();
    if rewritten.is_empty() {
        return Err(ExtractionError::EmptyRewrite);
    }
    if normalize(&rewritten) == normalize(&conclusion.text) {
        return Ok(conclusion.clone());
    }
    Ok(Conclusion {
        text: rewritten,
        dequantified: true,
        ..conclusion.clone()
    })
}

/// Flags settings fields that contain a conclusion sentence verbatim.
pub fn screen_settings(settings: &ExperimentSettings, conclusions: &[Conclusion]) -> Vec<ScreeningFlag> {
    let fields: Vec<(&str, String)> = settings
        .fields()
        .iter()
        .map(|(h, v)| (*h, normalize(v)))
        .collect();
    let mut flags = Vec::new();
    for c in conclusions {
        let needle = normalize(&c.text);
        if needle.is_empty() {
            continue;
        }
        for (heading, hay) in &fields {
            if hay.contains(&needle) {
                flags.push(ScreeningFlag {
                    conclusion_id: c.id.clone(),
                    field: heading.to_lowercase(),
                });
            }
        }
    }
    flags
}

/// Runs extraction, splitting and dequantification for one paper, each step in
/// its own session.
pub fn extract_paper(
    gateway: &Gateway,
    role: &ProviderRole,
    paper_id: &str,
    paper_text: &str,
) -> Result<(ExtractionRecord, Vec<ScreeningFlag>), ExtractionError> {
    let prompt = build_extraction_prompt(paper_text)?;
    let mut session = gateway.open_session(role)?;
    session.require_role(Role::Preprocessor)?;
    let response = expect_text(gateway.send(&mut session, &prompt, 0)?)?;
    let (settings, raw) = parse_extraction_response(&response)?;

    let mut split_session = gateway.open_session(role)?;
    let conclusions = split_conclusions(gateway, &mut split_session, paper_id, &raw)?;
    let conclusions = conclusions
        .iter()
        .map(|c| {
            let mut s = gateway.open_session(role)?;
            dequantify(gateway, &mut s, c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let flags = screen_settings(&settings, &conclusions);
    Ok((
        ExtractionRecord {
            paper_id: paper_id.to_string(),
            settings,
            conclusions,
        },
        flags,
    ))
}
