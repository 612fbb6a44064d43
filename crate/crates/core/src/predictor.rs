//! Repeated multiple-choice prediction of conclusions.
//!
//! Each attempt shuffles the three options afresh, opens a new predictor
//! session and parses the selected slot. Basic prompting uses one turn; the
//! chain-of-thought strategy first asks for the decisive elements of the
//! experiment and then for a single choice, in the same session.

use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extraction::ExperimentSettings;
use crate::gateway::{Gateway, GatewayError, ProviderRole, Reply, Role, REFUSAL_MARKER};
use crate::stats::{self, StatsError};
use crate::text::{normalize, render};
use crate::variantgen::ConclusionTriple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Basic,
    Cot,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Basic => "basic",
            Strategy::Cot => "cot",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(Strategy::Basic),
            "cot" => Ok(Strategy::Cot),
            other => Err(format!("unknown strategy {other:?} (expected basic or cot)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub repeats: u32,
    pub model_id: String,
    pub rng_seed: u64,
    /// Provider failures tolerated per conclusion before it is aborted.
    #[serde(default)]
    pub attempt_failure_budget: u32,
}

impl RunConfig {
    pub fn new(strategy: Strategy, model_id: impl Into<String>, rng_seed: u64) -> Self {
        Self {
            strategy,
            repeats: 20,
            model_id: model_id.into(),
            rng_seed,
            attempt_failure_budget: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Original,
    Reversed,
    Unrelated,
}

/// `perm[slot]` is the option shown in that slot.
pub type Permutation = [OptionKind; 3];

/// All orderings, in lexicographic order of (original, reversed, unrelated).
pub const PERMUTATIONS: [Permutation; 6] = {
    use OptionKind::*;
    [
        [Original, Reversed, Unrelated],
        [Original, Unrelated, Reversed],
        [Reversed, Original, Unrelated],
        [Reversed, Unrelated, Original],
        [Unrelated, Original, Reversed],
        [Unrelated, Reversed, Original],
    ]
};

pub fn permutation_index(p: &Permutation) -> usize {
    PERMUTATIONS.iter().position(|q| q == p).expect("valid permutation")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedChoice {
    Slot1,
    Slot2,
    Slot3,
    Unparseable,
    Refused,
}

impl ParsedChoice {
    pub fn slot(self) -> Option<usize> {
        match self {
            ParsedChoice::Slot1 => Some(0),
            ParsedChoice::Slot2 => Some(1),
            ParsedChoice::Slot3 => Some(2),
            _ => None,
        }
    }

    fn from_slot(i: usize) -> Self {
        [ParsedChoice::Slot1, ParsedChoice::Slot2, ParsedChoice::Slot3][i]
    }
}

/// True when the chosen slot holds the original conclusion.
pub fn is_correct(choice: ParsedChoice, permutation: &Permutation) -> bool {
    choice
        .slot()
        .is_some_and(|s| permutation[s] == OptionKind::Original)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub conclusion_id: String,
    pub attempt_index: u32,
    pub permutation: Permutation,
    pub raw_response: String,
    /// First-turn answer of a chain-of-thought attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    pub parsed_choice: ParsedChoice,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConclusionRunResult {
    pub paper_id: String,
    pub conclusion_id: String,
    pub attempts: Vec<AttemptRecord>,
    pub accuracy: f64,
}

impl ConclusionRunResult {
    pub fn correct_count(&self) -> usize {
        self.attempts.iter().filter(|a| a.correct).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRunResult {
    pub paper_id: String,
    pub accuracy: f64,
    pub n_conclusions: usize,
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("{failures} provider failures for {conclusion_id} exceed the budget of {budget}; last: {last}")]
    BudgetExceeded {
        conclusion_id: String,
        failures: usize,
        budget: u32,
        last: String,
        /// Attempts that completed before the conclusion was abandoned.
        partial: Vec<AttemptRecord>,
    },
    #[error("a paper needs at least one conclusion result")]
    EmptyPaper,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl PredictError {
    pub fn is_fixture_miss(&self) -> bool {
        matches!(self, PredictError::Gateway(e) if e.is_fixture_miss())
    }
}

/// Applies a uniformly drawn permutation to the triple.
pub fn shuffle_options<R: rand::Rng + ?Sized>(
    triple: &ConclusionTriple,
    rng: &mut R,
) -> ([String; 3], Permutation) {
    let mut perm = PERMUTATIONS[0];
    perm.shuffle(rng);
    let options = perm.map(|k| match k {
        OptionKind::Original => triple.original.clone(),
        OptionKind::Reversed => triple.reversed.clone(),
        OptionKind::Unrelated => triple.unrelated.clone(),
    });
    (options, perm)
}

/// Independent generator for one attempt, so results do not depend on
/// scheduling order.
pub fn attempt_rng(seed: u64, conclusion_id: &str, attempt_index: u32) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(conclusion_id.as_bytes());
    h.update([0u8]);
    h.update(attempt_index.to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub const BASIC_TEMPLATE: &str = "\
Background information about a field experiment:
${Background}

Question: Based on the background above, which of the following conclusions did this experiment reach?
Option 1: ${Option1}
Option 2: ${Option2}
Option 3: ${Option3}

${Select}";

pub const COT_FIRST_TEMPLATE: &str = "\
Background information about a field experiment:
${Background}

Question: Based on the background above, which of the following conclusions did this experiment reach?
Option 1: ${Option1}
Option 2: ${Option2}
Option 3: ${Option3}

Before answering, think about the decisive elements of this experiment that determine which conclusion holds, and describe them. Do not give your answer yet.";

pub const COT_SECOND_TEMPLATE: &str = "\
Taking the decisive elements you identified into account, which of Option 1, Option 2 or Option 3 is the conclusion of this experiment?

${Select}";

pub const SELECT_INSTRUCTION: &str =
    "Instructions: choose exactly one option. Reply with the option number (1, 2 or 3) only.";

fn option_bindings<'a>(background: &'a str, options: &'a [String; 3]) -> [(&'static str, &'a str); 5] {
    [
        ("Background", background),
        ("Option1", &options[0]),
        ("Option2", &options[1]),
        ("Option3", &options[2]),
        ("Select", SELECT_INSTRUCTION),
    ]
}

pub fn build_basic_prompt(settings: &ExperimentSettings, options: &[String; 3]) -> String {
    let bg = settings.background_block();
    render(BASIC_TEMPLATE, &option_bindings(&bg, options)).expect("template is well-formed")
}

pub fn build_cot_prompts(settings: &ExperimentSettings, options: &[String; 3]) -> (String, String) {
    let bg = settings.background_block();
    let bindings = option_bindings(&bg, options);
    let first = render(COT_FIRST_TEMPLATE, &bindings[..4]).expect("template is well-formed");
    let second =
        render(COT_SECOND_TEMPLATE, &bindings[4..]).expect("template is well-formed");
    (first, second)
}

static OPTION_MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\boption\s*#?\s*([123])\b").unwrap());
static BARE_SLOT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\W*([123])\W*$").unwrap());

/// Resolves a reply to a slot: explicit slot mention, then a unique verbatim
/// option quote, else unparseable.
pub fn parse_choice(response: &str, options: &[String; 3]) -> ParsedChoice {
    let trimmed = response.trim();
    if trimmed.starts_with(REFUSAL_MARKER) {
        return ParsedChoice::Refused;
    }
    let mut slots: Vec<usize> = OPTION_MENTION
        .captures_iter(trimmed)
        .map(|c| c[1].parse::<usize>().unwrap() - 1)
        .collect();
    slots.sort_unstable();
    slots.dedup();
    if slots.len() == 1 {
        return ParsedChoice::from_slot(slots[0]);
    }
    if slots.is_empty() {
        if let Some(c) = BARE_SLOT.captures(trimmed) {
            return ParsedChoice::from_slot(c[1].parse::<usize>().unwrap() - 1);
        }
        let hay = normalize(trimmed);
        let hits: Vec<usize> = options
            .iter()
            .enumerate()
            .filter(|(_, o)| {
                let n = normalize(o);
                !n.is_empty() && hay.contains(&n)
            })
            .map(|(i, _)| i)
            .collect();
        if hits.len() == 1 {
            return ParsedChoice::from_slot(hits[0]);
        }
    }
    ParsedChoice::Unparseable
}

fn reply_text(reply: &Reply) -> String {
    reply.to_wire()
}

/// Runs one attempt in a fresh session.
pub fn run_attempt(
    gateway: &Gateway,
    role: &ProviderRole,
    settings: &ExperimentSettings,
    triple: &ConclusionTriple,
    config: &RunConfig,
    attempt_index: u32,
) -> Result<AttemptRecord, GatewayError> {
    let mut rng = attempt_rng(config.rng_seed, &triple.conclusion_id, attempt_index);
    let (options, permutation) = shuffle_options(triple, &mut rng);
    let mut session = gateway.open_session(role)?;
    session.require_role(Role::Predictor)?;
    let (reasoning, reply) = match config.strategy {
        Strategy::Basic => {
            let prompt = build_basic_prompt(settings, &options);
            (None, gateway.send(&mut session, &prompt, attempt_index)?)
        }
        Strategy::Cot => {
            let (first, second) = build_cot_prompts(settings, &options);
            let thought = gateway.send(&mut session, &first, attempt_index)?;
            if thought.is_refused() {
                (None, thought)
            } else {
                let answer = gateway.send(&mut session, &second, attempt_index)?;
                (Some(reply_text(&thought)), answer)
            }
        }
    };
    let raw_response = reply_text(&reply);
    let parsed_choice = match &reply {
        Reply::Refused(_) => ParsedChoice::Refused,
        Reply::Text(t) => parse_choice(t, &options),
    };
    Ok(AttemptRecord {
        conclusion_id: triple.conclusion_id.clone(),
        attempt_index,
        permutation,
        raw_response,
        reasoning,
        parsed_choice,
        correct: is_correct(parsed_choice, &permutation),
    })
}

/// Runs `config.repeats` attempts in parallel and scores them.
///
/// Provider failures within the budget are dropped from the record; beyond it
/// the conclusion is abandoned with the completed attempts attached. A missing
/// replay fixture aborts immediately.
pub fn run_conclusion(
    gateway: &Gateway,
    role: &ProviderRole,
    paper_id: &str,
    settings: &ExperimentSettings,
    triple: &ConclusionTriple,
    config: &RunConfig,
) -> Result<ConclusionRunResult, PredictError> {
    if config.repeats == 0 {
        return Err(PredictError::NoRepeats);
    }
    if role.role != Role::Predictor {
        return Err(GatewayError::RoleMismatch {
            expected: Role::Predictor,
            actual: role.role,
        }
        .into());
    }
    let outcomes: Vec<Result<AttemptRecord, GatewayError>> = (0..config.repeats)
        .into_par_iter()
        .map(|i| run_attempt(gateway, role, settings, triple, config, i))
        .collect();

    let mut attempts = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(a) => attempts.push(a),
            Err(e) if e.is_fixture_miss() || matches!(e, GatewayError::RoleMismatch { .. }) => {
                return Err(e.into())
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if failures.len() > config.attempt_failure_budget as usize || attempts.is_empty() {
        return Err(PredictError::BudgetExceeded {
            conclusion_id: triple.conclusion_id.clone(),
            failures: failures.len(),
            budget: config.attempt_failure_budget,
            last: failures.pop().unwrap_or_default(),
            partial: attempts,
        });
    }
    for f in &failures {
        log::warn!("{}: dropped failed attempt: {f}", triple.conclusion_id);
    }
    let accuracy = stats::conclusion_accuracy(&attempts)?;
    Ok(ConclusionRunResult {
        paper_id: paper_id.to_string(),
        conclusion_id: triple.conclusion_id.clone(),
        attempts,
        accuracy,
    })
}

/// Paper accuracy as the unweighted mean of its conclusion accuracies.
pub fn run_paper(paper_id: &str, results: &[ConclusionRunResult]) -> Result<PaperRunResult, PredictError> {
    if results.is_empty() {
        return Err(PredictError::EmptyPaper);
    }
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    Ok(PaperRunResult {
        paper_id: paper_id.to_string(),
        accuracy: stats::paper_accuracy(&accs)?,
        n_conclusions: results.len(),
    })
}
