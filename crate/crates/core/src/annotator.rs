//! Topic, sentiment and gender-favorability labels for each conclusion.
//!
//! Labels are encoded as in the regression: topics are percentages, sentiment
//! and favorability take the values −1, 0 and 1.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{Conclusion, ExperimentSettings};
use crate::gateway::{ChatSession, Gateway, GatewayError, ProviderRole, Reply, Role};
use crate::text::render;

pub const TOPIC_NAMES: [&str; 7] = [
    "Gender",
    "Ethnicity",
    "Social Norms",
    "Ethical Dilemmas",
    "Age",
    "Socioeconomic Status",
    "Other Topics",
];

/// Raw sums inside this window are rescaled to 100; anything else is re-asked.
pub const RENORMALIZE_WINDOW: (f64, f64) = (95.0, 105.0);

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl AnnotationError {
    pub fn is_fixture_miss(&self) -> bool {
        matches!(self, AnnotationError::Gateway(e) if e.is_fixture_miss())
    }
}

/// Percentages over the seven topics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TopicVector {
    pub gender: f64,
    pub ethnicity: f64,
    pub social_norms: f64,
    pub ethical_dilemmas: f64,
    pub age: f64,
    pub socioeconomic_status: f64,
    pub other_topics: f64,
}

impl TopicVector {
    pub fn from_array(v: [f64; 7]) -> Self {
        Self {
            gender: v[0],
            ethnicity: v[1],
            social_norms: v[2],
            ethical_dilemmas: v[3],
            age: v[4],
            socioeconomic_status: v[5],
            other_topics: v[6],
        }
    }

    /// Components in [`TOPIC_NAMES`] order.
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.gender,
            self.ethnicity,
            self.social_norms,
            self.ethical_dilemmas,
            self.age,
            self.socioeconomic_status,
            self.other_topics,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    /// Rescales to sum to 100. `None` when the sum is zero.
    pub fn renormalized(&self) -> Option<Self> {
        let s = self.sum();
        if s <= 0.0 || !s.is_finite() {
            return None;
        }
        Some(Self::from_array(self.as_array().map(|v| v * 100.0 / s)))
    }

    pub fn is_valid(&self) -> bool {
        let a = self.as_array();
        a.iter().all(|v| (0.0..=100.0).contains(v)) && (self.sum() - 100.0).abs() < 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub fn encode(self) -> i8 {
        match self {
            Sentiment::Negative => -1,
            Sentiment::Neutral => 0,
            Sentiment::Positive => 1,
        }
    }

    pub fn decode(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Sentiment::Negative),
            0 => Some(Sentiment::Neutral),
            1 => Some(Sentiment::Positive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderFavorability {
    /// Favorable to males or detrimental to females.
    ProMale,
    Neutral,
    /// Favorable to females or detrimental to males.
    ProFemale,
}

impl GenderFavorability {
    pub fn encode(self) -> i8 {
        match self {
            GenderFavorability::ProMale => -1,
            GenderFavorability::Neutral => 0,
            GenderFavorability::ProFemale => 1,
        }
    }

    pub fn decode(v: i8) -> Option<Self> {
        match v {
            -1 => Some(GenderFavorability::ProMale),
            0 => Some(GenderFavorability::Neutral),
            1 => Some(GenderFavorability::ProFemale),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationStatus {
    Labeled,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub conclusion_id: String,
    pub status: AnnotationStatus,
    pub topics: Option<TopicVector>,
    /// Sum of the percentages as returned, before rescaling.
    pub raw_topic_sum: Option<f64>,
    pub sentiment: Option<i8>,
    pub gender_favorability: Option<i8>,
    pub refusal_reason: Option<String>,
}

impl AnnotationRecord {
    pub fn refused(conclusion_id: &str, reason: impl Into<String>) -> Self {
        Self {
            conclusion_id: conclusion_id.to_string(),
            status: AnnotationStatus::Refused,
            topics: None,
            raw_topic_sum: None,
            sentiment: None,
            gender_favorability: None,
            refusal_reason: Some(reason.into()),
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.status == AnnotationStatus::Labeled
    }
}

/// Result of one labeling call.
#[derive(Debug, Clone, PartialEq)]
pub enum Label<T> {
    Value(T),
    Refused(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicLabel {
    pub topics: TopicVector,
    pub raw_sum: f64,
}

pub const TOPIC_TEMPLATE: &str = "\
Here is the background of a field experiment and one of its conclusions.

${Background}

Conclusion: ${Conclusion}

Under the context of this experiment, label the topic components of the conclusion as percentages summing to 100 across these topics: Gender, Ethnicity, Social Norms, Ethical Dilemmas, Age, Socioeconomic Status, Other Topics. Reply with one line per topic in the form \"Topic: percentage\".";

pub const SENTIMENT_TEMPLATE: &str = "\
Here is the background of a field experiment and one of its conclusions.

${Background}

Conclusion: ${Conclusion}

Is the sentiment of this conclusion positive, negative, or neutral? Reply with one word.";

pub const FAVORABILITY_TEMPLATE: &str = "\
Here is the background of a field experiment and one of its gender-related conclusions.

${Background}

Conclusion: ${Conclusion}

Is this conclusion favorable to females or detrimental to males (answer \"pro-female\"), favorable to males or detrimental to females (answer \"pro-male\"), or neither (answer \"neutral\")? Reply with one of those answers only.";

pub const REASK_TEMPLATE: &str =
    "Your answer could not be read. Please answer again, strictly in the requested format.";

static TOPIC_ENTRY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(gender|ethnicity|social[\s_-]*norms|ethical[\s_-]*dilemmas|age|socio[\s_-]*economic(?:[\s_-]*status)?|others?(?:[\s_-]*topics?)?)\b\s*[:=\-]?\s*(\d+(?:\.\d+)?)\s*%?",
    )
    .unwrap()
});

fn topic_index(name: &str) -> usize {
    let n = name.to_lowercase();
    if n.starts_with("gender") {
        0
    } else if n.starts_with("ethnic") {
        1
    } else if n.starts_with("social") {
        2
    } else if n.starts_with("ethical") {
        3
    } else if n == "age" {
        4
    } else if n.starts_with("socio") {
        5
    } else {
        6
    }
}

/// Parses named percentages; unnamed topics count as zero.
///
/// Returns `None` when no topic is named or a topic is named twice.
pub fn parse_topics(text: &str) -> Option<TopicVector> {
    let mut values = [0.0; 7];
    let mut seen = [false; 7];
    for cap in TOPIC_ENTRY.captures_iter(text) {
        let i = topic_index(&cap[1]);
        if seen[i] {
            return None;
        }
        seen[i] = true;
        values[i] = cap[2].parse().ok()?;
    }
    seen.iter().any(|s| *s).then(|| TopicVector::from_array(values))
}

/// Accepts a parsed vector if its sum lies in the renormalization window.
pub fn accept_topics(raw: &TopicVector) -> Option<TopicLabel> {
    let s = raw.sum();
    if s < RENORMALIZE_WINDOW.0 || s > RENORMALIZE_WINDOW.1 {
        return None;
    }
    if raw.as_array().iter().any(|v| *v > 100.0) {
        return None;
    }
    Some(TopicLabel {
        topics: raw.renormalized()?,
        raw_sum: s,
    })
}

static SENTIMENT_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(positive|neutral|negative)\b").unwrap());

pub fn parse_sentiment(text: &str) -> Option<Sentiment> {
    let mut found = None;
    for cap in SENTIMENT_WORD.captures_iter(text) {
        let s = match cap[1].to_lowercase().as_str() {
            "positive" => Sentiment::Positive,
            "negative" => Sentiment::Negative,
            _ => Sentiment::Neutral,
        };
        match found {
            None => found = Some(s),
            Some(prev) if prev == s => {}
            Some(_) => return None,
        }
    }
    found
}

static PRO_FEMALE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:pro-?\s?females?|anti-?\s?males?|favou?rable (?:to|for) (?:females?|women)|detrimental (?:to|for) (?:males?|men)|unfavou?rable (?:to|for) (?:males?|men))\b").unwrap()
});
static PRO_MALE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:pro-?\s?males?|anti-?\s?females?|favou?rable (?:to|for) (?:males?|men)|detrimental (?:to|for) (?:females?|women)|unfavou?rable (?:to|for) (?:females?|women))\b").unwrap()
});
static NEUTRAL_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bneutral\b").unwrap());

pub fn parse_favorability(text: &str) -> Option<GenderFavorability> {
    let hits = [
        (PRO_FEMALE.is_match(text), GenderFavorability::ProFemale),
        (PRO_MALE.is_match(text), GenderFavorability::ProMale),
        (NEUTRAL_WORD.is_match(text), GenderFavorability::Neutral),
    ];
    let mut matched = hits.iter().filter(|(m, _)| *m).map(|(_, v)| *v);
    match (matched.next(), matched.next()) {
        (Some(v), None) => Some(v),
        _ => None,
    }
}

/// Sends `prompt`, then re-asks once in the same session if `parse` fails.
fn ask_with_reask<T>(
    gateway: &Gateway,
    session: &mut ChatSession,
    prompt: &str,
    what: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Label<T>, AnnotationError> {
    session.require_role(Role::Preprocessor)?;
    let mut message = prompt.to_string();
    for attempt in 0..2u32 {
        match gateway.send(session, &message, attempt)? {
            Reply::Refused(reason) => return Ok(Label::Refused(reason)),
            Reply::Text(t) => {
                if let Some(v) = parse(&t) {
                    return Ok(Label::Value(v));
                }
                log::debug!("unreadable {what} answer: {t:?}");
            }
        }
        message = REASK_TEMPLATE.to_string();
    }
    Ok(Label::Refused(format!("unreadable {what} answer after re-ask")))
}

fn context_prompt(template: &str, conclusion: &Conclusion, settings: &ExperimentSettings) -> String {
    render(
        template,
        &[
            ("Background", &settings.background_block()),
            ("Conclusion", &conclusion.text),
        ],
    )
    .expect("template is well-formed")
}

pub fn label_topics(
    gateway: &Gateway,
    session: &mut ChatSession,
    conclusion: &Conclusion,
    settings: &ExperimentSettings,
) -> Result<Label<TopicLabel>, AnnotationError> {
    let prompt = context_prompt(TOPIC_TEMPLATE, conclusion, settings);
    ask_with_reask(gateway, session, &prompt, "topic", |t| {
        parse_topics(t).and_then(|v| accept_topics(&v))
    })
}

pub fn label_sentiment(
    gateway: &Gateway,
    session: &mut ChatSession,
    conclusion: &Conclusion,
    settings: &ExperimentSettings,
) -> Result<Label<Sentiment>, AnnotationError> {
    let prompt = context_prompt(SENTIMENT_TEMPLATE, conclusion, settings);
    ask_with_reask(gateway, session, &prompt, "sentiment", parse_sentiment)
}

/// Skipped with a neutral label when the conclusion has no gender component.
pub fn label_gender_favorability(
    gateway: &Gateway,
    session: &mut ChatSession,
    conclusion: &Conclusion,
    settings: &ExperimentSettings,
    topics: &TopicVector,
) -> Result<Label<GenderFavorability>, AnnotationError> {
    if topics.gender <= 0.0 {
        return Ok(Label::Value(GenderFavorability::Neutral));
    }
    let prompt = context_prompt(FAVORABILITY_TEMPLATE, conclusion, settings);
    ask_with_reask(gateway, session, &prompt, "favorability", parse_favorability)
}

/// Runs the three labeling calls in sequence, each in a fresh session.
pub fn annotate_conclusion(
    gateway: &Gateway,
    role: &ProviderRole,
    conclusion: &Conclusion,
    settings: &ExperimentSettings,
) -> Result<AnnotationRecord, AnnotationError> {
    let id = conclusion.id.as_str();
    let mut session = gateway.open_session(role)?;
    let topic = match label_topics(gateway, &mut session, conclusion, settings)? {
        Label::Value(t) => t,
        Label::Refused(r) => return Ok(AnnotationRecord::refused(id, format!("topics: {r}"))),
    };
    let mut session = gateway.open_session(role)?;
    let sentiment = match label_sentiment(gateway, &mut session, conclusion, settings)? {
        Label::Value(s) => s,
        Label::Refused(r) => return Ok(AnnotationRecord::refused(id, format!("sentiment: {r}"))),
    };
    let mut session = gateway.open_session(role)?;
    let favorability =
        match label_gender_favorability(gateway, &mut session, conclusion, settings, &topic.topics)? {
            Label::Value(f) => f,
            Label::Refused(r) => {
                return Ok(AnnotationRecord::refused(id, format!("favorability: {r}")))
            }
        };
    Ok(AnnotationRecord {
        conclusion_id: id.to_string(),
        status: AnnotationStatus::Labeled,
        topics: Some(topic.topics),
        raw_topic_sum: Some(topic.raw_sum),
        sentiment: Some(sentiment.encode()),
        gender_favorability: Some(favorability.encode()),
        refusal_reason: None,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::gateway::ScriptedProvider;

    fn pre() -> ProviderRole {
        ProviderRole::new(Role::Preprocessor, "pre")
    }

    fn gw(p: ScriptedProvider) -> Gateway {
        Gateway::builder().bind(pre(), Arc::new(p)).build().unwrap()
    }

    fn conclusion() -> Conclusion {
        Conclusion {
            id: "p-c1".into(),
            text: "Women receive fewer callbacks than men".into(),
            paper_id: "p".into(),
            dequantified: false,
        }
    }

    fn settings() -> ExperimentSettings {
        ExperimentSettings {
            goal: "Measure hiring discrimination".into(),
            treatments: "Resumes with female or male names".into(),
            duration: "Six months".into(),
            outcomes: "Callbacks".into(),
            participants: "Employers".into(),
            workflow: "Send resumes, record callbacks".into(),
        }
    }

    fn topics_via(reply: &str) -> Label<TopicLabel> {
        let g = gw(ScriptedProvider::constant(reply));
        let mut s = g.open_session(&pre()).unwrap();
        label_topics(&g, &mut s, &conclusion(), &settings()).unwrap()
    }

    #[test]
    fn topics_with_others_alias() {
        match topics_via("gender 50, ethnicity 50, others 0") {
            Label::Value(t) => {
                assert_eq!(t.topics.as_array(), [50.0, 50.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
                assert_eq!(t.raw_sum, 100.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn topics_sum_98_renormalized() {
        let reply = "Gender: 49%\nEthnicity: 0%\nSocial Norms: 0%\nEthical Dilemmas: 0%\nAge: 0%\nSocioeconomic Status: 49%\nOther Topics: 0%";
        match topics_via(reply) {
            Label::Value(t) => {
                assert!(t.topics.is_valid());
                assert!((t.topics.gender - 50.0).abs() < 1e-12);
                assert!((t.topics.socioeconomic_status - 50.0).abs() < 1e-12);
                assert_eq!(t.raw_sum, 98.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn topics_refusal_and_bad_sum() {
        assert!(matches!(
            topics_via("[refused] content policy"),
            Label::Refused(r) if r == "content policy"
        ));
        let p = ScriptedProvider::sequence(["gender 50, age 20", "gender 60, age 40"]);
        let g = gw(p);
        let mut s = g.open_session(&pre()).unwrap();
        match label_topics(&g, &mut s, &conclusion(), &settings()).unwrap() {
            Label::Value(t) => assert_eq!(t.topics.age, 40.0),
            other => panic!("{other:?}"),
        }
        // re-ask stays in the same session
        assert_eq!(s.turns(), 2);
        assert!(matches!(topics_via("gender 10"), Label::Refused(_)));
    }

    #[test]
    fn age_not_matched_inside_words() {
        assert_eq!(parse_topics("percentage 30"), None);
    }

    #[test]
    fn sentiment_mapping() {
        let run = |r: &str| {
            let g = gw(ScriptedProvider::constant(r));
            let mut s = g.open_session(&pre()).unwrap();
            label_sentiment(&g, &mut s, &conclusion(), &settings()).unwrap()
        };
        assert_eq!(run("positive"), Label::Value(Sentiment::Positive));
        assert_eq!(run("Neutral."), Label::Value(Sentiment::Neutral));
        assert_eq!(run("negative").clone(), Label::Value(Sentiment::Negative));
        assert!(matches!(run("somewhat good"), Label::Refused(_)));
        assert_eq!(Sentiment::Positive.encode(), 1);
        assert_eq!(Sentiment::Neutral.encode(), 0);
    }

    #[test]
    fn favorability_mapping() {
        assert_eq!(parse_favorability("favorable to females"), Some(GenderFavorability::ProFemale));
        assert_eq!(parse_favorability("detrimental to males"), Some(GenderFavorability::ProFemale));
        assert_eq!(parse_favorability("pro-male"), Some(GenderFavorability::ProMale));
        assert_eq!(parse_favorability("unfavorable to females"), Some(GenderFavorability::ProMale));
        assert_eq!(parse_favorability("neutral"), Some(GenderFavorability::Neutral));
        assert_eq!(parse_favorability("it depends"), None);
        assert_eq!(GenderFavorability::ProFemale.encode(), 1);
    }

    #[test]
    fn favorability_skipped_without_gender() {
        let p = ScriptedProvider::constant("pro-female");
        let g = gw(p);
        let mut s = g.open_session(&pre()).unwrap();
        let t = TopicVector::from_array([0.0, 100.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let out = label_gender_favorability(&g, &mut s, &conclusion(), &settings(), &t).unwrap();
        assert_eq!(out, Label::Value(GenderFavorability::Neutral));
        assert_eq!(s.turns(), 0);
    }

    #[test]
    fn full_annotation_and_refusal() {
        let p = ScriptedProvider::from_fn(|req| {
            let prompt = req.prompt();
            let text = if prompt.contains("topic components") {
                "Gender: 80\nOther Topics: 20"
            } else if prompt.contains("sentiment") {
                "negative"
            } else {
                "pro-male"
            };
            Ok(Reply::from_text(text))
        });
        let g = gw(p);
        let rec = annotate_conclusion(&g, &pre(), &conclusion(), &settings()).unwrap();
        assert!(rec.is_labeled());
        assert_eq!(rec.sentiment, Some(-1));
        assert_eq!(rec.gender_favorability, Some(-1));

        let g = gw(ScriptedProvider::constant("[refused] no"));
        let rec = annotate_conclusion(&g, &pre(), &conclusion(), &settings()).unwrap();
        assert_eq!(rec.status, AnnotationStatus::Refused);
        assert!(rec.topics.is_none() && rec.sentiment.is_none());
    }

    proptest! {
        #[test]
        fn encodings_round_trip(v in -1i8..=1) {
            prop_assert_eq!(Sentiment::decode(v).unwrap().encode(), v);
            prop_assert_eq!(GenderFavorability::decode(v).unwrap().encode(), v);
        }

        #[test]
        fn accepted_vectors_are_valid(parts in proptest::collection::vec(0.0f64..40.0, 7)) {
            let raw = TopicVector::from_array(parts.clone().try_into().unwrap());
            match accept_topics(&raw) {
                Some(t) => {
                    prop_assert!(t.topics.is_valid());
                    let s = raw.sum();
                    prop_assert!((95.0..=105.0).contains(&s));
                    for (a, b) in t.topics.as_array().iter().zip(raw.as_array()) {
                        prop_assert!((a - b * 100.0 / s).abs() < 1e-9);
                    }
                }
                None => {
                    let s = raw.sum();
                    prop_assert!(!(95.0..=105.0).contains(&s));
                }
            }
        }
    }
}
