//! A small synthetic corpus and a rule-based stand-in for both model roles.
//!
//! The simulated provider recognises each prompt by its template text and
//! answers deterministically from the request key, so recorded fixtures are
//! stable. It is used to build the bundled replay fixtures and in tests.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};

use crate::annotator::{FAVORABILITY_TEMPLATE, SENTIMENT_TEMPLATE, TOPIC_TEMPLATE};
use crate::corpus::{PaperEntry, PaperStatus, STAGE1_TEMPLATE, STAGE2_TEMPLATE};
use crate::extraction::{DEQUANTIFY_TEMPLATE, EXTRACTION_TEMPLATE, SPLIT_TEMPLATE};
use crate::gateway::{CompletionRequest, Provider, ProviderError, Reply, REFUSAL_MARKER};
use crate::predictor::{BASIC_TEMPLATE, COT_FIRST_TEMPLATE};
use crate::text::normalize;
use crate::variantgen::{ConclusionTriple, REVERSED_TEMPLATE, UNRELATED_TEMPLATE};

struct PaperSpec {
    id: &'static str,
    title: &'static str,
    abstract_text: &'static str,
    journal: &'static str,
    year: i32,
    goal: &'static str,
    treatments: &'static str,
    duration: &'static str,
    outcomes: &'static str,
    participants: &'static str,
    workflow: &'static str,
    findings: &'static [&'static str],
    /// Extra text appended to the body, used to trigger the stage-two check.
    note: &'static str,
}

const PAPERS: &[PaperSpec] = &[
    PaperSpec {
        id: "syn-housing",
        title: "Housing Vouchers and Work: Evidence from a Field Experiment",
        abstract_text: "We randomly assign housing vouchers by lottery among low-income families and follow their employment in administrative records.",
        journal: "Journal of Synthetic Economics",
        year: 2019,
        goal: "Explore the impact of housing assistance on labor supply.",
        treatments: "Families either received a housing voucher through the lottery or remained on the waiting list.",
        duration: "Four years.",
        outcomes: "Quarterly employment and earnings.",
        participants: "Low-income families on a public housing waiting list in a large city.",
        workflow: "A lottery allocated vouchers, after which employment and earnings were tracked each quarter in administrative records.",
        findings: &[
            "Receiving housing vouchers reduces quarterly employment rates.",
            "Receiving housing vouchers lowers quarterly earnings by 10 percent.",
            "Voucher receipt increases residential moves to low-poverty neighborhoods.",
            "Voucher receipt improves the housing quality reported by mothers.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-callback",
        title: "Names on Resumes: A Field Experiment on Hiring",
        abstract_text: "We randomly assign female and male names to otherwise identical resumes sent to employers.",
        journal: "Synthetic Labor Review",
        year: 2020,
        goal: "Measure gender discrimination in hiring.",
        treatments: "Resumes carried either a female or a male name.",
        duration: "Six months.",
        outcomes: "Callbacks for interviews.",
        participants: "Employers posting administrative job openings.",
        workflow: "Matched resumes were sent in pairs to each opening and callbacks were recorded by phone and email.",
        findings: &[
            "A female name on a resume increases callbacks from employers in female-dominated occupations.",
            "A female name on a resume decreases callbacks for technical positions.",
            "Listing parenthood lowers callbacks for mothers.",
            "Listing parenthood raises callbacks for fathers.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-norms",
        title: "Neighbors and Energy Use: A Randomized Controlled Trial",
        abstract_text: "Households were randomly assigned to receive letters comparing their electricity use with that of their neighbors.",
        journal: "Journal of Synthetic Behavior",
        year: 2021,
        goal: "Test whether social comparisons change household energy use.",
        treatments: "Households received monthly letters comparing their use with neighbors or no letters.",
        duration: "Two years.",
        outcomes: "Monthly electricity consumption.",
        participants: "Residential utility customers in a mid-sized town.",
        workflow: "Letters were mailed each month and meter readings were collected by the utility.",
        findings: &[
            "Neighbor comparison letters reduce household electricity consumption.",
            "Neighbor comparison letters increase energy use among households already below the norm.",
            "Adding a smiling face to the letter narrows the rebound among low users.",
            "Repeated letters boost the persistence of savings after mailings stop.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-honesty",
        title: "Reminders and Honesty in Tax Reporting: A Natural Field Experiment",
        abstract_text: "Taxpayers were randomly assigned to receive moral reminders, deterrence letters or no letter.",
        journal: "Synthetic Public Finance",
        year: 2022,
        goal: "Study how moral appeals and audit threats affect honest reporting.",
        treatments: "Taxpayers received a moral appeal letter, an audit threat letter, or no letter.",
        duration: "One tax year.",
        outcomes: "Reported taxable income.",
        participants: "Self-employed taxpayers in one region.",
        workflow: "Letters were mailed before the filing deadline and filed returns were compared with the prior year.",
        findings: &[
            "Audit threat letters increase reported income.",
            "Moral appeal letters raise honest reporting among small businesses.",
            "Audit threat letters lower the share of charitable deductions claimed.",
            "Participants in both arms report similar satisfaction with the tax office.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-seniors",
        title: "Defaults and Retirement Saving: A Field Experiment with Older Workers",
        abstract_text: "Employees were randomly assigned to automatic enrollment or standard opt-in enrollment in a retirement plan.",
        journal: "Journal of Synthetic Economics",
        year: 2023,
        goal: "Examine how default options shape retirement saving.",
        treatments: "Employees were enrolled by default or had to opt in.",
        duration: "Three years.",
        outcomes: "Plan participation and contribution rates.",
        participants: "Employees of a national retailer, including many older workers.",
        workflow: "New hires were assigned an enrollment regime and contribution records were collected from payroll.",
        findings: &[
            "Automatic enrollment raises plan participation among young employees.",
            "Automatic enrollment reduces average contribution rates by two percentage points.",
            "Default enrollment increases saving among older workers near retirement.",
            "Automatic enrollment lowers the use of hardship withdrawals.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-ethnic",
        title: "Mentoring for Immigrant Students: A Field Experiment",
        abstract_text: "Schools randomly assign immigrant and ethnic minority students to mentoring programs.",
        journal: "Synthetic Education Quarterly",
        year: 2024,
        goal: "Assess whether mentoring supports the school progress of immigrant students.",
        treatments: "Students were offered a volunteer mentor or the usual school support.",
        duration: "One school year.",
        outcomes: "Grades, attendance and track choice.",
        participants: "Secondary school students from immigrant families in three cities.",
        workflow: "Mentors met students weekly and school records were collected at the end of the year.",
        findings: &[
            "Mentoring increases attendance among immigrant students.",
            "Mentoring raises grades for ethnic minority girls.",
            "Mentoring improves the likelihood of choosing an academic track.",
            "Mentoring reduces disciplinary referrals among older students.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-charity",
        title: "Matching Grants and Charitable Giving: A Field Experiment",
        abstract_text: "Potential donors were randomly assigned to letters with different matching ratios.",
        journal: "Synthetic Public Finance",
        year: 2024,
        goal: "Understand how matching offers affect donations.",
        treatments: "Letters offered no match or a matching grant at different ratios.",
        duration: "One fundraising season.",
        outcomes: "Donation rates and amounts.",
        participants: "Prior donors of a nonprofit organization.",
        workflow: "Letters were mailed in one wave and gifts were recorded for the following two months.",
        findings: &[
            "A matching grant increases the probability of giving.",
            "Larger matching ratios lower the average gift size.",
            "Matching offers boost giving among donors in politically aligned areas.",
            "Matching offers raise revenue per letter by 19 percent.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-cash",
        title: "Unconditional Cash Transfers and Wellbeing: A Randomized Controlled Trial",
        abstract_text: "Villages were randomly assigned to receive unconditional cash transfers or no transfer.",
        journal: "Synthetic Development Review",
        year: 2023,
        goal: "Evaluate the welfare effects of unconditional cash transfers.",
        treatments: "Households in treated villages received monthly cash transfers.",
        duration: "Two years.",
        outcomes: "Consumption, assets and psychological wellbeing.",
        participants: "Poor rural households in two districts.",
        workflow: "Transfers were paid through mobile money and surveys were fielded at baseline and endline.",
        findings: &[
            "Cash transfers increase household consumption.",
            "Cash transfers raise asset holdings among women-headed households.",
            "Cash transfers reduce reported stress among recipients.",
            "Cash transfers widen the income gap between treated and neighboring villages.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-leak",
        title: "Text Message Reminders and Vaccination: A Field Experiment",
        abstract_text: "Patients were randomly assigned to receive text message reminders or no reminder.",
        journal: "Synthetic Health Economics",
        year: 2022,
        goal: "Test whether reminders raise vaccination uptake.",
        treatments: "Patients received text reminders or none.",
        duration: "Three months.",
        outcomes: "Vaccination within the season.",
        participants: "Adult patients of a health network.",
        workflow: "Reminders were sent weekly. Text reminders increase vaccination rates among adult patients.",
        findings: &[
            "Text reminders increase vaccination rates among adult patients.",
            "Framing the reminder as reserved for the patient raises uptake.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-rejected",
        title: "Microfinance Access and Business Growth: A Field Experiment",
        abstract_text: "Neighborhoods were randomly assigned to gain access to a microfinance branch.",
        journal: "Synthetic Development Review",
        year: 2021,
        goal: "Measure how access to credit affects small businesses.",
        treatments: "Neighborhoods received a new branch or not.",
        duration: "Eighteen months.",
        outcomes: "Business creation and profits.",
        participants: "Households in urban neighborhoods.",
        workflow: "Branches opened in treated neighborhoods and surveys were fielded after eighteen months.",
        findings: &[
            "Microfinance access increases business creation.",
            "Microfinance access raises profits of existing businesses.",
        ],
        note: "",
    },
    PaperSpec {
        id: "syn-lab",
        title: "Field Experiment Methods Meet the Laboratory: Trust Games with Students",
        abstract_text: "Students were randomly assigned to roles in trust games.",
        journal: "Synthetic Behavior Letters",
        year: 2020,
        goal: "Study trust among students.",
        treatments: "Students played as senders or receivers.",
        duration: "One afternoon.",
        outcomes: "Amounts sent and returned.",
        participants: "University students.",
        workflow: "Sessions were run on computers.",
        findings: &["Anonymity reduces amounts returned."],
        note: "All sessions took place in a university laboratory.",
    },
    PaperSpec {
        id: "syn-review",
        title: "Twenty Years of Field Experiments in Development: A Review",
        abstract_text: "We review the field experiment literature and discuss external validity.",
        journal: "Synthetic Surveys",
        year: 2022,
        goal: "Summarize the literature.",
        treatments: "None.",
        duration: "Not applicable.",
        outcomes: "Not applicable.",
        participants: "Not applicable.",
        workflow: "Literature search.",
        findings: &["Replication increases confidence in results."],
        note: "",
    },
    PaperSpec {
        id: "syn-theory",
        title: "A Theory of Reference-Dependent Labor Supply",
        abstract_text: "We develop a model of labor supply with reference points.",
        journal: "Synthetic Theory",
        year: 2019,
        goal: "Model labor supply.",
        treatments: "None.",
        duration: "Not applicable.",
        outcomes: "Not applicable.",
        participants: "Not applicable.",
        workflow: "Formal analysis.",
        findings: &["Reference points increase effort near targets."],
        note: "",
    },
];

/// Paper ids in the synthetic corpus that should be rejected after the
/// manual screening.
pub const MANUAL_REJECT: &str = "syn-rejected";

fn paper_body(p: &PaperSpec) -> String {
    let mut body = format!(
        "{title}\n\nAbstract. {abs}\n\nObjective. {goal}\n\nDesign. {treat}\n\nTimeline. {dur}\n\nMeasures. {out}\n\nSample. {part}\n\nProcedure. {work}\n\nFindings. {find}\n",
        title = p.title,
        abs = p.abstract_text,
        goal = p.goal,
        treat = p.treatments,
        dur = p.duration,
        out = p.outcomes,
        part = p.participants,
        work = p.workflow,
        find = p.findings.join(" "),
    );
    if !p.note.is_empty() {
        body.push_str(&format!("\nNote. {}\n", p.note));
    }
    body
}

/// The bundled synthetic corpus, in file order.
pub fn synthetic_corpus() -> Vec<PaperEntry> {
    PAPERS
        .iter()
        .map(|p| PaperEntry {
            id: p.id.to_string(),
            title: p.title.to_string(),
            abstract_text: p.abstract_text.to_string(),
            full_text: paper_body(p),
            journal: p.journal.to_string(),
            year: p.year,
            status: PaperStatus::Candidate,
            manual_reason: None,
        })
        .collect()
}

fn h64(parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// True when every literal fragment of `template` occurs in `prompt`, in order.
pub fn matches_template(prompt: &str, template: &str) -> bool {
    static PLACEHOLDER: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"\$\{[A-Za-z0-9_]+\}").unwrap());
    let mut rest = prompt;
    for frag in PLACEHOLDER.split(template) {
        match rest.find(frag) {
            Some(i) => rest = &rest[i + frag.len()..],
            None => return false,
        }
    }
    true
}

const DIRECTIONS: [(&str, &str); 20] = [
    ("increases", "decreases"),
    ("decreases", "increases"),
    ("raises", "lowers"),
    ("lowers", "raises"),
    ("reduces", "increases"),
    ("improves", "worsens"),
    ("worsens", "improves"),
    ("boosts", "reduces"),
    ("narrows", "widens"),
    ("widens", "narrows"),
    ("increase", "decrease"),
    ("decrease", "increase"),
    ("raise", "lower"),
    ("lower", "raise"),
    ("reduce", "increase"),
    ("improve", "worsen"),
    ("worsen", "improve"),
    ("boost", "reduce"),
    ("narrow", "widen"),
    ("widen", "narrow"),
];

const UPWARD: [&str; 10] = [
    "increases", "raises", "improves", "boosts", "narrows", "increase", "raise", "improve", "boost",
    "narrow",
];

fn find_direction(text: &str) -> Option<(usize, &'static str, &'static str)> {
    static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z]+").unwrap());
    WORD.find_iter(text).find_map(|m| {
        DIRECTIONS
            .iter()
            .find(|(w, _)| *w == m.as_str())
            .map(|(w, r)| (m.start(), *w, *r))
    })
}

static MAGNITUDE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\s+by\s+(?:\d+(?:\.\d+)?|one|two|three|four|five|ten)\s+(?:percent(?:age points)?|points)")
        .unwrap()
});

/// The simulated model's dequantification rule.
pub fn sim_dequantify(text: &str) -> String {
    MAGNITUDE.replace_all(text, "").into_owned()
}

/// The simulated model's reversal rule: swap the first direction word.
pub fn sim_reverse(text: &str) -> String {
    match find_direction(text) {
        Some((at, word, rev)) => format!("{}{}{}", &text[..at], rev, &text[at + word.len()..]),
        None => text.to_string(),
    }
}

/// The simulated model's unrelated-variant rule.
pub fn sim_unrelated(text: &str) -> String {
    let t = text.trim().trim_end_matches('.');
    match find_direction(t) {
        Some((at, word, _)) => {
            let subject = t[..at].trim();
            let object = t[at + word.len()..].trim();
            let mut chars = subject.chars();
            let subject = match chars.next() {
                Some(c) => c.to_lowercase().collect::<String>() + chars.as_str(),
                None => String::new(),
            };
            format!("There is no relationship between {subject} and {object}.")
        }
        None => t.to_string(),
    }
}

fn section<'a>(text: &'a str, heading: &str) -> &'a str {
    let marker = format!("\n{heading}. ");
    text.find(&marker)
        .map(|i| {
            let rest = &text[i + marker.len()..];
            rest.split("\n\n").next().unwrap_or("").trim()
        })
        .unwrap_or("")
}

fn split_sentences(paragraph: &str) -> Vec<String> {
    paragraph
        .split_inclusive(". ")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn after<'a>(prompt: &'a str, marker: &str) -> &'a str {
    prompt
        .find(marker)
        .map(|i| prompt[i + marker.len()..].trim())
        .unwrap_or("")
}

fn line_after<'a>(prompt: &'a str, marker: &str) -> &'a str {
    after(prompt, marker).lines().next().unwrap_or("").trim()
}

const TOPIC_KEYWORDS: [&[&str]; 6] = [
    &["female", "women", "mothers", "fathers", "girls", "gender", "male name", "parenthood"],
    &["ethnic", "immigrant", "minority"],
    &["neighbor", "norm", "smiling", "peer"],
    &["honest", "audit", "moral", "charitable", "giving", "gift", "donor"],
    &["older", "young", "retirement", "students", "girls"],
    &["income", "earnings", "cash", "poverty", "consumption", "assets", "employment", "saving", "contribution", "housing", "revenue"],
];

/// Rule-based provider answering every pipeline prompt.
pub struct SimulatedProvider {
    truths: HashSet<String>,
}

impl SimulatedProvider {
    /// Knows the true (dequantified) conclusions of `corpus`.
    pub fn new(corpus: &[PaperEntry]) -> Self {
        let truths = corpus
            .iter()
            .flat_map(|p| split_sentences(section(&p.full_text, "Findings")))
            .map(|s| normalize(&sim_dequantify(&s)))
            .collect();
        Self { truths }
    }

    /// Knows the originals of the given triples.
    pub fn for_triples(triples: &[ConclusionTriple]) -> Self {
        Self {
            truths: triples.iter().map(|t| normalize(&t.original)).collect(),
        }
    }

    fn answer(&self, req: &CompletionRequest<'_>) -> String {
        let first = req.transcript[0].text.as_str();
        let turn = req.transcript.len();
        if matches_template(first, STAGE1_TEMPLATE) {
            let abs = line_after(first, "Abstract: ");
            return if abs.contains("randomly") { "Yes." } else { "No." }.into();
        }
        if matches_template(first, STAGE2_TEMPLATE) {
            return if first.contains("laboratory") {
                "No, the study was run in a laboratory.".into()
            } else {
                "Yes, this is a field experiment.".into()
            };
        }
        if matches_template(first, EXTRACTION_TEMPLATE) {
            let paper = after(first, "\nPaper:\n");
            let paper = format!("\n{paper}");
            return format!(
                "A. Goal: {}\nB. Treatments: {}\nC. Duration: {}\nD. Outcomes: {}\nE. Participants: {}\nF. Workflow: {}\nG. Conclusions: {}",
                section(&paper, "Objective"),
                section(&paper, "Design"),
                section(&paper, "Timeline"),
                section(&paper, "Measures"),
                section(&paper, "Sample"),
                section(&paper, "Procedure"),
                section(&paper, "Findings"),
            );
        }
        if matches_template(first, SPLIT_TEMPLATE) {
            let para = after(first, "\nParagraph:\n");
            return split_sentences(para)
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{}. {s}", i + 1))
                .collect::<Vec<_>>()
                .join("\n");
        }
        if matches_template(first, DEQUANTIFY_TEMPLATE) {
            return sim_dequantify(line_after(first, "Conclusion: "));
        }
        if matches_template(first, REVERSED_TEMPLATE) {
            return sim_reverse(line_after(first, "Conclusion: "));
        }
        if matches_template(first, UNRELATED_TEMPLATE) {
            return sim_unrelated(line_after(first, "Conclusion: "));
        }
        if matches_template(first, TOPIC_TEMPLATE) {
            return self.topics(line_after(first, "Conclusion: "), turn);
        }
        if matches_template(first, SENTIMENT_TEMPLATE) {
            return sentiment(line_after(first, "Conclusion: "));
        }
        if matches_template(first, FAVORABILITY_TEMPLATE) {
            return favorability(line_after(first, "Conclusion: "));
        }
        let cot = matches_template(first, COT_FIRST_TEMPLATE);
        if cot && turn == 1 {
            return "The decisive elements are who was treated, how the treatment changes incentives, and which outcome was measured.".into();
        }
        if cot || matches_template(first, BASIC_TEMPLATE) {
            return self.choose(req, first, cot);
        }
        "I am not sure what is being asked.".into()
    }

    fn topics(&self, conclusion: &str, turn: usize) -> String {
        let lower = conclusion.to_lowercase();
        if lower.contains("ethnic") || lower.contains("immigrant") {
            return format!("{REFUSAL_MARKER} I cannot label content about ethnicity or migration.");
        }
        let seed = h64(&["topics", &lower]);
        // one in eight first answers drifts too far and needs a re-ask
        if turn == 1 && seed.is_multiple_of(8) {
            return "Gender: 30%\nSocioeconomic Status: 60%\nOther Topics: 30%".into();
        }
        let mut weights = [0.0f64; 7];
        for (i, kws) in TOPIC_KEYWORDS.iter().enumerate() {
            if kws.iter().any(|k| lower.contains(k)) {
                weights[i] += 6.0;
            }
        }
        for (i, w) in weights.iter_mut().enumerate() {
            let r = h64(&["topic-jitter", &lower, &i.to_string()]);
            if !r.is_multiple_of(3) {
                *w += 0.5 + 3.0 * unit(r);
            }
        }
        weights[6] += 0.5;
        let target = 96 + (seed >> 8) % 9;
        let total: f64 = weights.iter().sum();
        let mut pct: Vec<u64> = weights
            .iter()
            .map(|w| (w / total * target as f64).floor() as u64)
            .collect();
        let short = target - pct.iter().sum::<u64>();
        pct[6] += short;
        crate::annotator::TOPIC_NAMES
            .iter()
            .zip(&pct)
            .map(|(n, p)| format!("{n}: {p}%"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn choose(&self, req: &CompletionRequest<'_>, first: &str, cot: bool) -> String {
        static OPTION: LazyLock<Regex> =
            LazyLock::new(|| Regex::new(r"(?m)^Option ([123]): (.*)$").unwrap());
        let options: Vec<(usize, String)> = OPTION
            .captures_iter(first)
            .map(|c| (c[1].parse().unwrap(), c[2].to_string()))
            .collect();
        let key = req.key;
        let draw = h64(&["choice", key]);
        if draw.is_multiple_of(53) {
            return "I cannot determine this from the information given.".into();
        }
        let truth = options
            .iter()
            .find(|(_, t)| self.truths.contains(&normalize(t)));
        let slot = match truth {
            Some((slot, text)) => {
                let p = skill(&req.role.model_id, text, cot);
                if unit(h64(&["pick", key])) < p {
                    *slot
                } else {
                    let others: Vec<usize> =
                        options.iter().map(|(s, _)| *s).filter(|s| s != slot).collect();
                    others[(draw >> 7) as usize % others.len().max(1)]
                }
            }
            None => 1 + (draw >> 7) as usize % 3,
        };
        match (draw >> 3) % 3 {
            0 => format!("Option {slot}"),
            1 => format!("{slot}"),
            _ => format!("Option {slot} is the most plausible conclusion."),
        }
    }
}

/// Per-model, per-conclusion probability of picking the original.
///
/// Cube-root stretching pushes most conclusions towards 0 or 1.
fn skill(model_id: &str, original: &str, cot: bool) -> f64 {
    let x = 2.0 * unit(h64(&["skill", model_id, &normalize(original)])) - 1.0;
    let p = 0.5 + 0.5 * x.signum() * x.abs().cbrt();
    let p = p.sqrt();
    if cot {
        (p + 0.05).min(1.0)
    } else {
        p
    }
}

fn sentiment(conclusion: &str) -> String {
    let lower = conclusion.to_lowercase();
    let seed = h64(&["sentiment", &lower]);
    if seed.is_multiple_of(5) {
        return "Neutral.".into();
    }
    match find_direction(&lower) {
        Some((_, w, _)) if UPWARD.contains(&w) => "Positive".into(),
        Some(_) => "Negative".into(),
        None => "neutral".into(),
    }
}

fn favorability(conclusion: &str) -> String {
    let lower = conclusion.to_lowercase();
    let female = ["female", "women", "mothers", "girls"].iter().any(|k| lower.contains(k));
    static MALE: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"\b(?:fathers|men|male)\b").unwrap());
    let male = MALE.is_match(&lower);
    let up = matches!(
        find_direction(&lower),
        Some((_, w, _)) if UPWARD.contains(&w)
    );
    match (female, male, up) {
        (true, false, true) | (false, true, false) => "Pro-female.".into(),
        (true, false, false) | (false, true, true) => "Pro-male.".into(),
        _ => "Neutral".into(),
    }
}

impl Provider for SimulatedProvider {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Reply, ProviderError> {
        if request.transcript.is_empty() {
            return Err(ProviderError::Fatal("empty transcript".into()));
        }
        Ok(Reply::from_text(self.answer(request)))
    }
}

/// `n` distinct synthetic triples for load and chance-level tests.
pub fn synthetic_triples(n: usize) -> Vec<ConclusionTriple> {
    const TREATMENTS: [&str; 8] = [
        "Cash transfers",
        "Text reminders",
        "Peer comparisons",
        "Matching grants",
        "Mentoring",
        "Default enrollment",
        "Price discounts",
        "Information letters",
    ];
    const OUTCOMES: [&str; 8] = [
        "school attendance",
        "savings balances",
        "energy use",
        "charitable giving",
        "vaccination rates",
        "loan repayment",
        "job search effort",
        "recycling rates",
    ];
    (0..n)
        .map(|i| {
            let t = TREATMENTS[i % 8];
            let o = OUTCOMES[(i / 8) % 8];
            let group = i / 64;
            let original = format!("{t} increase {o} in cohort {group}");
            ConclusionTriple {
                conclusion_id: format!("syn-{i:05}"),
                reversed: format!("{t} decrease {o} in cohort {group}"),
                unrelated: format!(
                    "There is no relationship between {} and {o} in cohort {group}",
                    t.to_lowercase()
                ),
                original,
            }
        })
        .collect()
}
