//! Small text helpers shared by the prompt builders and response parsers.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template references unknown placeholder `${{{0}}}`")]
    UnknownPlaceholder(String),
    #[error("unterminated placeholder at byte {0}")]
    Unterminated(usize),
}

/// Fills `${Name}` placeholders in a single pass.
///
/// Substituted values are not rescanned, so a value containing `${` is copied
/// verbatim. Every placeholder in the template must have a binding.
pub fn render(template: &str, bindings: &[(&str, &str)]) -> Result<String, TemplateError> {
    let map: HashMap<&str, &str> = bindings.iter().copied().collect();
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    let mut offset = 0;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or(TemplateError::Unterminated(offset + start))?;
        let name = &after[..end];
        let value = map
            .get(name)
            .ok_or_else(|| TemplateError::UnknownPlaceholder(name.to_string()))?;
        out.push_str(value);
        let consumed = start + 2 + end + 1;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Case-folds, collapses runs of whitespace and strips trailing sentence punctuation.
pub fn normalize(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(['.', '!', ';', ','])
        .trim()
        .to_string()
}

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    "hundred", "thousand", "million", "billion", "percent", "half", "twice", "double", "triple",
    "tenfold",
];

/// True when the text carries a digit or a spelled-out quantity.
pub fn contains_numeral(text: &str) -> bool {
    if text.chars().any(|c| c.is_ascii_digit()) {
        return true;
    }
    text.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .any(|w| NUMBER_WORDS.contains(&w.as_str()))
}

/// Keeps the first and last halves of `text` so the result fits in `budget` chars.
///
/// Returns the text unchanged when it already fits.
pub fn truncate_head_tail(text: &str, budget: usize) -> (String, bool) {
    let total = text.chars().count();
    if total <= budget {
        return (text.to_string(), false);
    }
    const GAP: &str = "\n[...]\n";
    let keep = budget.saturating_sub(GAP.chars().count());
    let head = keep / 2;
    let tail = keep - head;
    let head_str: String = text.chars().take(head).collect();
    let tail_str: String = text.chars().skip(total - tail).collect();
    (format!("{head_str}{GAP}{tail_str}"), true)
}
