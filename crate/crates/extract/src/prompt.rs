//! Prompt templates and response parsers. Template wording is protocol
//! data and must stay byte-stable; replay files are keyed by prompt hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::hierarchy::{Hierarchy, NO_SPECIFIC};
use crate::ExtractError;

const EXAMPLE_ARTICLE: &str = "Egypt committed to boosting economic cooperation with Lebanon (MENAFN- Daily News Egypt) Egypt is committed to enforcing economic cooperation with Lebanon, President Abdel Fattah Al-Sisi said during his meeting with Lebanese parliamentary speaker Nabih Berri.";

const EXAMPLE_RESULT: &str = "Egypt; Express intent to cooperate; Lebanon | Egypt president Abdel Fattah Al-Sisi; Consult or meet; Lebanese parliamentary speaker Nabih Berri | Lebanese parliamentary speaker Nabih Berri; Consult or meet; Egypt president Abdel Fattah Al-Sisi";

const LINKING_RULES: &str = "Based on the above entity list. Perform entity linking with the following rules:
1. Only merge entities that EXACTLY refer to the same entity such as PERSON, ORGANIZATION, COUNTRY, etc.
2. The output key should be the entity name after merging, value should be list of original entity names.
3. For those entities that cannot be merged, just output original name: [original name]
4. There may be some noises in the strings, such as 'U.S.' or '1. U.S.', these cases should be merged but you should not clean the original name.
5. Output in JSON format.";

const JUDGE_HEADER: &str = "You are an assistant to check the precision of event extraction from news articles.

[Rules:] 1. Each extracted event is in format of \"subject, relation, object\".
2. The check result is either True if the event is correct based on the article, otherwise False.
3. Give a news article and a list of extracted events, you need to output the corresponding list of check results in json list format, for example: [True, False, True]";

/// One news article as read from the JSON-lines input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub doc_id: String,
    /// Publish date, `YYYY-MM-DD`.
    pub date: chrono::NaiveDate,
    pub title: String,
    pub body: String,
}

impl Article {
    /// Title followed by the first three non-empty body lines.
    pub fn truncated(&self) -> String {
        let mut parts = vec![self.title.trim()];
        parts.extend(self.body.lines().map(str::trim).filter(|l| !l.is_empty()).take(3));
        parts.join("\n")
    }
}

/// The event a sub-level prompt refines.
#[derive(Clone, Copy, Debug)]
pub struct TargetEvent<'a> {
    pub subject: &'a str,
    pub relation: &'a str,
    pub object: &'a str,
}

/// Candidate relations offered at `level` (1, 2 or 3). Sub-levels list the
/// parent's children followed by the no-specific choice.
pub fn candidates(hierarchy: &Hierarchy, level: u8, parent: Option<&str>) -> Result<Vec<String>, ExtractError> {
    match (level, parent) {
        (1, _) => Ok(hierarchy.roots().into_iter().map(String::from).collect()),
        (2 | 3, None) => Err(ExtractError::MissingParent { level }),
        (2 | 3, Some(p)) => {
            let children = hierarchy.children(p)?;
            if children.is_empty() {
                return Err(ExtractError::NoChildren(p.to_string()));
            }
            let mut out: Vec<String> = children.into_iter().map(String::from).collect();
            out.push(NO_SPECIFIC.to_string());
            Ok(out)
        }
        _ => Err(ExtractError::BadLevel(level)),
    }
}

/// Extraction prompt for `level`. Levels 2 and 3 need the target event
/// whose relation is being refined.
pub fn build_extraction_prompt(
    article: &Article,
    hierarchy: &Hierarchy,
    level: u8,
    target: Option<TargetEvent<'_>>,
) -> Result<String, ExtractError> {
    let cands = candidates(hierarchy, level, target.map(|t| t.relation))?;
    let mut p = String::new();
    p.push_str("You are an assistant to perform structured event extraction from news articles with following rules:\n\n");
    p.push_str("[Rules:] 1. Extract each event in format: event actor 1; event relation; event actor 2.\n");
    p.push_str(&format!(
        "2. Only choose event relation from this relation candidate list: {}.\n",
        cands.join(", ")
    ));
    p.push_str("3. Event actors are usually political actors, countries or international organizations.\n");
    p.push_str("4. Only extract events that have happened or is happening, and not extract future events.\n\n");
    p.push_str("[Example:] For example, given the example article:\n");
    p.push_str(EXAMPLE_ARTICLE);
    p.push_str("\nList all events by rules, the extraction result of the example is:\n");
    p.push_str(EXAMPLE_RESULT);
    p.push_str("\n\n[News Article:] Now, given the query article:\n");
    p.push_str(&article.truncated());
    p.push_str("\n\n");
    if let Some(t) = target {
        p.push_str(&format!(
            "[Target Event:] Choose the specific relation for this event, or {NO_SPECIFIC}: {}; {}; {}\n\n",
            t.subject, t.relation, t.object
        ));
    }
    p.push_str("[Output:] List all events by rules, the extraction result of the query article is:\n");
    Ok(p)
}

/// Lowercase hex SHA-256 of the prompt bytes; the replay file key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One `subject; relation; object` triple with the relation resolved to
/// its candidate spelling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Parsed {
    pub triples: Vec<Triple>,
    pub warnings: usize,
}

/// Lenient parser: `|` separates events, `;` separates fields. Segments
/// without exactly three non-empty fields, or whose relation is neither a
/// candidate nor the no-specific choice, are dropped and counted. Relation
/// matching ignores case.
pub fn parse_extraction(response: &str, candidates: &[String]) -> Parsed {
    let mut out = Parsed::default();
    for segment in response.split('|') {
        if segment.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = segment.split(';').map(str::trim).collect();
        let [s, r, o] = fields.as_slice() else {
            out.warnings += 1;
            continue;
        };
        if s.is_empty() || r.is_empty() || o.is_empty() {
            out.warnings += 1;
            continue;
        }
        let relation = candidates
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(NO_SPECIFIC))
            .find(|c| c.eq_ignore_ascii_case(r));
        match relation {
            Some(rel) => out.triples.push(Triple {
                subject: s.to_string(),
                relation: rel.to_string(),
                object: o.to_string(),
            }),
            None => out.warnings += 1,
        }
    }
    out
}

/// Entity-linking prompt for one batch of names.
pub fn build_linking_prompt(names: &[String]) -> String {
    let list = serde_json::to_string(names).expect("strings serialize");
    format!("{list} {LINKING_RULES}")
}

/// Judge prompt over numbered extracted events.
pub fn build_judge_prompt(article: &Article, events: &[Triple]) -> String {
    let mut p = String::from(JUDGE_HEADER);
    p.push_str("\n\n[Article:] ");
    p.push_str(&article.truncated().replace('\n', " "));
    p.push_str("\n\n[Extracted Events:]\n");
    for (i, e) in events.iter().enumerate() {
        p.push_str(&format!("{}. {}; {}; {}\n", i + 1, e.subject, e.relation, e.object));
    }
    p.push_str("\n[Results:] Check result list:\n");
    p
}
