//! Hierarchical extraction: one level-1 call per article, then one
//! refinement call per surviving event and level.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sctc_core::builder::DocEvent;
use serde::{Deserialize, Serialize};

use crate::hierarchy::{Hierarchy, NO_SPECIFIC};
use crate::prompt::{build_extraction_prompt, candidates, parse_extraction, Article, TargetEvent, Triple};
use crate::transport::Transport;
use crate::ExtractError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedEvent {
    pub subject: String,
    pub relation: String,
    pub object: String,
    /// Level the relation was finalized at.
    pub level: u8,
    pub date: chrono::NaiveDate,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Extraction {
    pub events: Vec<ParsedEvent>,
    pub warnings: usize,
    pub calls: usize,
    pub failures: Vec<String>,
}

/// Picks the refinement for `target` out of a sub-level reply. A triple
/// about the same actors is preferred; `None` means keep the parent.
fn refinement(triples: &[Triple], target: &ParsedEvent) -> Option<String> {
    let valid: Vec<&Triple> = triples.iter().filter(|t| t.relation != NO_SPECIFIC).collect();
    let same_actors = |t: &Triple| {
        t.subject.eq_ignore_ascii_case(&target.subject) && t.object.eq_ignore_ascii_case(&target.object)
    };
    if triples.iter().any(|t| t.relation == NO_SPECIFIC && same_actors(t)) {
        return None;
    }
    valid
        .iter()
        .find(|t| same_actors(t))
        .or_else(|| valid.first())
        .map(|t| t.relation.clone())
}

pub fn extract_hierarchical(
    article: &Article,
    hierarchy: &Hierarchy,
    transport: &dyn Transport,
) -> Result<Extraction, ExtractError> {
    let mut out = Extraction::default();
    let prompt = build_extraction_prompt(article, hierarchy, 1, None)?;
    out.calls += 1;
    let reply = match transport.send(&prompt) {
        Ok(r) => r,
        Err(e) => {
            out.failures.push(format!("{} level 1: {e}", article.doc_id));
            return Ok(out);
        }
    };
    let parsed = parse_extraction(&reply, &candidates(hierarchy, 1, None)?);
    out.warnings += parsed.warnings;

    for t in parsed.triples.into_iter().filter(|t| t.relation != NO_SPECIFIC) {
        let mut event = ParsedEvent {
            subject: t.subject,
            relation: t.relation,
            object: t.object,
            level: 1,
            date: article.date,
        };
        while event.level < 3 {
            let level = event.level + 1;
            if hierarchy.children(&event.relation)?.is_empty() {
                break;
            }
            let target = TargetEvent {
                subject: &event.subject,
                relation: &event.relation,
                object: &event.object,
            };
            let prompt = build_extraction_prompt(article, hierarchy, level, Some(target))?;
            out.calls += 1;
            let reply = match transport.send(&prompt) {
                Ok(r) => r,
                Err(e) => {
                    out.failures.push(format!("{} level {level}: {e}", article.doc_id));
                    break;
                }
            };
            let cands = candidates(hierarchy, level, Some(&event.relation))?;
            let parsed = parse_extraction(&reply, &cands);
            out.warnings += parsed.warnings;
            match refinement(&parsed.triples, &event) {
                Some(rel) => {
                    event.relation = rel;
                    event.level = level;
                }
                None => break,
            }
        }
        out.events.push(event);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default)]
pub struct CorpusExtraction {
    /// One entry per input article, in input order.
    pub articles: Vec<(String, Extraction)>,
}

impl CorpusExtraction {
    pub fn events(&self) -> usize {
        self.articles.iter().map(|(_, e)| e.events.len()).sum()
    }

    pub fn warnings(&self) -> usize {
        self.articles.iter().map(|(_, e)| e.warnings).sum()
    }

    pub fn calls(&self) -> usize {
        self.articles.iter().map(|(_, e)| e.calls).sum()
    }

    pub fn failures(&self) -> impl Iterator<Item = &str> {
        self.articles.iter().flat_map(|(_, e)| e.failures.iter().map(String::as_str))
    }

    pub fn doc_events(&self) -> Vec<DocEvent> {
        self.articles
            .iter()
            .flat_map(|(doc, ex)| {
                ex.events.iter().map(move |e| DocEvent {
                    doc_id: doc.clone(),
                    subject: e.subject.clone(),
                    relation: e.relation.clone(),
                    object: e.object.clone(),
                })
            })
            .collect()
    }
}

/// Runs articles on up to `workers` threads. The HTTP transport bounds the
/// number of requests actually in flight.
pub fn extract_corpus(
    articles: &[Article],
    hierarchy: &Hierarchy,
    transport: &dyn Transport,
    workers: usize,
) -> Result<CorpusExtraction, ExtractError> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Extraction, ExtractError>>>> =
        Mutex::new((0..articles.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, articles.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(article) = articles.get(i) else { break };
                let r = extract_hierarchical(article, hierarchy, transport);
                slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(r);
            });
        }
    });
    let mut out = CorpusExtraction::default();
    for (article, slot) in articles.iter().zip(slots.into_inner().unwrap_or_else(|p| p.into_inner())) {
        let ex = slot.expect("every article is visited")?;
        out.articles.push((article.doc_id.clone(), ex));
    }
    Ok(out)
}

/// Reads JSON-lines `{doc_id, date, title, body}`.
pub fn read_articles(path: &Path) -> Result<Vec<Article>, ExtractError> {
    let io = |source| ExtractError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ExtractError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::MockTransport;

    fn article() -> Article {
        Article {
            doc_id: "a1".into(),
            date: "2020-01-05".parse().unwrap(),
            title: "Talks".into(),
            body: "Officials met.".into(),
        }
    }

    fn tree() -> Hierarchy {
        Hierarchy::from_pairs([
            ("Consult or meet", None),
            ("Reject", None),
            ("Meet at a third location", Some("Consult or meet")),
            ("Engage in negotiation", Some("Consult or meet")),
            ("Mediate talks", Some("Engage in negotiation")),
        ])
        .unwrap()
    }

    #[test]
    fn empty_level_one_short_circuits() {
        let ex = extract_hierarchical(&article(), &tree(), &MockTransport::new("")).unwrap();
        assert!(ex.events.is_empty());
        assert_eq!(ex.calls, 1);
    }

    #[test]
    fn no_specific_keeps_parent() {
        let t = MockTransport::new("")
            .rule("[Target Event:]", "A; No specific; B")
            .rule("[Output:]", "A; Consult or meet; B");
        let ex = extract_hierarchical(&article(), &tree(), &t).unwrap();
        assert_eq!(ex.calls, 2);
        assert_eq!(ex.events.len(), 1);
        let e = &ex.events[0];
        assert_eq!((e.relation.as_str(), e.level), ("Consult or meet", 1));
        assert_eq!(e.date, article().date);
    }

    #[test]
    fn refines_down_to_level_three() {
        let t = MockTransport::new("")
            .rule("Engage in negotiation; B", "A; Mediate talks; B")
            .rule("[Target Event:]", "A; Engage in negotiation; B")
            .rule("[Output:]", "A; Consult or meet; B | C; Reject; D");
        let ex = extract_hierarchical(&article(), &tree(), &t).unwrap();
        // Reject has no children so only the first event is refined.
        assert_eq!(ex.calls, 3);
        assert_eq!(ex.events[0].relation, "Mediate talks");
        assert_eq!(ex.events[0].level, 3);
        assert_eq!((ex.events[0].subject.as_str(), ex.events[0].object.as_str()), ("A", "B"));
        assert_eq!(ex.events[1].relation, "Reject");
    }

    #[test]
    fn invalid_sub_level_reply_keeps_parent() {
        let t = MockTransport::new("")
            .rule("[Target Event:]", "A; Reject; B")
            .rule("[Output:]", "A; Consult or meet; B");
        let ex = extract_hierarchical(&article(), &tree(), &t).unwrap();
        assert_eq!(ex.events[0].relation, "Consult or meet");
        assert_eq!(ex.warnings, 1);
    }

    struct Failing;
    impl Transport for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn send(&self, _: &str) -> Result<String, ExtractError> {
            Err(ExtractError::Transport {
                transport: "failing".into(),
                reason: "down".into(),
            })
        }
    }

    #[test]
    fn transport_failure_is_reported_not_fatal() {
        let ex = extract_hierarchical(&article(), &tree(), &Failing).unwrap();
        assert!(ex.events.is_empty());
        assert_eq!(ex.failures.len(), 1);
    }

    #[test]
    fn corpus_order_is_stable() {
        let articles: Vec<Article> = (0..17)
            .map(|i| Article {
                doc_id: format!("d{i}"),
                title: format!("T{i}"),
                ..article()
            })
            .collect();
        let t = MockTransport::new("X; Reject; Y");
        let out = extract_corpus(&articles, &tree(), &t, 4).unwrap();
        let ids: Vec<&str> = out.articles.iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(ids, articles.iter().map(|a| a.doc_id.as_str()).collect::<Vec<_>>());
        assert_eq!(out.events(), 17);
        assert_eq!(out.doc_events()[3].doc_id, "d3");
    }
}
