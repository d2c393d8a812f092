//! Extraction precision as judged by a language model.

use serde::Serialize;

use crate::prompt::{build_judge_prompt, Article, Triple};
use crate::transport::Transport;
use crate::ExtractError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Precision {
    pub correct: usize,
    pub total: usize,
}

impl Precision {
    pub fn value(self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

impl std::ops::Add for Precision {
    type Output = Precision;
    fn add(self, rhs: Precision) -> Precision {
        Precision {
            correct: self.correct + rhs.correct,
            total: self.total + rhs.total,
        }
    }
}

/// Reads the first bracketed list of True/False verdicts. Python-style
/// capitalized booleans are accepted.
pub fn parse_judgement(reply: &str, expected: usize) -> Result<Vec<bool>, ExtractError> {
    let syntax = || ExtractError::JudgementSyntax(reply.chars().take(120).collect());
    let start = reply.find('[').ok_or_else(syntax)?;
    let end = start + reply[start..].find(']').ok_or_else(syntax)?;
    let body = &reply[start + 1..end];
    let verdicts = body
        .split(',')
        .map(|v| v.trim().trim_matches(|c| c == '"' || c == '\''))
        .filter(|v| !v.is_empty())
        .map(|v| match v.to_ascii_lowercase().as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(syntax()),
        })
        .collect::<Result<Vec<bool>, _>>()?;
    if verdicts.len() != expected {
        return Err(ExtractError::MalformedJudgement {
            expected,
            got: verdicts.len(),
        });
    }
    Ok(verdicts)
}

pub fn evaluate_extraction(
    article: &Article,
    events: &[Triple],
    transport: &dyn Transport,
) -> Result<Precision, ExtractError> {
    if events.is_empty() {
        return Err(ExtractError::NoEvents);
    }
    let reply = transport.send(&build_judge_prompt(article, events))?;
    let verdicts = parse_judgement(&reply, events.len())?;
    Ok(Precision {
        correct: verdicts.iter().filter(|v| **v).count(),
        total: events.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::MockTransport;

    fn triples(n: usize) -> Vec<Triple> {
        (0..n)
            .map(|i| Triple {
                subject: format!("S{i}"),
                relation: "Threaten".into(),
                object: "O".into(),
            })
            .collect()
    }

    fn article() -> Article {
        Article {
            doc_id: "n".into(),
            date: "2018-09-21".parse().unwrap(),
            title: "Netanyahu Promises 'Crushing Blow'".into(),
            body: "Israeli PM Netanyahu has lashed out.".into(),
        }
    }

    #[test]
    fn two_of_three() {
        let p = evaluate_extraction(&article(), &triples(3), &MockTransport::new("[True, False, True]")).unwrap();
        assert_eq!(p, Precision { correct: 2, total: 3 });
        assert!((p.value() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_true_is_one() {
        let p = evaluate_extraction(&article(), &triples(2), &MockTransport::new("Sure: [true, true]")).unwrap();
        assert_eq!(p.value(), 1.0);
    }

    #[test]
    fn length_mismatch_is_malformed() {
        let err = evaluate_extraction(&article(), &triples(3), &MockTransport::new("[True]")).unwrap_err();
        assert!(matches!(err, ExtractError::MalformedJudgement { expected: 3, got: 1 }));
        assert!(matches!(parse_judgement("no list", 1), Err(ExtractError::JudgementSyntax(_))));
        assert!(matches!(parse_judgement("[maybe]", 1), Err(ExtractError::JudgementSyntax(_))));
    }

    #[test]
    fn prompt_numbers_events() {
        let p = build_judge_prompt(&article(), &triples(2));
        assert!(p.starts_with("You are an assistant to check the precision of event extraction"));
        assert!(p.contains("[Extracted Events:]\n1. S0; Threaten; O\n2. S1; Threaten; O\n"));
        assert!(p.contains("[Results:] Check result list:"));
    }
}
