//! Entity linking. Names are grouped by K-means over character-trigram
//! hash vectors, each group is sent as one merge prompt, and the returned
//! maps are composed over batches and rounds.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use sctc_core::builder::DocEvent;
use sctc_core::seed::rng_for;
use serde::{Deserialize, Serialize};

use crate::prompt::build_linking_prompt;
use crate::transport::Transport;
use crate::ExtractError;

pub const EMBEDDING_DIM: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkingConfig {
    pub k: usize,
    pub rounds: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        LinkingConfig {
            k: 32,
            rounds: 2,
            max_iter: 100,
            seed: 0,
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// L2-normalized counts of hashed lowercase character trigrams, with the
/// name padded by one space on each side.
pub fn name_embedding(name: &str) -> Vec<f64> {
    let padded: Vec<char> = format!(" {} ", name.to_lowercase()).chars().collect();
    let mut v = vec![0.0; EMBEDDING_DIM];
    for w in padded.windows(3) {
        let gram: String = w.iter().collect();
        v[(fnv1a(gram.as_bytes()) % EMBEDDING_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded K-means++ followed by Lloyd iterations. An emptied cluster is
/// re-seeded with the point farthest from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    let k = k.min(n);
    let mut rng = rng_for(seed, "link.kmeans");
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if r < *d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(dist2(p, &points[pick]));
        }
    }

    let assign = |centroids: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                (0..centroids.len())
                    .min_by(|&a, &b| dist2(p, &centroids[a]).total_cmp(&dist2(p, &centroids[b])))
                    .unwrap_or(0)
            })
            .collect()
    };
    let mut labels = assign(&centroids);
    for _ in 0..max_iter {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| {
                        dist2(&points[a], &centroids[labels[a]]).total_cmp(&dist2(&points[b], &centroids[labels[b]]))
                    });
                if let Some(far) = far {
                    centroids[c] = points[far].clone();
                    counts[labels[far]] -= 1;
                    counts[c] += 1;
                    labels[far] = c;
                }
            }
        }
        let next = assign(&centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// Canonical name to the original names merged into it.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkMap {
    pub canonical: BTreeMap<String, Vec<String>>,
}

impl LinkMap {
    /// Builds the map from alias to canonical pairs. Chains are followed to
    /// their end, and a cycle collapses onto its smallest name.
    fn from_edges(names: &[String], edges: &HashMap<String, String>) -> Self {
        let mut terminal: HashMap<&str, String> = HashMap::new();
        for name in names {
            let mut path = vec![name.as_str()];
            let mut cur = name.as_str();
            let end = loop {
                match edges.get(cur) {
                    Some(next) if next != cur => {
                        if let Some(pos) = path.iter().position(|p| *p == next.as_str()) {
                            break path[pos..].iter().min().copied().unwrap_or(cur).to_string();
                        }
                        cur = next.as_str();
                        path.push(cur);
                    }
                    _ => break cur.to_string(),
                }
            };
            terminal.insert(name.as_str(), end);
        }
        let mut canonical: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for name in names {
            canonical.entry(terminal[name.as_str()].clone()).or_default().push(name.clone());
        }
        canonical.values_mut().for_each(|v| {
            v.sort();
            v.dedup();
        });
        LinkMap { canonical }
    }

    pub fn resolve<'a>(&'a self, name: &'a str) -> &'a str {
        self.alias_index().get(name).copied().unwrap_or(name)
    }

    fn alias_index(&self) -> HashMap<&str, &str> {
        self.canonical
            .iter()
            .flat_map(|(c, aliases)| aliases.iter().map(move |a| (a.as_str(), c.as_str())))
            .collect()
    }

    /// Rewrites subjects and objects; every other field is untouched.
    pub fn apply(&self, events: &[DocEvent]) -> Vec<DocEvent> {
        let index = self.alias_index();
        let fix = |n: &String| index.get(n.as_str()).map_or_else(|| n.clone(), |c| c.to_string());
        events
            .iter()
            .map(|e| DocEvent {
                subject: fix(&e.subject),
                object: fix(&e.object),
                ..e.clone()
            })
            .collect()
    }

    pub fn canonical_names(&self) -> impl Iterator<Item = &str> {
        self.canonical.keys().map(String::as_str)
    }
}

/// Reads a JSON object of canonical name to alias list out of a reply,
/// tolerating code fences and chatter around the object.
pub fn parse_link_response(reply: &str) -> Option<BTreeMap<String, Vec<String>>> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end < start {
        return None;
    }
    let value: serde_json::Value = serde_json::from_str(&reply[start..=end]).ok()?;
    let obj = value.as_object()?;
    let mut out = BTreeMap::new();
    for (k, v) in obj {
        let aliases = match v {
            serde_json::Value::Array(items) => items.iter().map(|i| i.as_str().map(String::from)).collect::<Option<Vec<_>>>()?,
            serde_json::Value::String(s) => vec![s.clone()],
            _ => return None,
        };
        out.insert(k.trim().to_string(), aliases);
    }
    Some(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RoundStats {
    pub batches: usize,
    pub malformed: usize,
    pub failures: usize,
    /// Names whose canonical changed this round.
    pub merged: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkReport {
    pub map: LinkMap,
    pub rounds: Vec<RoundStats>,
}

pub fn link_entities(
    names: &[String],
    config: &LinkingConfig,
    transport: &dyn Transport,
) -> Result<LinkReport, ExtractError> {
    let originals: Vec<String> = names.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if config.k == 0 || config.k > originals.len() {
        return Err(ExtractError::InvalidK {
            k: config.k,
            entities: originals.len(),
        });
    }
    // current[i] is the canonical name of originals[i].
    let mut current: Vec<String> = originals.clone();
    let mut rounds = Vec::new();
    for round in 0..config.rounds {
        let pool: Vec<String> = current.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let points: Vec<Vec<f64>> = pool.iter().map(|n| name_embedding(n)).collect();
        let k = config.k.min(pool.len());
        let labels = kmeans(&points, k, config.max_iter, config.seed.wrapping_add(round as u64));
        let mut groups: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
        for (name, l) in pool.iter().zip(&labels) {
            groups.entry(*l).or_default().push(name);
        }

        let mut stats = RoundStats::default();
        let mut claimed: HashMap<String, String> = HashMap::new();
        for group in groups.values() {
            stats.batches += 1;
            let batch: Vec<String> = group.iter().map(|s| s.to_string()).collect();
            let reply = match transport.send(&build_linking_prompt(&batch)) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("linking batch failed: {e}");
                    stats.failures += 1;
                    continue;
                }
            };
            let Some(map) = parse_link_response(&reply) else {
                stats.malformed += 1;
                continue;
            };
            let members: BTreeSet<&str> = batch.iter().map(String::as_str).collect();
            for (canon, aliases) in map {
                if canon.is_empty() {
                    continue;
                }
                for alias in aliases {
                    if members.contains(alias.as_str()) && !claimed.contains_key(&alias) {
                        claimed.insert(alias, canon.clone());
                    }
                }
            }
        }

        let step = LinkMap::from_edges(&pool, &claimed);
        let index = step.alias_index();
        let next: Vec<String> = current.iter().map(|n| index.get(n.as_str()).map_or(n.as_str(), |c| c).to_string()).collect();
        stats.merged = next.iter().zip(&current).filter(|(a, b)| a != b).count();
        current = next;
        rounds.push(stats);
    }

    let edges: HashMap<String, String> = originals.iter().cloned().zip(current).collect();
    Ok(LinkReport {
        map: LinkMap::from_edges(&originals, &edges),
        rounds,
    })
}
