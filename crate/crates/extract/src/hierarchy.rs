use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::ExtractError;

/// First-level CAMEO relation names, in code order.
pub const CAMEO_ROOTS: [&str; 20] = [
    "Make public statement",
    "Make an appeal or request",
    "Express intent to cooperate",
    "Consult or meet",
    "Engage in diplomatic cooperation",
    "Engage in material cooperation",
    "Provide aid",
    "Yield or concede",
    "Investigate",
    "Demand or order",
    "Verbally disapprove",
    "Reject",
    "Threaten",
    "Engage in political dissent",
    "Exhibit military or police power",
    "Reduce relations",
    "Coerce",
    "Use unconventional violence including terrorist",
    "Use conventional military force",
    "Use unconventional mass force",
];

/// Literal sub-level choice that keeps the parent relation.
pub const NO_SPECIFIC: &str = "No specific";

#[derive(Clone, Debug, PartialEq, Eq)]
struct Node {
    name: String,
    parent: Option<usize>,
    children: Vec<usize>,
}

/// A relation forest of at most three levels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hierarchy {
    nodes: Vec<Node>,
    by_name: BTreeMap<String, usize>,
}

impl Hierarchy {
    /// Builds from `(name, parent name)` pairs; parents must precede
    /// children.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Option<&'a str>)>) -> Result<Self, ExtractError> {
        let mut h = Hierarchy {
            nodes: Vec::new(),
            by_name: BTreeMap::new(),
        };
        for (name, parent) in pairs {
            h.add(name, parent)?;
        }
        Ok(h)
    }

    fn add(&mut self, name: &str, parent: Option<&str>) -> Result<usize, ExtractError> {
        if self.by_name.contains_key(name) {
            return Err(ExtractError::Hierarchy(format!("duplicate relation {name:?}")));
        }
        let parent = match parent {
            Some(p) => Some(
                *self
                    .by_name
                    .get(p)
                    .ok_or_else(|| ExtractError::Hierarchy(format!("parent {p:?} of {name:?} is unknown")))?,
            ),
            None => None,
        };
        let id = self.nodes.len();
        self.nodes.push(Node {
            name: name.to_string(),
            parent,
            children: Vec::new(),
        });
        if let Some(p) = parent {
            if self.level_of(p) >= 3 {
                return Err(ExtractError::Hierarchy(format!("{name:?} would sit below level 3")));
            }
            self.nodes[p].children.push(id);
        }
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    fn level_of(&self, mut id: usize) -> u8 {
        let mut level = 1;
        while let Some(p) = self.nodes[id].parent {
            level += 1;
            id = p;
        }
        level
    }

    /// The twenty first-level relations with no children.
    pub fn cameo_roots() -> Self {
        Self::from_pairs(CAMEO_ROOTS.iter().map(|r| (*r, None))).expect("distinct root names")
    }

    /// Reads `relation2id.txt` (`name\tid`) and, if present,
    /// `relation_hierarchy.txt` (`child_id\tparent_id`) from `dir`.
    pub fn load(dir: &Path) -> Result<Self, ExtractError> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| ExtractError::Io {
                path: p.clone(),
                source: e,
            })
        };
        let mut names: BTreeMap<u32, String> = BTreeMap::new();
        for (i, line) in read("relation2id.txt")?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (name, id) = line
                .rsplit_once('\t')
                .and_then(|(n, id)| Some((n, id.trim().parse::<u32>().ok()?)))
                .ok_or_else(|| ExtractError::Hierarchy(format!("relation2id.txt:{}: expected name<TAB>id", i + 1)))?;
            names.insert(id, name.to_string());
        }
        let mut parent_of: BTreeMap<u32, u32> = BTreeMap::new();
        if dir.join("relation_hierarchy.txt").exists() {
            for (i, line) in read("relation_hierarchy.txt")?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let (c, p) = line
                    .split_once('\t')
                    .and_then(|(c, p)| Some((c.trim().parse::<u32>().ok()?, p.trim().parse::<u32>().ok()?)))
                    .ok_or_else(|| {
                        ExtractError::Hierarchy(format!("relation_hierarchy.txt:{}: expected child<TAB>parent", i + 1))
                    })?;
                parent_of.insert(c, p);
            }
        }
        let mut h = Hierarchy {
            nodes: Vec::new(),
            by_name: BTreeMap::new(),
        };
        // Parents carry lower ids, so id order visits parents first.
        for (id, name) in &names {
            let parent = match parent_of.get(id) {
                Some(p) => Some(
                    names
                        .get(p)
                        .ok_or_else(|| ExtractError::Hierarchy(format!("unknown parent id {p}")))?
                        .as_str(),
                ),
                None => None,
            };
            h.add(name, parent)?;
        }
        Ok(h)
    }

    pub fn roots(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.parent.is_none())
            .map(|n| n.name.as_str())
            .collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn level(&self, name: &str) -> Option<u8> {
        self.by_name.get(name).map(|&id| self.level_of(id))
    }

    pub fn children(&self, name: &str) -> Result<Vec<&str>, ExtractError> {
        let id = *self
            .by_name
            .get(name)
            .ok_or_else(|| ExtractError::Hierarchy(format!("unknown relation {name:?}")))?;
        Ok(self.nodes[id].children.iter().map(|&c| self.nodes[c].name.as_str()).collect())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.nodes.iter().map(|n| n.name.as_str())
    }
}
