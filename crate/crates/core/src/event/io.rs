use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{AtomicEvent, CeTag, Dataset, Day, EventError, NameTable, Split, Vocab};

fn io_err(path: &Path, source: std::io::Error) -> EventError {
    EventError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads a quintuple TSV (`s\tr\to\tt\tc`, `c = -1` for outliers).
pub fn load_quintuples(path: &Path, vocab: &Vocab) -> Result<Vec<AtomicEvent>, EventError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_quintuples(file, vocab)
}

pub fn read_quintuples<R: Read>(reader: R, vocab: &Vocab) -> Result<Vec<AtomicEvent>, EventError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| EventError::MalformedLine {
            line: lineno,
            reason: e.to_string(),
        })?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(EventError::MalformedLine {
                line: lineno,
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let parse = |idx: usize| -> Result<u32, EventError> {
            fields[idx].parse::<u32>().map_err(|_| EventError::MalformedLine {
                line: lineno,
                reason: format!("field {} is not a non-negative integer: {:?}", idx + 1, fields[idx]),
            })
        };
        let ce = match fields[4] {
            "-1" => CeTag::Outlier,
            _ => CeTag::Ce(parse(4)?),
        };
        let event = AtomicEvent::new(parse(0)?, parse(1)?, parse(2)?, parse(3)?, ce);
        vocab.check_event(&event, lineno, vocab.num_relations())?;
        out.push(event);
    }
    Ok(out)
}

pub fn write_quintuples<W: Write>(mut writer: W, events: &[AtomicEvent]) -> std::io::Result<()> {
    for e in events {
        match e.ce {
            CeTag::Ce(c) => writeln!(writer, "{}\t{}\t{}\t{}\t{}", e.subject, e.relation, e.object, e.time, c)?,
            CeTag::Outlier => writeln!(writer, "{}\t{}\t{}\t{}\t-1", e.subject, e.relation, e.object, e.time)?,
        }
    }
    Ok(())
}

fn read_name_table(path: &Path) -> Result<NameTable, EventError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<(u32, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (name, id) = line.rsplit_once('\t').ok_or_else(|| EventError::MalformedLine {
            line: i + 1,
            reason: format!("{}: expected name<TAB>id", path.display()),
        })?;
        let id = id.parse::<u32>().map_err(|_| EventError::MalformedLine {
            line: i + 1,
            reason: format!("{}: bad id {id:?}", path.display()),
        })?;
        rows.push((id, name.to_owned()));
    }
    rows.sort();
    for (expected, (id, _)) in rows.iter().enumerate() {
        if *id as usize != expected {
            return Err(EventError::Invalid(format!("{}: ids are not dense 0..n", path.display())));
        }
    }
    NameTable::from_names(rows.into_iter().map(|(_, n)| n))
}

fn write_name_table(path: &Path, table: &NameTable) -> Result<(), EventError> {
    let mut out = String::new();
    for (id, name) in table.names().iter().enumerate() {
        out.push_str(&format!("{name}\t{id}\n"));
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// First day of the validation and test periods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub val_start: Day,
    pub test_start: Day,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub epoch: NaiveDate,
    pub num_entities: usize,
    pub num_relations: usize,
    pub t_max: Day,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitBoundaries>,
}

impl Vocab {
    /// Reads `entity2id.txt`, `relation2id.txt` and, if present,
    /// `relation_hierarchy.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Vocab, EventError> {
        let entities = read_name_table(&dir.join("entity2id.txt"))?;
        let relations = read_name_table(&dir.join("relation2id.txt"))?;
        let mut vocab = Vocab::new(entities, relations);
        let hierarchy = dir.join("relation_hierarchy.txt");
        if hierarchy.exists() {
            let text = fs::read_to_string(&hierarchy).map_err(|e| io_err(&hierarchy, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let parsed = line
                    .split_once('\t')
                    .and_then(|(c, p)| Some((c.parse::<u32>().ok()?, p.parse::<u32>().ok()?)));
                let (child, parent) = parsed.ok_or_else(|| EventError::MalformedLine {
                    line: i + 1,
                    reason: "relation_hierarchy.txt: expected child_id<TAB>parent_id".into(),
                })?;
                vocab.set_parent(child, parent)?;
            }
        }
        Ok(vocab)
    }

    pub fn save(&self, dir: &Path) -> Result<(), EventError> {
        write_name_table(&dir.join("entity2id.txt"), &self.entities)?;
        write_name_table(&dir.join("relation2id.txt"), &self.relations)?;
        let links: Vec<_> = self.hierarchy_links().collect();
        if !links.is_empty() {
            let text: String = links.iter().map(|(c, p)| format!("{c}\t{p}\n")).collect();
            let path = dir.join("relation_hierarchy.txt");
            fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}

impl Dataset {
    /// Loads a dataset directory: vocab files, `meta.json`, one quintuple
    /// file per split and an optional `outliers.tsv`.
    pub fn load(dir: &Path) -> Result<Dataset, EventError> {
        let vocab = Vocab::load(dir)?;
        let meta_path = dir.join("meta.json");
        let meta: DatasetMeta =
            serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?)?;
        if meta.num_entities != vocab.num_entities() || meta.num_relations != vocab.num_relations() {
            return Err(EventError::Invalid(format!(
                "meta.json declares |E|={} |R|={} but vocab files hold {} and {}",
                meta.num_entities,
                meta.num_relations,
                vocab.num_entities(),
                vocab.num_relations()
            )));
        }
        let load_split = |split: Split| load_quintuples(&dir.join(format!("{}.tsv", split.file_stem())), &vocab);
        let split_events = [
            (Split::Train, load_split(Split::Train)?),
            (Split::Val, load_split(Split::Val)?),
            (Split::Test, load_split(Split::Test)?),
        ];
        let outlier_path = dir.join("outliers.tsv");
        let outliers = if outlier_path.exists() {
            load_quintuples(&outlier_path, &vocab)?
        } else {
            Vec::new()
        };
        let mut ds = Dataset::from_split_events(vocab, split_events, outliers, meta.epoch)?;
        if ds.t_max > meta.t_max {
            return Err(EventError::Invalid(format!(
                "events reach day {} beyond declared t_max {}",
                ds.t_max, meta.t_max
            )));
        }
        ds.t_max = meta.t_max;
        ds.boundaries = meta.splits;
        Ok(ds)
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            epoch: self.epoch,
            num_entities: self.vocab.num_entities(),
            num_relations: self.vocab.num_relations(),
            t_max: self.t_max,
            splits: self.boundaries,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), EventError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        self.vocab.save(dir)?;
        let meta_path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta())?;
        fs::write(&meta_path, meta + "\n").map_err(|e| io_err(&meta_path, e))?;
        for split in Split::ALL {
            let path = dir.join(format!("{}.tsv", split.file_stem()));
            let mut events = self.split_events(split);
            events.sort_by_key(|e| (e.time, e.ce, e.subject, e.relation, e.object));
            let mut buf = Vec::new();
            write_quintuples(&mut buf, &events).map_err(|e| io_err(&path, e))?;
            fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
        }
        let path = dir.join("outliers.tsv");
        let mut buf = Vec::new();
        write_quintuples(&mut buf, &self.outliers).map_err(|e| io_err(&path, e))?;
        fs::write(&path, buf).map_err(|e| io_err(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_one_line() {
        let vocab = Vocab::anonymous(10, 20);
        let events = read_quintuples("5\t12\t9\t3\t41\n".as_bytes(), &vocab).unwrap();
        assert_eq!(events, vec![AtomicEvent::new(5, 12, 9, 3, CeTag::Ce(41))]);
    }

    #[test]
    fn empty_file_is_empty_list() {
        let vocab = Vocab::anonymous(1, 1);
        assert!(read_quintuples("".as_bytes(), &vocab).unwrap().is_empty());
    }

    #[test]
    fn short_line_names_line_number() {
        let vocab = Vocab::anonymous(10, 20);
        let err = read_quintuples("1\t1\t1\t1\t1\n5\t12\t9\t3\n".as_bytes(), &vocab).unwrap_err();
        match err {
            EventError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn outlier_sentinel_and_range_checks() {
        let vocab = Vocab::anonymous(3, 2);
        let events = read_quintuples("0\t1\t2\t5\t-1\n".as_bytes(), &vocab).unwrap();
        assert_eq!(events[0].ce, CeTag::Outlier);
        let err = read_quintuples("0\t2\t2\t5\t0\n".as_bytes(), &vocab).unwrap_err();
        assert!(matches!(err, EventError::UnknownId { kind: "relation", .. }));
        let err = read_quintuples("3\t0\t2\t5\t0\n".as_bytes(), &vocab).unwrap_err();
        assert!(matches!(err, EventError::UnknownId { kind: "entity", .. }));
        let err = read_quintuples("0\t0\t1\t5\t-2\n".as_bytes(), &vocab).unwrap_err();
        assert!(matches!(err, EventError::MalformedLine { .. }));
    }

    proptest! {
        #[test]
        fn quintuple_text_round_trips(rows in proptest::collection::vec(
            (0u32..50, 0u32..10, 0u32..50, 0u32..400, -1i64..30), 0..40)) {
            let text: String = rows
                .iter()
                .map(|(s, r, o, t, c)| format!("{s}\t{r}\t{o}\t{t}\t{c}\n"))
                .collect();
            let vocab = Vocab::anonymous(50, 10);
            let events = read_quintuples(text.as_bytes(), &vocab).unwrap();
            let mut out = Vec::new();
            write_quintuples(&mut out, &events).unwrap();
            prop_assert_eq!(String::from_utf8(out).unwrap(), text);
        }
    }
}
