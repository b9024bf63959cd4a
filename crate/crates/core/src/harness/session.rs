//! Line-delimited JSON session files.
//!
//! ```text
//! {"type":"query","id":"q1","text":"...","split":"train"}
//! {"type":"document","id":"d1","text":"..."}
//! {"type":"qrel","qid":"q1","did":"d1"}
//! ```
//!
//! `split` is `train` (default) or `eval`. Training items form the stream
//! `(Q_t, D_t)`; eval queries are the held-out `Q*_t` and eval documents the
//! disjoint pool `D*_t`. Qrels are used for evaluation only. An optional
//! `topic` label is carried through for auditing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::text::tokenize;
use crate::simkernel::ItemKind;

const FMT: &str = "session";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Eval,
}

impl Split {
    fn is_train(&self) -> bool {
        *self == Split::Train
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Record {
    Query {
        id: String,
        text: String,
        #[serde(default, skip_serializing_if = "Split::is_train")]
        split: Split,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        topic: Option<String>,
    },
    Document {
        id: String,
        text: String,
        #[serde(default, skip_serializing_if = "Split::is_train")]
        split: Split,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        topic: Option<String>,
    },
    Qrel {
        qid: String,
        did: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextItem {
    pub id: String,
    pub kind: ItemKind,
    pub text: String,
    pub tokens: Vec<String>,
    pub topic: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SessionStream {
    pub index: usize,
    /// Training queries and documents in file order.
    pub train: Vec<TextItem>,
    /// Held-out queries and documents in file order.
    pub eval: Vec<TextItem>,
    pub qrels: BTreeMap<String, BTreeSet<String>>,
}

impl SessionStream {
    pub fn train_queries(&self) -> impl Iterator<Item = &TextItem> + '_ {
        self.train.iter().filter(|i| i.kind == ItemKind::Query)
    }

    pub fn train_documents(&self) -> impl Iterator<Item = &TextItem> + '_ {
        self.train.iter().filter(|i| i.kind == ItemKind::Document)
    }

    pub fn eval_queries(&self) -> impl Iterator<Item = &TextItem> + '_ {
        self.eval.iter().filter(|i| i.kind == ItemKind::Query)
    }

    pub fn eval_documents(&self) -> impl Iterator<Item = &TextItem> + '_ {
        self.eval.iter().filter(|i| i.kind == ItemKind::Document)
    }

    pub fn relevant(&self, qid: &str) -> Option<&BTreeSet<String>> {
        self.qrels.get(qid)
    }

    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::with_capacity(self.train.len() + self.eval.len());
        for (split, items) in [(Split::Train, &self.train), (Split::Eval, &self.eval)] {
            for it in items {
                let (id, text, topic) = (it.id.clone(), it.text.clone(), it.topic.clone());
                out.push(match it.kind {
                    ItemKind::Query => Record::Query { id, text, split, topic },
                    ItemKind::Document => Record::Document { id, text, split, topic },
                });
            }
        }
        for (q, ds) in &self.qrels {
            for d in ds {
                out.push(Record::Qrel {
                    qid: q.clone(),
                    did: d.clone(),
                });
            }
        }
        out
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn file_name(index: usize) -> String {
        format!("session_{index}.jsonl")
    }
}

/// Parses one session file. Item ids must be unique and every qrel must
/// reference items of this session.
pub fn parse_session(index: usize, input: &[u8]) -> Result<SessionStream> {
    let text = std::str::from_utf8(input).map_err(|e| Error::format(FMT, e.to_string()))?;
    let mut stream = SessionStream {
        index,
        ..SessionStream::default()
    };
    let mut kinds: HashMap<String, ItemKind> = HashMap::new();
    let mut pending_qrels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line)
            .map_err(|e| Error::format(FMT, format!("line {}: {e}", lineno + 1)))?;
        let (id, text, split, topic, kind) = match rec {
            Record::Qrel { qid, did } => {
                pending_qrels.push((lineno + 1, qid, did));
                continue;
            }
            Record::Query { id, text, split, topic } => (id, text, split, topic, ItemKind::Query),
            Record::Document { id, text, split, topic } => (id, text, split, topic, ItemKind::Document),
        };
        if id.is_empty() {
            return Err(Error::format(FMT, format!("line {}: empty id", lineno + 1)));
        }
        let tokens = tokenize(&text);
        if tokens.is_empty() {
            return Err(Error::format(FMT, format!("line {}: item {id} has no tokens", lineno + 1)));
        }
        if kinds.insert(id.clone(), kind).is_some() {
            return Err(Error::format(FMT, format!("line {}: duplicate id {id}", lineno + 1)));
        }
        let item = TextItem {
            id,
            kind,
            text,
            tokens,
            topic,
        };
        match split {
            Split::Train => stream.train.push(item),
            Split::Eval => stream.eval.push(item),
        }
    }
    for (lineno, qid, did) in pending_qrels {
        if kinds.get(&qid) != Some(&ItemKind::Query) || kinds.get(&did) != Some(&ItemKind::Document) {
            return Err(Error::format(
                FMT,
                format!("line {lineno}: qrel ({qid}, {did}) references unknown items"),
            ));
        }
        stream.qrels.entry(qid).or_default().insert(did);
    }
    Ok(stream)
}

/// Session files `session_<t>.jsonl` of a directory, ordered by `t`.
pub fn session_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(t) = name
            .strip_prefix("session_")
            .and_then(|s| s.strip_suffix(".jsonl"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            files.push((t, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no session_<t>.jsonl files in {}", dir.display())));
    }
    Ok(files)
}

pub fn load_sessions(dir: &Path) -> Result<Vec<SessionStream>> {
    session_files(dir)?
        .into_iter()
        .map(|(t, path)| parse_session(t, &fs::read(&path)?).map_err(|e| e.in_session(t)))
        .collect()
}

pub fn write_sessions(dir: &Path, sessions: &[SessionStream]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for s in sessions {
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf)?;
        fs::write(dir.join(SessionStream::file_name(s.index)), buf)?;
    }
    Ok(())
}
