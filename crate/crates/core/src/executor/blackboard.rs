//! Append-only message store with provenance chains.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::kg::SourcePath;
use crate::registry::DataKind;
use crate::tools::{ImageBuffer, MaskBuffer};

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Image(ImageBuffer),
    Mask(MaskBuffer),
    File(PathBuf),
}

impl Payload {
    pub fn kind(&self) -> DataKind {
        match self {
            Payload::Image(_) => DataKind::ImageCompressedNumpy,
            Payload::Mask(_) => DataKind::MaskCompressedNumpy,
            Payload::File(_) => DataKind::FilePath,
        }
    }

    /// SHA-256 of the payload content; files hash their bytes.
    pub fn digest(&self) -> String {
        let bytes = match self {
            Payload::Image(i) => i.to_bytes(),
            Payload::Mask(m) => m.to_bytes(),
            Payload::File(p) => std::fs::read(p).unwrap_or_default(),
        };
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlackboardMessage {
    pub id: u64,
    /// `supernode/chunk/agent`, with a suffix for side outputs.
    pub tag: String,
    /// Extra tags this message is exported under (`supernode/chunk`, `supernode`).
    pub exports: Vec<String>,
    /// Input case the message belongs to; `None` for case-independent results.
    pub case: Option<usize>,
    pub kind: DataKind,
    pub payload: Arc<Payload>,
    pub producer: SourcePath,
    pub parents: Vec<u64>,
}

impl BlackboardMessage {
    pub fn answers_to(&self, tag: &str) -> bool {
        self.tag == tag || self.exports.iter().any(|e| e == tag)
    }
}

/// A message before it is posted.
#[derive(Debug, Clone)]
pub struct Draft {
    pub tag: String,
    pub exports: Vec<String>,
    pub case: Option<usize>,
    pub kind: DataKind,
    pub payload: Payload,
    pub producer: SourcePath,
    pub parents: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlackboardError {
    #[error("no message tagged `{0}`")]
    UnknownTag(String),
    #[error("parent message {0} does not exist")]
    UnknownParent(u64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Blackboard {
    messages: Vec<BlackboardMessage>,
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn messages(&self) -> &[BlackboardMessage] {
        &self.messages
    }

    pub fn get(&self, id: u64) -> Option<&BlackboardMessage> {
        // Ids are 1-based and dense.
        id.checked_sub(1).and_then(|i| self.messages.get(i as usize))
    }

    /// Appends a message and returns its id.
    pub fn post(&mut self, draft: Draft) -> Result<u64, BlackboardError> {
        let id = self.messages.len() as u64 + 1;
        if let Some(p) = draft.parents.iter().find(|p| **p == 0 || **p >= id) {
            return Err(BlackboardError::UnknownParent(*p));
        }
        self.messages.push(BlackboardMessage {
            id,
            tag: draft.tag,
            exports: draft.exports,
            case: draft.case,
            kind: draft.kind,
            payload: Arc::new(draft.payload),
            producer: draft.producer,
            parents: draft.parents,
        });
        Ok(id)
    }

    /// Latest message answering to `tag`.
    pub fn latest(&self, tag: &str) -> Option<&BlackboardMessage> {
        self.messages.iter().rev().find(|m| m.answers_to(tag))
    }

    /// Latest message answering to `tag` for one case.
    pub fn latest_for_case(&self, tag: &str, case: usize) -> Option<&BlackboardMessage> {
        self.messages.iter().rev().find(|m| m.case == Some(case) && m.answers_to(tag))
    }

    /// The latest message for `tag` and its transitive parents in id order.
    pub fn query_chain(&self, tag: &str) -> Result<(&BlackboardMessage, Vec<&BlackboardMessage>), BlackboardError> {
        let head = self.latest(tag).ok_or_else(|| BlackboardError::UnknownTag(tag.to_string()))?;
        Ok((head, self.ancestors(head.id)))
    }

    pub fn ancestors(&self, id: u64) -> Vec<&BlackboardMessage> {
        let mut seen = vec![false; self.messages.len() + 1];
        let mut stack: Vec<u64> = self.get(id).map(|m| m.parents.clone()).unwrap_or_default();
        while let Some(p) = stack.pop() {
            if !seen[p as usize] {
                seen[p as usize] = true;
                stack.extend(&self.get(p).expect("parents exist").parents);
            }
        }
        (1..=self.messages.len() as u64)
            .filter(|i| seen[*i as usize])
            .map(|i| self.get(i).unwrap())
            .collect()
    }

    /// JSON dump in the given message order with ids renumbered from 1.
    /// Payloads appear as content hashes; file payloads also carry their path
    /// relative to `root`.
    pub fn dump(&self, order: &[u64], root: &Path) -> String {
        let mut renumber = vec![0u64; self.messages.len() + 1];
        for (i, id) in order.iter().enumerate() {
            renumber[*id as usize] = i as u64 + 1;
        }
        let entries: Vec<Value> = order
            .iter()
            .map(|id| {
                let m = self.get(*id).expect("order lists posted ids");
                let mut parents: Vec<u64> = m.parents.iter().map(|p| renumber[*p as usize]).collect();
                parents.sort_unstable();
                let mut payload = json!({ "sha256": m.payload.digest() });
                match m.payload.as_ref() {
                    Payload::Image(i) => {
                        payload["width"] = json!(i.width);
                        payload["height"] = json!(i.height);
                        payload["channels"] = json!(i.channels);
                    }
                    Payload::Mask(k) => {
                        payload["width"] = json!(k.width);
                        payload["height"] = json!(k.height);
                        payload["foreground"] = json!(k.count());
                    }
                    Payload::File(p) => {
                        let rel = p.strip_prefix(root).unwrap_or(p);
                        payload["file"] = json!(rel.to_string_lossy().replace('\\', "/"));
                    }
                }
                json!({
                    "id": renumber[*id as usize],
                    "tag": m.tag,
                    "exports": m.exports,
                    "case": m.case,
                    "kind": m.kind.as_str(),
                    "producer": m.producer.to_string(),
                    "parents": parents,
                    "payload": payload,
                })
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("dump serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draft(tag: &str, parents: Vec<u64>) -> Draft {
        Draft {
            tag: tag.into(),
            exports: vec![],
            case: Some(0),
            kind: DataKind::ImageCompressedNumpy,
            payload: Payload::Image(ImageBuffer::filled(1, 1, 1, 0.0)),
            producer: SourcePath::agent("s", "c", tag),
            parents,
        }
    }

    #[test]
    fn post_then_query() {
        let mut b = Blackboard::new();
        let id = b.post(draft("a", vec![])).unwrap();
        let (m, chain) = b.query_chain("a").unwrap();
        assert_eq!(m.id, id);
        assert!(chain.is_empty());
        assert_eq!(
            b.query_chain("nonexistent").unwrap_err(),
            BlackboardError::UnknownTag("nonexistent".into())
        );
    }

    #[test]
    fn chain_of_three() {
        let mut b = Blackboard::new();
        let a = b.post(draft("a", vec![])).unwrap();
        let x = b.post(draft("x", vec![])).unwrap();
        let m = b.post(draft("b", vec![a])).unwrap();
        b.post(draft("c", vec![m])).unwrap();
        let (head, chain) = b.query_chain("c").unwrap();
        assert_eq!(head.tag, "c");
        let ids: Vec<u64> = chain.iter().map(|m| m.id).collect();
        assert_eq!(ids, vec![a, m]);
        assert!(!ids.contains(&x));
    }

    #[test]
    fn exports_and_bad_parents() {
        let mut b = Blackboard::new();
        let mut d = draft("s/c/a", vec![]);
        d.exports = vec!["s".into()];
        b.post(d).unwrap();
        assert_eq!(b.latest("s").unwrap().tag, "s/c/a");
        assert_eq!(b.post(draft("z", vec![5])).unwrap_err(), BlackboardError::UnknownParent(5));
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn dump_renumbers() {
        let mut b = Blackboard::new();
        let a = b.post(draft("a", vec![])).unwrap();
        let c = b.post(draft("c", vec![a])).unwrap();
        let text = b.dump(&[c, a], Path::new("/"));
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v[0]["tag"], "c");
        assert_eq!(v[0]["parents"], json!([2]));
        assert_eq!(v[1]["id"], 2);
    }
}
