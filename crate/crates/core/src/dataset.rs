//! Datasets and their JSONL encoding.
//!
//! The first line is a header record
//! `{"schema_version": 1, "graph": {...}, "featurizer": {...}}`; every
//! following line is one example `{"x": {"contexts": [[...]]} | {"tables": [[[...]]]}, "y": [...]}`.
//! Node and label indices are 0-based.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::json;
use crate::scoring::{FeatureMap, Featurizer, StructuredExample};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub map: FeatureMap,
    pub examples: Vec<StructuredExample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    graph: FactorGraph,
    featurizer: Featurizer,
}

impl Dataset {
    pub fn new(map: FeatureMap, examples: Vec<StructuredExample>) -> Result<Self> {
        for ex in &examples {
            map.check_example(ex)?;
        }
        Ok(Dataset { map, examples })
    }

    pub fn graph(&self) -> &FactorGraph {
        self.map.graph()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Same structure, different examples.
    pub fn with_examples(&self, examples: Vec<StructuredExample>) -> Dataset {
        Dataset {
            map: self.map.clone(),
            examples,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = Header {
            schema_version: DATASET_SCHEMA_VERSION,
            graph: self.map.graph().clone(),
            featurizer: self.map.featurizer(),
        };
        writeln!(out, "{}", json::to_line(&header)?)?;
        for ex in &self.examples {
            writeln!(out, "{}", json::to_line(ex)?)?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true)
        });
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("dataset file is empty".into()))?;
        let first = first.map_err(io_err)?;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| Error::InvalidInput(format!("bad dataset header: {e}")))?;
        if header.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported dataset schema version {}",
                header.schema_version
            )));
        }
        let map = FeatureMap::new(header.graph, header.featurizer)?;
        let mut examples = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(io_err)?;
            let ex: StructuredExample = serde_json::from_str(&line)
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", lineno + 1)))?;
            examples.push(ex);
        }
        Dataset::new(map, examples)
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("read error: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabelAssignment;
    use crate::scoring::StructuredInput;

    fn tiny() -> Dataset {
        let map = FeatureMap::new(
            FactorGraph::chain(3, 2, 2).unwrap(),
            Featurizer::ChainCrf { n: 2 },
        )
        .unwrap();
        let ex = StructuredExample {
            x: StructuredInput::Contexts(vec![vec![0.1, 0.2], vec![0.3, -0.4], vec![1.0, 0.0]]),
            y: LabelAssignment::new(vec![1, 0, 1]),
        };
        Dataset::new(map, vec![ex]).unwrap()
    }

    #[test]
    fn jsonl_roundtrip() {
        let d = tiny();
        let text = d.to_jsonl_string();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            r#"{"schema_version":1,"graph":{"l":3,"alphabet":[2,2,2],"factors":[[0,1],[1,2]]},"featurizer":{"featurizer":"chain_crf","n":2}}"#
        );
        assert!(lines.next().unwrap().starts_with(r#"{"x":{"contexts":[["#));
        let back = Dataset::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rejects_bad_records() {
        let d = tiny();
        let text = d.to_jsonl_string().replace("[1,0,1]", "[1,0,5]");
        assert!(matches!(
            Dataset::read_jsonl(text.as_bytes()),
            Err(Error::InvalidAssignment(_))
        ));
        assert!(Dataset::read_jsonl("".as_bytes()).is_err());
        let text = d.to_jsonl_string().replace("\"schema_version\":1", "\"schema_version\":9");
        assert!(Dataset::read_jsonl(text.as_bytes()).is_err());
    }
}
