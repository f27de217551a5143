// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! The analysis bundle: a JSON document holding everything downstream
//! tools need to re-simplify and plot an analysis without re-simulating.
//!
//! Series share the bundle's `time` axis. Output is deterministic, so two
//! runs over the same inputs produce byte-identical files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::Analysis;
use crate::error::{BundleError, Error, Result};
use crate::loops::{LoopRecord, Partition};
use crate::model::{SimConfig, VarKind};
use crate::scores::{CompositeRecord, PathScore};

pub const SCHEMA_MAJOR: u32 = 1;
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub schema_version: String,
    pub tool_version: String,
    pub model: ModelInfo,
    pub sim: SimConfig,
    pub time: Vec<f64>,
    pub variables: Vec<VariableInfo>,
    pub edges: Vec<EdgeRecord>,
    pub partitions: Vec<Partition>,
    pub loops: Vec<LoopRecord>,
    pub composites: Vec<CompositeRecord>,
    pub paths: Vec<PathScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub source: String,
    /// Digest of the canonical IR, after overrides.
    pub digest: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableInfo {
    pub name: String,
    pub kind: VarKind,
    pub hidden: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inflows: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outflows: Vec<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub nonneg: bool,
}

/// A causal link between user variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub source: String,
    pub target: String,
    /// Chains of variables from source to target; one direct chain unless
    /// the link crosses a macro.
    pub pathways: Vec<Vec<String>>,
    pub score: Vec<f64>,
    pub relative: Vec<f64>,
    pub invalid_steps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub series: Vec<Series>,
    pub binding: Vec<BindingSeries>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BindingSeries {
    pub stock: String,
    pub binding: Vec<bool>,
}

impl Bundle {
    pub fn from_analysis(a: &Analysis, source: &str, overrides: &BTreeMap<String, f64>, with_trace: bool) -> Bundle {
        let g = &a.graph;
        let lg = &a.loop_graph;
        let variables = a
            .expanded
            .variables
            .iter()
            .map(|v| VariableInfo {
                name: v.name.clone(),
                kind: v.kind,
                hidden: v.is_hidden(),
                inflows: v.stock.as_ref().map(|s| s.inflows.clone()).unwrap_or_default(),
                outflows: v.stock.as_ref().map(|s| s.outflows.clone()).unwrap_or_default(),
                nonneg: v.stock.as_ref().is_some_and(|s| s.nonneg),
            })
            .collect();
        let edges = lg
            .edges
            .iter()
            .zip(&a.scores.edges)
            .map(|(e, s)| EdgeRecord {
                source: lg.names[e.from].clone(),
                target: lg.names[e.to].clone(),
                pathways: e
                    .pathways
                    .iter()
                    .map(|pw| {
                        let mut chain = vec![g.nodes[g.pairs[pw[0]].from].clone()];
                        chain.extend(pw.iter().map(|&p| g.nodes[g.pairs[p].to].clone()));
                        chain
                    })
                    .collect(),
                score: s.score.clone(),
                relative: s.relative.clone(),
                invalid_steps: s.invalid_steps.clone(),
            })
            .collect();
        let trace = with_trace.then(|| TraceRecord {
            series: a
                .trace
                .names
                .iter()
                .enumerate()
                .map(|(i, n)| Series {
                    name: n.clone(),
                    values: a.trace.values.iter().map(|row| row[i]).collect(),
                })
                .collect(),
            binding: a
                .trace
                .nonneg
                .iter()
                .map(|n| BindingSeries {
                    stock: n.stock.clone(),
                    binding: n.binding.clone(),
                })
                .collect(),
        });
        Bundle {
            schema_version: SCHEMA_VERSION.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            model: ModelInfo {
                source: source.to_string(),
                digest: a.ir().digest(),
                overrides: overrides.clone(),
            },
            sim: a.expanded.sim,
            time: a.trace.time.clone(),
            variables,
            edges,
            partitions: a.loops.partitions.clone(),
            loops: a.loops.loops.clone(),
            composites: a.composites.clone(),
            paths: a.paths.clone(),
            trace,
        }
    }

    pub fn variable(&self, name: &str) -> Option<&VariableInfo> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn edge(&self, source: &str, target: &str) -> Option<&EdgeRecord> {
        self.edges.iter().find(|e| e.source == source && e.target == target)
    }

    /// Series length and finiteness checks shared by reading and writing.
    pub fn check(&self) -> Result<(), BundleError> {
        let n = self.time.len();
        let bad = |what: String| Err(BundleError::Inconsistent(what));
        let series = self
            .edges
            .iter()
            .flat_map(|e| [(&e.score, format!("edge {} -> {}", e.source, e.target)), (&e.relative, format!("edge {} -> {}", e.source, e.target))])
            .chain(self.loops.iter().flat_map(|l| [(&l.score, format!("loop {}", l.id)), (&l.relative, format!("loop {}", l.id))]))
            .chain(self.composites.iter().map(|c| (&c.score, format!("composite {}.{}", c.macro_id, c.argument))))
            .chain(self.paths.iter().map(|p| (&p.score, format!("path {}", p.name))))
            .chain(self.trace.iter().flat_map(|t| t.series.iter().map(|s| (&s.values, format!("series {}", s.name)))));
        for (s, what) in series {
            if s.len() != n {
                return bad(format!("{what} has {} entries, time has {n}", s.len()));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return bad(format!("{what} holds a non-finite value"));
            }
        }
        if let Some(p) = self.partitions.iter().find(|p| p.active.len() != n) {
            return bad(format!("partition {} has {} activity flags, time has {n}", p.id, p.active.len()));
        }
        for e in &self.edges {
            if self.variable(&e.source).is_none() || self.variable(&e.target).is_none() {
                return bad(format!("edge {} -> {} names an unknown variable", e.source, e.target));
            }
        }
        for l in &self.loops {
            if l.partition >= self.partitions.len() {
                return bad(format!("loop {} names partition {}", l.id, l.partition));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, BundleError> {
        self.check()?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Bundle, BundleError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| BundleError::Inconsistent("missing schema_version".into()))?;
        let major = version.split('.').next().and_then(|m| m.parse::<u32>().ok());
        if major != Some(SCHEMA_MAJOR) {
            return Err(BundleError::Version {
                found: version.to_string(),
                supported: SCHEMA_MAJOR,
            });
        }
        let b: Bundle = serde_json::from_value(value)?;
        b.check()?;
        Ok(b)
    }

    pub fn read(path: &Path) -> Result<Bundle> {
        Ok(Bundle::from_json(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::{analyze, AnalysisOptions};

    const SRC: &str = "sim start=0 stop=5 dt=1
const birth_rate = 0.1
const average_lifetime = 20
flow births = birth_rate * Population
flow deaths = Population / average_lifetime
stock Population = 100 [+births, -deaths]
";

    fn bundle(trace: bool) -> Bundle {
        let a = analyze(&parse_model(SRC).unwrap(), &AnalysisOptions::default()).unwrap();
        Bundle::from_analysis(&a, SRC, &BTreeMap::new(), trace)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for trace in [false, true] {
            let text = bundle(trace).to_json().unwrap();
            let back = Bundle::from_json(&text).unwrap();
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn rejects_other_major_versions() {
        let mut b = bundle(false);
        b.schema_version = "2.0".into();
        let text = serde_json::to_string(&b).unwrap();
        assert!(matches!(Bundle::from_json(&text), Err(BundleError::Version { .. })));
        b.schema_version = "1.7".into();
        assert!(Bundle::from_json(&serde_json::to_string(&b).unwrap()).is_ok());
    }

    #[test]
    fn rejects_short_series() {
        let mut b = bundle(false);
        b.edges[0].score.pop();
        assert!(matches!(b.to_json(), Err(BundleError::Inconsistent(_))));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        std::fs::write(&path, "old").unwrap();
        let b = bundle(false);
        b.write(&path).unwrap();
        assert_eq!(Bundle::read(&path).unwrap(), b);
    }
}
