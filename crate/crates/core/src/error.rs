// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

use std::fmt;

use thiserror::Error;

/// 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("'{name}' expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate name '{0}'")]
    DuplicateName(String),
    #[error("unresolved reference '{name}' in '{context}'")]
    UnresolvedReference { name: String, context: String },
    #[error("{0}")]
    Invalid(String),
    #[error("algebraic loop among non-stock variables: {}", .0.join(" -> "))]
    Simultaneity(Vec<String>),
}

/// A model diagnostic, positioned when it came from source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelError {
    pub pos: Option<Pos>,
    pub kind: ModelErrorKind,
}

impl ModelError {
    pub fn new(kind: ModelErrorKind) -> Self {
        ModelError { pos: None, kind }
    }

    pub fn at(pos: Pos, kind: ModelErrorKind) -> Self {
        ModelError {
            pos: Some(pos),
            kind,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        ModelError::new(ModelErrorKind::Invalid(msg.into()))
    }
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pos {
            Some(p) => write!(f, "{p}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl std::error::Error for ModelError {}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SimError {
    #[error("non-finite value for '{variable}' at time {time}")]
    NonFinite { time: f64, variable: String },
    #[error("run would take {steps} steps, over the cap of {cap}")]
    TooManySteps { steps: usize, cap: usize },
    #[error("invalid sim config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum AnalysisError {
    #[error("declared loop {0:?} is not a cycle in the causal graph")]
    NotACycle(Vec<String>),
    #[error("declared path {0:?} is not a path in the causal graph")]
    NotAPath(Vec<String>),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("malformed bundle: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported bundle schema version {found} (this build reads {supported}.x)")]
    Version { found: String, supported: u32 },
    #[error("inconsistent bundle: {0}")]
    Inconsistent(String),
}

/// Top-level error for the pipeline and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for parse/validation problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Model(_) | Error::Analysis(_) | Error::Bundle(_) => 2,
            Error::Sim(_) | Error::Csv(_) | Error::Io(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
