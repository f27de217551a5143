// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Loop dominance analysis for stock-and-flow models.
//!
//! A model written in the `.sdm` language is parsed and validated
//! ([`model`]), simulated with Euler integration ([`sim`]), and scored link
//! by link at every dt ([`scores`]). Loop scores, relative loop scores and
//! polarity labels follow ([`loops`]), and [`cld`] reduces the result to a
//! simplified causal loop diagram. [`bundle`] serializes an analysis for
//! other tools.
//!
//! ```
//! let src = "sim start=0 stop=10 dt=1
//! const birth_rate = 0.1
//! const average_lifetime = 20
//! flow births = birth_rate * Population
//! flow deaths = Population / average_lifetime
//! stock Population = 100 [+births, -deaths]
//! ";
//! let ir = ltm::model::parse_model(src).unwrap();
//! let a = ltm::analyze(&ir, &Default::default()).unwrap();
//! let r1 = a.loops.by_label("R1").unwrap();
//! assert!((r1.relative[5] - 200.0 / 3.0).abs() < 1e-9);
//! ```

pub mod analysis;
pub mod bundle;
pub mod cld;
pub mod error;
pub mod exec;
pub mod export;
pub mod loops;
pub mod model;
pub mod scores;
pub mod sim;

pub use analysis::{analyze, Analysis, AnalysisOptions};
pub use error::{Error, Result};
pub use exec::Exec;
