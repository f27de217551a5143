// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! CSV views of a bundle.

use std::io::Write;

use crate::bundle::Bundle;

/// One row per link per step: `time, source, target, score, relative_score`.
pub fn write_scores_csv<W: Write>(b: &Bundle, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "source", "target", "score", "relative_score"])?;
    for (t, time) in b.time.iter().enumerate() {
        for e in &b.edges {
            out.write_record([
                time.to_string(),
                e.source.clone(),
                e.target.clone(),
                e.score[t].to_string(),
                e.relative[t].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Loop inventory: `loop_id, label, partition, mean_abs_rel_score, members`.
pub fn write_loops_csv<W: Write>(b: &Bundle, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["loop_id", "label", "partition", "mean_abs_rel_score", "members"])?;
    for l in &b.loops {
        out.write_record([
            l.id.clone(),
            l.label.clone(),
            l.partition.to_string(),
            l.mean_abs_relative.to_string(),
            l.members.join(" -> "),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Relative loop scores per step, one column per loop id.
pub fn write_loop_series_csv<W: Write>(b: &Bundle, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["time".to_string()];
    header.extend(b.loops.iter().map(|l| l.id.clone()));
    out.write_record(&header)?;
    for (t, time) in b.time.iter().enumerate() {
        let mut rec = vec![time.to_string()];
        rec.extend(b.loops.iter().map(|l| l.relative[t].to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::parse_model;
    use crate::{analyze, AnalysisOptions};

    fn bundle() -> Bundle {
        let src = "sim start=0 stop=2 dt=1
flow births = 0.1 * Population
stock Population = 100 [+births]
";
        let a = analyze(&parse_model(src).unwrap(), &AnalysisOptions::default()).unwrap();
        Bundle::from_analysis(&a, src, &BTreeMap::new(), false)
    }

    #[test]
    fn scores_csv_layout() {
        let mut buf = Vec::new();
        write_scores_csv(&bundle(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "time,source,target,score,relative_score");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines.contains(&"1,births,Population,1,1"));
    }

    #[test]
    fn loop_csvs() {
        let b = bundle();
        let mut buf = Vec::new();
        write_loops_csv(&b, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "L1,R1,0,100,Population -> births");
        let mut buf = Vec::new();
        write_loop_series_csv(&b, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().collect::<Vec<_>>(), ["time,L1", "0,0", "1,100", "2,100"]);
    }
}
