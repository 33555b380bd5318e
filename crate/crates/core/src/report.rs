//! Result records: per-solve report rows, solution files, cut dumps, and
//! the batch profile/stability summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bnb::SolveStatus;
use crate::cuts::{CutOrigin, LinearCut};
use crate::engine::SolveOutput;

/// The per-solve report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective: Option<f64>,
    pub heuristic: Option<f64>,
    pub initial_time: f64,
    pub solver_time: f64,
    pub callback_time: f64,
    pub total_time: f64,
    pub sim_time: f64,
    pub initial_cuts: usize,
    pub benders_cuts: usize,
    pub nodes: u64,
}

fn opt_cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl SolveReport {
    pub fn from_output(out: &SolveOutput) -> SolveReport {
        SolveReport {
            objective: out.objective,
            heuristic: out.heuristic_objective,
            initial_time: out.timings.initial,
            solver_time: out.timings.solver,
            callback_time: out.timings.callback,
            total_time: out.timings.total,
            sim_time: out.timings.simulation,
            initial_cuts: out.initial_cuts,
            benders_cuts: out.benders_cuts,
            nodes: out.nodes,
        }
    }

    pub fn csv_header() -> &'static str {
        "objective,heuristic,initial_time,solver_time,callback_time,total_time,sim_time,\
         initial_cuts,benders_cuts,nodes"
    }

    /// One CSV row matching [`SolveReport::csv_header`]; absent objective
    /// or heuristic values become empty cells.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
            opt_cell(self.objective),
            opt_cell(self.heuristic),
            self.initial_time,
            self.solver_time,
            self.callback_time,
            self.total_time,
            self.sim_time,
            self.initial_cuts,
            self.benders_cuts,
            self.nodes
        )
    }
}

/// Everything a solution file records; serialized as JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub problem_type: String,
    pub method: String,
    pub instance: String,
    pub status: String,
    pub objective: Option<f64>,
    pub bound: f64,
    pub gap: Option<f64>,
    pub y: Option<Vec<u32>>,
    /// Shift counts, for staffing solutions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<u32>>,
    /// Seed recorded from the command line; informational only — the
    /// instance file already fixes all randomness.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub monotonicity_violations: usize,
    pub report: SolveReport,
}

impl SolutionRecord {
    pub fn new(
        problem_type: &str,
        method: &str,
        instance: &str,
        out: &SolveOutput,
    ) -> SolutionRecord {
        SolutionRecord {
            problem_type: problem_type.to_string(),
            method: method.to_string(),
            instance: instance.to_string(),
            status: out.status.label().to_string(),
            objective: out.objective,
            bound: out.bound,
            gap: out.gap,
            y: out.best_y.clone(),
            x: None,
            seed: None,
            monotonicity_violations: out.monotonicity_violations,
            report: SolveReport::from_output(out),
        }
    }
}

/// Cut dump: one row per cut (`measure,kind,constant,term_count`); the
/// sparse terms go to a sidecar (`cut,object,level,coeff`).
pub fn cuts_csv(cuts: &[LinearCut]) -> String {
    let mut out = String::from("measure,kind,constant,term_count\n");
    for cut in cuts {
        let kind = match cut.origin {
            CutOrigin::Initial => "In",
            CutOrigin::Benders(kind) => kind.short_label(),
        };
        out.push_str(&format!(
            "{}:{},{},{:.9},{}\n",
            cut.measure.scenario,
            cut.measure.key,
            kind,
            cut.constant,
            cut.z_terms.len()
        ));
    }
    out
}

/// The sidecar term file for [`cuts_csv`], indexed by cut row order.
pub fn cut_terms_csv(cuts: &[LinearCut]) -> String {
    let mut out = String::from("cut,object,level,coeff\n");
    for (index, cut) in cuts.iter().enumerate() {
        for term in &cut.z_terms {
            out.push_str(&format!(
                "{index},{},{},{:.9}\n",
                term.object, term.level, term.coeff
            ));
        }
    }
    out
}

/// One run in a batch comparison.
#[derive(Clone, Debug)]
pub struct ProfileEntry {
    pub method: String,
    pub instance: String,
    pub solved: bool,
    pub runtime: f64,
    /// Relative gap for unsolved runs.
    pub gap: f64,
}

impl ProfileEntry {
    pub fn from_record(record: &SolutionRecord) -> ProfileEntry {
        ProfileEntry {
            method: record.method.clone(),
            instance: record.instance.clone(),
            solved: record.status == SolveStatus::Optimal.label(),
            runtime: record.report.total_time,
            gap: record.gap.unwrap_or(f64::INFINITY),
        }
    }
}

/// A per-method step curve over the two-regime axis: solved runs appear
/// in the time region, unsolved runs in the logarithmic gap region.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodCurve {
    pub method: String,
    /// (runtime, fraction solved within it), runtime ascending.
    pub time_steps: Vec<(f64, f64)>,
    /// (gap, fraction solved-or-within-gap), gap ascending.
    pub gap_steps: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub curves: Vec<MethodCurve>,
    pub time_limit: f64,
}

/// Groups runs by method and builds the profile curves. Every method
/// must cover exactly the same instances.
pub fn build_profile(entries: &[ProfileEntry], time_limit: f64) -> Result<Profile, String> {
    if entries.is_empty() {
        return Err("no runs to profile".into());
    }
    let mut by_method: BTreeMap<&str, Vec<&ProfileEntry>> = BTreeMap::new();
    for entry in entries {
        by_method.entry(&entry.method).or_default().push(entry);
    }
    let mut reference: Option<(String, Vec<&str>)> = None;
    for (&method, runs) in &by_method {
        let mut instances: Vec<&str> = runs.iter().map(|r| r.instance.as_str()).collect();
        instances.sort_unstable();
        if instances.windows(2).any(|w| w[0] == w[1]) {
            return Err(format!("method {method} has duplicate instances"));
        }
        match &reference {
            None => reference = Some((method.to_string(), instances)),
            Some((first, expected)) => {
                if *expected != instances {
                    return Err(format!(
                        "methods {first} and {method} cover different instance sets"
                    ));
                }
            }
        }
    }
    let mut curves = Vec::new();
    for (method, runs) in by_method {
        let total = runs.len() as f64;
        let mut solved: Vec<f64> = runs
            .iter()
            .filter(|r| r.solved)
            .map(|r| r.runtime)
            .collect();
        solved.sort_by(f64::total_cmp);
        let time_steps: Vec<(f64, f64)> = solved
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, (i + 1) as f64 / total))
            .collect();
        let base = solved.len() as f64 / total;
        let mut gaps: Vec<f64> = runs
            .iter()
            .filter(|r| !r.solved)
            .map(|r| r.gap)
            .collect();
        gaps.sort_by(f64::total_cmp);
        let gap_steps: Vec<(f64, f64)> = gaps
            .iter()
            .enumerate()
            .map(|(i, &g)| (g, base + (i + 1) as f64 / total))
            .collect();
        curves.push(MethodCurve {
            method: method.to_string(),
            time_steps,
            gap_steps,
        });
    }
    Ok(Profile { curves, time_limit })
}

impl Profile {
    /// The normative output: `method,regime,x,fraction` rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("method,regime,x,fraction\n");
        for curve in &self.curves {
            for &(x, fraction) in &curve.time_steps {
                out.push_str(&format!("{},time,{x:.6},{fraction:.6}\n", curve.method));
            }
            for &(x, fraction) in &curve.gap_steps {
                out.push_str(&format!("{},gap,{x:.6},{fraction:.6}\n", curve.method));
            }
        }
        out
    }

    /// A small self-contained chart: the left panel is runtime up to the
    /// limit, the right panel is the gap on a log scale.
    pub fn svg(&self) -> String {
        const WIDTH: f64 = 860.0;
        const HEIGHT: f64 = 420.0;
        const LEFT: f64 = 60.0;
        const RIGHT: f64 = 840.0;
        const TOP: f64 = 30.0;
        const BOTTOM: f64 = 380.0;
        const SPLIT: f64 = (LEFT + RIGHT) / 2.0;
        const PALETTE: [&str; 8] = [
            "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
            "#7f7f7f",
        ];
        let limit = if self.time_limit > 0.0 {
            self.time_limit
        } else {
            1.0
        };
        let gap_values: Vec<f64> = self
            .curves
            .iter()
            .flat_map(|c| c.gap_steps.iter().map(|&(g, _)| g))
            .filter(|g| g.is_finite() && *g > 0.0)
            .collect();
        let gap_lo = gap_values.iter().copied().fold(f64::INFINITY, f64::min);
        let gap_lo = if gap_lo.is_finite() { gap_lo } else { 1e-6 };
        let gap_hi = gap_values
            .iter()
            .copied()
            .fold(gap_lo * 10.0, f64::max)
            .max(gap_lo * 10.0);
        let x_time = |t: f64| LEFT + (t / limit).clamp(0.0, 1.0) * (SPLIT - LEFT);
        let x_gap = |g: f64| {
            let g = g.clamp(gap_lo, gap_hi);
            SPLIT + (g.ln() - gap_lo.ln()) / (gap_hi.ln() - gap_lo.ln()) * (RIGHT - SPLIT)
        };
        let y_frac = |f: f64| BOTTOM - f.clamp(0.0, 1.0) * (BOTTOM - TOP);

        let mut svg = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<line x1="{LEFT}" y1="{BOTTOM}" x2="{RIGHT}" y2="{BOTTOM}" stroke="black"/>
<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}" stroke="black"/>
<line x1="{SPLIT}" y1="{TOP}" x2="{SPLIT}" y2="{BOTTOM}" stroke="gray" stroke-dasharray="4 4"/>
<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">runtime (s), 0 to {limit:.0}</text>
<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">gap (log scale)</text>
<text x="20" y="{:.1}" font-size="13" transform="rotate(-90 20 {:.1})" text-anchor="middle">fraction of instances</text>
"#,
            (LEFT + SPLIT) / 2.0,
            BOTTOM + 28.0,
            (SPLIT + RIGHT) / 2.0,
            BOTTOM + 28.0,
            (TOP + BOTTOM) / 2.0,
            (TOP + BOTTOM) / 2.0,
        );
        for (index, curve) in self.curves.iter().enumerate() {
            let color = PALETTE[index % PALETTE.len()];
            // Step-after polyline across both regimes.
            let mut points: Vec<(f64, f64)> = vec![(LEFT, y_frac(0.0))];
            let mut level = 0.0f64;
            for &(t, fraction) in &curve.time_steps {
                points.push((x_time(t), y_frac(level)));
                points.push((x_time(t), y_frac(fraction)));
                level = fraction;
            }
            points.push((SPLIT, y_frac(level)));
            for &(g, fraction) in &curve.gap_steps {
                points.push((x_gap(g), y_frac(level)));
                points.push((x_gap(g), y_frac(fraction)));
                level = fraction;
            }
            points.push((RIGHT, y_frac(level)));
            let path: Vec<String> = points
                .iter()
                .map(|&(x, y)| format!("{x:.1},{y:.1}"))
                .collect();
            svg.push_str(&format!(
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>
"#,
                path.join(" ")
            ));
            let legend_y = TOP + 16.0 * index as f64;
            svg.push_str(&format!(
                r#"<line x1="{:.1}" y1="{legend_y:.1}" x2="{:.1}" y2="{legend_y:.1}" stroke="{color}" stroke-width="2"/>
<text x="{:.1}" y="{:.1}" font-size="12">{}</text>
"#,
                RIGHT - 130.0,
                RIGHT - 105.0,
                RIGHT - 100.0,
                legend_y + 4.0,
                curve.method
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Per-variable spread across runs: `object,min,max,mean` rows.
pub fn stability_csv(solutions: &[Vec<u32>]) -> Result<String, String> {
    let first = solutions
        .first()
        .ok_or_else(|| "no solutions to compare".to_string())?;
    if solutions.iter().any(|y| y.len() != first.len()) {
        return Err("solutions have different shapes".into());
    }
    let mut out = String::from("object,min,max,mean\n");
    for j in 0..first.len() {
        let values: Vec<u32> = solutions.iter().map(|y| y[j]).collect();
        let min = values.iter().min().unwrap();
        let max = values.iter().max().unwrap();
        let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / values.len() as f64;
        out.push_str(&format!("{j},{min},{max},{mean:.6}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(method: &str, instance: &str, solved: bool, runtime: f64, gap: f64) -> ProfileEntry {
        ProfileEntry {
            method: method.into(),
            instance: instance.into(),
            solved,
            runtime,
            gap,
        }
    }

    #[test]
    fn a_single_solved_run_steps_to_one() {
        let profile = build_profile(&[entry("S", "a", true, 12.5, 0.0)], 60.0).unwrap();
        assert_eq!(profile.curves.len(), 1);
        assert_eq!(profile.curves[0].time_steps, vec![(12.5, 1.0)]);
        assert!(profile.curves[0].gap_steps.is_empty());
        let csv = profile.csv();
        assert!(csv.contains("S,time,12.500000,1.000000"));
    }

    #[test]
    fn unsolved_runs_live_in_the_gap_region() {
        let entries = [
            entry("NG", "a", false, 60.0, 0.5),
            entry("NG", "b", false, 60.0, 0.05),
        ];
        let profile = build_profile(&entries, 60.0).unwrap();
        let curve = &profile.curves[0];
        assert!(curve.time_steps.is_empty());
        assert_eq!(curve.gap_steps, vec![(0.05, 0.5), (0.5, 1.0)]);
        // Fractions never decrease along the combined axis.
        let fractions: Vec<f64> = curve
            .time_steps
            .iter()
            .chain(&curve.gap_steps)
            .map(|&(_, f)| f)
            .collect();
        assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mismatched_instance_sets_are_rejected() {
        let entries = [
            entry("S", "a", true, 1.0, 0.0),
            entry("NG", "b", true, 2.0, 0.0),
        ];
        let err = build_profile(&entries, 60.0).unwrap_err();
        assert!(err.contains("different instance sets"), "{err}");
        let twice = [
            entry("S", "a", true, 1.0, 0.0),
            entry("S", "a", true, 2.0, 0.0),
        ];
        assert!(build_profile(&twice, 60.0).is_err());
    }

    #[test]
    fn the_chart_renders_every_method() {
        let entries = [
            entry("S+In", "a", true, 5.0, 0.0),
            entry("S+In", "b", false, 60.0, 0.2),
            entry("NG", "a", true, 25.0, 0.0),
            entry("NG", "b", false, 60.0, 0.7),
        ];
        let profile = build_profile(&entries, 60.0).unwrap();
        let svg = profile.svg();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">S+In<"));
        assert!(svg.contains(">NG<"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn identical_solutions_have_zero_band_width() {
        let csv = stability_csv(&[vec![3, 5, 2], vec![3, 5, 2]]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "object,min,max,mean");
        assert_eq!(lines[1], "0,3,3,3.000000");
        assert_eq!(lines[2], "1,5,5,5.000000");
        assert_eq!(lines[3], "2,2,2,2.000000");
    }

    #[test]
    fn one_coordinate_apart_yields_a_unit_band_there() {
        let csv = stability_csv(&[vec![3, 5], vec![3, 6]]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "0,3,3,3.000000");
        assert_eq!(lines[2], "1,5,6,5.500000");
        assert!(stability_csv(&[vec![1], vec![1, 2]]).is_err());
        assert!(stability_csv(&[]).is_err());
    }

    #[test]
    fn report_rows_blank_out_missing_values() {
        let report = SolveReport {
            objective: None,
            heuristic: None,
            initial_time: 0.1,
            solver_time: 0.2,
            callback_time: 0.3,
            total_time: 0.6,
            sim_time: 0.25,
            initial_cuts: 4,
            benders_cuts: 9,
            nodes: 17,
        };
        let row = report.csv_row();
        assert!(row.starts_with(",,0.100000,"));
        assert!(row.ends_with(",4,9,17"));
        assert_eq!(
            SolveReport::csv_header().split(',').count(),
            row.split(',').count()
        );
    }

    #[test]
    fn cut_dumps_pair_up_with_their_terms() {
        use crate::cuts::{CutKind, CutOrigin, LinearCut, ZTerm};
        use crate::instance::MeasureId;
        let cuts = vec![
            LinearCut {
                measure: MeasureId {
                    scenario: 0,
                    key: 3,
                },
                constant: 7.5,
                z_terms: vec![
                    ZTerm {
                        object: 1,
                        level: 2,
                        coeff: -7.5,
                    },
                    ZTerm {
                        object: 2,
                        level: 0,
                        coeff: -1.25,
                    },
                ],
                origin: CutOrigin::Benders(CutKind::Strengthened),
            },
            LinearCut {
                measure: MeasureId {
                    scenario: 1,
                    key: 0,
                },
                constant: 0.0,
                z_terms: vec![ZTerm {
                    object: 0,
                    level: 4,
                    coeff: 2.0,
                }],
                origin: CutOrigin::Initial,
            },
        ];
        let head = cuts_csv(&cuts);
        assert!(head.starts_with("measure,kind,constant,term_count\n"));
        assert!(head.contains("0:3,S,7.500000000,2"));
        assert!(head.contains("1:0,In,0.000000000,1"));
        let terms = cut_terms_csv(&cuts);
        assert!(terms.contains("0,1,2,-7.500000000"));
        assert!(terms.contains("1,0,4,2.000000000"));
    }
}
