//! Efficiency metric, percent deltas against a baseline and accuracy/cost
//! Pareto frontiers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cooccurrence::csv_field;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigPoint {
    pub name: String,
    /// Free-form grouping label (e.g. model and input size); empty when unused.
    #[serde(default)]
    pub group: String,
    pub accuracy: f64,
    pub latency_ms: f64,
    pub energy_mj: f64,
    pub sparam_m: f64,
    pub dparam_m: f64,
    pub gmacs: f64,
}

impl ConfigPoint {
    pub fn efficiency(&self) -> Result<f64> {
        efficiency(self.accuracy, self.energy_mj, self.latency_ms)
    }

    fn cost(&self, axis: CostAxis) -> f64 {
        match axis {
            CostAxis::Energy => self.energy_mj,
            CostAxis::Latency => self.latency_ms,
        }
    }
}

/// `accuracy / (energy * latency)`.
pub fn efficiency(accuracy: f64, energy_mj: f64, latency_ms: f64) -> Result<f64> {
    if !(energy_mj > 0.0 && latency_ms > 0.0) {
        return Err(Error::Parameter(format!(
            "efficiency needs positive energy and latency, got {energy_mj} mJ and {latency_ms} ms"
        )));
    }
    Ok(accuracy / (energy_mj * latency_ms))
}

/// `100 * (value - baseline) / baseline`.
pub fn percent_delta(baseline: f64, value: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::Parameter(
            "percent delta against a zero baseline".into(),
        ));
    }
    Ok(100.0 * (value - baseline) / baseline)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostAxis {
    Energy,
    Latency,
}

impl FromStr for CostAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(CostAxis::Energy),
            "latency" => Ok(CostAxis::Latency),
            other => Err(Error::Parameter(format!("unknown cost axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierResult {
    pub axis: CostAxis,
    /// Indices into the input slice, ascending.
    pub frontier: Vec<usize>,
    pub dominated: Vec<usize>,
}

/// `q` dominates `p` when it is at least as accurate and at most as costly,
/// strictly better in one of the two.
pub fn dominates(q: &ConfigPoint, p: &ConfigPoint, axis: CostAxis) -> bool {
    let (qa, qc, pa, pc) = (q.accuracy, q.cost(axis), p.accuracy, p.cost(axis));
    qa >= pa && qc <= pc && (qa > pa || qc < pc)
}

/// Splits points into the non-dominated frontier (ties all kept) and the rest.
pub fn pareto_front(points: &[ConfigPoint], axis: CostAxis) -> FrontierResult {
    let mut frontier = Vec::new();
    let mut dominated = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if points.iter().any(|q| dominates(q, p, axis)) {
            dominated.push(i);
        } else {
            frontier.push(i);
        }
    }
    FrontierResult {
        axis,
        frontier,
        dominated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub accuracy: f64,
    pub latency: f64,
    pub energy: f64,
    pub dparam: f64,
    pub macs: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub point: ConfigPoint,
    pub efficiency: f64,
    pub deltas: Deltas,
    pub on_energy_frontier: bool,
    pub on_latency_frontier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub name: String,
    #[serde(default)]
    pub group: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub baseline: String,
    pub cost_axis: CostAxis,
    pub rows: Vec<ReportRow>,
    /// Largest energy reduction (most negative delta).
    pub max_energy_reduction: Extreme,
    pub max_latency_reduction: Extreme,
}

/// Deltas of every point against the named baseline plus frontier flags.
pub fn build_report(
    points: &[ConfigPoint],
    baseline_name: &str,
    cost_axis: CostAxis,
) -> Result<Report> {
    let base = points
        .iter()
        .find(|p| p.name == baseline_name)
        .ok_or_else(|| {
            Error::Parameter(format!("baseline {baseline_name:?} not among the points"))
        })?;
    let base_eff = base.efficiency()?;
    let energy_front = pareto_front(points, CostAxis::Energy);
    let latency_front = pareto_front(points, CostAxis::Latency);

    let mut rows = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let eff = p.efficiency()?;
        rows.push(ReportRow {
            efficiency: eff,
            deltas: Deltas {
                accuracy: percent_delta(base.accuracy, p.accuracy)?,
                latency: percent_delta(base.latency_ms, p.latency_ms)?,
                energy: percent_delta(base.energy_mj, p.energy_mj)?,
                dparam: percent_delta(base.dparam_m, p.dparam_m)?,
                macs: percent_delta(base.gmacs, p.gmacs)?,
                efficiency: percent_delta(base_eff, eff)?,
            },
            on_energy_frontier: energy_front.frontier.contains(&i),
            on_latency_frontier: latency_front.frontier.contains(&i),
            point: p.clone(),
        });
    }
    let extreme = |pick: fn(&Deltas) -> f64| {
        let best = rows
            .iter()
            .min_by(|a, b| pick(&a.deltas).total_cmp(&pick(&b.deltas)))
            .expect("baseline row exists");
        Extreme {
            name: best.point.name.clone(),
            group: best.point.group.clone(),
            percent: pick(&best.deltas),
        }
    };
    Ok(Report {
        baseline: baseline_name.to_string(),
        cost_axis,
        max_energy_reduction: extreme(|d| d.energy),
        max_latency_reduction: extreme(|d| d.latency),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Parameter(format!("unknown report format {other:?}"))),
        }
    }
}

fn signed(v: f64) -> String {
    let r = format!("{v:+.1}%");
    if r == "-0.0%" {
        "+0.0%".into()
    } else {
        r
    }
}

pub fn emit_report(
    points: &[ConfigPoint],
    baseline_name: &str,
    cost_axis: CostAxis,
    format: ReportFormat,
) -> Result<String> {
    let report = build_report(points, baseline_name, cost_axis)?;
    Ok(render_report(&report, format))
}

pub fn render_report(report: &Report, format: ReportFormat) -> String {
    let frontier_flag = |r: &ReportRow| match report.cost_axis {
        CostAxis::Energy => r.on_energy_frontier,
        CostAxis::Latency => r.on_latency_frontier,
    };
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "name,group,accuracy,accuracy_pct,latency_ms,latency_pct,energy_mj,energy_pct,sparam_m,dparam_m,dparam_pct,gmacs,macs_pct,efficiency,efficiency_pct,on_energy_frontier,on_latency_frontier\n",
            );
            for r in &report.rows {
                let p = &r.point;
                let d = &r.deltas;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{:e},{},{},{}",
                    csv_field(&p.name),
                    csv_field(&p.group),
                    p.accuracy,
                    d.accuracy,
                    p.latency_ms,
                    d.latency,
                    p.energy_mj,
                    d.energy,
                    p.sparam_m,
                    p.dparam_m,
                    d.dparam,
                    p.gmacs,
                    d.macs,
                    r.efficiency,
                    d.efficiency,
                    r.on_energy_frontier,
                    r.on_latency_frontier
                );
            }
            out
        }
        ReportFormat::Text => {
            let header = [
                "Config",
                "Acc",
                "(%)",
                "Lat ms",
                "(%)",
                "Energy mJ",
                "(%)",
                "Sparam M",
                "Dparam M",
                "(%)",
                "GMACs",
                "(%)",
                "Eff (%)",
                "Pareto",
            ];
            let mut table: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
            for r in &report.rows {
                let p = &r.point;
                let d = &r.deltas;
                let is_base = p.name == report.baseline;
                let pct = |v: f64| if is_base { "-".to_string() } else { signed(v) };
                table.push(vec![
                    p.name.clone(),
                    format!("{:.1}", p.accuracy),
                    pct(d.accuracy),
                    format!("{:.1}", p.latency_ms),
                    pct(d.latency),
                    format!("{:.1}", p.energy_mj),
                    pct(d.energy),
                    format!("{:.2}", p.sparam_m),
                    format!("{:.2}", p.dparam_m),
                    pct(d.dparam),
                    format!("{:.2}", p.gmacs),
                    pct(d.macs),
                    pct(d.efficiency),
                    if frontier_flag(r) {
                        "*".into()
                    } else {
                        String::new()
                    },
                ]);
            }
            let widths: Vec<usize> = (0..header.len())
                .map(|c| table.iter().map(|row| row[c].len()).max().unwrap_or(0))
                .collect();
            let mut out = String::new();
            for (i, row) in table.iter().enumerate() {
                let line: Vec<String> = row
                    .iter()
                    .enumerate()
                    .map(|(c, cell)| {
                        if c == 0 {
                            format!("{cell:<w$}", w = widths[c])
                        } else {
                            format!("{cell:>w$}", w = widths[c])
                        }
                    })
                    .collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
                if i == 0 {
                    out.push_str(
                        &"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)),
                    );
                    out.push('\n');
                }
            }
            let axis = match report.cost_axis {
                CostAxis::Energy => "energy",
                CostAxis::Latency => "latency",
            };
            let _ = writeln!(
                out,
                "\nbaseline: {}; Pareto (*) over accuracy vs {axis}",
                report.baseline
            );
            let _ = writeln!(
                out,
                "max energy reduction: {} ({})",
                signed(report.max_energy_reduction.percent),
                report.max_energy_reduction.name
            );
            let _ = writeln!(
                out,
                "max latency reduction: {} ({})",
                signed(report.max_latency_reduction.percent),
                report.max_latency_reduction.name
            );
            out
        }
    }
}

/// Reports for several point groups, each against its own baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedReport {
    pub groups: Vec<(String, Report)>,
    pub max_energy_reduction: Extreme,
    pub max_latency_reduction: Extreme,
}

/// Splits `points` by group (first-seen order) and reports every group
/// against its member named `baseline_name`.
pub fn build_grouped_report(
    points: &[ConfigPoint],
    baseline_name: &str,
    cost_axis: CostAxis,
) -> Result<GroupedReport> {
    let mut order: Vec<&str> = Vec::new();
    for p in points {
        if !order.contains(&p.group.as_str()) {
            order.push(&p.group);
        }
    }
    let mut groups = Vec::with_capacity(order.len());
    for g in order {
        let members: Vec<ConfigPoint> = points.iter().filter(|p| p.group == g).cloned().collect();
        let report = build_report(&members, baseline_name, cost_axis)
            .map_err(|e| Error::Parameter(format!("group {g:?}: {e}")))?;
        groups.push((g.to_string(), report));
    }
    let pick = |f: fn(&Report) -> &Extreme| {
        groups
            .iter()
            .map(|(_, r)| f(r))
            .min_by(|a, b| a.percent.total_cmp(&b.percent))
            .cloned()
            .ok_or_else(|| Error::Parameter("no points to report".into()))
    };
    Ok(GroupedReport {
        max_energy_reduction: pick(|r| &r.max_energy_reduction)?,
        max_latency_reduction: pick(|r| &r.max_latency_reduction)?,
        groups,
    })
}

pub fn render_grouped_report(report: &GroupedReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            for (i, (_, r)) in report.groups.iter().enumerate() {
                let body = render_report(r, ReportFormat::Csv);
                let skip = if i == 0 {
                    0
                } else {
                    body.find('\n').map_or(body.len(), |n| n + 1)
                };
                out.push_str(&body[skip..]);
            }
            out
        }
        ReportFormat::Text => {
            let mut out = String::new();
            for (g, r) in &report.groups {
                let _ = writeln!(out, "== {g} ==");
                out.push_str(&render_report(r, ReportFormat::Text));
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "overall max energy reduction: {} ({}, {})",
                signed(report.max_energy_reduction.percent),
                report.max_energy_reduction.name,
                report.max_energy_reduction.group
            );
            let _ = writeln!(
                out,
                "overall max latency reduction: {} ({}, {})",
                signed(report.max_latency_reduction.percent),
                report.max_latency_reduction.name,
                report.max_latency_reduction.group
            );
            out
        }
    }
}

/// Reads points from CSV (header row with the [`ConfigPoint`] field names)
/// or a JSON array, chosen by file extension.
pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<ConfigPoint>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        return Ok(serde_json::from_str(&text)?);
    }
    parse_points_csv(&text)
}

pub fn parse_points_csv(text: &str) -> Result<Vec<ConfigPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| Error::Schema(format!("points row {}: {e}", i + 1))))
        .collect()
}

pub fn points_to_csv(points: &[ConfigPoint]) -> String {
    let mut out =
        String::from("name,group,accuracy,latency_ms,energy_mj,sparam_m,dparam_m,gmacs\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&p.name),
            csv_field(&p.group),
            p.accuracy,
            p.latency_ms,
            p.energy_mj,
            p.sparam_m,
            p.dparam_m,
            p.gmacs
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(name: &str, accuracy: f64, energy_mj: f64, latency_ms: f64) -> ConfigPoint {
        ConfigPoint {
            name: name.into(),
            group: String::new(),
            accuracy,
            latency_ms,
            energy_mj,
            sparam_m: 1.0,
            dparam_m: 1.0,
            gmacs: 1.0,
        }
    }

    #[test]
    fn efficiency_deltas_from_published_rows() {
        let base = efficiency(28.4, 2990.4, 823.0).unwrap();
        let ada = efficiency(27.5, 2163.2, 659.0).unwrap();
        assert!((percent_delta(base, ada).unwrap() - 67.2).abs() <= 0.05);

        let base = efficiency(26.1, 2349.7, 627.0).unwrap();
        let ada = efficiency(24.0, 1273.1, 458.0).unwrap();
        assert!((percent_delta(base, ada).unwrap() - 132.3).abs() <= 0.05);

        assert_eq!(percent_delta(base, base).unwrap(), 0.0);
    }

    #[test]
    fn percent_delta_cases() {
        assert!((percent_delta(823.0, 659.0).unwrap() + 19.9).abs() <= 0.05);
        assert!((percent_delta(2990.4, 2163.2).unwrap() + 27.7).abs() <= 0.05);
        assert_eq!(percent_delta(3.5, 3.5).unwrap(), 0.0);
        assert!(percent_delta(0.0, 1.0).is_err());
        assert!(efficiency(1.0, 0.0, 1.0).is_err());
        assert!(efficiency(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn energy_frontier_of_published_chain() {
        let pts = vec![
            pt("a", 28.4, 2990.4, 823.0),
            pt("b", 27.5, 2163.2, 659.0),
            pt("c", 26.8, 1947.9, 628.0),
        ];
        let f = pareto_front(&pts, CostAxis::Energy);
        assert_eq!(f.frontier, vec![0, 1, 2]);
        let mut more = pts.clone();
        more.push(pt("d", 27.0, 2200.0, 700.0));
        let f = pareto_front(&more, CostAxis::Energy);
        assert_eq!(f.dominated, vec![3]);
        assert!(dominates(&more[1], &more[3], CostAxis::Energy));
    }

    #[test]
    fn single_point_and_ties() {
        let f = pareto_front(&[pt("a", 1.0, 1.0, 1.0)], CostAxis::Latency);
        assert_eq!(f.frontier, vec![0]);
        let f = pareto_front(
            &[pt("a", 1.0, 1.0, 1.0), pt("b", 1.0, 1.0, 1.0)],
            CostAxis::Energy,
        );
        assert_eq!(f.frontier, vec![0, 1]);
    }

    #[test]
    fn two_point_report() {
        // base: eff = 10/(100*10) = 0.01; other: 9/(50*8) = 0.0225 -> +125%
        let mut a = pt("base", 10.0, 100.0, 10.0);
        a.dparam_m = 4.0;
        a.gmacs = 2.0;
        let mut b = pt("small", 9.0, 50.0, 8.0);
        b.dparam_m = 3.0;
        b.gmacs = 1.0;
        let r = build_report(&[a, b], "base", CostAxis::Energy).unwrap();
        let d = &r.rows[1].deltas;
        assert!((d.accuracy + 10.0).abs() < 1e-12);
        assert!((d.latency + 20.0).abs() < 1e-12);
        assert!((d.energy + 50.0).abs() < 1e-12);
        assert!((d.dparam + 25.0).abs() < 1e-12);
        assert!((d.macs + 50.0).abs() < 1e-12);
        assert!((d.efficiency - 125.0).abs() < 1e-9);
        assert!(r
            .rows
            .iter()
            .all(|row| row.on_energy_frontier && row.on_latency_frontier));
        assert_eq!(r.rows[0].deltas.efficiency, 0.0);
        assert_eq!(r.max_energy_reduction.name, "small");

        let text = render_report(&r, ReportFormat::Text);
        assert!(text.contains("+125.0%"), "{text}");
        assert!(text.contains("max energy reduction: -50.0% (small)"));
    }

    #[test]
    fn unknown_baseline() {
        let err = emit_report(
            &[pt("a", 1.0, 1.0, 1.0)],
            "zzz",
            CostAxis::Energy,
            ReportFormat::Text,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn csv_points_round_trip() {
        let pts = vec![pt("a,b", 1.5, 2.0, 3.0), pt("c", 4.0, 5.0, 6.0)];
        assert_eq!(parse_points_csv(&points_to_csv(&pts)).unwrap(), pts);
    }
}
