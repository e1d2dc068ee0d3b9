//! Victim safety metrics, condition comparison tables and trajectory plots.

use crate::error::{Error, Result};
use crate::orchestrator::{run_evaluation_episodes, ActionMode, AgentPolicy, EpisodeLog, FlagKind};
use crate::raster::{ObsMode, RasterConfig};
use crate::reward::RewardParams;
use crate::scenario::{AgentSpec, MapConfig, MapGeometry, Role, ScenarioConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// One victim's rates within one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimEpisodeMetrics {
    pub agent_id: String,
    /// Ticks the victim was simulated; the rate denominator.
    pub ticks: u64,
    pub cv_rate: f64,
    pub co_rate: f64,
    pub os_rate: f64,
    /// Seconds to the first CV or CO tick; absent when none occurred.
    pub ttfc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub victims: Vec<VictimEpisodeMetrics>,
}

fn rate(count: u64, ticks: u64) -> f64 {
    if ticks == 0 {
        0.0
    } else {
        count as f64 / ticks as f64
    }
}

/// Per-victim rates of one logged episode.
pub fn episode_metrics(episode: u64, log: &EpisodeLog) -> EpisodeMetrics {
    let victims = log
        .agents
        .iter()
        .filter(|a| a.role == Role::Victim)
        .map(|a| VictimEpisodeMetrics {
            agent_id: a.agent_id.clone(),
            ticks: a.ticks,
            cv_rate: rate(a.cv_ticks, a.ticks),
            co_rate: rate(a.co_ticks, a.ticks),
            os_rate: rate(a.iol_ticks, a.ticks),
            ttfc: a.first_collision_tick.map(|t| t as f64 * log.dt),
        })
        .collect();
    EpisodeMetrics { episode, victims }
}

/// Averages over the evaluation episodes for one victim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimAggregate {
    pub agent_id: String,
    pub episodes: usize,
    pub cv_rate: f64,
    pub co_rate: f64,
    pub os_rate: f64,
    /// Mean over the episodes that had a collision.
    pub ttfc: Option<f64>,
    pub collided_episodes: usize,
}

impl VictimAggregate {
    /// `cv_rate + co_rate + os_rate`
    pub fn composite(&self) -> f64 {
        self.cv_rate + self.co_rate + self.os_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    /// Identifies the victims' task; reports are comparable only when equal.
    pub fingerprint: String,
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub action_mode: ActionMode,
    /// Agents present besides the victims, with their reward kinds.
    pub opponents: Vec<String>,
    pub victims: Vec<VictimAggregate>,
    pub per_episode: Vec<EpisodeMetrics>,
}

impl MetricsReport {
    pub fn victim(&self, id: &str) -> Option<&VictimAggregate> {
        self.victims.iter().find(|v| v.agent_id == id)
    }

    /// Mean composite over victims.
    pub fn mean_composite(&self) -> f64 {
        if self.victims.is_empty() {
            return 0.0;
        }
        self.victims.iter().map(|v| v.composite()).sum::<f64>() / self.victims.len() as f64
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("not a metrics report: {e}")))
    }
}

/// Order-independent mean: values are sorted before summation.
fn stable_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Aggregates per-episode metrics. The result does not depend on episode order.
pub fn aggregate(per_episode: &[EpisodeMetrics]) -> Vec<VictimAggregate> {
    let mut by_victim: BTreeMap<&str, Vec<&VictimEpisodeMetrics>> = BTreeMap::new();
    for ep in per_episode {
        for v in &ep.victims {
            by_victim.entry(v.agent_id.as_str()).or_default().push(v);
        }
    }
    by_victim
        .into_iter()
        .map(|(id, eps)| {
            let collect = |f: fn(&VictimEpisodeMetrics) -> f64| eps.iter().map(|v| f(v)).collect::<Vec<_>>();
            let ttfcs: Vec<f64> = eps.iter().filter_map(|v| v.ttfc).collect();
            VictimAggregate {
                agent_id: id.to_string(),
                episodes: eps.len(),
                cv_rate: stable_mean(collect(|v| v.cv_rate)).unwrap_or(0.0),
                co_rate: stable_mean(collect(|v| v.co_rate)).unwrap_or(0.0),
                os_rate: stable_mean(collect(|v| v.os_rate)).unwrap_or(0.0),
                collided_episodes: ttfcs.len(),
                ttfc: stable_mean(ttfcs),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    map: &'a MapConfig,
    dt: f64,
    victims: Vec<&'a AgentSpec>,
    episodes: usize,
    max_steps: usize,
    obs_mode: ObsMode,
}

/// Hash of the victims' task: map, timestep, victim placement and routes,
/// episode budget and observation mode. Other agents and the seed are excluded.
pub fn fingerprint(scenario: &ScenarioConfig, episodes: usize, max_steps: usize, obs_mode: ObsMode) -> String {
    let input = FingerprintInput {
        map: &scenario.map,
        dt: scenario.sim.dt,
        victims: scenario.agents.iter().filter(|a| a.role == Role::Victim).collect(),
        episodes,
        max_steps,
        obs_mode,
    };
    let bytes = serde_json::to_vec(&input).expect("fingerprint input serialises");
    hex::encode(Sha256::digest(&bytes))[..16].to_string()
}

#[derive(Debug, Clone)]
pub struct EvalSettings<'a> {
    pub label: &'a str,
    pub raster: &'a RasterConfig,
    pub reward: &'a RewardParams,
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub action_mode: ActionMode,
}

/// Runs frozen policies for the requested episodes and reports victim metrics.
/// Episode logs are returned alongside for plotting.
pub fn evaluate(
    policies: &[AgentPolicy],
    scenario: &ScenarioConfig,
    s: &EvalSettings,
) -> Result<(MetricsReport, Vec<EpisodeLog>)> {
    if s.episodes == 0 || s.max_steps == 0 {
        return Err(Error::Config("evaluation needs positive episodes and steps".into()));
    }
    let logs = run_evaluation_episodes(
        policies,
        scenario,
        s.raster,
        s.reward,
        s.episodes,
        s.max_steps,
        s.seed,
        s.action_mode,
    )?;
    let per_episode: Vec<EpisodeMetrics> = logs
        .iter()
        .enumerate()
        .map(|(i, l)| episode_metrics(i as u64, l))
        .collect();
    let opponents = policies
        .iter()
        .filter(|p| p.role != Role::Victim)
        .map(|p| format!("{}:{}", p.agent_id, p.reward_kind))
        .collect();
    let report = MetricsReport {
        label: s.label.to_string(),
        fingerprint: fingerprint(scenario, s.episodes, s.max_steps, s.raster.resolution_mode),
        episodes: s.episodes,
        max_steps: s.max_steps,
        seed: s.seed,
        action_mode: s.action_mode,
        opponents,
        victims: aggregate(&per_episode),
        per_episode,
    };
    Ok((report, logs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    CvRate,
    CoRate,
    OsRate,
    Composite,
    Ttfc,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::CvRate,
        Metric::CoRate,
        Metric::OsRate,
        Metric::Composite,
        Metric::Ttfc,
    ];

    pub fn title(&self) -> &'static str {
        match self {
            Metric::CvRate => "Collision with cars",
            Metric::CoRate => "Collision with objects",
            Metric::OsRate => "Offroad steering",
            Metric::Composite => "Composite (sum of rates)",
            Metric::Ttfc => "Time to first collision (s)",
        }
    }

    fn value(&self, v: &VictimAggregate) -> Option<f64> {
        match self {
            Metric::CvRate => Some(v.cv_rate),
            Metric::CoRate => Some(v.co_rate),
            Metric::OsRate => Some(v.os_rate),
            Metric::Composite => Some(v.composite()),
            Metric::Ttfc => v.ttfc,
        }
    }

    /// Rates are better when lower; time to first collision when higher.
    fn verdict(&self, delta: f64) -> Verdict {
        if delta == 0.0 {
            return Verdict::Unchanged;
        }
        let worse = match self {
            Metric::Ttfc => delta < 0.0,
            _ => delta > 0.0,
        };
        if worse {
            Verdict::Degradation
        } else {
            Verdict::Improvement
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Improvement,
    Degradation,
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub value: f64,
    pub verdict: Verdict,
}

/// A report placed in a table column, with the column its delta is taken against.
#[derive(Debug, Clone)]
pub struct Column<'a> {
    pub label: String,
    pub reference: Option<String>,
    pub report: &'a MetricsReport,
}

impl<'a> Column<'a> {
    /// Columns labelled by report, each compared with the one before it.
    pub fn chain(reports: &'a [MetricsReport]) -> Vec<Column<'a>> {
        reports
            .iter()
            .enumerate()
            .map(|(i, r)| Column {
                label: r.label.clone(),
                reference: (i > 0).then(|| reports[i - 1].label.clone()),
                report: r,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub agent_id: String,
    pub metric: Metric,
    pub values: Vec<Option<f64>>,
    pub deltas: Vec<Option<Delta>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub fingerprint: String,
    pub columns: Vec<String>,
    pub references: Vec<Option<String>>,
    pub rows: Vec<ComparisonRow>,
}

/// Side-by-side metrics per victim with deltas against each column's reference.
pub fn compare(columns: &[Column]) -> Result<ComparisonTable> {
    let first = columns
        .first()
        .ok_or_else(|| Error::Config("nothing to compare".into()))?;
    for c in columns {
        if c.report.fingerprint != first.report.fingerprint {
            return Err(Error::Mismatch(format!(
                "`{}` has fingerprint {} but `{}` has {}",
                c.label, c.report.fingerprint, first.label, first.report.fingerprint
            )));
        }
    }
    let labels: Vec<String> = columns.iter().map(|c| c.label.clone()).collect();
    let mut ref_index = Vec::with_capacity(columns.len());
    for c in columns {
        ref_index.push(match &c.reference {
            None => None,
            Some(r) => Some(labels.iter().position(|l| l == r).ok_or_else(|| {
                Error::Config(format!("column `{}` refers to unknown column `{r}`", c.label))
            })?),
        });
    }
    let victims: BTreeSet<&str> = columns
        .iter()
        .flat_map(|c| c.report.victims.iter().map(|v| v.agent_id.as_str()))
        .collect();
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        for id in &victims {
            let values: Vec<Option<f64>> = columns
                .iter()
                .map(|c| c.report.victim(id).and_then(|v| metric.value(v)))
                .collect();
            let deltas = ref_index
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let (a, b) = (values[(*r)?]?, values[i]?);
                    let value = b - a;
                    Some(Delta {
                        value,
                        verdict: metric.verdict(value),
                    })
                })
                .collect();
            rows.push(ComparisonRow {
                agent_id: id.to_string(),
                metric,
                values,
                deltas,
            });
        }
    }
    Ok(ComparisonTable {
        fingerprint: first.report.fingerprint.clone(),
        columns: labels,
        references: columns.iter().map(|c| c.reference.clone()).collect(),
        rows,
    })
}

impl ComparisonTable {
    pub fn row(&self, agent: &str, metric: Metric) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.agent_id == agent && r.metric == metric)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serialises");
        s.push('\n');
        s
    }

    /// Plain-text table: one line per metric and victim, `-` where a value is absent.
    pub fn render_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                r.values
                    .iter()
                    .zip(&r.deltas)
                    .map(|(v, d)| match (v, d) {
                        (None, _) => "-".to_string(),
                        (Some(v), None) => format!("{v:.4}"),
                        (Some(v), Some(d)) => {
                            let tag = match d.verdict {
                                Verdict::Improvement => "better",
                                Verdict::Degradation => "worse",
                                Verdict::Unchanged => "same",
                            };
                            format!("{v:.4} ({:+.4} {tag})", d.value)
                        }
                    })
                    .collect()
            })
            .collect();
        let metric_w = Metric::ALL.iter().map(|m| m.title().len()).max().unwrap_or(6);
        let agent_w = self.rows.iter().map(|r| r.agent_id.len()).max().unwrap_or(5).max(5);
        let col_w: Vec<usize> = (0..self.columns.len())
            .map(|i| {
                cells
                    .iter()
                    .map(|row| row[i].len())
                    .chain(std::iter::once(self.columns[i].len()))
                    .max()
                    .unwrap_or(1)
            })
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<metric_w$}  {:<agent_w$}", "Metric", "Agent");
        for (c, w) in self.columns.iter().zip(&col_w) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        let total = metric_w + agent_w + 2 + col_w.iter().map(|w| w + 2).sum::<usize>();
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&cells) {
            let _ = write!(out, "{:<metric_w$}  {:<agent_w$}", r.metric.title(), r.agent_id);
            for (cell, w) in row.iter().zip(&col_w) {
                let _ = write!(out, "  {cell:>w$}");
            }
            out.push('\n');
        }
        let refs: Vec<String> = self
            .columns
            .iter()
            .zip(&self.references)
            .filter_map(|(c, r)| r.as_ref().map(|r| format!("{c} vs {r}")))
            .collect();
        if !refs.is_empty() {
            let _ = writeln!(out, "\nDeltas: {}", refs.join("; "));
        }
        out
    }
}

const PLOT_COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b"];

/// Aerial SVG of the map with every agent's path, stars at collision ticks and
/// dots at lane departures.
pub fn trajectory_svg(log: &EpisodeLog) -> String {
    let map = MapGeometry::build(&log.map);
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    let mut extend = |x: f64, y: f64| {
        min[0] = min[0].min(x);
        min[1] = min[1].min(y);
        max[0] = max[0].max(x);
        max[1] = max[1].max(y);
    };
    for poly in &map.drivable {
        for v in &poly.vertices {
            extend(v.x, v.y);
        }
    }
    for r in &log.positions {
        extend(r.x, r.y);
    }
    let margin = 5.0;
    let (x0, y0) = (min[0] - margin, min[1] - margin);
    let (w, h) = (max[0] - min[0] + 2.0 * margin, max[1] - min[1] + 2.0 * margin);
    let scale = 8.0;
    let px = |x: f64| (x - x0) * scale;
    let py = |y: f64| (y0 + h - y) * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.1} {:.1}">"#,
        w * scale,
        h * scale,
        w * scale,
        h * scale
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#6b8e4e"/>"##);
    let _ = writeln!(s, r#"<g id="map">"#);
    for poly in &map.drivable {
        let pts: Vec<String> = poly.vertices.iter().map(|v| format!("{:.2},{:.2}", px(v.x), py(v.y))).collect();
        let _ = writeln!(s, r##"<polygon points="{}" fill="#505050"/>"##, pts.join(" "));
    }
    if let Some(ix) = &map.intersection {
        let pts: Vec<String> = ix.vertices.iter().map(|v| format!("{:.2},{:.2}", px(v.x), py(v.y))).collect();
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="none" stroke="#a0a0a0" stroke-dasharray="4 4"/>"##,
            pts.join(" ")
        );
    }
    for m in &map.markings {
        let pts: Vec<String> = m.points.iter().map(|v| format!("{:.2},{:.2}", px(v.x), py(v.y))).collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#f0f0f0" stroke-width="2" stroke-dasharray="12 8"/>"##,
            pts.join(" ")
        );
    }
    let _ = writeln!(s, "</g>");

    let mut tracks: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &log.positions {
        tracks.entry(r.agent.as_str()).or_default().push((r.x, r.y));
    }
    for (i, a) in log.agents.iter().enumerate() {
        let color = PLOT_COLORS[i % PLOT_COLORS.len()];
        let Some(track) = tracks.get(a.agent_id.as_str()) else {
            continue;
        };
        let pts: Vec<String> = track.iter().map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="path" data-agent="{}" points="{}" fill="none" stroke="{color}" stroke-width="2.5"/>"#,
            a.agent_id,
            pts.join(" ")
        );
        if let Some((x, y)) = track.first() {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{color}"/>"#,
                px(*x),
                py(*y)
            );
        }
    }
    for e in &log.events {
        let (cx, cy) = (px(e.x), py(e.y));
        match e.flag {
            FlagKind::Cv | FlagKind::Co => {
                let pts: Vec<String> = (0..10)
                    .map(|k| {
                        let r = if k % 2 == 0 { 9.0 } else { 4.0 };
                        let ang = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
                        format!("{:.2},{:.2}", cx + r * ang.cos(), cy + r * ang.sin())
                    })
                    .collect();
                let kind = if e.flag == FlagKind::Cv { "cv" } else { "co" };
                let _ = writeln!(
                    s,
                    r##"<polygon class="collision" data-flag="{kind}" data-agent="{}" data-tick="{}" points="{}" fill="#ff0000" stroke="#000000" stroke-width="0.5"/>"##,
                    e.agent,
                    e.tick,
                    pts.join(" ")
                );
            }
            FlagKind::Iol => {
                let _ = writeln!(
                    s,
                    r##"<circle class="offroad" cx="{cx:.2}" cy="{cy:.2}" r="1.5" fill="#ffa500" fill-opacity="0.6"/>"##
                );
            }
            FlagKind::Io => {}
        }
    }
    let mut ly = 20.0;
    for (i, a) in log.agents.iter().enumerate() {
        let color = PLOT_COLORS[i % PLOT_COLORS.len()];
        let _ = writeln!(
            s,
            r##"<text x="10" y="{ly:.0}" font-family="sans-serif" font-size="14" fill="{color}" stroke="#000000" stroke-width="0.2">{} ({})</text>"##,
            a.agent_id, a.reward_kind
        );
        ly += 18.0;
    }
    s.push_str("</svg>\n");
    s
}

/// Comma-separated coordinates: one row per agent per tick, with that tick's flags.
pub fn trajectory_csv(log: &EpisodeLog) -> String {
    let flags: BTreeSet<(u64, &str, FlagKind)> = log
        .events
        .iter()
        .map(|e| (e.tick, e.agent.as_str(), e.flag))
        .collect();
    let mut s = String::from("tick,agent,x,y,heading,speed,cv,co,io,iol\n");
    for r in &log.positions {
        let f = |k| u8::from(flags.contains(&(r.tick, r.agent.as_str(), k)));
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{}",
            r.tick,
            r.agent,
            r.x,
            r.y,
            r.heading,
            r.speed,
            f(FlagKind::Cv),
            f(FlagKind::Co),
            f(FlagKind::Io),
            f(FlagKind::Iol)
        );
    }
    s
}
