use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::episode::{run_episode, EpisodeSetup, Mode};
use super::metrics::{composite_score, improvement, MetricSet, METRIC_WEIGHTS};
use super::reference::{builtin_condition, Condition};
use crate::error::{Error, Result};
use crate::feedback::FeedbackLaw;
use crate::kv;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub laws: Vec<FeedbackLaw>,
    pub modes: Vec<Mode>,
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    /// Paths given in the file, resolved by the caller.
    pub gains: Option<PathBuf>,
    pub mpc: Option<PathBuf>,
    pub net: Option<PathBuf>,
    pub dt: Option<f64>,
    pub horizon: Option<usize>,
}

impl CampaignSpec {
    pub fn new(laws: Vec<FeedbackLaw>, modes: Vec<Mode>, conditions: Vec<Condition>, seeds: Vec<u64>) -> Self {
        CampaignSpec {
            laws,
            modes,
            conditions,
            seeds,
            output: None,
            gains: None,
            mpc: None,
            net: None,
            dt: None,
            horizon: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut spec = Self::from_text(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut spec.output, &mut spec.gains, &mut spec.mpc, &mut spec.net].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(spec)
    }

    /// Keys: `laws`, `modes`, `conditions` (built-in ids 1-5), `seeds`, and
    /// optionally `output`, `gains`, `mpc`, `net`, `dt`, `horizon`.
    pub fn from_text(text: &str) -> Result<Self> {
        let sections = kv::parse(text)?;
        let root = sections
            .iter()
            .find(|s| s.name.is_empty())
            .ok_or(Error::Empty("campaign file"))?;
        if let Some(s) = sections.iter().find(|s| !s.name.is_empty()) {
            return Err(Error::Parse {
                line: s.line,
                msg: "campaign files have no sections".into(),
            });
        }
        let known = ["laws", "modes", "conditions", "seeds", "output", "gains", "mpc", "net", "dt", "horizon"];
        if let Some(e) = root.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            return Err(Error::Parse {
                line: e.line,
                msg: format!("unknown campaign field `{}`", e.key),
            });
        }
        let laws = root
            .require("laws")?
            .words()
            .iter()
            .map(|w| w.parse())
            .collect::<Result<Vec<FeedbackLaw>>>()?;
        let modes = root
            .require("modes")?
            .words()
            .iter()
            .map(|w| w.parse())
            .collect::<Result<Vec<Mode>>>()?;
        let conditions = match root.get("conditions") {
            Some(e) => e
                .words()
                .iter()
                .map(|w| {
                    w.parse::<usize>()
                        .map_err(|_| Error::Parse {
                            line: e.line,
                            msg: format!("bad condition id `{w}`"),
                        })
                        .and_then(builtin_condition)
                })
                .collect::<Result<Vec<_>>>()?,
            None => super::reference::builtin_conditions(),
        };
        let seeds = match root.get("seeds") {
            Some(e) => e
                .words()
                .iter()
                .map(|w| {
                    w.parse::<u64>().map_err(|_| Error::Parse {
                        line: e.line,
                        msg: format!("bad seed `{w}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            None => vec![0],
        };
        let path = |k: &str| root.get(k).map(|e| PathBuf::from(e.value.trim()));
        let spec = CampaignSpec {
            laws,
            modes,
            conditions,
            seeds,
            output: path("output"),
            gains: path("gains"),
            mpc: path("mpc"),
            net: path("net"),
            dt: root.float("dt")?,
            horizon: root.get("horizon").map(|e| e.usize()).transpose()?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.laws.is_empty() || self.modes.is_empty() || self.conditions.is_empty() || self.seeds.is_empty() {
            return Err(Error::Validation("campaign needs laws, modes, conditions and seeds".into()));
        }
        if self.laws.len() * self.modes.len() < 2 {
            return Err(Error::Validation("scoring needs at least two law/mode cells".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub law: FeedbackLaw,
    pub mode: Mode,
    pub condition: usize,
    pub seed: u64,
    pub metrics: MetricSet,
    pub score: f64,
    /// Mean controller time per cycle, seconds.
    pub latency: f64,
    pub clamp_events: usize,
    pub fallback_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawSummary {
    pub law: FeedbackLaw,
    pub score: BTreeMap<Mode, f64>,
    pub latency_ms: BTreeMap<Mode, f64>,
    /// Improvement over the feedback-only score, percent.
    pub eta: BTreeMap<Mode, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignResult {
    pub cells: Vec<CellResult>,
    pub laws: Vec<LawSummary>,
    pub failures: Vec<String>,
}

impl CampaignResult {
    pub fn summary(&self, law: FeedbackLaw) -> Option<&LawSummary> {
        self.laws.iter().find(|s| s.law == law)
    }

    /// `law, fb, hmpc, lmpc, eta_h, eta_l, t_fb_ms, t_h_ms, t_l_ms`;
    /// missing entries are left blank.
    pub fn write_table<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "law,fb,hmpc,lmpc,eta_h,eta_l,t_fb_ms,t_h_ms,t_l_ms")?;
        let cell = |m: &BTreeMap<Mode, f64>, k: Mode| m.get(&k).map_or(String::new(), |v| format!("{v:.6}"));
        for s in &self.laws {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                s.law,
                cell(&s.score, Mode::Fb),
                cell(&s.score, Mode::Hmpc),
                cell(&s.score, Mode::Lmpc),
                cell(&s.eta, Mode::Hmpc),
                cell(&s.eta, Mode::Lmpc),
                cell(&s.latency_ms, Mode::Fb),
                cell(&s.latency_ms, Mode::Hmpc),
                cell(&s.latency_ms, Mode::Lmpc),
            )?;
        }
        Ok(())
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)?)?;
        let mut table = Vec::new();
        self.write_table(&mut table)?;
        std::fs::write(dir.join("table1.csv"), table)?;
        Ok(())
    }
}

/// Runs every law x mode x condition x seed cell. Composite scores are
/// normalized across all law/mode cells that share a condition and seed,
/// then averaged per law and mode. Traces are written to `trace_dir` when
/// given. Failed cells are listed in `failures` and left out of scoring.
pub fn run_campaign(spec: &CampaignSpec, setup: &EpisodeSetup<'_>, trace_dir: Option<&Path>) -> Result<CampaignResult> {
    spec.validate()?;
    if let Some(d) = trace_dir {
        std::fs::create_dir_all(d)?;
    }
    let mut cells = Vec::new();
    for cond in &spec.conditions {
        for &seed in &spec.seeds {
            for &law in &spec.laws {
                for &mode in &spec.modes {
                    cells.push((law, mode, cond, seed));
                }
            }
        }
    }
    let outcomes: Vec<std::result::Result<CellResult, String>> = cells
        .par_iter()
        .map(|&(law, mode, cond, seed)| {
            let tag = format!("{law}_{mode}_c{}_s{seed}", cond.id);
            let run = || -> Result<CellResult> {
                let trace = run_episode(setup, mode, law, cond, seed)?;
                if let Some(d) = trace_dir {
                    let f = std::fs::File::create(d.join(format!("trace_{tag}.csv")))?;
                    trace.write_csv(std::io::BufWriter::new(f))?;
                }
                Ok(CellResult {
                    law,
                    mode,
                    condition: cond.id,
                    seed,
                    metrics: trace.metrics()?,
                    score: f64::NAN,
                    latency: trace.mean_latency(),
                    clamp_events: trace.clamp_events,
                    fallback_events: trace.fallback_events,
                })
            };
            run().map_err(|e| format!("{tag}: {e}"))
        })
        .collect();
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => done.push(c),
            Err(e) => failures.push(e),
        }
    }
    let mut groups: BTreeMap<(usize, u64), Vec<usize>> = BTreeMap::new();
    for (i, c) in done.iter().enumerate() {
        groups.entry((c.condition, c.seed)).or_default().push(i);
    }
    for idx in groups.values() {
        if idx.len() < 2 {
            continue;
        }
        let sets: Vec<MetricSet> = idx.iter().map(|&i| done[i].metrics).collect();
        let scores = composite_score(&sets, &METRIC_WEIGHTS)?;
        for (&i, s) in idx.iter().zip(scores) {
            done[i].score = s;
        }
    }
    let laws = spec
        .laws
        .iter()
        .map(|&law| {
            let mut score = BTreeMap::new();
            let mut latency_ms = BTreeMap::new();
            for &mode in &spec.modes {
                let mine: Vec<&CellResult> = done.iter().filter(|c| c.law == law && c.mode == mode).collect();
                let scored: Vec<f64> = mine.iter().map(|c| c.score).filter(|s| s.is_finite()).collect();
                if !scored.is_empty() {
                    score.insert(mode, scored.iter().sum::<f64>() / scored.len() as f64);
                }
                if !mine.is_empty() {
                    latency_ms.insert(mode, 1e3 * mine.iter().map(|c| c.latency).sum::<f64>() / mine.len() as f64);
                }
            }
            let mut eta = BTreeMap::new();
            if let Some(&fb) = score.get(&Mode::Fb) {
                for (&m, &s) in &score {
                    if m != Mode::Fb {
                        eta.insert(m, improvement(fb, s));
                    }
                }
            }
            LawSummary {
                law,
                score,
                latency_ms,
                eta,
            }
        })
        .collect();
    Ok(CampaignResult {
        cells: done,
        laws,
        failures,
    })
}
