use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use armlab::emulator::mlp::evaluate;
use armlab::emulator::{
    collect_pool, default_regions, fit, label_with_expert, lmpc_step, random_conditions, EmulatorNet, ExpertDataset,
    PlanKind, SamplingPlan, TrainConfig,
};
use armlab::hybrid_mpc::hmpc_plan;
use armlab::rne::{gravity_vector, mass_matrix, rneida, rnefda};
use armlab::robot_model::load_model;
use armlab::simlab::{
    builtin_condition, builtin_conditions, composite_score, metrics_from_signal, run_campaign, run_episode,
    CampaignSpec, EpisodeSetup, METRIC_NAMES, METRIC_WEIGHTS, SETTLE_THRESHOLD,
};
use armlab::stability::{check_law, StabilityConfig, StateBox};
use armlab::{ur5_default, FeedbackController, FeedbackGains, FeedbackLaw, JointState, MetricSet, Mode, MpcConfig, RobotModel, SpatialLoad};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

#[derive(Parser)]
#[command(name = "armlab", version, about = "Manipulator dynamics, hybrid control and emulator experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inspect or check robot model files.
    Model {
        #[command(subcommand)]
        cmd: ModelCmd,
    },
    /// Evaluate the local stability conditions for one feedback law.
    CheckStability(StabilityArgs),
    /// Run one closed-loop episode.
    Run(RunArgs),
    /// Metrics and composite scores of trace CSV files.
    Score(ScoreArgs),
    /// Run a campaign file and write summary.json and table1.csv.
    Campaign(CampaignArgs),
    /// Per-call timings of the dynamics and controller kernels.
    Bench(BenchArgs),
    /// Collect expert data with a region allocation plan.
    Sample(SampleArgs),
    /// Train the torque emulator on a dataset.
    Train(TrainArgs),
    /// Evaluate a trained emulator on a dataset or in closed loop.
    Eval(EvalArgs),
}

#[derive(Subcommand)]
enum ModelCmd {
    /// Parse and validate a model file.
    Validate { path: PathBuf },
    /// Summarize a model (the built-in UR5 when no path is given).
    Show {
        path: Option<PathBuf>,
        /// Print the model in file format instead of a summary.
        #[arg(long)]
        text: bool,
    },
}

#[derive(Args, Clone)]
struct SetupArgs {
    /// Model file (default: built-in UR5).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Controller gains file.
    #[arg(long)]
    gains: Option<PathBuf>,
    /// Predictive layer config file.
    #[arg(long)]
    mpc: Option<PathBuf>,
    /// Control and integration period, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Predictive horizon in steps.
    #[arg(long)]
    horizon: Option<usize>,
}

struct Loaded {
    model: RobotModel,
    gains: FeedbackGains,
    mpc: MpcConfig,
}

impl SetupArgs {
    fn load(&self) -> Result<Loaded> {
        let model = match &self.model {
            Some(p) => load_model(p).with_context(|| format!("loading model {}", p.display()))?,
            None => ur5_default(),
        };
        let gains = match &self.gains {
            Some(p) => FeedbackGains::load(p).with_context(|| format!("loading gains {}", p.display()))?,
            None => FeedbackGains::ur5(),
        };
        let mut mpc = match &self.mpc {
            Some(p) => MpcConfig::load(p).with_context(|| format!("loading mpc config {}", p.display()))?,
            None => MpcConfig::ur5(),
        };
        if let Some(h) = self.horizon {
            mpc = mpc.with_horizon(h);
        }
        if let Some(dt) = self.dt {
            mpc.dt = dt;
        }
        mpc.validate()?;
        gains.validate()?;
        if model.dof() != mpc.dof() || model.dof() != gains.dof() {
            bail!("model has {} joints but configs describe {}", model.dof(), mpc.dof());
        }
        Ok(Loaded { model, gains, mpc })
    }
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long, default_value = "pd")]
    fb: FeedbackLaw,
    /// `q=lo:hi,qd=lo:hi` or `limits`.
    #[arg(long, default_value = "q=-0.5:0.5,qd=-0.5:0.5")]
    region: String,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    setup: SetupArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "pd")]
    fb: FeedbackLaw,
    #[arg(long, default_value = "fb")]
    mode: Mode,
    /// Built-in condition id (1-5).
    #[arg(long, default_value_t = 1)]
    condition: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emulator weights, needed for `--mode lmpc`.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Write the per-step trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    setup: SetupArgs,
}

#[derive(Args)]
struct ScoreArgs {
    /// Trace CSV files written by `run` or `campaign`.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Disturbance time, s.
    #[arg(long, default_value_t = 2.0)]
    trigger: f64,
    /// Settling band, rad.
    #[arg(long, default_value_t = SETTLE_THRESHOLD)]
    threshold: f64,
}

#[derive(Args)]
struct CampaignArgs {
    spec: PathBuf,
    /// Output directory (overrides the file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one trace CSV per cell.
    #[arg(long)]
    traces: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Emulator weights (default: an untrained net of the default shape).
    #[arg(long)]
    net: Option<PathBuf>,
    #[command(flatten)]
    setup: SetupArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 50_000)]
    budget: usize,
    #[arg(long, default_value = "optimal")]
    plan: PlanKind,
    /// Number of random data-collection conditions.
    #[arg(long, default_value_t = 20)]
    conditions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    setup: SetupArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Write the per-epoch losses as JSON.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    net: PathBuf,
    /// Dataset to score; without it the net drives the built-in conditions.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "pd")]
    fb: FeedbackLaw,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    setup: SetupArgs,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Model { cmd } => model(cmd),
        Cmd::CheckStability(a) => check_stability(a),
        Cmd::Run(a) => run(a),
        Cmd::Score(a) => score(a),
        Cmd::Campaign(a) => campaign(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Sample(a) => sample(a),
        Cmd::Train(a) => train(a),
        Cmd::Eval(a) => eval(a),
    }
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{x:.5}")).collect::<Vec<_>>().join(" ")
}

fn model(cmd: ModelCmd) -> Result<ExitCode> {
    match cmd {
        ModelCmd::Validate { path } => {
            let m = load_model(&path).with_context(|| format!("{}", path.display()))?;
            println!("ok: {} links", m.dof());
        }
        ModelCmd::Show { path, text } => {
            let m = match path {
                Some(p) => load_model(&p).with_context(|| format!("{}", p.display()))?,
                None => ur5_default(),
            };
            if text {
                print!("{}", m.to_text());
                return Ok(ExitCode::SUCCESS);
            }
            let zero = DVector::zeros(m.dof());
            println!("links     {}", m.dof());
            println!("gravity   {}", fmt_vec(m.gravity.iter().copied()));
            println!("masses    {}", fmt_vec(m.links.iter().map(|l| l.mass)));
            println!("lengths   {}", fmt_vec(m.links.iter().map(|l| l.joint_offset.norm())));
            println!("diag M(0) {}", fmt_vec(mass_matrix(&m, &zero)?.diagonal().iter().copied()));
            println!("G(0)      {}", fmt_vec(gravity_vector(&m, &zero)?.iter().copied()));
            let tip = m.end_effector_pose(&zero)?.translation;
            println!("tip(0)    {}", fmt_vec(tip.iter().copied()));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn check_stability(a: StabilityArgs) -> Result<ExitCode> {
    let l = a.setup.load()?;
    let mut cfg = StabilityConfig::ur5();
    if l.model.dof() != 6 {
        cfg.p = nalgebra::DMatrix::identity(l.model.dof(), l.model.dof());
    }
    if let Some(b) = a.beta {
        cfg.beta = b;
    }
    if let Some(e) = a.eps {
        cfg.eps = e;
    }
    let region = StateBox::parse(&a.region, l.model.dof())?;
    let r = check_law(&l.model, a.fb, &l.gains, &region, a.samples, a.seed, &cfg)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else {
        println!("law {}  region {}  samples {}", a.fb, a.region, a.samples);
        println!("bounds: lambda_max(M) {:.4}  |C|max {:.4}  |dG/dq|max {:.4}  |P| {:.1}", r.bounds.lambda_max_m, r.bounds.c_max, r.bounds.gq_max, r.p_norm);
        println!("damping   {}: lambda_min(Fd) {:.4} > {:.4}", r.cond1, r.lambda_min_fd, r.rhs1);
        println!("stiffness {}: lambda_min(Fe) {:.4} > {:.4e}", r.cond2, r.lambda_min_fe, r.rhs2);
        println!("coupling  {}: {:.4} < {:.4e}", r.cond3, r.lhs3, r.rhs3);
        println!("overall   {}", r.overall);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_metrics(m: &MetricSet) {
    for (name, v) in METRIC_NAMES.iter().zip(m.as_array()) {
        println!("{name:<9} {v:.6}");
    }
    if m.censored {
        println!("(did not settle)");
    }
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let l = a.setup.load()?;
    let net = a.net.as_ref().map(EmulatorNet::load).transpose()?;
    let mut setup = EpisodeSetup::new(&l.model, &l.gains, &l.mpc);
    setup.net = net.as_ref();
    let cond = builtin_condition(a.condition)?;
    let trace = run_episode(&setup, a.mode, a.fb, &cond, a.seed)?;
    if let Some(p) = &a.trace {
        let f = std::fs::File::create(p).with_context(|| format!("{}", p.display()))?;
        trace.write_csv(std::io::BufWriter::new(f))?;
    }
    let m = trace.metrics()?;
    if a.json {
        let out = serde_json::json!({
            "law": a.fb, "mode": a.mode, "condition": a.condition, "seed": a.seed,
            "metrics": m, "latency_ms": trace.mean_latency() * 1e3,
            "clamp_events": trace.clamp_events, "fallback_events": trace.fallback_events,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{} / {} on condition {} (seed {}), {} samples", a.fb, a.mode, a.condition, a.seed, trace.len());
        print_metrics(&m);
        println!("latency   {:.4} ms", trace.mean_latency() * 1e3);
        println!("clamps    {}", trace.clamp_events);
        println!("fallbacks {}", trace.fallback_events);
    }
    Ok(ExitCode::SUCCESS)
}

/// Joint-mean absolute error and the sample period of a trace CSV.
fn read_trace(path: &Path) -> Result<(Vec<f64>, f64)> {
    let f = std::fs::File::open(path).with_context(|| format!("{}", path.display()))?;
    let mut lines = BufReader::new(f).lines();
    let header = lines.next().context("empty trace")??;
    let cols: Vec<&str> = header.split(',').collect();
    let t_col = cols.iter().position(|c| *c == "t").context("trace has no t column")?;
    let e_cols: Vec<usize> = cols
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with('e') && c[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    if e_cols.is_empty() {
        bail!("{}: no error columns", path.display());
    }
    let (mut ts, mut ebar) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let line = line?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}:{}", path.display(), n + 2))?;
        if vals.len() != cols.len() {
            bail!("{}:{}: expected {} fields", path.display(), n + 2, cols.len());
        }
        ts.push(vals[t_col]);
        ebar.push(e_cols.iter().map(|&i| vals[i].abs()).sum::<f64>() / e_cols.len() as f64);
    }
    if ts.len() < 2 {
        bail!("{}: need at least two samples", path.display());
    }
    Ok((ebar, ts[1] - ts[0]))
}

fn score(a: ScoreArgs) -> Result<ExitCode> {
    let mut sets = Vec::new();
    for p in &a.traces {
        let (ebar, dt) = read_trace(p)?;
        sets.push(metrics_from_signal(&ebar, dt, a.trigger, a.threshold)?);
    }
    let scores = if sets.len() >= 2 {
        Some(composite_score(&sets, &METRIC_WEIGHTS)?)
    } else {
        None
    };
    println!("trace,{},score", METRIC_NAMES.join(","));
    for (i, (p, m)) in a.traces.iter().zip(&sets).enumerate() {
        let s = scores.as_ref().map_or(String::new(), |s| format!("{:.6}", s[i]));
        let vals: Vec<String> = m.as_array().iter().map(|v| format!("{v:.6}")).collect();
        println!("{},{},{}", p.display(), vals.join(","), s);
    }
    Ok(ExitCode::SUCCESS)
}

fn campaign(a: CampaignArgs) -> Result<ExitCode> {
    let spec = CampaignSpec::load(&a.spec).with_context(|| format!("{}", a.spec.display()))?;
    let setup_args = SetupArgs {
        model: None,
        gains: spec.gains.clone(),
        mpc: spec.mpc.clone(),
        dt: spec.dt,
        horizon: spec.horizon,
    };
    let l = setup_args.load()?;
    let net = spec.net.as_ref().map(EmulatorNet::load).transpose()?;
    let mut setup = EpisodeSetup::new(&l.model, &l.gains, &l.mpc);
    setup.net = net.as_ref();
    let out = a.out.or(spec.output.clone()).unwrap_or_else(|| PathBuf::from("campaign_out"));
    let start = Instant::now();
    let res = run_campaign(&spec, &setup, a.traces.then_some(out.as_path()))?;
    res.write_outputs(&out)?;
    let mut table = Vec::new();
    res.write_table(&mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    eprintln!("{} cells in {:.1} s, outputs in {}", res.cells.len(), start.elapsed().as_secs_f64(), out.display());
    if !res.failures.is_empty() {
        for f in &res.failures {
            eprintln!("failed: {f}");
        }
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn time_per_call(iters: usize, mut f: impl FnMut()) -> f64 {
    f();
    let start = Instant::now();
    for _ in 0..iters {
        f();
    }
    start.elapsed().as_secs_f64() / iters as f64 * 1e6
}

fn bench(a: BenchArgs) -> Result<ExitCode> {
    let l = a.setup.load()?;
    let n = l.model.dof();
    let net = match &a.net {
        Some(p) => EmulatorNet::load(p)?,
        None => EmulatorNet::new(&[5 * n, 128, 128, n], 0)?,
    };
    let q = DVector::from_fn(n, |i, _| 0.1 * (i as f64 + 1.0));
    let qd = DVector::from_fn(n, |i, _| 0.05 * (i as f64 - 2.0));
    let load = SpatialLoad::zero();
    let state = JointState::new(q.clone(), qd.clone())?;
    let cond = builtin_condition(1)?;
    let (rq, rqd) = cond.reference(1.0);
    let tau = DVector::from_element(n, 0.5);
    let it = a.iters;
    println!("kernel,us_per_call");
    println!("rneida,{:.3}", time_per_call(it, || drop(std::hint::black_box(rneida(&l.model, &q, &qd, &tau, &load)))));
    println!("mass_matrix,{:.3}", time_per_call(it, || drop(std::hint::black_box(mass_matrix(&l.model, &q)))));
    println!("rnefda,{:.3}", time_per_call(it, || drop(std::hint::black_box(rnefda(&l.model, &q, &qd, &tau, &load)))));
    for law in FeedbackLaw::ALL {
        let mut ctl = FeedbackController::new(law, l.gains.clone());
        let us = time_per_call(it, || drop(std::hint::black_box(ctl.compute(&state, &rq, &rqd, l.mpc.dt))));
        println!("fb_{law},{us:.3}");
    }
    let us = time_per_call(it.div_ceil(10), || drop(std::hint::black_box(hmpc_plan(&l.model, &state, 1.0, &cond, &tau, &l.mpc))));
    println!("hmpc_plan,{us:.3}");
    let us = time_per_call(it, || drop(std::hint::black_box(lmpc_step(&net, &state, &rq, &rqd, &tau, &l.mpc.limits.torque))));
    println!("lmpc_step,{us:.3}");
    Ok(ExitCode::SUCCESS)
}

fn sample(a: SampleArgs) -> Result<ExitCode> {
    let l = a.setup.load()?;
    let setup = EpisodeSetup::new(&l.model, &l.gains, &l.mpc);
    let regions = default_regions();
    let plan = SamplingPlan::new(&regions, a.plan, a.budget)?;
    eprintln!("weights {}  counts {:?}", fmt_vec(plan.weights.iter().copied()), plan.counts);
    let pool = collect_pool(&setup, random_conditions(a.conditions, a.seed, 100), &FeedbackLaw::ALL, a.seed)?;
    let idx = pool.allocate(&regions, &plan, a.seed)?;
    let (ds, dropped) = label_with_expert(&l.model, &l.mpc, &pool, &idx);
    ds.save(&a.out)?;
    eprintln!("{} rows written to {} ({dropped} dropped)", ds.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn train(a: TrainArgs) -> Result<ExitCode> {
    let ds = ExpertDataset::load(&a.data).with_context(|| format!("{}", a.data.display()))?;
    let mut cfg = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(h) = a.hidden {
        cfg.hidden = h;
    }
    if let Some(b) = a.batch {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    cfg.validate()?;
    let start = Instant::now();
    let (net, history) = fit(&ds.inputs, &ds.labels, &cfg)?;
    for h in history.iter().filter(|h| h.epoch % 10 == 0 || h.epoch + 1 == cfg.epochs) {
        println!("epoch {:>4}  train {:.6}  val {:.6}", h.epoch, h.train, h.validation);
    }
    net.save(&a.out)?;
    if let Some(p) = &a.history {
        std::fs::write(p, serde_json::to_string_pretty(&history)?)?;
    }
    eprintln!("trained on {} rows in {:.1} s, weights in {}", ds.len(), start.elapsed().as_secs_f64(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let net = EmulatorNet::load(&a.net).with_context(|| format!("{}", a.net.display()))?;
    if let Some(p) = &a.data {
        let ds = ExpertDataset::load(p)?;
        println!("mse {:.6}", evaluate(&net, &ds.inputs, &ds.labels)?);
        return Ok(ExitCode::SUCCESS);
    }
    let l = a.setup.load()?;
    let mut setup = EpisodeSetup::new(&l.model, &l.gains, &l.mpc);
    setup.net = Some(&net);
    println!("condition,mode,rmse,settle,latency_ms");
    for cond in builtin_conditions() {
        for mode in [Mode::Hmpc, Mode::Lmpc] {
            let tr = run_episode(&setup, mode, a.fb, &cond, a.seed)?;
            let m = tr.metrics()?;
            println!("{},{},{:.6},{:.4},{:.4}", cond.id, mode, m.rmse, m.settle, tr.mean_latency() * 1e3);
        }
    }
    Ok(ExitCode::SUCCESS)
}
