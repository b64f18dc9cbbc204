use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use poe_rank::comparison::{max_pairs, symmetrize, validate_set, ComparisonSet, Pair};
use poe_rank::estimators::{estimate, estimate_debias, EstimatorConfig, Method};
use poe_rank::gaussian::{build_design, posterior, PosteriorExport};
use poe_rank::io::{load_records, to_json_string, write_jsonl, write_pairs, SelectedPair};
use poe_rank::selection::{select_batch, selection_bounds, LaplaceSelector, SelectionMode};
use poe_rank::simulate::{run_curve, CurveConfig, JudgeModel, SubsetSelection};
use poe_rank::{DebiasParams, RankError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::{Invocation, ScoreArgs, SelectArgs, SimulateArgs, SymmetrizeArgs};

/// A file (or stdout when `path` is `None`) produced by a command.
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub bytes: Vec<u8>,
}

/// Everything a command produced, before anything is written.
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub config: Value,
    pub result: Value,
}

pub fn execute(inv: &Invocation) -> Result<RunOutput> {
    match inv {
        Invocation::Score(a) => score(a),
        Invocation::Select(a) => select(a),
        Invocation::Simulate(a) => simulate(a),
        Invocation::Symmetrize(a) => symmetrize_cmd(a),
    }
}

fn load_set(path: &Path, n: usize) -> Result<ComparisonSet> {
    let records = load_records(path)?;
    Ok(validate_set(records, n)?)
}

#[derive(Serialize)]
struct ScoresOut {
    method: Method,
    scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    debias: Option<DebiasParams>,
    clamped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior: Option<PosteriorExport>,
}

fn score(a: &ScoreArgs) -> Result<RunOutput> {
    let cfg = EstimatorConfig {
        method: a.method,
        debias: a.debias,
        alpha: a.alpha,
        beta: a.beta,
        sigma0_sq: a.sigma0_sq,
        ..EstimatorConfig::default()
    };
    cfg.validate()?;
    if a.debias && !matches!(a.method, Method::PoeBt | Method::PoeG) {
        bail!(RankError::InvalidConfig(format!(
            "--debias applies to poe-bt and poe-g, not {}",
            a.method
        )));
    }
    let mut set = load_set(&a.input, a.n)?;
    if a.symmetric {
        set = symmetrize(&set)?;
    }
    let debias = if a.debias {
        Some(estimate_debias(&set)?)
    } else {
        None
    };
    let est = estimate(&set, &cfg)?;
    let posterior = if a.covariance && matches!(a.method, Method::PoeG | Method::PoeGHard) {
        Some(posterior(&build_design(&set, &cfg, debias.as_ref())?)?.export(true))
    } else {
        None
    };
    let out = ScoresOut {
        method: a.method,
        scores: est.scores,
        debias,
        clamped: set.clamped(),
        posterior,
    };
    let mut bytes = to_json_string(&out, true).into_bytes();
    bytes.push(b'\n');
    Ok(RunOutput {
        artifacts: vec![Artifact {
            path: a.out.clone(),
            bytes,
        }],
        inputs: vec![a.input.clone()],
        seed: None,
        config: json!({
            "n": a.n,
            "symmetric": a.symmetric,
            "estimator": cfg,
            "debias": debias,
        }),
        result: json!({ "comparisons": set.len(), "clamped": set.clamped() }),
    })
}

/// Source of probabilities for pairs chosen during Laplace selection.
trait ProbSource {
    fn prob(&mut self, step: usize, pair: Pair) -> Result<f64>;
}

/// Looks probabilities up in a comparison file. Both orders are used when
/// present: a record for `(j, i)` contributes `1 - p`.
struct FileSource {
    table: HashMap<Pair, (f64, usize)>,
}

impl FileSource {
    fn new(set: &ComparisonSet) -> Result<Self> {
        let mut table: HashMap<Pair, (f64, usize)> = HashMap::new();
        for (index, r) in set.records().iter().enumerate() {
            let p = r
                .p
                .ok_or(RankError::MissingProbability {
                    index,
                    context: "laplace-bt selection",
                })?;
            let (key, value) = if r.i < r.j {
                ((r.i, r.j), p)
            } else {
                ((r.j, r.i), 1.0 - p)
            };
            let slot = table.entry(key).or_insert((0.0, 0));
            slot.0 += value;
            slot.1 += 1;
        }
        Ok(Self { table })
    }
}

impl ProbSource for FileSource {
    fn prob(&mut self, _step: usize, (i, j): Pair) -> Result<f64> {
        let key = (i.min(j), i.max(j));
        let &(sum, count) = self
            .table
            .get(&key)
            .with_context(|| format!("no probability for pair ({i}, {j}) in the input"))?;
        let p = sum / count as f64;
        Ok(if i < j { p } else { 1.0 - p })
    }
}

#[derive(Deserialize)]
struct ProbReply {
    step: usize,
    p: f64,
}

/// File-polling handshake: each chosen pair is appended to the pairs file,
/// then the probabilities file is polled until it answers that step.
struct InteractiveSource {
    pairs_path: PathBuf,
    probs_path: PathBuf,
    poll: Duration,
    timeout: Duration,
}

impl InteractiveSource {
    fn new(base: &Path, poll_ms: u64, timeout_secs: u64) -> Result<Self> {
        let with_suffix = |suffix: &str| {
            let mut s = base.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        let src = Self {
            pairs_path: with_suffix(".pairs.jsonl"),
            probs_path: with_suffix(".probs.jsonl"),
            poll: Duration::from_millis(poll_ms.max(1)),
            timeout: Duration::from_secs(timeout_secs),
        };
        File::create(&src.pairs_path)
            .with_context(|| format!("creating {}", src.pairs_path.display()))?;
        Ok(src)
    }

    fn lookup(&self, step: usize) -> Result<Option<f64>> {
        let file = match File::open(&self.probs_path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            // a partially written last line is retried on the next poll
            if let Ok(reply) = serde_json::from_str::<ProbReply>(&line) {
                if reply.step == step {
                    return Ok(Some(reply.p));
                }
            }
        }
        Ok(None)
    }
}

impl ProbSource for InteractiveSource {
    fn prob(&mut self, step: usize, (i, j): Pair) -> Result<f64> {
        let mut out = OpenOptions::new().append(true).open(&self.pairs_path)?;
        writeln!(out, "{}", to_json_string(&SelectedPair { i, j, step }, false))?;
        out.flush()?;
        let start = Instant::now();
        loop {
            if let Some(p) = self.lookup(step)? {
                return Ok(p);
            }
            if start.elapsed() >= self.timeout {
                bail!(
                    "no probability for step {step} in {} after {:?}",
                    self.probs_path.display(),
                    self.timeout
                );
            }
            std::thread::sleep(self.poll);
        }
    }
}

fn select(a: &SelectArgs) -> Result<RunOutput> {
    let (min, max) = selection_bounds(a.n, a.unique_pairs);
    if a.n < 2 {
        bail!(RankError::TooFewItems(a.n));
    }
    if a.k < min || a.k > max {
        bail!(RankError::InfeasibleBudget {
            n: a.n,
            k: a.k,
            min,
            max,
        });
    }
    let mut inputs = Vec::new();
    let (pairs, log_det) = match a.mode {
        SelectionMode::Gaussian => {
            let sel = select_batch(a.n, a.k, SelectionMode::Gaussian, None, a.unique_pairs)?;
            (sel.pairs, sel.log_det)
        }
        SelectionMode::LaplaceBt => {
            let mut source: Box<dyn ProbSource> = match (&a.input, &a.interactive_file) {
                (Some(path), None) => {
                    inputs.push(path.clone());
                    Box::new(FileSource::new(&load_set(path, a.n)?)?)
                }
                (None, Some(base)) => Box::new(InteractiveSource::new(base, a.poll_ms, a.timeout_secs)?),
                _ => bail!(RankError::InvalidConfig(
                    "laplace-bt needs exactly one of --input or --interactive-file".into()
                )),
            };
            let cfg = EstimatorConfig {
                sigma0_sq: a.sigma0_sq,
                ..EstimatorConfig::for_method(Method::PoeBt)
            };
            cfg.validate()?;
            let mut sel = LaplaceSelector::new(a.n, cfg, a.unique_pairs)?;
            let mut step = 0;
            loop {
                while step < sel.state().k() {
                    let pair = sel.state().chosen()[step];
                    let p = source.prob(step, pair)?;
                    sel.observe(pair, p)?;
                    step += 1;
                }
                if sel.state().k() >= a.k {
                    break;
                }
                sel.propose()?;
            }
            let state = sel.finish()?;
            (state.chosen().to_vec(), state.log_det())
        }
    };
    let mut bytes = Vec::new();
    write_pairs(&mut bytes, &pairs)?;
    eprintln!("log_det={}", poe_rank::io::fmt_f64(log_det));
    Ok(RunOutput {
        artifacts: vec![Artifact {
            path: a.out.clone(),
            bytes,
        }],
        inputs,
        seed: None,
        config: json!({
            "n": a.n,
            "k": a.k,
            "mode": a.mode,
            "unique_pairs": a.unique_pairs,
            "sigma0_sq": a.sigma0_sq,
        }),
        result: json!({ "k": pairs.len(), "log_det": log_det }),
    })
}

/// Resolves flags and fixture into a curve configuration.
pub fn curve_config(a: &SimulateArgs) -> Result<CurveConfig> {
    let judge = match &a.judge {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let judge: JudgeModel = serde_json::from_str(&text)
                .map_err(|e| RankError::Parse {
                    line: e.line(),
                    message: e.to_string(),
                })
                .with_context(|| format!("parsing judge fixture {}", path.display()))?;
            judge.validate()?;
            if a.n.is_some_and(|n| n != judge.n_items()) {
                bail!(RankError::LengthMismatch {
                    left: judge.n_items(),
                    right: a.n.unwrap_or_default(),
                });
            }
            Some(judge)
        }
        None => None,
    };
    let n = judge.as_ref().map_or(a.n.unwrap_or(16), JudgeModel::n_items);
    if n < 2 {
        bail!(RankError::TooFewItems(n));
    }
    let selection = a.selection;
    let max = match selection {
        SubsetSelection::Random => max_pairs(n, true),
        _ => selection_bounds(n, true).1,
    };
    let k_max = a.k_max.unwrap_or(max);
    let k_min = a.k_min.unwrap_or((2 * n).min(k_max));
    let k_step = a.k_step.unwrap_or(n);
    if k_step == 0 {
        bail!(RankError::InvalidConfig("--k-step must be positive".into()));
    }
    if k_min > k_max {
        bail!(RankError::InvalidConfig(format!("--k-min {k_min} exceeds --k-max {k_max}")));
    }
    let mut k_values: Vec<usize> = (k_min..=k_max).step_by(k_step).collect();
    if k_values.last() != Some(&k_max) {
        k_values.push(k_max);
    }
    let (scores, temperature, noise_sd, position_bias) = match judge {
        Some(j) => (Some(j.latent_scores), j.temperature, j.noise_sd, j.position_bias),
        None => (None, a.temperature, a.noise_sd, a.position_bias),
    };
    let cfg = CurveConfig {
        n,
        temperature,
        noise_sd,
        position_bias,
        scores,
        methods: a.methods.clone(),
        k_values,
        trials: a.trials,
        selection,
        symmetric: !a.non_symmetric,
        metric: a.metric,
        seed: a.seed,
        estimator: EstimatorConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(a: &SimulateArgs) -> Result<RunOutput> {
    let cfg = curve_config(a)?;
    let result = run_curve(&cfg)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let mut artifacts = vec![Artifact {
        path: a.out.clone(),
        bytes: csv,
    }];
    if let Some(path) = &a.json_out {
        let mut bytes = to_json_string(&result, true).into_bytes();
        bytes.push(b'\n');
        artifacts.push(Artifact {
            path: Some(path.clone()),
            bytes,
        });
    }
    Ok(RunOutput {
        artifacts,
        inputs: a.judge.iter().cloned().collect(),
        seed: Some(a.seed),
        config: serde_json::to_value(&cfg)?,
        result: json!({
            "failures": result.total_failures(),
            "failure_rate": result.failure_rate(),
        }),
    })
}

fn symmetrize_cmd(a: &SymmetrizeArgs) -> Result<RunOutput> {
    let set = load_set(&a.input, a.n)?;
    let sym = symmetrize(&set)?;
    let mut bytes = Vec::new();
    write_jsonl(&mut bytes, sym.records())?;
    Ok(RunOutput {
        artifacts: vec![Artifact {
            path: a.out.clone(),
            bytes,
        }],
        inputs: vec![a.input.clone()],
        seed: None,
        config: json!({ "n": a.n }),
        result: json!({ "pairs": sym.len(), "clamped": set.clamped() }),
    })
}
