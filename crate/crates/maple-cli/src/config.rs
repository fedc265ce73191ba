//! Experiment configuration: defaults, flat key=value files, flag overrides.
//!
//! Config files are plain text, one `key=value` pair per line. Lines whose
//! first non-space character is `#` are comments; blank lines are ignored.
//! Unknown keys are hard errors (exit code 2) so a typo never silently
//! falls back to a default. Resolution order: built-in defaults, then the
//! config file, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Which solver variant a run uses.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Solver {
    /// Projected gradient descent with the sketched rank projection.
    Maple,
    /// Projected gradient descent with the exact (full SVD) projection.
    Svp,
    /// Factored gradient descent on L = UUᵀ with spectral initialization.
    Fgd,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Maple => "maple",
            Solver::Svp => "svp",
            Solver::Fgd => "fgd",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reads a flat key=value file, stripping comments and blank lines.
pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value, got {line:?}", path.display(), lineno + 1);
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn p_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().with_context(|| format!("config key {key}: not a non-negative integer: {v:?}"))
}

fn p_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().with_context(|| format!("config key {key}: not a non-negative integer: {v:?}"))
}

fn p_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 =
        v.parse().with_context(|| format!("config key {key}: not a number: {v:?}"))?;
    if !x.is_finite() {
        bail!("config key {key}: must be finite, got {v:?}");
    }
    Ok(x)
}

fn p_seeds(v: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = v
        .split(',')
        .map(|s| p_u64("seeds", s.trim()))
        .collect::<Result<_>>()
        .context("config key seeds: expected a comma-separated list")?;
    if seeds.is_empty() {
        bail!("config key seeds: list is empty");
    }
    Ok(seeds)
}

/// Parses a comma-separated solver list (used by both config keys and the
/// `--solver` flag).
pub fn parse_solver_list(v: &str) -> Result<Vec<Solver>> {
    p_solvers(v)
}

fn p_solvers(v: &str) -> Result<Vec<Solver>> {
    let mut out = Vec::new();
    for name in v.split(',') {
        let solver = match name.trim() {
            "maple" => Solver::Maple,
            "svp" => Solver::Svp,
            "fgd" => Solver::Fgd,
            other => bail!("config key solver: unknown solver {other:?} (use maple, svp, fgd)"),
        };
        if out.contains(&solver) {
            bail!("config key solver: {solver} listed twice");
        }
        out.push(solver);
    }
    if out.is_empty() {
        bail!("config key solver: list is empty");
    }
    Ok(out)
}

/// Configuration for the projection-contraction study.
#[derive(Clone, Debug)]
pub struct LemmaConfig {
    pub p: usize,
    pub r_star: usize,
    pub r: usize,
    pub q: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig {
            p: 64,
            r_star: 4,
            r: 16,
            q: 2,
            trials: 200,
            epsilon: 0.5,
            seed: 9,
            out: PathBuf::from("out/lemma-check"),
        }
    }
}

impl LemmaConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "p" => self.p = p_usize(key, value)?,
            "r_star" => self.r_star = p_usize(key, value)?,
            "r" => self.r = p_usize(key, value)?,
            "q" => self.q = p_usize(key, value)?,
            "trials" => self.trials = p_usize(key, value)?,
            "epsilon" => self.epsilon = p_f64(key, value)?,
            "seed" => self.seed = p_u64(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => bail!("unknown config key {key:?} for lemma-check"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.r_star == 0 || self.trials == 0 {
            bail!("p, r_star, and trials must be ≥ 1");
        }
        if self.r <= self.r_star {
            bail!("projected rank r={} must exceed the target rank r_star={}", self.r, self.r_star);
        }
        if self.r > self.p {
            bail!("projected rank r={} exceeds the dimension p={}", self.r, self.p);
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            bail!("epsilon must lie in [0, 1), got {}", self.epsilon);
        }
        Ok(())
    }
}

/// Configuration for the nonlinear measurement-recovery experiment.
#[derive(Clone, Debug)]
pub struct NlarmConfig {
    pub p: usize,
    pub r_star: usize,
    pub r: usize,
    /// Measurement count; `None` resolves to 4·p·r_star.
    pub n: Option<usize>,
    pub kappa: f64,
    pub noise_sigma: f64,
    pub link: String,
    pub solvers: Vec<Solver>,
    pub seeds: Vec<u64>,
    /// `None` resolves to 1/(μ₁+μ₂) for the chosen link.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub q: usize,
    pub tolerance: f64,
    /// 0 disables the final hard truncation of the estimate.
    pub final_truncate_rank: usize,
    pub out: PathBuf,
}

impl Default for NlarmConfig {
    fn default() -> Self {
        NlarmConfig {
            p: 128,
            r_star: 5,
            r: 5,
            n: None,
            kappa: 1.1,
            noise_sigma: 0.0,
            link: "2x-plus-sin".to_string(),
            solvers: vec![Solver::Maple],
            seeds: vec![1, 2, 3],
            step_size: None,
            max_iters: 200,
            q: 2,
            tolerance: 0.0,
            final_truncate_rank: 0,
            out: PathBuf::from("out/nlarm"),
        }
    }
}

impl NlarmConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "p" => self.p = p_usize(key, value)?,
            "r_star" => self.r_star = p_usize(key, value)?,
            "r" => self.r = p_usize(key, value)?,
            "n" => self.n = Some(p_usize(key, value)?),
            "kappa" => self.kappa = p_f64(key, value)?,
            "noise_sigma" => self.noise_sigma = p_f64(key, value)?,
            "link" => self.link = value.to_string(),
            "solver" => self.solvers = p_solvers(value)?,
            "seeds" => self.seeds = p_seeds(value)?,
            "step_size" => self.step_size = Some(p_f64(key, value)?),
            "max_iters" => self.max_iters = p_usize(key, value)?,
            "q" => self.q = p_usize(key, value)?,
            "tolerance" => self.tolerance = p_f64(key, value)?,
            "final_truncate_rank" => self.final_truncate_rank = p_usize(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => bail!("unknown config key {key:?} for nlarm"),
        }
        Ok(())
    }

    /// Fills size-dependent defaults. Call after all overrides.
    pub fn resolved_n(&self) -> usize {
        self.n.unwrap_or(4 * self.p * self.r_star)
    }
}

/// Configuration for the binary-matrix (logistic) experiment.
#[derive(Clone, Debug)]
pub struct LpcaConfig {
    pub p: usize,
    pub r_star: usize,
    pub r: usize,
    pub kappa: f64,
    /// Ridge weight on ‖L‖²_F; 0 matches the unregularized objective.
    pub lambda: f64,
    pub solvers: Vec<Solver>,
    pub seeds: Vec<u64>,
    /// `None` resolves to 4/p, the inverse of the logistic curvature bound.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub q: usize,
    pub tolerance: f64,
    pub out: PathBuf,
}

impl Default for LpcaConfig {
    fn default() -> Self {
        LpcaConfig {
            p: 200,
            r_star: 5,
            r: 5,
            kappa: 1.4,
            lambda: 0.0,
            solvers: vec![Solver::Maple],
            seeds: vec![1, 2, 3],
            step_size: None,
            max_iters: 150,
            q: 2,
            tolerance: 0.0,
            out: PathBuf::from("out/lpca"),
        }
    }
}

impl LpcaConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "p" => self.p = p_usize(key, value)?,
            "r_star" => self.r_star = p_usize(key, value)?,
            "r" => self.r = p_usize(key, value)?,
            "kappa" => self.kappa = p_f64(key, value)?,
            "lambda" => self.lambda = p_f64(key, value)?,
            "solver" => self.solvers = p_solvers(value)?,
            "seeds" => self.seeds = p_seeds(value)?,
            "step_size" => self.step_size = Some(p_f64(key, value)?),
            "max_iters" => self.max_iters = p_usize(key, value)?,
            "q" => self.q = p_usize(key, value)?,
            "tolerance" => self.tolerance = p_f64(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => bail!("unknown config key {key:?} for lpca"),
        }
        Ok(())
    }

    pub fn resolved_step(&self) -> f64 {
        self.step_size.unwrap_or(4.0 / self.p as f64)
    }
}

/// Configuration for the precision-matrix experiment.
#[derive(Clone, Debug)]
pub struct PmeConfig {
    pub p: usize,
    pub r_star: usize,
    pub r: usize,
    /// Sample count; `None` resolves to 400·p.
    pub n: Option<usize>,
    /// Value of the known diagonal part (all entries equal).
    pub s_bar: f64,
    pub solvers: Vec<Solver>,
    pub seeds: Vec<u64>,
    /// `None` resolves to 0.5·s̄², half the inverse curvature at the start.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub q: usize,
    pub tolerance: f64,
    pub out: PathBuf,
}

impl Default for PmeConfig {
    fn default() -> Self {
        PmeConfig {
            p: 100,
            r_star: 5,
            r: 5,
            n: None,
            s_bar: 2.0,
            solvers: vec![Solver::Maple],
            seeds: vec![1, 2, 3],
            step_size: None,
            max_iters: 60,
            q: 2,
            tolerance: 0.0,
            out: PathBuf::from("out/pme"),
        }
    }
}

impl PmeConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "p" => self.p = p_usize(key, value)?,
            "r_star" => self.r_star = p_usize(key, value)?,
            "r" => self.r = p_usize(key, value)?,
            "n" => self.n = Some(p_usize(key, value)?),
            "s_bar" => self.s_bar = p_f64(key, value)?,
            "solver" => self.solvers = p_solvers(value)?,
            "seeds" => self.seeds = p_seeds(value)?,
            "step_size" => self.step_size = Some(p_f64(key, value)?),
            "max_iters" => self.max_iters = p_usize(key, value)?,
            "q" => self.q = p_usize(key, value)?,
            "tolerance" => self.tolerance = p_f64(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => bail!("unknown config key {key:?} for pme"),
        }
        Ok(())
    }

    pub fn resolved_n(&self) -> usize {
        self.n.unwrap_or(400 * self.p)
    }

    pub fn resolved_step(&self) -> f64 {
        self.step_size.unwrap_or(0.5 * self.s_bar * self.s_bar)
    }
}

/// Configuration for recovering an externally supplied square matrix.
#[derive(Clone, Debug)]
pub struct MatrixRecoverConfig {
    /// CSV file holding the square input matrix. Required.
    pub input: Option<PathBuf>,
    pub r: usize,
    /// Measurement count; `None` resolves to min(4·p·r, p²) once the input
    /// size p is known.
    pub n: Option<usize>,
    pub link: String,
    pub noise_sigma: f64,
    pub solvers: Vec<Solver>,
    pub seeds: Vec<u64>,
    pub step_size: f64,
    pub max_iters: usize,
    pub q: usize,
    pub tolerance: f64,
    pub out: PathBuf,
}

impl Default for MatrixRecoverConfig {
    fn default() -> Self {
        MatrixRecoverConfig {
            input: None,
            r: 30,
            n: None,
            link: "tanh-sigmoid".to_string(),
            noise_sigma: 0.0,
            solvers: vec![Solver::Maple],
            seeds: vec![1],
            step_size: 1.0,
            max_iters: 300,
            q: 2,
            tolerance: 0.0,
            out: PathBuf::from("out/matrix-recover"),
        }
    }
}

impl MatrixRecoverConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.input = Some(PathBuf::from(value)),
            "r" => self.r = p_usize(key, value)?,
            "n" => self.n = Some(p_usize(key, value)?),
            "link" => self.link = value.to_string(),
            "noise_sigma" => self.noise_sigma = p_f64(key, value)?,
            "solver" => self.solvers = p_solvers(value)?,
            "seeds" => self.seeds = p_seeds(value)?,
            "step_size" => self.step_size = p_f64(key, value)?,
            "max_iters" => self.max_iters = p_usize(key, value)?,
            "q" => self.q = p_usize(key, value)?,
            "tolerance" => self.tolerance = p_f64(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => bail!("unknown config key {key:?} for matrix-recover"),
        }
        Ok(())
    }

    pub fn resolved_n(&self, p: usize) -> usize {
        self.n.unwrap_or((4 * p * self.r).min(p * p))
    }
}
