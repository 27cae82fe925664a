//! Monte-Carlo sweep harness.
//!
//! Reads a TOML scenario description and produces, per estimator variant and
//! grid point, up to four kinds of error figures:
//!
//! - empirical: run the estimator on noisy observations, square the
//!   best-permutation-matched wrapped frequency errors, average over trials;
//! - semi-analytical: average the squared first-order error predictions over
//!   the same number of noise draws (exact subspaces are reused across
//!   trials, only the noise-dependent terms are recomputed);
//! - analytical: the closed covariance-based expressions;
//! - crb: the deterministic Cramér-Rao bound for the realized symbols.
//!
//! SNR is defined as `1/σ²` (the symbol powers are part of the scenario), so
//! a grid point at `x` dB uses `σ² = 10^(−x/10)`. Reproducibility: one
//! master seed; each trial draws from its own counter-derived RNG stream,
//! so results do not depend on worker scheduling. Trials fan out across a
//! thread pool; per-trial results are collected in order and reduced
//! sequentially, keeping floating-point sums deterministic.

use crate::esprit::{estimate, squared_error_best_permutation, Variant};
use crate::model::{generate_symbols, synthesize_with_symbols, NoiseSpec, Scenario};
use crate::mse::{analytical_mse, crb_deterministic};
use crate::perturb::ExactModel;
use crate::{C64, CMat, Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Which error figures a sweep emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Empirical,
    SemiAnalytical,
    Analytical,
    Crb,
}

impl OutputKind {
    pub fn label(self) -> &'static str {
        match self {
            OutputKind::Empirical => "empirical",
            OutputKind::SemiAnalytical => "semi_analytical",
            OutputKind::Analytical => "analytical",
            OutputKind::Crb => "crb",
        }
    }
}

/// Sweep axis: an SNR grid at fixed geometry, or a sensor-count grid at
/// fixed SNR (single source, uniform linear array).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    #[default]
    Snr,
    Geometry,
}

/// Noise family a sweep draws from (the variance comes from the SNR grid).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    WhiteCircular,
}

fn default_trials() -> i64 {
    1000
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Empirical, OutputKind::Analytical]
}

/// A full sweep description, normally read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub noise: NoiseKind,
    /// Grid of `10·log10(1/σ²)` values, strictly increasing.
    pub snr_db: Vec<f64>,
    pub variants: Vec<Variant>,
    #[serde(default = "default_trials")]
    pub trials: i64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
    /// Redraw the symbol matrix every trial instead of fixing it per sweep
    /// (the analytical rows always refer to the fixed base symbols).
    #[serde(default)]
    pub per_trial_symbols: bool,
    #[serde(default)]
    pub mode: SweepMode,
    /// Sensor counts for `mode = "geometry"` (single source, 1-D).
    #[serde(default)]
    pub m_grid: Vec<usize>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials < 1 {
            return Err(Error::Config(format!("trials must be at least 1, got {}", self.trials)));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db grid is empty".into()));
        }
        if self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("snr_db grid must be strictly increasing".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("no variants requested".into()));
        }
        if self.outputs.is_empty() {
            return Err(Error::Config("no outputs requested".into()));
        }
        match self.mode {
            SweepMode::Snr => {}
            SweepMode::Geometry => {
                if self.m_grid.is_empty() {
                    return Err(Error::Config("geometry mode needs a non-empty m_grid".into()));
                }
                if self.m_grid.iter().any(|&m| m < 2) {
                    return Err(Error::Config("geometry grid entries must be at least 2".into()));
                }
                if self.scenario.d != 1 || self.scenario.r() != 1 {
                    return Err(Error::Config(
                        "geometry mode is defined for a single source on a 1-D array".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Parse and validate a sweep configuration file.
pub fn load_config(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: SweepConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// One output row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub variant: Variant,
    /// SNR in dB, or the sensor count in geometry mode.
    pub x: f64,
    pub kind: OutputKind,
    /// Sum of the per-`(k, r)` MSE values; NaN when every trial failed.
    pub mse_total: f64,
    pub mse_per_kr: Option<Vec<Vec<f64>>>,
    pub trials_used: usize,
    pub fail_frac: f64,
    pub wall_seconds: f64,
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn white_noise_matrix(m: usize, n: usize, sigma2: f64, rng: &mut ChaCha8Rng) -> CMat {
    let sd = (sigma2 / 2.0).sqrt();
    CMat::from_fn(m, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * sd, im * sd)
    })
}

/// Run one estimator/kind/grid-point cell and produce its record.
#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &SweepConfig,
    s: &Scenario,
    base_symbols: &CMat,
    variant: Variant,
    kind: OutputKind,
    x: f64,
    sigma2: f64,
    stream_base: u64,
) -> SweepRecord {
    let start = std::time::Instant::now();
    let trials = cfg.trials as usize;
    let spec = NoiseSpec::WhiteCircular { variance: sigma2 };
    let (mse_total, mse_per_kr, trials_used, fail_frac) = match kind {
        OutputKind::Analytical => {
            let res = ExactModel::new(s, base_symbols, variant)
                .and_then(|m| analytical_mse(&m, &spec));
            match res {
                Ok(rep) => {
                    let total = rep.mse.iter().flatten().sum();
                    (total, Some(rep.mse), 0, 0.0)
                }
                Err(_) => (f64::NAN, None, 0, 1.0),
            }
        }
        OutputKind::Crb => match crb_deterministic(s, base_symbols, sigma2) {
            Ok(rep) => {
                let crb = rep.crb.clone().unwrap();
                let total = crb.iter().flatten().sum();
                (total, Some(crb), 0, 0.0)
            }
            Err(_) => (f64::NAN, None, 0, 1.0),
        },
        OutputKind::SemiAnalytical => {
            let base_model = if cfg.per_trial_symbols {
                None
            } else {
                ExactModel::new(s, base_symbols, variant).ok()
            };
            let per_trial: Vec<Option<f64>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(cfg.seed, stream_base + t as u64);
                    let model_owned;
                    let model = if let Some(m) = &base_model {
                        m
                    } else {
                        let symbols = generate_symbols(s, &mut rng).ok()?;
                        model_owned = ExactModel::new(s, &symbols, variant).ok()?;
                        &model_owned
                    };
                    let n = white_noise_matrix(s.m_total(), s.n_snapshots, sigma2, &mut rng);
                    let dmu = model.dmu_first_order(&n).ok()?;
                    Some(dmu.iter().flatten().map(|v| v * v).sum())
                })
                .collect();
            reduce_trials(per_trial, trials)
        }
        OutputKind::Empirical => {
            let per_trial: Vec<Option<f64>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(cfg.seed, stream_base + t as u64);
                    let symbols = if cfg.per_trial_symbols {
                        generate_symbols(s, &mut rng).ok()?
                    } else {
                        base_symbols.clone()
                    };
                    let obs = synthesize_with_symbols(s, &spec, &symbols, &mut rng).ok()?;
                    let rep = estimate(&obs, s, variant).ok()?;
                    Some(squared_error_best_permutation(&rep.mu_hat, &s.mu))
                })
                .collect();
            reduce_trials(per_trial, trials)
        }
    };
    SweepRecord {
        variant,
        x,
        kind,
        mse_total,
        mse_per_kr,
        trials_used,
        fail_frac,
        wall_seconds: start.elapsed().as_secs_f64(),
    }
}

fn reduce_trials(per_trial: Vec<Option<f64>>, trials: usize) -> (f64, Option<Vec<Vec<f64>>>, usize, f64) {
    let ok: Vec<f64> = per_trial.into_iter().flatten().collect();
    let fails = trials - ok.len();
    let fail_frac = fails as f64 / trials as f64;
    if ok.is_empty() {
        (f64::NAN, None, 0, fail_frac)
    } else {
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        (mean, None, ok.len(), fail_frac)
    }
}

/// Execute a sweep. Deterministic for a fixed `(config, seed)`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    // streams: trials per cell, cells indexed in deterministic loop order;
    // stream 0 is reserved for the symbol draw
    let mut symbol_rng = trial_rng(cfg.seed, 0);
    let mut next_stream: u64 = 1;
    match cfg.mode {
        SweepMode::Snr => {
            let base_symbols = generate_symbols(&cfg.scenario, &mut symbol_rng)?;
            for &variant in &cfg.variants {
                for &snr in &cfg.snr_db {
                    let sigma2 = 10f64.powf(-snr / 10.0);
                    for &kind in &cfg.outputs {
                        let rec = run_cell(
                            cfg,
                            &cfg.scenario,
                            &base_symbols,
                            variant,
                            kind,
                            snr,
                            sigma2,
                            next_stream,
                        );
                        next_stream += cfg.trials as u64;
                        records.push(rec);
                    }
                }
            }
        }
        SweepMode::Geometry => {
            let snr = cfg.snr_db[0];
            let sigma2 = 10f64.powf(-snr / 10.0);
            for &variant in &cfg.variants {
                for &m in &cfg.m_grid {
                    let mut s = cfg.scenario.clone();
                    s.m = vec![m];
                    let base_symbols = {
                        let mut rng = trial_rng(cfg.seed, 0);
                        generate_symbols(&s, &mut rng)?
                    };
                    for &kind in &cfg.outputs {
                        let rec = run_cell(
                            cfg,
                            &s,
                            &base_symbols,
                            variant,
                            kind,
                            m as f64,
                            sigma2,
                            next_stream,
                        );
                        next_stream += cfg.trials as u64;
                        records.push(rec);
                    }
                }
            }
        }
    }
    Ok(records)
}

/// Write records as CSV with a deterministic `(variant, x, kind)` ordering.
/// The x-column header is `snr_db` in SNR mode and `m_sensors` in geometry
/// mode.
pub fn emit_csv(records: &[SweepRecord], path: &Path, mode: SweepMode) -> Result<()> {
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.variant
            .label()
            .cmp(b.variant.label())
            .then(a.x.total_cmp(&b.x))
            .then(a.kind.cmp(&b.kind))
    });
    let io_err = |source: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::fs::File::create(path).map_err(io_err)?;
    let x_col = match mode {
        SweepMode::Snr => "snr_db",
        SweepMode::Geometry => "m_sensors",
    };
    writeln!(out, "variant,{x_col},kind,mse_total,trials,fail_frac,wall_s").map_err(io_err)?;
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{:.12e},{},{:.6},{:.3}",
            r.variant.label(),
            r.x,
            r.kind.label(),
            r.mse_total,
            r.trials_used,
            r.fail_frac,
            r.wall_seconds
        )
        .map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> SweepConfig {
        SweepConfig {
            scenario: Scenario::ula(4, 6, &[0.8], 0.0, 1.0),
            noise: NoiseKind::WhiteCircular,
            snr_db: vec![20.0, 40.0],
            variants: vec![Variant::Standard],
            trials: 50,
            seed: 7,
            outputs: vec![
                OutputKind::Empirical,
                OutputKind::SemiAnalytical,
                OutputKind::Analytical,
                OutputKind::Crb,
            ],
            per_trial_symbols: false,
            mode: SweepMode::Snr,
            m_grid: Vec::new(),
        }
    }

    #[test]
    fn config_toml_roundtrip_and_defaults() {
        let text = r#"
            snr_db = [0.0, 10.0]
            variants = ["standard", "unitary"]

            [scenario]
            m = [4]
            n_snapshots = 6
            d = 1
            mu = [[0.5]]
            rho = 0.0
            power = 1.0
        "#;
        let cfg: SweepConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.trials, 1000);
        assert_eq!(cfg.outputs, default_outputs());
        assert_eq!(cfg.mode, SweepMode::Snr);
        assert!(!cfg.per_trial_symbols);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let unknown = r#"
            snr_db = [0.0]
            variants = ["standard"]
            not_a_key = 3

            [scenario]
            m = [4]
            n_snapshots = 6
            d = 1
            mu = [[0.5]]
            rho = 0.0
            power = 1.0
        "#;
        assert!(toml::from_str::<SweepConfig>(unknown).is_err());

        let mut cfg = base_config();
        cfg.trials = -3;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = base_config();
        cfg.snr_db = vec![10.0, 10.0];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_is_deterministic_and_consistent() {
        let cfg = base_config();
        let r1 = run_sweep(&cfg).unwrap();
        let r2 = run_sweep(&cfg).unwrap();
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(a.mse_total.to_bits(), b.mse_total.to_bits());
            assert_eq!(a.trials_used, b.trials_used);
        }
        // high-SNR point: empirical, semi-analytical, and analytical agree
        let find = |kind: OutputKind, x: f64| {
            r1.iter().find(|r| r.kind == kind && r.x == x).unwrap().mse_total
        };
        let (emp, semi, ana) = (
            find(OutputKind::Empirical, 40.0),
            find(OutputKind::SemiAnalytical, 40.0),
            find(OutputKind::Analytical, 40.0),
        );
        assert!((semi / ana - 1.0).abs() < 0.3, "semi/ana {}", semi / ana);
        assert!((emp / ana - 1.0).abs() < 0.3, "emp/ana {}", emp / ana);
        // all rows carry finite positive errors, zero failures
        for r in &r1 {
            assert!(r.mse_total.is_finite() && r.mse_total > 0.0);
            assert_eq!(r.fail_frac, 0.0);
        }
        // MSE decreases with SNR for every kind
        for kind in base_config().outputs {
            assert!(find(kind, 40.0) < find(kind, 20.0));
        }
    }

    #[test]
    fn csv_output_is_deterministic_and_parses_back() {
        let cfg = base_config();
        let mut records = run_sweep(&cfg).unwrap();
        for r in &mut records {
            r.wall_seconds = 0.0; // timing is the only nondeterministic column
        }
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        emit_csv(&records, &p1, SweepMode::Snr).unwrap();
        emit_csv(&records, &p2, SweepMode::Snr).unwrap();
        let t1 = std::fs::read(&p1).unwrap();
        let t2 = std::fs::read(&p2).unwrap();
        assert_eq!(t1, t2);
        let text = String::from_utf8(t1).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "variant,snr_db,kind,mse_total,trials,fail_frac,wall_s"
        );
        let mut parsed = 0;
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 7);
            let mse: f64 = fields[3].parse().unwrap();
            let original = records
                .iter()
                .find(|r| {
                    r.variant.label() == fields[0]
                        && r.x == fields[1].parse::<f64>().unwrap()
                        && r.kind.label() == fields[2]
                })
                .unwrap();
            assert!((mse - original.mse_total).abs() <= 1e-12 * original.mse_total.abs());
            parsed += 1;
        }
        assert_eq!(parsed, records.len());
    }

    #[test]
    fn empty_record_list_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        emit_csv(&[], &p, SweepMode::Geometry).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "variant,m_sensors,kind,mse_total,trials,fail_frac,wall_s\n");
    }

    #[test]
    fn geometry_mode_sweeps_sensor_count() {
        let mut cfg = base_config();
        cfg.mode = SweepMode::Geometry;
        cfg.m_grid = vec![2, 3, 5];
        cfg.snr_db = vec![40.0];
        cfg.outputs = vec![OutputKind::Analytical, OutputKind::Crb];
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 6);
        // efficiency (crb/analytical) is 1 for M in {2, 3}, below 1 for M = 5
        let get = |m: f64, kind: OutputKind| {
            records.iter().find(|r| r.x == m && r.kind == kind).unwrap().mse_total
        };
        for m in [2.0, 3.0] {
            let eff = get(m, OutputKind::Crb) / get(m, OutputKind::Analytical);
            assert!((eff - 1.0).abs() < 1e-8, "M={m}: {eff}");
        }
        let eff5 = get(5.0, OutputKind::Crb) / get(5.0, OutputKind::Analytical);
        assert!((eff5 - 0.8).abs() < 1e-8, "M=5: {eff5}");
    }

    #[test]
    fn failures_are_counted_not_fatal() {
        // more sources than snapshots: standard SVD cannot run at all
        let cfg = SweepConfig {
            scenario: Scenario {
                m: vec![8],
                n_snapshots: 3,
                d: 4,
                mu: vec![vec![1.0], vec![0.5], vec![-0.4], vec![-1.1]],
                rho: 0.0,
                power: 1.0,
            },
            noise: NoiseKind::WhiteCircular,
            snr_db: vec![30.0],
            variants: vec![Variant::Standard, Variant::Unitary],
            trials: 10,
            seed: 3,
            outputs: vec![OutputKind::Empirical],
            per_trial_symbols: false,
            mode: SweepMode::Snr,
            m_grid: Vec::new(),
        };
        let records = run_sweep(&cfg).unwrap();
        let std_rec = records.iter().find(|r| r.variant == Variant::Standard).unwrap();
        assert_eq!(std_rec.fail_frac, 1.0);
        assert!(std_rec.mse_total.is_nan());
        let uni_rec = records.iter().find(|r| r.variant == Variant::Unitary).unwrap();
        assert_eq!(uni_rec.fail_frac, 0.0);
        assert!(uni_rec.mse_total.is_finite());
    }

    #[test]
    fn load_config_reports_path_on_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.toml");
        match load_config(&missing) {
            Err(Error::Io { path, .. }) => assert!(path.contains("nope.toml")),
            other => panic!("expected io error, got {other:?}"),
        }
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "snr_db = \"oops\"").unwrap();
        match load_config(&bad) {
            Err(Error::Parse { path, .. }) => assert!(path.contains("bad.toml")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
