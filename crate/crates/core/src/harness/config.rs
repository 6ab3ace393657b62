//! Plain-text key/value configuration: one `dotted.path = value` pair per
//! line, `#` comments, order-insensitive, canonical serialization sorted by
//! key. The schema is documented in `docs/config-schema.txt`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::Profile;
use crate::scaling::PlanMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Simulate,
    Spde,
    Oracle,
    Compare,
    SymbolAudit,
}

impl RunKind {
    pub fn parse(s: &str) -> Result<RunKind> {
        match s {
            "simulate" => Ok(RunKind::Simulate),
            "spde" => Ok(RunKind::Spde),
            "oracle" => Ok(RunKind::Oracle),
            "compare" => Ok(RunKind::Compare),
            "symbol_audit" | "symbol-audit" => Ok(RunKind::SymbolAudit),
            other => Err(Error::BadConfig {
                path: "run_kind".into(),
                reason: format!("unknown kind '{other}'"),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunKind::Simulate => "simulate",
            RunKind::Spde => "spde",
            RunKind::Oracle => "oracle",
            RunKind::Compare => "compare",
            RunKind::SymbolAudit => "symbol_audit",
        }
    }
}

/// Initial condition kinds for the microscopic ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    /// Independent spins with mean `mean`.
    Bernoulli { mean: f64 },
    /// Independent spins with site-dependent mean `amplitude * cos(2 pi mode x)`.
    Modulated { amplitude: f64, mode: i64 },
    /// Like `Modulated`, but the amplitude is given on the coarse-field
    /// scale: the spin-level amplitude is `x_amplitude * delta`, so the
    /// initial field profile is the same across a scaling sweep.
    ModulatedField { x_amplitude: f64, mode: i64 },
    /// Alternating spins.
    Checkerboard,
}

impl InitKind {
    pub fn name(&self) -> &'static str {
        match self {
            InitKind::Bernoulli { .. } => "bernoulli",
            InitKind::Modulated { .. } => "modulated",
            InitKind::ModulatedField { .. } => "modulated_field",
            InitKind::Checkerboard => "checkerboard",
        }
    }
}

/// Everything one run needs, loadable from (and storable to) the on-disk
/// key/value form without loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run_kind: RunKind,
    pub profile: Profile,
    pub plan_mode: PlanMode,
    /// `(gamma, n_half)` pairs; one entry for single runs, several for sweeps.
    pub points: Vec<(f64, usize)>,
    pub lambda: f64,
    pub sigma_star_sq: f64,
    pub beta: f64,
    pub replicas: u64,
    pub seed: u64,
    pub schedule: Vec<f64>,
    /// Fourier test modes.
    pub modes: Vec<i64>,
    pub init: InitKind,
    pub out_dir: String,
    /// SPDE discretization.
    pub spde_k_max: usize,
    pub spde_dt: f64,
    /// Oracle table half-width cap.
    pub oracle_l_max: usize,
    pub event_cap: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run_kind: RunKind::Simulate,
            profile: Profile::Gaussian,
            plan_mode: PlanMode::RatioLocked,
            points: vec![(0.1, 256)],
            lambda: 1.0,
            sigma_star_sq: 1.0,
            beta: 0.0,
            replicas: 8,
            seed: 1,
            schedule: vec![0.0, 0.05, 0.1],
            modes: vec![1, 2, 3],
            init: InitKind::Bernoulli { mean: 0.0 },
            out_dir: "runs/out".into(),
            spde_k_max: 32,
            spde_dt: 1e-3,
            oracle_l_max: 4,
            event_cap: 1_000_000_000,
        }
    }
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::BadConfig {
                path: format!("line {}", lineno + 1),
                reason: format!("expected 'key = value', got '{line}'"),
            });
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn req<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key).map(|s| s.as_str()).ok_or_else(|| Error::BadConfig {
        path: key.into(),
        reason: "missing".into(),
    })
}

fn get_f64(map: &BTreeMap<String, String>, key: &str, default: f64) -> Result<f64> {
    match map.get(key) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| Error::BadConfig {
            path: key.into(),
            reason: format!("not a number: '{s}'"),
        }),
    }
}

fn get_u64(map: &BTreeMap<String, String>, key: &str, default: u64) -> Result<u64> {
    match map.get(key) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| Error::BadConfig {
            path: key.into(),
            reason: format!("not an integer: '{s}'"),
        }),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim().parse().map_err(|_| Error::BadConfig {
                path: key.into(),
                reason: format!("bad list element '{p}'"),
            })
        })
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let map = parse_kv(text)?;
        let run_kind = RunKind::parse(req(&map, "run_kind")?)?;
        let profile = Profile::parse(map.get("plan.profile").map(|s| s.as_str()).unwrap_or("gaussian"))?;
        let plan_mode = match map.get("plan.mode").map(|s| s.as_str()).unwrap_or("ratio_locked") {
            "ratio_locked" => PlanMode::RatioLocked,
            "vanishing_ratio" => PlanMode::VanishingRatio,
            other => {
                return Err(Error::BadConfig {
                    path: "plan.mode".into(),
                    reason: format!("unknown mode '{other}'"),
                })
            }
        };
        let gammas: Vec<f64> = parse_list("plan.gammas", req(&map, "plan.gammas")?)?;
        let n_halfs: Vec<usize> = parse_list("plan.n_halfs", req(&map, "plan.n_halfs")?)?;
        if gammas.len() != n_halfs.len() || gammas.is_empty() {
            return Err(Error::BadConfig {
                path: "plan.gammas".into(),
                reason: "plan.gammas and plan.n_halfs must be equal-length, nonempty lists".into(),
            });
        }
        let init = match map.get("init.kind").map(|s| s.as_str()).unwrap_or("bernoulli") {
            "bernoulli" => InitKind::Bernoulli {
                mean: get_f64(&map, "init.mean", 0.0)?,
            },
            "modulated" => InitKind::Modulated {
                amplitude: get_f64(&map, "init.amplitude", 0.5)?,
                mode: get_u64(&map, "init.mode", 1)? as i64,
            },
            "modulated_field" => InitKind::ModulatedField {
                x_amplitude: get_f64(&map, "init.amplitude", 1.0)?,
                mode: get_u64(&map, "init.mode", 1)? as i64,
            },
            "checkerboard" => InitKind::Checkerboard,
            other => {
                return Err(Error::BadConfig {
                    path: "init.kind".into(),
                    reason: format!("unknown kind '{other}'"),
                })
            }
        };
        let schedule: Vec<f64> = match map.get("schedule") {
            Some(s) => parse_list("schedule", s)?,
            None => vec![0.0, 0.05, 0.1],
        };
        let modes: Vec<i64> = match map.get("phis") {
            Some(s) => s
                .split(',')
                .map(|p| {
                    let p = p.trim();
                    let body = p.strip_prefix('e').ok_or_else(|| Error::BadConfig {
                        path: "phis".into(),
                        reason: format!("expected modes like e1, got '{p}'"),
                    })?;
                    body.parse::<i64>().map_err(|_| Error::BadConfig {
                        path: "phis".into(),
                        reason: format!("bad mode index '{p}'"),
                    })
                })
                .collect::<Result<_>>()?,
            None => vec![1, 2, 3],
        };
        let cfg = ExperimentConfig {
            run_kind,
            profile,
            plan_mode,
            points: gammas.into_iter().zip(n_halfs).collect(),
            lambda: get_f64(&map, "plan.lambda", 1.0)?,
            sigma_star_sq: get_f64(&map, "plan.sigma_star_sq", 1.0)?,
            beta: get_f64(&map, "plan.beta", 0.0)?,
            replicas: get_u64(&map, "replicas", 8)?,
            seed: get_u64(&map, "seed", 1)?,
            schedule,
            modes,
            init,
            out_dir: map.get("out_dir").cloned().unwrap_or_else(|| "runs/out".into()),
            spde_k_max: get_u64(&map, "spde.k_max", 32)? as usize,
            spde_dt: get_f64(&map, "spde.dt", 1e-3)?,
            oracle_l_max: get_u64(&map, "oracle.l_max", 4)? as usize,
            event_cap: get_u64(&map, "event_cap", 1_000_000_000)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::BadConfig {
                path: "schedule".into(),
                reason: "must be sorted".into(),
            });
        }
        if self.run_kind == RunKind::Compare && self.replicas < 32 {
            return Err(Error::EnsembleTooSmall {
                got: self.replicas as usize,
                need: 32,
            });
        }
        for &(g, n) in &self.points {
            if !(g > 0.0 && g < 0.25) {
                return Err(Error::BadConfig {
                    path: "plan.gammas".into(),
                    reason: format!("gamma = {g} outside (0, 1/4)"),
                });
            }
            if n < 2 {
                return Err(Error::BadConfig {
                    path: "plan.n_halfs".into(),
                    reason: format!("N = {n} too small"),
                });
            }
        }
        Ok(())
    }

    /// Canonical on-disk form (sorted keys); `parse` of this text
    /// reconstructs the configuration exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let gammas: Vec<String> = self.points.iter().map(|p| format!("{}", p.0)).collect();
        let n_halfs: Vec<String> = self.points.iter().map(|p| format!("{}", p.1)).collect();
        let _ = writeln!(s, "event_cap = {}", self.event_cap);
        match &self.init {
            InitKind::Bernoulli { mean } => {
                let _ = writeln!(s, "init.kind = bernoulli");
                let _ = writeln!(s, "init.mean = {mean}");
            }
            InitKind::Modulated { amplitude, mode } => {
                let _ = writeln!(s, "init.amplitude = {amplitude}");
                let _ = writeln!(s, "init.kind = modulated");
                let _ = writeln!(s, "init.mode = {mode}");
            }
            InitKind::ModulatedField { x_amplitude, mode } => {
                let _ = writeln!(s, "init.amplitude = {x_amplitude}");
                let _ = writeln!(s, "init.kind = modulated_field");
                let _ = writeln!(s, "init.mode = {mode}");
            }
            InitKind::Checkerboard => {
                let _ = writeln!(s, "init.kind = checkerboard");
            }
        }
        let _ = writeln!(s, "oracle.l_max = {}", self.oracle_l_max);
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let modes: Vec<String> = self.modes.iter().map(|k| format!("e{k}")).collect();
        let _ = writeln!(s, "phis = {}", modes.join(","));
        let _ = writeln!(s, "plan.beta = {}", self.beta);
        let _ = writeln!(s, "plan.gammas = {}", gammas.join(","));
        let _ = writeln!(s, "plan.lambda = {}", self.lambda);
        let _ = writeln!(
            s,
            "plan.mode = {}",
            match self.plan_mode {
                PlanMode::RatioLocked => "ratio_locked",
                PlanMode::VanishingRatio => "vanishing_ratio",
            }
        );
        let _ = writeln!(s, "plan.n_halfs = {}", n_halfs.join(","));
        let _ = writeln!(s, "plan.profile = {}", self.profile.name());
        let _ = writeln!(s, "plan.sigma_star_sq = {}", self.sigma_star_sq);
        let _ = writeln!(s, "replicas = {}", self.replicas);
        let _ = writeln!(s, "run_kind = {}", self.run_kind.name());
        let sched: Vec<String> = self.schedule.iter().map(|t| format!("{t}")).collect();
        let _ = writeln!(s, "schedule = {}", sched.join(","));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "spde.dt = {}", self.spde_dt);
        let _ = writeln!(s, "spde.k_max = {}", self.spde_k_max);
        s
    }

    /// Hash of the canonical form, recorded in run manifests.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        let out = h.finalize();
        out.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let cfg = ExperimentConfig {
            run_kind: RunKind::Compare,
            points: vec![(0.2, 64), (0.1, 128), (0.05, 256)],
            replicas: 48,
            init: InitKind::Modulated {
                amplitude: 0.25,
                mode: 1,
            },
            schedule: vec![0.0, 0.1, 0.25, 0.5],
            ..ExperimentConfig::default()
        };
        let text = cfg.to_text();
        let back = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn reports_field_paths_on_errors() {
        let bad = "run_kind = simulate\nplan.gammas = 0.1\nplan.n_halfs = abc\n";
        let err = ExperimentConfig::parse(bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("plan.n_halfs"), "{msg}");
        let missing = "plan.gammas = 0.1\nplan.n_halfs = 64\n";
        let err = ExperimentConfig::parse(missing).unwrap_err();
        assert!(format!("{err}").contains("run_kind"));
    }

    #[test]
    fn compare_requires_replicas() {
        let text = "run_kind = compare\nplan.gammas = 0.1\nplan.n_halfs = 64\nreplicas = 8\n";
        assert!(ExperimentConfig::parse(text).is_err());
    }

    #[test]
    fn comments_and_spacing_tolerated() {
        let text = "# a comment\nrun_kind = simulate   # trailing\n\nplan.gammas = 0.1\nplan.n_halfs = 64\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.points, vec![(0.1, 64)]);
    }
}
