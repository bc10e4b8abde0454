//! Scenario registry. Each scenario turns a validated config into replicate
//! data, oracle tables and a JSON block of derived statistics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::{run_batch, Batch, ClassifierConfig, RunSpec};
use crate::error::{Error, Result};
use crate::limit_laws::{LimitLawContext, Psi, Regime};
use crate::offspring::{build_w_pool, OffspringLaw, WPool};
use crate::oracle::{big_jump_table, gaussian_regime_check, rows_to_csv, sumstat_partial, truncated_mgf_bound, walk_grid};
use crate::steplaw::{Constants, StepLaw};

use super::analysis::{self, Observable};
use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioId {
    Lln,
    SubLaw,
    CritLaw,
    SuperAs,
    NnLaw,
    Pointprocess,
    Compare,
    IndepLaw,
    Dominance,
    Envelope,
    RwOracle,
    Appendix,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 12] = [
        ScenarioId::Lln,
        ScenarioId::SubLaw,
        ScenarioId::CritLaw,
        ScenarioId::SuperAs,
        ScenarioId::NnLaw,
        ScenarioId::Pointprocess,
        ScenarioId::Compare,
        ScenarioId::IndepLaw,
        ScenarioId::Dominance,
        ScenarioId::Envelope,
        ScenarioId::RwOracle,
        ScenarioId::Appendix,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::Lln => "lln",
            ScenarioId::SubLaw => "sub-law",
            ScenarioId::CritLaw => "crit-law",
            ScenarioId::SuperAs => "super-as",
            ScenarioId::NnLaw => "nn-law",
            ScenarioId::Pointprocess => "pointprocess",
            ScenarioId::Compare => "compare",
            ScenarioId::IndepLaw => "indep-law",
            ScenarioId::Dominance => "dominance",
            ScenarioId::Envelope => "envelope",
            ScenarioId::RwOracle => "rw-oracle",
            ScenarioId::Appendix => "appendix",
        }
    }

    pub fn required_regime(&self) -> Option<Regime> {
        match self {
            ScenarioId::SubLaw | ScenarioId::Compare | ScenarioId::NnLaw | ScenarioId::Pointprocess | ScenarioId::Envelope => {
                Some(Regime::Sub)
            }
            ScenarioId::CritLaw => Some(Regime::Crit),
            ScenarioId::SuperAs => Some(Regime::Super),
            _ => None,
        }
    }

    /// Whether the scenario runs the particle engine.
    pub fn uses_engine(&self) -> bool {
        !matches!(self, ScenarioId::IndepLaw | ScenarioId::RwOracle | ScenarioId::Appendix)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

/// Laws and constants shared by every scenario of one config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub step: StepLaw,
    pub law: OffspringLaw,
    pub constants: Constants,
    pub classifier: ClassifierConfig,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let step = cfg.step_law()?;
        let law = cfg.offspring_law()?;
        let constants = step.derive_constants(law.mean())?;
        let classifier = ClassifierConfig::new(&constants, cfg.horizon(), cfg.classifier.delta, cfg.classifier.t)?;
        Ok(Self { step, law, constants, classifier })
    }

    /// Empirical `W` pool, or the degenerate one for deterministic laws.
    pub fn w_pool(&self, cfg: &ExperimentConfig) -> Result<WPool> {
        if self.law.is_deterministic() {
            return Ok(WPool::degenerate());
        }
        let p = &cfg.w_pool;
        build_w_pool(&self.law, p.n_w, p.count, cfg.master_seed, p.cap)
    }

    pub fn context(&self, pool: &WPool) -> Result<LimitLawContext> {
        LimitLawContext::new(self.constants, pool)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioOutput {
    pub batch: Option<Batch>,
    pub pool: Option<WPool>,
    pub stats: Value,
    /// `(file name, CSV text)` for oracle and c.d.f. tables.
    pub tables: Vec<(String, String)>,
    /// Checkpoints recorded per replicate.
    pub checkpoints: Vec<u32>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Evaluation grid for c.d.f. tables.
pub fn cdf_table_grid() -> Vec<f64> {
    (-40..=80).map(|i| i as f64 * 0.125).collect()
}

/// Runs one scenario and returns its data without touching the disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let setup = Setup::new(cfg)?;
    let k = setup.constants;
    let ns = cfg.n_grid.clone();
    let opts = cfg.oracle.options();
    let mut out = ScenarioOutput { checkpoints: ns.clone(), ..Default::default() };
    let scope = cfg.scenario.as_str();

    let needs_pool = matches!(
        cfg.scenario,
        ScenarioId::SubLaw | ScenarioId::CritLaw | ScenarioId::NnLaw | ScenarioId::Pointprocess | ScenarioId::IndepLaw | ScenarioId::Envelope
    );
    let ctx = if needs_pool {
        let pool = setup.w_pool(cfg)?;
        let ctx = setup.context(&pool)?;
        out.tables.push(("cdf_table.csv".into(), ctx.cdf_table_csv(&cdf_table_grid())?));
        out.pool = Some(pool);
        Some(ctx)
    } else {
        None
    };

    let engine_batch = |checkpoints: Vec<u32>, with_indep: bool| -> Result<Batch> {
        let spec = RunSpec::new(&setup.step, &setup.law, setup.classifier, Some(checkpoints), cfg.top_k, cfg.population_cap)?;
        if with_indep {
            let walk = analysis::indep_walk_grid(&setup.step, &k, cfg.horizon(), cfg.oracle.h, opts)?;
            run_batch(&spec.with_indep_walk(&walk), cfg.master_seed, scope, cfg.replicates)
        } else {
            run_batch(&spec, cfg.master_seed, scope, cfg.replicates)
        }
    };

    match cfg.scenario {
        ScenarioId::Lln => {
            let batch = engine_batch(ns.clone(), false)?;
            out.stats = json!({ "lln": analysis::lln_trend(&batch, &k, &ns)? });
            out.batch = Some(batch);
        }
        ScenarioId::SubLaw | ScenarioId::CritLaw => {
            let ctx = ctx.as_ref().expect("pool built");
            let batch = engine_batch(ns.clone(), false)?;
            let mut stats = json!({ "ks_rightmost": analysis::ks_trend(&batch, ctx, Observable::Rightmost, &ns)? });
            if cfg.scenario == ScenarioId::SubLaw {
                stats["ks_biggest_jump"] = to_value(&analysis::ks_trend(&batch, ctx, Observable::BiggestJump, &ns)?)?;
            }
            out.stats = stats;
            out.batch = Some(batch);
        }
        ScenarioId::SuperAs => {
            let batch = engine_batch(ns.clone(), false)?;
            out.stats = json!({ "super": analysis::super_trend(&batch, &k, &ns)? });
            out.batch = Some(batch);
        }
        ScenarioId::NnLaw | ScenarioId::Pointprocess => {
            let ctx = ctx.as_ref().expect("pool built");
            let batch = engine_batch(ns.clone(), false)?;
            out.stats = json!({
                "ks_biggest_jump": analysis::ks_trend(&batch, ctx, Observable::BiggestJump, &ns)?,
                "point_process": analysis::point_process(&batch, ctx, &[0.0, 1.0], cfg.master_seed)?,
            });
            out.batch = Some(batch);
        }
        ScenarioId::Compare => {
            let batch = engine_batch(ns.clone(), false)?;
            out.stats = json!({ "compare": analysis::compare_trend(&batch, &k, &ns)?, "sigma": k.sigma });
            out.batch = Some(batch);
        }
        ScenarioId::IndepLaw => {
            let ctx = ctx.as_ref().expect("pool built");
            let mut rows = Vec::new();
            for &n in &ns {
                let walk = analysis::indep_walk_grid(&setup.step, &k, n, cfg.oracle.h, opts)?;
                let sample =
                    analysis::indep_samples(&walk, &setup.law, n, cfg.replicates, cfg.master_seed, &format!("{scope}/n={n}"), cfg.w_pool.cap)?;
                rows.push(analysis::indep_ks(&sample, ctx, n)?);
            }
            out.stats = json!({ "ks_indep": rows });
        }
        ScenarioId::Dominance => {
            let batch = engine_batch(ns.clone(), true)?;
            out.stats = json!({ "dominance": analysis::dominance(&batch, 0.01)? });
            out.batch = Some(batch);
        }
        ScenarioId::Envelope => {
            let ctx = ctx.as_ref().expect("pool built");
            let traj: Vec<u32> = (ns[0]..=cfg.horizon()).collect();
            let batch = engine_batch(traj.clone(), false)?;
            let psis = [Psi::Log { c: 0.5 }, Psi::Log { c: 2.0 }];
            out.stats = json!({
                "upper": analysis::envelope_exceedances(&batch, &k, &traj, &psis)?,
                "lower_loglog_mean_crossings": analysis::lower_envelope_crossings(&batch, ctx, &traj)?,
            });
            out.checkpoints = traj;
            out.batch = Some(batch);
        }
        ScenarioId::RwOracle => {
            let step = &setup.step;
            let h = cfg.oracle.h;
            let walk4 = walk_grid(step, 4, h, 220.0, opts)?;
            let bj = big_jump_table(step, &walk4, &[10.0, 20.0, 40.0, 80.0, 160.0]);
            let gauss = gaussian_regime_check(step, 1.0, &ns, h, opts)?;
            let clt_walk = walk_grid(step, 64, h, 80.0, opts)?;
            out.tables.push(("oracle_big_jump.csv".into(), rows_to_csv(&bj)));
            out.tables.push(("oracle_gaussian.csv".into(), rows_to_csv(&gauss)));
            out.stats = json!({
                "big_jump": bj,
                "gaussian": gauss,
                "clt_sup_distance_n64": analysis::clt_distance(&clt_walk),
            });
        }
        ScenarioId::Appendix => {
            let step = &setup.step;
            let delta = ClassifierConfig::default_delta(&k);
            let r = k.r;
            let tol_exponent = -2.0 * (1.0 / r - 1.0) - 0.1;
            let mgf = ns
                .iter()
                .map(|&n| truncated_mgf_bound(step, &k, delta, n, (n as f64).powf(tol_exponent)))
                .collect::<Result<Vec<_>>>()?;
            let sumstat = if Regime::of(r) == Regime::Super {
                to_value(&sumstat_partial(step, k.m, 1.0, 8, cfg.oracle.h.min(1.0 / 32.0), opts)?)?
            } else {
                Value::Null
            };
            out.stats = json!({ "truncated_mgf": mgf, "sumstat": sumstat });
        }
    }
    Ok(out)
}

