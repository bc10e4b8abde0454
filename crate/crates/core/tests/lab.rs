use std::fs;

use brw_core::engine::{run_batch, ClassifierConfig, RunSpec};
use brw_core::lab::analysis::{ks_trend, Observable};
use brw_core::lab::config::ExperimentConfig;
use brw_core::lab::persist::{self, replicates_csv, run_scenario, sha256_hex};
use brw_core::lab::scenario::ScenarioId;
use brw_core::lab::suite::Suite;
use brw_core::limit_laws::LimitLawContext;
use brw_core::offspring::DEFAULT_POPULATION_CAP;
use brw_core::{OffspringLaw, StepLaw};

fn small_batch_csv(threads: usize) -> String {
    let step = StepLaw::symmetric_weibull(0.5).unwrap();
    let law = OffspringLaw::geometric(2.0 / 3.0).unwrap();
    let k = step.derive_constants(law.mean()).unwrap();
    let cfg = ClassifierConfig::new(&k, 8, None, None).unwrap();
    let spec = RunSpec::new(&step, &law, cfg, None, 16, DEFAULT_POPULATION_CAP).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let batch = pool.install(|| run_batch(&spec, 99, "threads", 64)).unwrap();
    replicates_csv(&batch, 16).unwrap()
}

#[test]
fn batch_output_independent_of_thread_count() {
    let one = small_batch_csv(1);
    assert_eq!(sha256_hex(one.as_bytes()), sha256_hex(small_batch_csv(3).as_bytes()));
    assert!(one.starts_with("replicate_index,n,Z_n,W_n,M_n,N_n,M_A,M_B,M_C,M_D,count_A,count_B,count_C,count_D,top_1,"));
    assert!(one.lines().next().unwrap().ends_with("top_16,indep_max,discarded_flag"));
}

fn lln_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ScenarioId::Lln);
    cfg.replicates = 40;
    cfg.n_grid = vec![4, 6, 8];
    cfg.output_dir = dir.to_path_buf();
    cfg
}

#[test]
fn rerun_gives_identical_digests() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_scenario(&lln_config(a.path())).unwrap();
    let rb = run_scenario(&lln_config(b.path())).unwrap();
    assert!(!ra.resumed && !rb.resumed);
    assert_eq!(ra.manifest.files, rb.manifest.files);
    assert_eq!(ra.manifest.config_digest, rb.manifest.config_digest);
    for (name, digest) in &ra.manifest.files {
        let bytes = fs::read(a.path().join(name)).unwrap();
        assert_eq!(&sha256_hex(&bytes), digest, "{name}");
    }
}

#[test]
fn intact_run_is_resumed_and_damaged_one_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = lln_config(dir.path());
    let first = run_scenario(&cfg).unwrap();
    assert!(run_scenario(&cfg).unwrap().resumed);
    fs::write(dir.path().join(persist::REPLICATES_CSV), "damaged").unwrap();
    let again = run_scenario(&cfg).unwrap();
    assert!(!again.resumed);
    assert_eq!(again.manifest.files, first.manifest.files);
}

#[test]
fn manifest_materializes_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = lln_config(dir.path());
    run_scenario(&cfg).unwrap();
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(persist::MANIFEST)).unwrap()).unwrap();
    assert_eq!(raw["schema_version"], persist::SCHEMA_VERSION);
    assert_eq!(raw["config"]["master_seed"], cfg.master_seed);
    assert_eq!(raw["config"]["w_pool"]["n_w"], 30);
    assert_eq!(raw["config"]["oracle"]["h"], 1.0 / 16.0);
    let m = persist::read_manifest(dir.path()).unwrap();
    assert!(m.files.contains_key(persist::REPLICATES_CSV));
    assert!(m.files.contains_key(persist::CHECKPOINTS_CSV));
    assert!(m.files.contains_key(persist::STATS_JSON));
}

#[test]
fn zero_replicates_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = lln_config(dir.path());
    cfg.replicates = 0;
    assert!(matches!(run_scenario(&cfg), Err(brw_core::Error::Config(_))));
}

#[test]
fn tampered_alpha_fails_sub_law() {
    let step = StepLaw::symmetric_weibull(0.5).unwrap();
    let law = OffspringLaw::deterministic(2).unwrap();
    let k = step.derive_constants(2.0).unwrap();
    let ns = [6u32, 8, 10, 12];
    let cfg = ClassifierConfig::new(&k, 12, None, None).unwrap();
    let spec = RunSpec::new(&step, &law, cfg, Some(ns.to_vec()), 8, DEFAULT_POPULATION_CAP).unwrap();
    let batch = run_batch(&spec, 7, "tamper", 400).unwrap();

    let mut bad = k;
    bad.alpha *= 1.1;
    let (passed, summary, _) = Suite::sub_law_verdict(&batch, &LimitLawContext::degenerate(bad), &ns).unwrap();
    assert!(!passed, "{summary}");

    // the biggest-jump fit is good at this scale, so its failure is down to α alone
    let fit = |c| ks_trend(&batch, &LimitLawContext::degenerate(c), Observable::BiggestJump, &ns).unwrap()[3].ks;
    let (honest, tampered) = (fit(k), fit(bad));
    assert!(honest <= 0.10 && tampered > 0.10, "{honest} vs {tampered}");
}

#[test]
fn verdicts_serialize_one_entry_per_criterion() {
    let s = Suite::new(brw_core::lab::suite::Level::Smoke, 1);
    let v = s.run(10);
    assert!(v.passed, "{}", v.line());
    let report = brw_core::lab::suite::SuiteReport { level: s.level, master_seed: 1, passed: v.passed, verdicts: vec![v] };
    let json = serde_json::to_value(&report).unwrap();
    assert_eq!(json["verdicts"][0]["id"], 10);
    assert_eq!(json["level"], "smoke");
}
