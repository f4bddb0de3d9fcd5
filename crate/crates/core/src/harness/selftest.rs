//! Fast invariant checks behind the `selftest` verb.

use crate::coachnet::{CoachConfig, CoachModel};
use crate::collector::{balanced_subsample, recency_weight, LabeledSequence, SequenceStore, SubsampleSpec};
use crate::env::{EnvKind, EnvSpec};
use crate::error::Result;
use crate::numcore::{gradcheck, Rng};
use crate::ppo::{HistoryStep, PpoConfig, Trainer};
use crate::sampler::{acceptance_probability, propose_and_filter, FnOracle, SamplerPolicy, SamplingStats};

use super::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn synthetic_sequence(rng: &mut Rng, failed: bool, horizon: usize, age: u64) -> Result<LabeledSequence> {
    let len = if failed { 3 + rng.below(horizon - 3) } else { horizon };
    let drift = if failed { 0.8 } else { 0.0 };
    let history: Vec<HistoryStep> = (0..len)
        .map(|t| HistoryStep {
            observation: vec![drift * t as f64 + rng.normal(0.0, 0.1), rng.normal(0.0, 1.0)],
            phi: 0.1,
            action: vec![0.0],
        })
        .collect();
    LabeledSequence::from_history(&history, failed.then_some(len), horizon, 2, age)
}

pub fn run_selftest() -> Vec<CheckResult> {
    vec![
        check("acceptance probability examples", || {
            let a = acceptance_probability(0.0, 1.0, 0.1);
            let b = acceptance_probability(0.37, 1.5, 1.0);
            let c = acceptance_probability(0.5, 2.0, 0.1);
            let d = acceptance_probability(0.0, 0.0, 0.2);
            let ok = a == 0.1 && b == 1.0 && c == 0.25 + 0.1 && d == 1.0;
            Ok((ok, format!("{a} {b} {c} {d}")))
        }),
        check("mu schedule saturates", || {
            let sp = SamplerPolicy {
                alpha: 1.0,
                mu0: 0.1,
                schedule_steps: 1000,
                l: 5,
                m_period: 50,
                t_budget: 100,
            };
            let xs: Vec<f64> = (0..=12).map(|i| sp.mu(i * 100)).collect();
            let ok = xs.windows(2).all(|w| w[0] <= w[1]) && xs[0] == 0.1 && xs[10] == 1.0 && xs[12] == 1.0;
            Ok((ok, format!("mu(0)={} mu(1000)={}", xs[0], xs[10])))
        }),
        check("rng substreams", || {
            let r = Rng::new(7);
            let (mut a, mut b) = (r.substream(1), r.substream(1));
            let mut c = r.substream(2);
            let same = (0..8).all(|_| a.next_u64() == b.next_u64());
            let differ = a.next_u64() != c.next_u64();
            Ok((same && differ, String::new()))
        }),
        check("predictor gradient", || {
            let mut rng = Rng::new(3);
            let cfg = CoachConfig {
                l: 2,
                rnn_widths: vec![4],
                head_widths: vec![5],
                ..CoachConfig::wsp(5)
            };
            let model = CoachModel::new(cfg, 2, &mut rng)?;
            let seqs = [
                synthetic_sequence(&mut rng, true, 5, 0)?,
                synthetic_sequence(&mut rng, false, 5, 0)?,
            ];
            let refs: Vec<&LabeledSequence> = seqs.iter().collect();
            let mut graph = model.graph.clone();
            let report = gradcheck::check(
                &mut graph,
                1e-5,
                |g| {
                    let mut m = model.clone();
                    m.graph = g.clone();
                    m.loss_and_grad(&refs)?;
                    *g = m.graph;
                    Ok(())
                },
                |g| {
                    let mut m = model.clone();
                    m.graph = g.clone();
                    Ok(m.loss(&refs)?.total)
                },
            )?;
            Ok((report.max_rel_err < 1e-4, format!("max rel err {:.2e}", report.max_rel_err)))
        }),
        check("zero padding", || {
            let mut rng = Rng::new(4);
            let s = synthetic_sequence(&mut rng, true, 8, 0)?;
            let ok = s.observations[s.valid_len..].iter().all(|o| o.iter().all(|&x| x == 0.0))
                && s.phi[s.valid_len..].iter().all(|&x| x == 0.0);
            Ok((ok, format!("valid_len {}", s.valid_len)))
        }),
        check("balanced subsample band", || {
            let mut rng = Rng::new(5);
            let mut store = SequenceStore::new(2, 8);
            for i in 0..400u64 {
                store.push(synthetic_sequence(&mut rng, i % 20 == 0, 8, i)?)?;
            }
            let spec = SubsampleSpec {
                target_size: 100,
                ratio_lo: 0.3,
                ratio_hi: 0.7,
                half_life: 100.0,
                age_now: 400,
            };
            let sub = balanced_subsample(&store, &spec, &mut rng)?;
            let frac = sub.failure_fraction();
            Ok(((0.3..=0.7).contains(&frac), format!("{} of {}", sub.failures(), sub.len())))
        }),
        check("recency weight limits", || {
            let ok = recency_weight(10, 10, 5.0) == 1.0
                && recency_weight(1000, 0, f64::INFINITY) == 1.0
                && recency_weight(20, 10, 10.0) == 0.5;
            Ok((ok, String::new()))
        }),
        check("geometric proposals under stub", || {
            let spec = EnvSpec::tiltpole();
            let mut trainer = Trainer::new(spec, PpoConfig::default(), &Rng::new(6), 1e6)?;
            let sp = SamplerPolicy {
                alpha: 1.0,
                mu0: 0.25,
                schedule_steps: u64::MAX,
                l: 1,
                m_period: 50,
                t_budget: 100,
            };
            let oracle = FnOracle(|_: &[(Vec<f64>, f64)]| 0.0);
            let mut rng = Rng::new(8);
            let mut stats = SamplingStats::default();
            let n = 400;
            for _ in 0..n {
                let ep = propose_and_filter(
                    &mut trainer,
                    &oracle,
                    &sp,
                    &|_| 0.25,
                    &mut rng,
                    1,
                    u64::MAX,
                    &mut stats,
                    &mut |_, _| Ok(()),
                )?;
                if let Some(ep) = ep {
                    trainer.discard(ep);
                }
            }
            // geometric with p = 1/4: mean 4, variance 12
            let mean = stats.proposed as f64 / n as f64;
            let sigma = (12.0 / n as f64).sqrt();
            Ok(((mean - 4.0).abs() < 3.0 * sigma, format!("mean proposals {mean:.3}")))
        }),
        check("config round trip", || {
            let cfg = ExperimentConfig::for_env(EnvKind::TiltPole);
            let back = ExperimentConfig::parse(&cfg.to_text())?;
            Ok((back == cfg, format!("hash {}", &cfg.hash()[..12])))
        }),
    ]
}
