//! Seed-aggregated VMC vs ADV comparison: CSV and SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::eval::EvalRow;
use crate::error::{Error, Result};

pub const COMPARISON_HEADER: &str = "step,vmc_reward,adv_reward,vmc_failures,adv_failures,vmc_reward_se,adv_reward_se";

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub step: u64,
    pub vmc_reward: f64,
    pub adv_reward: f64,
    pub vmc_failures: f64,
    pub adv_failures: f64,
    pub vmc_reward_se: f64,
    pub adv_reward_se: f64,
}

impl ComparisonRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.step,
            self.vmc_reward,
            self.adv_reward,
            self.vmc_failures,
            self.adv_failures,
            self.vmc_reward_se,
            self.adv_reward_se
        )
    }
}

/// Per-seed numbers over the early and final thirds of stage 2.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub label: String,
    /// Train-time mean reward over report rows in the first third.
    pub vmc_early_train_reward: f64,
    pub adv_early_train_reward: f64,
    /// Mean eval failures per checkpoint over the final third.
    pub vmc_final_failures: f64,
    pub adv_final_failures: f64,
    pub vmc_final_reward: f64,
    pub adv_final_reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub seeds: Vec<SeedSummary>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean; zero for fewer than two values.
fn std_err(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(COMPARISON_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn mean_final_failures(&self) -> (f64, f64) {
        let v: Vec<f64> = self.seeds.iter().map(|s| s.vmc_final_failures).collect();
        let a: Vec<f64> = self.seeds.iter().map(|s| s.adv_final_failures).collect();
        (mean(&v), mean(&a))
    }

    /// Seeds on which ADV had fewer final-third failures than VMC.
    pub fn seeds_with_fewer_failures(&self) -> usize {
        self.seeds.iter().filter(|s| s.adv_final_failures < s.vmc_final_failures).count()
    }

    pub fn mean_early_train_reward(&self) -> (f64, f64) {
        let v: Vec<f64> = self.seeds.iter().map(|s| s.vmc_early_train_reward).collect();
        let a: Vec<f64> = self.seeds.iter().map(|s| s.adv_early_train_reward).collect();
        (mean(&v), mean(&a))
    }

    /// Final-third eval reward as (vmc mean, vmc se, adv mean, adv se) across seeds.
    pub fn final_reward(&self) -> (f64, f64, f64, f64) {
        let v: Vec<f64> = self.seeds.iter().map(|s| s.vmc_final_reward).collect();
        let a: Vec<f64> = self.seeds.iter().map(|s| s.adv_final_reward).collect();
        (mean(&v), std_err(&v), mean(&a), std_err(&a))
    }

    pub fn summary_text(&self) -> String {
        let (ve, ae) = self.mean_early_train_reward();
        let (vf, af) = self.mean_final_failures();
        let (vr, vse, ar, ase) = self.final_reward();
        let mut out = String::new();
        let _ = writeln!(out, "seeds={}", self.seeds.len());
        let _ = writeln!(out, "early_train_reward vmc={ve:.3} adv={ae:.3}");
        let _ = writeln!(out, "final_failures vmc={vf:.3} adv={af:.3} adv_lower_on={}", self.seeds_with_fewer_failures());
        let _ = writeln!(out, "final_eval_reward vmc={vr:.3}±{vse:.3} adv={ar:.3}±{ase:.3}");
        for s in &self.seeds {
            let _ = writeln!(
                out,
                "{} early vmc={:.3} adv={:.3} failures vmc={:.3} adv={:.3} reward vmc={:.3} adv={:.3}",
                s.label,
                s.vmc_early_train_reward,
                s.adv_early_train_reward,
                s.vmc_final_failures,
                s.adv_final_failures,
                s.vmc_final_reward,
                s.adv_final_reward
            );
        }
        out
    }
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: "run stage2 for both modes first".into(),
        });
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_eval(dir: &Path) -> Result<Vec<EvalRow>> {
    let path = dir.join("eval.csv");
    let text = read(&path)?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, l)| {
            EvalRow::from_csv(l).ok_or_else(|| Error::Parse {
                what: path.display().to_string(),
                line: i + 2,
                detail: "malformed eval row".into(),
            })
        })
        .collect()
}

/// (step, mean_reward) from metrics.csv; rows without finished episodes are skipped.
fn read_train_reward(dir: &Path) -> Result<Vec<(u64, f64)>> {
    let path = dir.join("metrics.csv");
    let text = read(&path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse {
            what: path.display().to_string(),
            line: i + 1,
            detail: "malformed metrics row".into(),
        };
        let step: u64 = f.first().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        match f.get(2) {
            Some(s) if !s.is_empty() => out.push((step, s.parse().map_err(|_| bad())?)),
            Some(_) => {}
            None => return Err(bad()),
        }
    }
    Ok(out)
}

struct Run {
    eval: Vec<EvalRow>,
    train: Vec<(u64, f64)>,
}

fn load_run(dir: &Path) -> Result<Run> {
    Ok(Run {
        eval: read_eval(dir)?,
        train: read_train_reward(dir)?,
    })
}

fn grid(run: &Run) -> Vec<u64> {
    run.eval.iter().map(|r| r.step).collect()
}

fn summarize(label: String, vmc: &Run, adv: &Run) -> SeedSummary {
    let last = vmc.eval.last().map_or(0, |r| r.step);
    let final_third = |run: &Run, f: &dyn Fn(&EvalRow) -> f64| {
        let xs: Vec<f64> = run.eval.iter().filter(|r| 3 * r.step >= 2 * last).map(f).collect();
        mean(&xs)
    };
    let early = |run: &Run| {
        let xs: Vec<f64> = run.train.iter().filter(|(s, _)| 3 * s <= last).map(|(_, r)| *r).collect();
        if xs.is_empty() {
            f64::NAN
        } else {
            mean(&xs)
        }
    };
    SeedSummary {
        label,
        vmc_early_train_reward: early(vmc),
        adv_early_train_reward: early(adv),
        vmc_final_failures: final_third(vmc, &|r| r.failures as f64),
        adv_final_failures: final_third(adv, &|r| r.failures as f64),
        vmc_final_reward: final_third(vmc, &|r| r.mean_reward),
        adv_final_reward: final_third(adv, &|r| r.mean_reward),
    }
}

/// Compares paired (vmc, adv) run directories, one pair per seed, and writes
/// `comparison.csv`, `summary.txt` and `plots/*.svg` under `out`.
///
/// The reward standard error is taken across seeds; with a single pair it is
/// the per-episode standard error of that run's evaluation.
pub fn compare_runs(pairs: &[(String, PathBuf, PathBuf)], out: &Path) -> Result<Comparison> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    }
    let mut runs = Vec::with_capacity(pairs.len());
    for (label, v, a) in pairs {
        runs.push((label.clone(), load_run(v)?, load_run(a)?));
    }
    let steps = grid(&runs[0].1);
    if steps.is_empty() {
        return Err(Error::InvalidArgument("run has no evaluated checkpoints".into()));
    }
    for (label, v, a) in &runs {
        if grid(v) != steps || grid(a) != steps {
            return Err(Error::InvalidArgument(format!("checkpoint grid of `{label}` differs from the first run")));
        }
    }
    let single = runs.len() == 1;
    let rows = steps
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let col = |f: &dyn Fn(&Run) -> f64, pick_adv: bool| -> Vec<f64> {
                runs.iter().map(|(_, v, a)| f(if pick_adv { a } else { v })).collect()
            };
            let reward = |r: &Run| r.eval[i].mean_reward;
            let fails = |r: &Run| r.eval[i].failures as f64;
            let se = |pick_adv: bool| {
                if single {
                    let (_, v, a) = &runs[0];
                    if pick_adv { a } else { v }.eval[i].reward_se
                } else {
                    std_err(&col(&reward, pick_adv))
                }
            };
            ComparisonRow {
                step,
                vmc_reward: mean(&col(&reward, false)),
                adv_reward: mean(&col(&reward, true)),
                vmc_failures: mean(&col(&fails, false)),
                adv_failures: mean(&col(&fails, true)),
                vmc_reward_se: se(false),
                adv_reward_se: se(true),
            }
        })
        .collect();
    let seeds = runs.iter().map(|(l, v, a)| summarize(l.clone(), v, a)).collect();
    let cmp = Comparison { rows, seeds };

    let plots = out.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let write = |path: PathBuf, text: String| fs::write(&path, text).map_err(|e| Error::io(&path, e));
    write(out.join("comparison.csv"), cmp.to_csv())?;
    write(out.join("summary.txt"), cmp.summary_text())?;

    let train = |pick_adv: bool| -> Vec<(f64, f64, f64)> {
        // report steps where every seed finished at least one episode
        let series: Vec<&Vec<(u64, f64)>> = runs.iter().map(|(_, v, a)| if pick_adv { &a.train } else { &v.train }).collect();
        series[0]
            .iter()
            .filter_map(|&(step, _)| {
                let ys: Option<Vec<f64>> =
                    series.iter().map(|s| s.iter().find(|(t, _)| *t == step).map(|(_, r)| *r)).collect();
                ys.map(|ys| (step as f64, mean(&ys), std_err(&ys)))
            })
            .collect()
    };
    write(
        plots.join("train_reward.svg"),
        line_plot("Train-time mean episode reward", "step", "reward", &[("VMC", train(false)), ("ADV", train(true))]),
    )?;
    let eval_series = |f: &dyn Fn(&ComparisonRow) -> (f64, f64)| -> Vec<(f64, f64, f64)> {
        cmp.rows.iter().map(|r| (r.step as f64, f(r).0, f(r).1)).collect()
    };
    write(
        plots.join("eval_failures.svg"),
        line_plot(
            "Eval failures per checkpoint",
            "step",
            "failures",
            &[
                ("VMC", eval_series(&|r| (r.vmc_failures, 0.0))),
                ("ADV", eval_series(&|r| (r.adv_failures, 0.0))),
            ],
        ),
    )?;
    write(
        plots.join("eval_reward.svg"),
        line_plot(
            "Eval mean episode reward",
            "step",
            "reward",
            &[
                ("VMC", eval_series(&|r| (r.vmc_reward, r.vmc_reward_se))),
                ("ADV", eval_series(&|r| (r.adv_reward, r.adv_reward_se))),
            ],
        ),
    )?;
    Ok(cmp)
}

const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];

/// Minimal SVG line chart. Each point is (x, y, se); a nonzero se draws a band.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, Vec<(f64, f64, f64)>)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter()).filter(|p| p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, se) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y - se);
        y1 = y1.max(y + se);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, w / 2.0);
    let (bx, by) = (ml, h - mb);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{}" y2="{by}" stroke="black"/>"#, w - mr);
    let _ = writeln!(s, r#"<line x1="{bx}" y1="{by}" x2="{bx}" y2="{mt}" stroke="black"/>"#);
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(xv), by + 18.0, tick(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, bx - 6.0, sy(yv) + 4.0, tick(yv));
        let _ = writeln!(s, r##"<line x1="{bx}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="#ddd"/>"##, sy(yv), w - mr);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, (ml + w - mr) / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{ylabel}</text>"#,
        (mt + h - mb) / 2.0
    );
    for (k, (name, points)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<_> = points.iter().filter(|p| p.1.is_finite()).collect();
        if pts.iter().any(|p| p.2 > 0.0) {
            let upper = pts.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1 + p.2)));
            let lower = pts.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1 - p.2)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15"/>"#, poly.join(" "));
        }
        let line: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = mt + 8.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - mr - 80.0, w - mr - 60.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, w - mr - 55.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a >= 1e4 {
        format!("{:.0}k", v / 1e3)
    } else if a >= 10.0 || a == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}
