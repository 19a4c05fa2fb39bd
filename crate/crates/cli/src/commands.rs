//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ddm_privacy::curation::curate;
use ddm_privacy::dataset::{ingest_csv, BinningConfig, CategoricalDataset, CategoryMaps};
use ddm_privacy::ddm::generate;
use ddm_privacy::dp::dp_delta;
use ddm_privacy::lower_bound::lower_bound_report;
use ddm_privacy::pdp::{audit, read_gamma_csv, BoundConfig, PdpReport, RadiusRule};
use ddm_privacy::schedule::DiffusionSchedule;
use ddm_privacy::skew::{predict_leakage_vs_skew, write_rows_csv, SkewDesign};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    AuditArgs, BoundArgs, CurateArgs, DpArgs, GenerateArgs, IngestArgs, LowerBoundArgs, ModeChoice, ScheduleArgs,
    ScheduleChoice, ScheduleCmdArgs, SynthArgs,
};

/// Failure classes that map to distinct exit codes.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<ddm_privacy::Error> for Failure {
    fn from(e: ddm_privacy::Error) -> Self {
        match e {
            ddm_privacy::Error::Numeric(_) => Failure::Numeric(e.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn invocation<A: Serialize>(command: &str, args: &A) -> Result<Value, Failure> {
    Ok(json!({ "command": command, "args": serde_json::to_value(args)? }))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// `report.json` -> `report.categories.json`.
pub fn category_path(out: &Path) -> PathBuf {
    out.with_extension("categories.json")
}

pub fn build_schedule(a: &ScheduleArgs, k: usize) -> Result<DiffusionSchedule, Failure> {
    let sched = match a.schedule {
        ScheduleChoice::Linear => DiffusionSchedule::linear(a.steps, k, a.decay)?,
        ScheduleChoice::Sigmoid => DiffusionSchedule::sigmoid(a.steps, k, a.decay)?,
        ScheduleChoice::Cosine => DiffusionSchedule::cosine(a.steps, k, a.offset)?,
        ScheduleChoice::Custom => {
            let path = a
                .alphas_file
                .as_ref()
                .ok_or_else(|| Failure::Input("--schedule custom needs --alphas-file".into()))?;
            DiffusionSchedule::custom_from_csv(path, k)?
        }
    };
    Ok(sched)
}

fn load(a: &IngestArgs) -> Result<(CategoricalDataset, CategoryMaps), Failure> {
    let cfg = BinningConfig {
        max_bins: a.max_bins,
        allow_missing: a.allow_missing,
    };
    ingest_csv(&a.input, &cfg).map_err(|e| Failure::Input(format!("{}: {e}", a.input.display())))
}

fn rule_of(mode: &ModeChoice, literal: bool) -> RadiusRule {
    let mut rule = match mode {
        ModeChoice::Main => RadiusRule::main(),
        ModeChoice::Relaxed => RadiusRule::relaxed(),
    };
    rule.literal_main_text = literal;
    rule
}

fn bound_config(b: &BoundArgs) -> Result<BoundConfig, Failure> {
    let mut cfg = BoundConfig::new(b.epsilon, b.m, b.release_step, rule_of(&b.mode, b.literal_main_text));
    if let Some(path) = &b.gamma_file {
        cfg.gamma = read_gamma_csv(path)?;
    }
    Ok(cfg)
}

fn check_finite(report: &PdpReport, strict: bool) -> Outcome {
    if strict && report.has_infinite() {
        let bad = report.points.iter().filter(|p| !p.delta.is_finite()).count();
        return Err(Failure::Numeric(format!("{bad} audited rows have an infinite delta")));
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceRow<'a> {
    rank: usize,
    row: &'a str,
    t: usize,
    eta: usize,
    c_star: f64,
    radius: usize,
    psi_term: f64,
    clamp: f64,
    second_term: f64,
    error_term: f64,
    main_term: f64,
    similarity: f64,
}

fn write_trace_csv(path: &Path, report: &PdpReport) -> Outcome {
    let mut w = csv::Writer::from_path(path)?;
    for p in &report.points {
        let row = p.row.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        for e in &p.trace {
            w.serialize(TraceRow {
                rank: p.rank,
                row: &row,
                t: e.t,
                eta: e.eta,
                c_star: e.c_star,
                radius: e.radius,
                psi_term: e.psi_term,
                clamp: e.clamp,
                second_term: e.second_term,
                error_term: e.error_term,
                main_term: e.main_term,
                similarity: e.similarity,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_audit(a: &AuditArgs) -> Outcome {
    let (d, maps) = load(&a.data)?;
    let sched = build_schedule(&a.schedule, d.num_categories())?;
    let cfg = bound_config(&a.bound)?;
    let targets: Option<Vec<Vec<u32>>> = a.limit.map(|lim| {
        let distinct = d.distinct();
        (0..distinct.len().min(lim)).map(|j| distinct.row(j).to_vec()).collect()
    });
    let mut report = audit(&d, &sched, &cfg, targets.as_deref())?;
    report.meta.invocation = invocation("audit", a)?;
    for p in &mut report.points {
        p.labels = Some(maps.decode(&p.row));
    }
    write_json(&a.out, &report)?;
    write_json(&category_path(&a.out), &maps)?;
    if let Some(path) = &a.trace_csv {
        write_trace_csv(path, &report)?;
    }
    eprintln!(
        "audited {} distinct rows of {}; max delta {}, mean delta {}",
        report.points.len(),
        d.len(),
        report.max_delta(),
        report.mean_delta()
    );
    check_finite(&report, a.strict)
}

#[derive(Serialize)]
struct PlotRow {
    ratio: f64,
    mean_delta: f64,
    max_delta: f64,
    size: usize,
}

pub fn cmd_curate(a: &CurateArgs) -> Outcome {
    let (d, maps) = load(&a.data)?;
    let sched = build_schedule(&a.schedule, d.num_categories())?;
    let cfg = bound_config(&a.bound)?;
    let (log, reports) = curate(&d, &sched, &cfg, &a.ratios)?;
    let mut value = serde_json::to_value(&log)?;
    value["invocation"] = invocation("curate", a)?;
    write_json(&a.out, &value)?;
    write_json(&category_path(&a.out), &maps)?;
    if let Some(path) = &a.plot_csv {
        let mut w = csv::Writer::from_path(path)?;
        for r in &log.rounds {
            w.serialize(PlotRow {
                ratio: r.ratio,
                mean_delta: r.mean_delta,
                max_delta: r.max_delta,
                size: r.size,
            })?;
        }
        w.flush()?;
    }
    for r in &log.rounds {
        eprintln!(
            "round {} ratio {}: size {}, mean delta {}, max delta {}",
            r.round, r.ratio, r.size, r.mean_delta, r.max_delta
        );
    }
    reports.iter().try_for_each(|rep| check_finite(rep, a.strict))
}

pub fn cmd_generate(a: &GenerateArgs) -> Outcome {
    let (d, maps) = load(&a.data)?;
    let sched = build_schedule(&a.schedule, d.num_categories())?;
    let rows = generate(&d, a.m, a.release_step, &sched, a.seed)?;
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(maps.header())?;
    for r in &rows {
        w.write_record(maps.decode(r))?;
    }
    w.flush()?;
    write_json(&category_path(&a.out), &maps)?;
    eprintln!("wrote {} samples to {}", rows.len(), a.out.display());
    Ok(())
}

pub fn cmd_lower_bound(a: &LowerBoundArgs) -> Outcome {
    let sched = build_schedule(&a.schedule, 2)?;
    let report = lower_bound_report(&sched, a.s, a.exact)?;
    let mut value = serde_json::to_value(&report)?;
    value["invocation"] = invocation("lower-bound", a)?;
    let threshold = 1.0 / (6.0 * a.s as f64);
    match &a.out {
        Some(path) => {
            write_json(path, &value)?;
            println!(
                "epsilon {} delta_lb {} full_recursion {} 1/(6s) {}",
                report.epsilon, report.delta_lb, report.full_recursion, threshold
            );
            if let Some(ex) = &report.exact_gap {
                println!("exact gap {} exact delta {}", ex.gap, ex.delta_at_epsilon);
            }
        }
        None => print_json(&value)?,
    }
    Ok(())
}

pub fn cmd_dp(a: &DpArgs) -> Outcome {
    let sched = build_schedule(&a.schedule, a.k)?;
    let mut report = dp_delta(a.s, a.n, a.epsilon, a.m, a.release_step, &sched, a.literal_main_text)?;
    report.meta.invocation = invocation("dp", a)?;
    match &a.out {
        Some(path) => {
            write_json(path, &report)?;
            println!("delta_dp {}", report.delta);
        }
        None => print_json(&report)?,
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Outcome {
    let sched = build_schedule(&a.schedule, a.k)?;
    let design = SkewDesign {
        k: a.k,
        n: a.n,
        s: a.s,
        epsilon: a.epsilon,
        rule: rule_of(&a.mode, a.literal_main_text),
        seeds: (a.seed..a.seed + a.seeds).collect(),
    };
    let sweep = predict_leakage_vs_skew(&a.p_grid, &design, &sched)?;
    let file = fs::File::create(&a.out).map_err(|e| Failure::Input(format!("{}: {e}", a.out.display())))?;
    write_rows_csv(&sweep.rows, file)?;
    for (p, delta) in &sweep.delta {
        eprintln!("p {p}: mean delta {delta}");
    }
    Ok(())
}

pub fn cmd_schedule(a: &ScheduleCmdArgs) -> Outcome {
    let sched = build_schedule(&a.schedule, a.k)?;
    let table = sched.table();
    match &a.out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path)?;
            table.iter().try_for_each(|r| w.serialize(r))?;
            w.flush()?;
        }
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            table.iter().try_for_each(|r| w.serialize(r))?;
            w.flush()?;
        }
    }
    Ok(())
}
