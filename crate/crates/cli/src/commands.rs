use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;

use qrhawkes::estimate::ingest::{ingest_path, IngestError, IngestReport};
use qrhawkes::estimate::profile::intensity_profile;
use qrhawkes::intensity::stability::validate_model;
use qrhawkes::steady::TruncatedGenerator;
use qrhawkes::{
    analyse, estimate_generator, estimate_mean_interarrival, rank_assets, EstimateConfig,
    EventLog, GeneratorEstimate, RunConfig, StationaryReport, UnitTickMove,
};

use crate::error::{CliError, Stage};
use crate::manifest::Recorder;
use crate::{Common, Format};

/// Default simulation length when no configuration is given.
const DEFAULT_EVENTS: usize = 100_000;

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default_preset(DEFAULT_EVENTS, 1),
    };
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(q) = common.qmax {
        cfg.truncation.q_max_aes = q;
    }
    if let Some(s) = common.smax {
        cfg.truncation.s_max = s;
    }
    if let Some(k) = common.k {
        if k == 0 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        cfg.analysis.k = k;
    }
    if let Some(f) = common.spread_filter {
        let f = (f > 0).then_some(f);
        cfg.estimate.spread_filter = f;
        cfg.ingest.spread_filter = f;
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InputKind {
    EventLog,
    Generator,
    RawCsv,
}

fn sniff(path: &Path) -> Result<InputKind, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| CliError::io(path, e))?;
    Ok(if first.starts_with("# qrhawkes-eventlog") {
        InputKind::EventLog
    } else if first.starts_with("# qrhawkes-generator") {
        InputKind::Generator
    } else {
        InputKind::RawCsv
    })
}

/// Event data gathered from the inputs.
enum Data {
    Logs {
        logs: Vec<EventLog>,
        ingest: Vec<IngestReport>,
        raw: bool,
    },
    Generator(GeneratorEstimate),
}

fn read_log(path: &Path) -> Result<EventLog, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    EventLog::read(BufReader::new(file)).map_err(|e| CliError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn read_generator(path: &Path) -> Result<GeneratorEstimate, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    GeneratorEstimate::read(BufReader::new(file)).map_err(|e| CliError::Input {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_data(paths: &[PathBuf], cfg: &RunConfig, rec: &mut Recorder) -> Result<Data, CliError> {
    let mut logs = Vec::new();
    let mut ingest = Vec::new();
    let mut generator: Option<GeneratorEstimate> = None;
    let mut raw = false;
    for path in paths {
        rec.input(path);
        match sniff(path)? {
            InputKind::EventLog => logs.push(read_log(path)?),
            InputKind::Generator => {
                let g = read_generator(path)?;
                match &mut generator {
                    Some(acc) => acc.merge(&g),
                    None => generator = Some(g),
                }
            }
            InputKind::RawCsv => {
                raw = true;
                let got = ingest_path(path, &cfg.ingest).map_err(|e| match e {
                    IngestError::Config(m) => CliError::Usage(format!("[ingest] {m}")),
                    IngestError::Csv(_) | IngestError::Io(_) => {
                        CliError::Input {
                            path: path.display().to_string(),
                            message: e.to_string(),
                        }
                    }
                    other => CliError::stage(Stage::Ingest, other),
                })?;
                log::info!("{}: {} segments, {} events", path.display(), got.segments.len(), got.report.events);
                logs.extend(got.segments);
                ingest.push(got.report);
            }
        }
    }
    match generator {
        Some(_) if !logs.is_empty() => Err(CliError::Usage(
            "generator files cannot be mixed with event data".into(),
        )),
        Some(g) => Ok(Data::Generator(g)),
        None => Ok(Data::Logs { logs, ingest, raw }),
    }
}

fn estimate_config(cfg: &RunConfig, raw: bool) -> EstimateConfig {
    let mut e = cfg.estimate;
    if raw && e.spread_filter.is_none() {
        e.spread_filter = cfg.ingest.spread_filter;
    }
    e
}

fn estimate_logs(logs: &[EventLog], cfg: &EstimateConfig) -> Result<GeneratorEstimate, CliError> {
    estimate_generator(logs, cfg).map_err(|e| CliError::stage(Stage::Estimate, e))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serialises") + "\n"
}

pub fn simulate(common: &Common, rec: &mut Recorder) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let model = cfg.market_model()?;
    let sim = cfg.sim_config()?;
    rec.seed = Some(sim.seed);
    let log = qrhawkes::simulate(&model, &sim, &UnitTickMove).map_err(|e| CliError::stage(Stage::Simulate, e))?;
    rec.write(&common.output_dir, "events.log", &log.to_text())?;
    println!("events: {}", log.len());
    println!("horizon_s: {}", log.horizon());
    Ok(())
}

pub fn validate(common: &Common, rec: &mut Recorder) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let model = cfg.market_model()?;
    let report = validate_model(&model, &cfg.stability, &UnitTickMove).map_err(|e| CliError::stage(Stage::Validate, e))?;
    rec.write(&common.output_dir, "stability.json", &json(&report))?;
    let verdict = |p: bool| if p { "pass" } else { "fail" };
    println!("growth q_value: {} ({})", report.growth.q_value, verdict(report.growth.pass));
    for c in &report.drift.coordinates {
        let margin = c.max_margin.map_or_else(|| "n/a".to_string(), |m| m.to_string());
        println!("drift {:?}: max margin {margin} events/s ({})", c.coordinate, verdict(c.pass));
    }
    println!("flow bounds: c* {} events/s ({})", report.flow.c_star, verdict(report.flow.pass));
    println!("regularity: max ratio {} ({})", report.regularity.max_ratio, verdict(report.regularity.pass));
    println!("overall: {}", verdict(report.pass));
    if report.pass {
        Ok(())
    } else {
        Err(CliError::stage(Stage::Validate, "the model fails at least one stability condition"))
    }
}

/// Writes the estimate and its side artefacts; returns the estimate.
fn write_estimate(
    common: &Common,
    cfg: &RunConfig,
    logs: &[EventLog],
    ingest: &[IngestReport],
    raw: bool,
    rec: &mut Recorder,
) -> Result<GeneratorEstimate, CliError> {
    let ecfg = estimate_config(cfg, raw);
    let est = estimate_logs(logs, &ecfg)?;
    let dir = &common.output_dir;
    rec.write(dir, "generator.csv", &est.to_text())?;
    let profile = intensity_profile(logs, ecfg.spread_filter);
    match common.format {
        Format::Csv => rec.write(dir, "intensity_profile.csv", &profile.to_csv())?,
        Format::Json => rec.write(dir, "intensity_profile.json", &json(&profile))?,
    };
    #[derive(Serialize)]
    struct Summary<'a> {
        states: usize,
        events: u64,
        horizon_s: f64,
        mean_interarrival_s: Option<f64>,
        mean_interarrival_ci_s: Option<(f64, f64)>,
        ingest: &'a [IngestReport],
    }
    let dt = estimate_mean_interarrival(logs, ecfg.ci_lag).ok();
    let summary = Summary {
        states: est.states().count(),
        events: est.total_events(),
        horizon_s: est.horizon,
        mean_interarrival_s: dt.as_ref().map(|d| d.mean),
        mean_interarrival_ci_s: dt.as_ref().map(|d| d.ci),
        ingest,
    };
    rec.write(dir, "estimate.json", &json(&summary))?;
    println!("states: {}", summary.states);
    println!("events: {}", summary.events);
    println!("horizon_s: {}", summary.horizon_s);
    Ok(est)
}

fn persist_segments(common: &Common, logs: &[EventLog], rec: &mut Recorder) -> Result<(), CliError> {
    for (i, log) in logs.iter().enumerate() {
        rec.write(&common.output_dir, &format!("segments/segment_{i:04}.log"), &log.to_text())?;
    }
    Ok(())
}

pub fn estimate(common: &Common, inputs: &[PathBuf], rec: &mut Recorder) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    match load_data(inputs, &cfg, rec)? {
        Data::Generator(_) => Err(CliError::Usage("estimate needs event logs or raw CSV".into())),
        Data::Logs { logs, ingest, raw } => {
            if raw {
                persist_segments(common, &logs, rec)?;
            }
            write_estimate(common, &cfg, &logs, &ingest, raw, rec).map(|_| ())
        }
    }
}

/// Stationary report from the inputs, or from the configured model when
/// there are none.
fn stationary_report(
    cfg: &RunConfig,
    inputs: &[PathBuf],
    rec: &mut Recorder,
) -> Result<StationaryReport, CliError> {
    let analysis = cfg.analysis_config();
    let solve = |g: &TruncatedGenerator| analyse(g, &analysis).map_err(|e| CliError::stage(Stage::Solve, e));
    if inputs.is_empty() {
        let model = cfg.market_model()?;
        let gen = TruncatedGenerator::from_model(&model, &cfg.truncation, cfg.simulation.initial, &UnitTickMove)
            .map_err(|e| CliError::stage(Stage::Solve, e))?;
        return solve(&gen);
    }
    match load_data(inputs, cfg, rec)? {
        Data::Generator(est) => {
            let gen = TruncatedGenerator::from_estimate(&est, Some(&cfg.truncation))
                .map_err(|e| CliError::stage(Stage::Solve, e))?;
            solve(&gen)
        }
        Data::Logs { logs, raw, .. } => {
            let ecfg = estimate_config(cfg, raw);
            let est = estimate_logs(&logs, &ecfg)?;
            let gen = TruncatedGenerator::from_estimate(&est, Some(&cfg.truncation))
                .map_err(|e| CliError::stage(Stage::Solve, e))?;
            let mut report = solve(&gen)?;
            report.intensity_profile = Some(intensity_profile(&logs, ecfg.spread_filter));
            Ok(report)
        }
    }
}

fn write_stationary(common: &Common, report: &StationaryReport, rec: &mut Recorder) -> Result<(), CliError> {
    let dir = &common.output_dir;
    match common.format {
        Format::Json => {
            rec.write(dir, "stationary.json", &report.to_json())?;
        }
        Format::Csv => {
            rec.write(dir, "summary.csv", &report.summary_csv())?;
            rec.write(dir, "states.csv", &report.states_csv())?;
            if let Some(p) = &report.intensity_profile {
                rec.write(dir, "intensity_profile.csv", &p.to_csv())?;
            }
        }
    }
    print!("{}", report.summary_csv());
    for w in &report.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn stationary(common: &Common, inputs: &[PathBuf], rec: &mut Recorder) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let report = stationary_report(&cfg, inputs, rec)?;
    write_stationary(common, &report, rec)
}

pub fn volatility(common: &Common, inputs: &[PathBuf], rec: &mut Recorder) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let report = stationary_report(&cfg, inputs, rec)?;
    let dt = report.mean_interarrival_s;
    let dir = &common.output_dir;
    match common.format {
        Format::Csv => {
            let mut s = String::from("lag,sigma2_m_tick2_per_event,sigma2_m_tick2_per_s\n");
            for (j, v) in report.sigma2_m_tick2_per_event.iter().enumerate() {
                let _ = writeln!(s, "{j},{v},{}", v / dt);
            }
            rec.write(dir, "volatility.csv", &s)?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Volatility<'a> {
                k: usize,
                mean_interarrival_s: f64,
                sigma2_g_tick2_per_event: f64,
                sigma2_m_tick2_per_event: &'a [f64],
                sigma2_g_tick2_per_s: f64,
                sigma2_mk_tick2_per_s: f64,
            }
            let v = Volatility {
                k: report.k,
                mean_interarrival_s: dt,
                sigma2_g_tick2_per_event: report.sigma2_g_tick2_per_event,
                sigma2_m_tick2_per_event: &report.sigma2_m_tick2_per_event,
                sigma2_g_tick2_per_s: report.sigma2_g_tick2_per_s,
                sigma2_mk_tick2_per_s: report.sigma2_mk_tick2_per_s,
            };
            rec.write(dir, "volatility.json", &json(&v))?;
        }
    }
    println!("sigma2_g (tick^2/event): {}", report.sigma2_g_tick2_per_event);
    println!("sigma2_m_{} (tick^2/event): {}", report.k, report.sigma2_mk());
    println!("sigma2_g (tick^2/s): {}", report.sigma2_g_tick2_per_s);
    println!("sigma2_m_{} (tick^2/s): {}", report.k, report.sigma2_mk_tick2_per_s);
    Ok(())
}

fn asset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn write_ranking(
    common: &Common,
    cfg: &RunConfig,
    assets: &[(String, GeneratorEstimate)],
    rec: &mut Recorder,
) -> Result<(), CliError> {
    let report = rank_assets(assets, &cfg.rank.agents, &cfg.rank_config()).map_err(|e| CliError::stage(Stage::Rank, e))?;
    let dir = &common.output_dir;
    match common.format {
        Format::Csv => {
            rec.write(dir, "ranking.csv", &report.to_csv())?;
            rec.write(dir, "ranking.md", &report.to_table())?;
        }
        Format::Json => {
            rec.write(dir, "ranking.json", &report.to_json())?;
        }
    }
    print!("{}", report.to_table());
    Ok(())
}

pub fn rank(common: &Common, inputs: &[PathBuf], rec: &mut Recorder) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let mut assets = Vec::new();
    for path in inputs {
        let est = match load_data(std::slice::from_ref(path), &cfg, rec)? {
            Data::Generator(g) => g,
            Data::Logs { logs, raw, .. } => estimate_logs(&logs, &estimate_config(&cfg, raw))?,
        };
        assets.push((asset_name(path), est));
    }
    write_ranking(common, &cfg, &assets, rec)
}

pub fn pipeline(
    common: &Common,
    inputs: &[PathBuf],
    no_rank: bool,
    asset: Option<&str>,
    rec: &mut Recorder,
) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let (logs, ingest, raw) = match load_data(inputs, &cfg, rec)? {
        Data::Generator(_) => return Err(CliError::Usage("pipeline needs event logs or raw CSV".into())),
        Data::Logs { logs, ingest, raw } => (logs, ingest, raw),
    };
    if raw {
        persist_segments(common, &logs, rec)?;
    }
    let est = write_estimate(common, &cfg, &logs, &ingest, raw, rec)?;
    let gen = TruncatedGenerator::from_estimate(&est, Some(&cfg.truncation)).map_err(|e| CliError::stage(Stage::Solve, e))?;
    let mut report = analyse(&gen, &cfg.analysis_config()).map_err(|e| CliError::stage(Stage::Solve, e))?;
    report.intensity_profile = Some(intensity_profile(&logs, estimate_config(&cfg, raw).spread_filter));
    write_stationary(common, &report, rec)?;
    if no_rank {
        return Ok(());
    }
    let name = asset.map_or_else(|| asset_name(&inputs[0]), str::to_string);
    write_ranking(common, &cfg, &[(name, est)], rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_filter_zero_disables() {
        let common = Common {
            config: None,
            output_dir: PathBuf::from("unused"),
            format: Format::Csv,
            seed: Some(5),
            qmax: Some(8),
            smax: None,
            k: Some(3),
            spread_filter: Some(0),
        };
        let cfg = load_config(&common).unwrap();
        assert_eq!(cfg.simulation.seed, 5);
        assert_eq!(cfg.truncation.q_max_aes, 8);
        assert_eq!(cfg.analysis.k, 3);
        assert_eq!(cfg.estimate.spread_filter, None);
        assert_eq!(cfg.ingest.spread_filter, None);
    }

    #[test]
    fn zero_lag_is_a_usage_error() {
        let common = Common {
            config: None,
            output_dir: PathBuf::from("unused"),
            format: Format::Csv,
            seed: None,
            qmax: None,
            smax: None,
            k: Some(0),
            spread_filter: None,
        };
        assert_eq!(load_config(&common).unwrap_err().exit_code(), 2);
    }
}
