use std::path::Path;

use ddrsim::harness::config::{load_table, parse_value, set_key};
use ddrsim::harness::{compare as compare_reports, evaluate_batch, run as run_scenario, steady_state_rmse, write_log_csv};
use ddrsim::harness::{ScenarioConfig, METRIC_NAMES};
use toml::{Table, Value};

use crate::output::{prepare, write_atomic, CliError};
use crate::plot;
use crate::{Common, Feedback, Format, PlantInputArg};

const RUN_ARTIFACTS: [&str; 3] = ["log.csv", "report.csv", "plot.gp"];

/// Load the config as a raw table with the command-line overrides applied.
fn load_overridden(common: &Common, path: &Path) -> Result<Table, CliError> {
    let mut table = load_table(path)?;
    if let Some(seed) = common.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::Config(format!("seed {seed} is too large")))?;
        set_key(&mut table, "seed", Value::Integer(seed))?;
    }
    if let Some(f) = common.feedback {
        let name = match f {
            Feedback::Truth => "truth",
            Feedback::Ekf => "ekf",
        };
        set_key(&mut table, "feedback", Value::String(name.into()))?;
    }
    if let Some(p) = common.plant_input {
        let name = match p {
            PlantInputArg::Torque => "torque",
            PlantInputArg::Twist => "twist",
        };
        set_key(&mut table, "plant_input", Value::String(name.into()))?;
    }
    Ok(table)
}

fn load(common: &Common, path: &Path) -> Result<ScenarioConfig, CliError> {
    Ok(ScenarioConfig::from_table(load_overridden(common, path)?)?)
}

fn label(cfg: &ScenarioConfig, path: &Path) -> String {
    cfg.name.clone().unwrap_or_else(|| path.display().to_string())
}

pub fn run(common: &Common, out: &Path, force: bool) -> Result<(), CliError> {
    let cfg = load(common, &common.config)?;
    prepare(out, &RUN_ARTIFACTS, force)?;
    let log = run_scenario(&cfg)?;
    let report = steady_state_rmse(&log, log.transient)?;
    write_atomic(out, "log.csv", |w| Ok(write_log_csv(&log, w)?))?;
    write_atomic(out, "report.csv", |w| Ok(report.write_csv(w)?))?;
    let title = label(&cfg, &common.config);
    write_atomic(out, "plot.gp", |w| Ok(w.write_all(plot::script(&title).as_bytes())?))?;
    match common.format {
        Format::Table => print!("{}", report.to_table()),
        Format::Csv => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn compare(common: &Common, baseline: &Path, out: Option<&Path>, force: bool) -> Result<(), CliError> {
    let cand = load(common, &common.config)?;
    let base = load(common, baseline)?;
    if cand.path != base.path {
        return Err(CliError::Config(format!(
            "candidate {} and baseline {} track different paths",
            common.config.display(),
            baseline.display()
        )));
    }
    if let Some(dir) = out {
        prepare(dir, &["comparison.csv"], force)?;
    }
    let reports: Vec<_> = evaluate_batch(&[base, cand]).into_iter().collect::<Result<_, _>>()?;
    let cmp = compare_reports(&reports[0], &reports[1]);
    if let Some(dir) = out {
        write_atomic(dir, "comparison.csv", |w| Ok(cmp.write_csv(w)?))?;
    }
    match common.format {
        Format::Table => print!("{}", cmp.to_table()),
        Format::Csv => cmp.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct Grid {
    key: String,
    values: Vec<Value>,
}

fn parse_grid(spec: &str) -> Result<Grid, CliError> {
    let (key, rhs) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("grid '{spec}' must look like key=v1,v2 or key=a..b")))?;
    let key = key.trim().to_string();
    if key.is_empty() {
        return Err(CliError::Config(format!("grid '{spec}' has an empty key")));
    }
    let values = if let Some((a, b)) = rhs.split_once("..") {
        let parse = |s: &str| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| CliError::Config(format!("grid '{spec}': range bounds must be integers")))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        (a..=b).map(Value::Integer).collect()
    } else {
        rhs.split(',').filter(|s| !s.trim().is_empty()).map(parse_value).collect::<Vec<_>>()
    };
    if values.is_empty() {
        return Err(CliError::Config(format!("grid '{spec}' has no values")));
    }
    Ok(Grid { key, values })
}

/// Cartesian product, last grid varying fastest.
fn cells(grids: &[Grid]) -> Vec<Vec<Value>> {
    grids.iter().fold(vec![Vec::new()], |acc, g| {
        acc.into_iter()
            .flat_map(|prefix| {
                g.values.iter().map(move |v| {
                    let mut row = prefix.clone();
                    row.push(v.clone());
                    row
                })
            })
            .collect()
    })
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn sweep(common: &Common, specs: &[String], out: &Path, force: bool) -> Result<(), CliError> {
    if specs.is_empty() {
        return Err(CliError::Config("sweep needs at least one --grid".into()));
    }
    let grids: Vec<Grid> = specs.iter().map(|s| parse_grid(s)).collect::<Result<_, _>>()?;
    // Start from the resolved config so defaults exist and scalars broadcast into arrays.
    let base: Table = load(common, &common.config)?
        .to_toml()?
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let points = cells(&grids);
    let mut configs = Vec::with_capacity(points.len());
    for point in &points {
        let mut table = base.clone();
        for (g, v) in grids.iter().zip(point) {
            set_key(&mut table, &g.key, v.clone())?;
        }
        let cfg = ScenarioConfig::from_table(table).map_err(|e| {
            let at: Vec<String> = grids.iter().zip(point).map(|(g, v)| format!("{}={}", g.key, cell_text(v))).collect();
            CliError::Config(format!("grid point {}: {e}", at.join(" ")))
        })?;
        configs.push(cfg);
    }
    prepare(out, &["summary.csv"], force)?;
    let results = evaluate_batch(&configs);

    let mut header: Vec<String> = grids.iter().map(|g| g.key.clone()).collect();
    header.extend(["seed", "config_hash", "status"].map(String::from));
    header.extend(METRIC_NAMES.map(String::from));
    let mut rows = Vec::with_capacity(points.len());
    let mut failure = None;
    for ((point, cfg), result) in points.iter().zip(&configs).zip(results) {
        let mut row: Vec<String> = point.iter().map(cell_text).collect();
        row.push(cfg.seed.to_string());
        row.push(cfg.config_hash());
        match result {
            Ok(report) => {
                row.push("ok".into());
                row.extend(report.values().map(|v| v.to_string()));
            }
            Err(e) => {
                row.push(e.to_string());
                row.extend(std::iter::repeat_n(String::new(), METRIC_NAMES.len()));
                failure.get_or_insert(CliError::from(e));
            }
        }
        rows.push(row);
    }
    write_atomic(out, "summary.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in &rows {
            csv.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        csv.flush()?;
        Ok(())
    })?;
    match common.format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(std::io::stdout().lock());
            for r in std::iter::once(&header).chain(&rows) {
                csv.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
            }
            csv.flush()?;
        }
        Format::Table => {
            println!("{}", header.join("\t"));
            for r in &rows {
                println!("{}", r.join("\t"));
            }
        }
    }
    failure.map_or(Ok(()), Err)
}

pub fn validate(common: &Common) -> Result<(), CliError> {
    let cfg = load(common, &common.config)?;
    println!(
        "ok: {} (config hash {}, {} s, seed {})",
        label(&cfg, &common.config),
        cfg.config_hash(),
        cfg.duration,
        cfg.seed
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_lists_and_ranges() {
        let g = parse_grid("controller.eta=0,0.8,10").unwrap();
        assert_eq!(g.key, "controller.eta");
        assert_eq!(g.values, vec![Value::Integer(0), Value::Float(0.8), Value::Integer(10)]);
        assert_eq!(parse_grid("seed=1..10").unwrap().values.len(), 10);
        assert_eq!(parse_grid("seed=3..1").map(|g| g.values.len()).ok(), None);
    }

    #[test]
    fn malformed_grids_rejected() {
        for bad in ["seed", "=1,2", "seed=", "seed=1..x", "seed=,"] {
            assert!(matches!(parse_grid(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn product_order() {
        let a = parse_grid("a=1,2").unwrap();
        let b = parse_grid("b=x,y,z").unwrap();
        let c = cells(&[a, b]);
        assert_eq!(c.len(), 6);
        assert_eq!(cell_text(&c[0][1]), "x");
        assert_eq!(cell_text(&c[1][1]), "y");
        assert_eq!(cell_text(&c[3][0]), "2");
    }
}
