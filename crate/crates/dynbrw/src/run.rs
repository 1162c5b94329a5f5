//! Experiment orchestration: replicate fan-out with derived streams,
//! order-independent aggregation, and report emission.
//!
//! Replicates run in parallel but aggregation always happens in replicate-id
//! order over the collected results, so the degree of parallelism cannot
//! change any output bit.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind, OutputFormat};
use crate::dynamics::RandomStream;
use crate::engine::{
    exceptional_scan, stability_certificate, zeta_n, LabelSet,
};
use crate::group::{GroupFamily, StepLaw};
use crate::gw::{sample_tree, GwTree, OffspringLaw, DEFAULT_NODE_BUDGET};
use crate::spectral::{classify, estimate_rho, series_condition};
use crate::Result;

/// Mean / spread summary of replicate values.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Summary {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        let sd = var.sqrt();
        Summary {
            count: n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
        }
    }
}

/// Flat tabular output: one row per replicate or per sweep segment.
#[derive(Clone, Debug, Serialize)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub version: String,
    pub wall_clock_ms: u128,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub results: Value,
    pub meta: Meta,
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub csv: CsvTable,
}

/// Parallel replicate fan-out with per-replicate derived streams; failures
/// are tagged with the replicate id so they can be reproduced in isolation.
fn fan_out<T, F>(replicates: usize, root: &RandomStream, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, RandomStream) -> Result<T> + Sync,
{
    (0..replicates as u64)
        .into_par_iter()
        .map(|i| job(i, root.derive("replicate", i)).map_err(|e| e.in_replicate(i)))
        .collect()
}

fn replicate_tree(
    mu: &OffspringLaw,
    depth: usize,
    stream: &RandomStream,
) -> Result<GwTree> {
    let mut rng = stream.derive("tree", 0).rng();
    sample_tree(mu, depth, DEFAULT_NODE_BUDGET, &mut rng)
}

fn dump_labels_value(family: &GroupFamily, labels: &LabelSet) -> Value {
    let dumps: Vec<Value> = labels
        .iter()
        .map(|l| {
            let d = l.dump(|el| family.format_element(el));
            serde_json::to_value(d).expect("label dump serializes")
        })
        .collect();
    Value::Array(dumps)
}

/// Runs a validated experiment config to completion.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = std::time::Instant::now();
    let family = config.family()?;
    let law = config.step_law()?;
    let root = RandomStream::from_seed(config.seed);

    let (results, csv) = match config.kind {
        ExperimentKind::Classify => run_classify(config, &family, &law)?,
        ExperimentKind::Rho => run_rho(config, &family, &law)?,
        ExperimentKind::Series => run_series(config, &family, &law)?,
        ExperimentKind::Tree => run_tree(config, &root)?,
        ExperimentKind::Simulate => run_simulate(config, &family, &law, &root)?,
        ExperimentKind::Zeta => run_zeta(config, &family, &law, &root)?,
        ExperimentKind::Embedded => run_embedded(config, &family, &law, &root)?,
        ExperimentKind::Certify => run_certify(config, &family, &law, &root)?,
        ExperimentKind::Scan => run_scan(config, &family, &law, &root)?,
    };

    Ok(RunOutput {
        report: RunReport {
            config: config.clone(),
            results,
            meta: Meta {
                version: env!("CARGO_PKG_VERSION").to_string(),
                wall_clock_ms: started.elapsed().as_millis(),
            },
        },
        csv,
    })
}

fn run_classify(
    config: &ExperimentConfig,
    family: &GroupFamily,
    law: &StepLaw,
) -> Result<(Value, CsvTable)> {
    let m = config.required_m()?;
    let rho = match config.rho {
        Some(r) => r,
        None => estimate_rho(family, law, config.n_max_or_default())?.estimate,
    };
    let classification = classify(m, rho)?;
    let results = serde_json::to_value(&classification).expect("serializable");
    let csv = CsvTable {
        header: vec!["regime".into(), "m".into(), "rho".into(), "margin".into()],
        rows: vec![vec![
            format!("{:?}", classification.regime),
            classification.m.to_string(),
            classification.rho.to_string(),
            classification.margin.to_string(),
        ]],
    };
    Ok((results, csv))
}

fn run_rho(
    config: &ExperimentConfig,
    family: &GroupFamily,
    law: &StepLaw,
) -> Result<(Value, CsvTable)> {
    let estimate = estimate_rho(family, law, config.n_max_or_default())?;
    let results = serde_json::to_value(&estimate).expect("serializable");
    let csv = CsvTable {
        header: vec!["index".into(), "lower_bound".into()],
        rows: estimate
            .lower_bounds
            .iter()
            .enumerate()
            .map(|(i, lb)| vec![(i + 1).to_string(), lb.to_string()])
            .collect(),
    };
    Ok((results, csv))
}

fn run_series(
    config: &ExperimentConfig,
    family: &GroupFamily,
    law: &StepLaw,
) -> Result<(Value, CsvTable)> {
    let verdict = series_condition(
        family,
        law,
        config.required_m()?,
        config.n_max_or_default(),
        config.delta_or_default(),
    )?;
    let results = serde_json::to_value(&verdict).expect("serializable");
    let csv = CsvTable {
        header: vec![
            "verdict".into(),
            "partial_sum".into(),
            "tail_ratio_min".into(),
            "tail_ratio_max".into(),
        ],
        rows: vec![vec![
            format!("{:?}", verdict.verdict),
            verdict.partial_sum.to_string(),
            verdict.tail_ratio_min.to_string(),
            verdict.tail_ratio_max.to_string(),
        ]],
    };
    Ok((results, csv))
}

fn run_tree(config: &ExperimentConfig, root: &RandomStream) -> Result<(Value, CsvTable)> {
    let mu = config.offspring_law()?;
    let tree = replicate_tree(&mu, config.required_depth()?, &root.derive("replicate", 0))?;
    let level_sizes: Vec<usize> = tree.levels().iter().map(|l| l.len()).collect();
    let results = json!({
        "node_count": tree.node_count(),
        "level_sizes": level_sizes,
    });
    let csv = CsvTable {
        header: vec!["id".into(), "parent".into(), "depth".into()],
        rows: (0..tree.node_count() as u32)
            .map(|v| {
                vec![
                    v.to_string(),
                    tree.parent(v).map(|p| p.to_string()).unwrap_or_default(),
                    tree.node_depth(v).to_string(),
                ]
            })
            .collect(),
    };
    Ok((results, csv))
}

fn run_simulate(
    config: &ExperimentConfig,
    family: &GroupFamily,
    law: &StepLaw,
    root: &RandomStream,
) -> Result<(Value, CsvTable)> {
    let mu = config.offspring_law()?;
    let depth = config.required_depth()?;
    let horizon = config.required_horizon()?;
    let level = config.observed_level(depth);
    let dump = config.dump_labels;

    struct Rep {
        segments: Vec<(f64, f64, usize)>,
        time_average: f64,
        labels_dump: Option<Value>,
    }
    let reps = fan_out(config.replicates, root, |_i, stream| {
        let tree = replicate_tree(&mu, depth, &stream)?;
        let labels = LabelSet::sample(law, &tree, horizon, &stream.derive("labels", 0));
        let scan = exceptional_scan(family, &tree, &labels, horizon, level)?;
        let mut avg = 0.0;
        let segments: Vec<(f64, f64, usize)> = scan
            .iter()
            .map(|s| {
                let count = s.returns[level - 1];
                avg += (s.end - s.start) * count as f64;
                (s.start, s.end, count)
            })
            .collect();
        Ok(Rep {
            segments,
            time_average: avg / horizon,
            labels_dump: dump.then(|| dump_labels_value(family, &labels)),
        })
    })?;

    let averages: Vec<f64> = reps.iter().map(|r| r.time_average).collect();
    let mut results = json!({
        "level": level,
        "time_average": Summary::from_values(&averages),
        "per_replicate_time_average": averages,
    });
    if dump {
        results["labels"] = Value::Array(
            reps.iter()
                .map(|r| r.labels_dump.clone().unwrap_or(Value::Null))
                .collect(),
        );
    }
    let mut rows = Vec::new();
    for (i, rep) in reps.iter().enumerate() {
        for &(start, end, count) in &rep.segments {
            rows.push(vec![
                i.to_string(),
                start.to_string(),
                end.to_string(),
                count.to_string(),
            ]);
        }
    }
    let csv = CsvTable {
        header: vec![
            "replicate".into(),
            "start".into(),
            "end".into(),
            "returns".into(),
        ],
        rows,
    };
    Ok((results, csv))
}

fn run_zeta(
    config: &ExperimentConfig,
    family: &GroupFamily,
    law: &StepLaw,
    root: &RandomStream,
) -> Result<(Value, CsvTable)> {
    let mu = config.offspring_law()?;
    let depth = config.required_depth()?;
    let level = config.observed_level(depth);
    let values = fan_out(config.replicates, root, |_i, stream| {
        let tree = replicate_tree(&mu, depth, &stream)?;
        let mut labels = LabelSet::sample(law, &tree, 0.0, &stream.derive("labels", 0));
        let mut rng = stream.derive("tau", 0).rng();
        zeta_n(family, law, &tree, &mut labels, level, &mut rng)
    })?;
    let results = json!({
        "level": level,
        "zeta": Summary::from_values(&values),
        "per_replicate": values,
    });
    let csv = CsvTable {
        header: vec!["replicate".into(), "zeta".into()],
        rows: values
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), v.to_string()])
            .collect(),
    };
    Ok((results, csv))
}

fn run_embedded(
    config: &ExperimentConfig,
    family: &GroupFamily,
    law: &StepLaw,
    root: &RandomStream,
) -> Result<(Value, CsvTable)> {
    let mu = config.offspring_law()?;
    let k = config.required_k()?;
    let levels = config.levels_or_default();
    let depth = config.depth.unwrap_or((levels - 1) * k);
    let horizon = config.horizon.unwrap_or(0.0);
    let counts = fan_out(config.replicates, root, |_i, stream| {
        let tree = replicate_tree(&mu, depth, &stream)?;
        let labels = LabelSet::sample(law, &tree, horizon, &stream.derive("labels", 0));
        let states =
            crate::engine::embedded_process(family, &tree, &labels, 0.0, k, levels)?;
        Ok(states.into_iter().map(|s| s.count).collect::<Vec<_>>())
    })?;
    let mut per_level = Vec::with_capacity(levels);
    for idx in 0..levels {
        let values: Vec<f64> = counts.iter().map(|c| c[idx] as f64).collect();
        per_level.push(json!({
            "level_index": idx + 1,
            "xi": Summary::from_values(&values),
        }));
    }
    let results = json!({
        "k": k,
        "levels": levels,
        "per_level": per_level,
    });
    let mut rows = Vec::new();
    for (i, c) in counts.iter().enumerate() {
        for (idx, &count) in c.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                (idx + 1).to_string(),
                count.to_string(),
            ]);
        }
    }
    let csv = CsvTable {
        header: vec!["replicate".into(), "level_index".into(), "xi".into()],
        rows,
    };
    Ok((results, csv))
}

fn run_certify(
    config: &ExperimentConfig,
    family: &GroupFamily,
    law: &StepLaw,
    root: &RandomStream,
) -> Result<(Value, CsvTable)> {
    let mu = config.offspring_law()?;
    let cert = stability_certificate(
        family,
        law,
        &mu,
        config.required_k()?,
        config.replicates,
        &root.derive("certify", 0),
    )?;
    let results = serde_json::to_value(&cert).expect("serializable");
    let csv = CsvTable {
        header: vec![
            "epsilon".into(),
            "estimate".into(),
            "lower_bound".into(),
        ],
        rows: cert
            .attempts
            .iter()
            .map(|a| {
                vec![
                    a.epsilon.to_string(),
                    a.estimate.to_string(),
                    a.lower_bound.to_string(),
                ]
            })
            .collect(),
    };
    Ok((results, csv))
}

fn run_scan(
    config: &ExperimentConfig,
    family: &GroupFamily,
    law: &StepLaw,
    root: &RandomStream,
) -> Result<(Value, CsvTable)> {
    let mu = config.offspring_law()?;
    let depth = config.required_depth()?;
    let horizon = config.required_horizon()?;
    let level = config.observed_level(depth);
    let dump = config.dump_labels;

    struct Rep {
        segments: Vec<(f64, f64, Vec<usize>)>,
        time_averages: Vec<f64>,
        max_total: usize,
        labels_dump: Option<Value>,
    }
    let reps = fan_out(config.replicates, root, |_i, stream| {
        let tree = replicate_tree(&mu, depth, &stream)?;
        let labels = LabelSet::sample(law, &tree, horizon, &stream.derive("labels", 0));
        let scan = exceptional_scan(family, &tree, &labels, horizon, level)?;
        let mut time_averages = vec![0.0; level];
        let mut max_total = 0usize;
        let segments: Vec<(f64, f64, Vec<usize>)> = scan
            .iter()
            .map(|s| {
                for (idx, &c) in s.returns.iter().enumerate() {
                    time_averages[idx] += (s.end - s.start) * c as f64;
                }
                max_total = max_total.max(s.returns.iter().sum());
                (s.start, s.end, s.returns.clone())
            })
            .collect();
        for avg in &mut time_averages {
            *avg /= horizon;
        }
        Ok(Rep {
            segments,
            time_averages,
            max_total,
            labels_dump: dump.then(|| dump_labels_value(family, &labels)),
        })
    })?;

    let mut per_level = Vec::with_capacity(level);
    for idx in 0..level {
        let values: Vec<f64> = reps.iter().map(|r| r.time_averages[idx]).collect();
        per_level.push(json!({
            "level": idx + 1,
            "time_average": Summary::from_values(&values),
        }));
    }
    let max_totals: Vec<usize> = reps.iter().map(|r| r.max_total).collect();
    let zero_fraction =
        max_totals.iter().filter(|&&m| m == 0).count() as f64 / max_totals.len() as f64;
    let mut results = json!({
        "levels": level,
        "per_level": per_level,
        "max_total_returns": max_totals,
        "zero_fraction": zero_fraction,
    });
    if dump {
        results["labels"] = Value::Array(
            reps.iter()
                .map(|r| r.labels_dump.clone().unwrap_or(Value::Null))
                .collect(),
        );
    }
    let mut rows = Vec::new();
    for (i, rep) in reps.iter().enumerate() {
        for (start, end, counts) in &rep.segments {
            let mut row = vec![i.to_string(), start.to_string(), end.to_string()];
            row.extend(counts.iter().map(|c| c.to_string()));
            rows.push(row);
        }
    }
    let mut header = vec!["replicate".into(), "start".into(), "end".into()];
    header.extend((1..=level).map(|l| format!("level{l}")));
    let csv = CsvTable { header, rows };
    Ok((results, csv))
}

/// Renders a run per the requested format: a pretty JSON report or the flat
/// CSV table.
pub fn render(output: &RunOutput, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut text =
                serde_json::to_string_pretty(&output.report).expect("report serializes");
            text.push('\n');
            text
        }
        OutputFormat::Csv => output.csv.render(),
    }
}

/// Convenience for tests: everything except the wall clock, which is the
/// only field allowed to differ between identical runs.
pub fn deterministic_part(output: &RunOutput) -> String {
    let mut report = serde_json::to_value(&output.report).expect("serializable");
    report["meta"]["wall_clock_ms"] = Value::Null;
    format!("{report}\n{}", output.csv.render())
}
