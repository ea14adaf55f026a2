use super::{runtime, Baseline, BenchmarkArgs, CliError, Result};
use crate::estimator::gcn::{train_gcn_baseline, GcnConfig};
use crate::estimator::{evaluate_accuracy, train_magnet, ActorConfig};
use crate::interpreter::{explain, Thresholds};
use crate::metrics::interpretation_metrics;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: [&str; 9] = ["setting", "n", "nodes", "important", "method", "metric", "mean", "sd", "repeats"];

/// One aggregated line of a benchmark report.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub setting: u8,
    pub n: usize,
    pub nodes: usize,
    pub important: usize,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub repeats: usize,
}

/// C-style `%g`: six significant digits, trailing zeros dropped, exponent
/// form below 1e-4 and from 1e6 up.
pub fn format_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    fn trim(s: &str) -> &str {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.')
        } else {
            s
        }
    }
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

/// `MAGNET_THREADS`, default 1.
pub(super) fn worker_count() -> Result<usize> {
    match std::env::var("MAGNET_THREADS") {
        Err(_) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(t),
            _ => Err(CliError::Validation(format!(
                "invalid value for MAGNET_THREADS: expected a positive integer, got `{s}`"
            ))),
        },
    }
}

/// Seed of repetition `r`, drawn from its own ChaCha stream.
pub fn repetition_seed(seed: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng.next_u64()
}

/// Raw per-repetition values, in a fixed (method, metric) order.
type Sample = Vec<(&'static str, &'static str, f64)>;

fn one_repetition(a: &BenchmarkArgs, r: usize) -> Result<Sample> {
    let seed = repetition_seed(a.seed, r);
    let data = a.data.generate(seed)?;
    let (train, test) = data.split(a.split, seed);
    let cfg = ActorConfig { seed, ..ActorConfig::with_orders(a.k) };
    let model = train_magnet(&train, &cfg).map_err(runtime)?;
    let mut out = vec![("magnet", "accuracy", evaluate_accuracy(&model, &test).map_err(runtime)?)];

    let thresholds = Thresholds { top_m_nodes: Some(a.data.important), ..Thresholds::default() };
    let e = explain(&model, &test, &a.explain.config(seed), &thresholds).map_err(runtime)?;
    let important = data.important_nodes().expect("generated data has important nodes");
    let m = interpretation_metrics(data.adjacency(), &e.kept_edges, &e.kept_nodes, important).map_err(runtime)?;
    out.push(("magnet", "recovery_rate", m.recovery_rate));
    out.push(("magnet", "am", m.am));
    out.push(("magnet", "rm", m.rm));

    if a.baseline == Baseline::Gcn {
        let g = train_gcn_baseline(&train, &GcnConfig { seed, ..GcnConfig::default() }).map_err(runtime)?;
        out.push(("gcn", "accuracy", g.accuracy(&test).map_err(runtime)?));
    }
    Ok(out)
}

/// Runs every repetition on up to `threads` workers; results are gathered
/// in repetition order, so the output does not depend on scheduling.
pub(super) fn run_benchmark(a: &BenchmarkArgs, threads: usize) -> Result<Vec<BenchmarkRow>> {
    let threads = threads.min(a.repeats);
    let mut samples: Vec<Option<Result<Sample>>> = (0..a.repeats).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                s.spawn(move || (w..a.repeats).step_by(threads).map(|r| (r, one_repetition(a, r))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (r, res) in h.join().expect("benchmark worker panicked") {
                samples[r] = Some(res);
            }
        }
    });
    let samples: Vec<Sample> = samples.into_iter().map(|s| s.expect("every repetition ran")).collect::<Result<_>>()?;
    Ok(aggregate(a, &samples))
}

fn aggregate(a: &BenchmarkArgs, samples: &[Sample]) -> Vec<BenchmarkRow> {
    let first = &samples[0];
    (0..first.len())
        .map(|k| {
            let values: Vec<f64> = samples.iter().map(|s| s[k].2).collect();
            let (mean, sd) = mean_sd(&values);
            BenchmarkRow {
                setting: a.data.setting,
                n: a.data.n,
                nodes: a.data.nodes,
                important: a.data.important,
                method: first[k].0.into(),
                metric: first[k].1.into(),
                mean,
                sd,
                repeats: values.len(),
            }
        })
        .collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub(super) fn to_csv(rows: &[BenchmarkRow]) -> std::result::Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.setting.to_string(),
            r.n.to_string(),
            r.nodes.to_string(),
            r.important.to_string(),
            r.method.clone(),
            r.metric.clone(),
            format_g(r.mean),
            format_g(r.sd),
            r.repeats.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(super) fn from_csv(text: &str) -> std::result::Result<Vec<BenchmarkRow>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(format!("expected header `{}`", CSV_HEADER.join(",")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |i: usize| format!("row {}: bad `{}` value `{}`", line + 1, CSV_HEADER[i], field(i));
        rows.push(BenchmarkRow {
            setting: field(0).parse().map_err(|_| bad(0))?,
            n: field(1).parse().map_err(|_| bad(1))?,
            nodes: field(2).parse().map_err(|_| bad(2))?,
            important: field(3).parse().map_err(|_| bad(3))?,
            method: field(4).to_string(),
            metric: field(5).to_string(),
            mean: field(6).parse().map_err(|_| bad(6))?,
            sd: field(7).parse().map_err(|_| bad(7))?,
            repeats: field(8).parse().map_err(|_| bad(8))?,
        });
    }
    Ok(rows)
}

/// `out.csv` → `out.provenance.json`.
pub(super) fn provenance_path(csv: &Path) -> PathBuf {
    csv.with_extension("provenance.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_formatting_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (0.785, "0.785"),
            (2.0 / 3.0, "0.666667"),
            (123456.0, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-0.25, "-0.25"),
            (9.999995, "10"),
            (999999.5, "1e+06"),
            (0.080873, "0.080873"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g(x), want, "formatting {x}");
        }
    }

    #[test]
    fn sample_sd() {
        assert_eq!(mean_sd(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.2909944487358056).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![BenchmarkRow {
            setting: 1,
            n: 250,
            nodes: 30,
            important: 20,
            method: "magnet".into(),
            metric: "accuracy".into(),
            mean: 0.757333,
            sd: 0.0251,
            repeats: 10,
        }];
        let text = to_csv(&rows).unwrap();
        assert!(text.starts_with("setting,n,nodes,important,method,metric,mean,sd,repeats\n"));
        assert!(text.contains("1,250,30,20,magnet,accuracy,0.757333,0.0251,10"));
        assert_eq!(from_csv(&text).unwrap(), rows);
        assert!(from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn repetition_seeds_differ() {
        let s: Vec<u64> = (0..5).map(|r| repetition_seed(7, r)).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(repetition_seed(7, 3), s[3]);
    }
}
