//! Method evaluation and the benchmark sweep.
//!
//! A benchmark config is TOML:
//!
//! ```toml
//! distribution = "uniform:-1,1"
//! vectors = 10000
//! seeds = [42]
//! methods = ["fsq:levels=8,8,8,8", "rfsq:stages=4:strategy=layernorm:levels=4,4,4,4,4"]
//! ```
//!
//! Each `(method, seed)` row draws `vectors` samples at the method's own
//! channel count, so methods with equal `D` see identical data for a seed.

use std::io::Write;

use serde::Deserialize;

use rfsq::codec::rate_report;
use rfsq::fit::fit_scales;
use rfsq::lfq::lfq_quantize;
use rfsq::pipeline::{index_usage, rfsq_quantize, RfsqOutput};
use rfsq::tensor::{compute_metrics, gen_synthetic, Distribution};
use rfsq::{FeatureBlock, MetricsReport, RfsqConfig};

use crate::method::{MethodSpec, Quantizer};
use crate::CliError;

pub const BENCH_CSV_HEADER: [&str; 8] = [
    "method",
    "seed",
    "l1",
    "mse",
    "psnr",
    "index_bits",
    "side_bits",
    "utilization",
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub distribution: String,
    pub vectors: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub methods: Vec<String>,
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("benchmark config: {e}")))
    }
}

/// Result of running one method over one block.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub reconstruction: FeatureBlock,
    pub metrics: MetricsReport,
    pub index_bits: f64,
    pub packed_bits: f64,
    pub side_bits: f64,
    /// Mean per-stage codebook utilization.
    pub utilization: f64,
    /// The residual quantizer run, with the config it used (fitted scales
    /// included). LFQ runs are expressed as a one-stage grid of `[2; dim]`.
    pub stream: (RfsqOutput, RfsqConfig),
}

pub fn evaluate(spec: &MethodSpec, z: &FeatureBlock) -> Result<Evaluation, CliError> {
    let (cfg, fit) = match spec.quantizer()? {
        Quantizer::Rfsq { cfg, fit } => (cfg, fit),
        Quantizer::Lfq(lfq) => {
            let (values, indices) = lfq_quantize(z, lfq)?;
            let (utilization, _) = index_usage(&indices, lfq.codebook_size());
            // the two-level grid reproduces the sign code, so the stream path
            // is shared
            let grid = RfsqConfig::none(vec![rfsq::LevelsSpec::new(vec![2; lfq.dim()])?])?;
            let out = rfsq_quantize(z, &grid)?;
            debug_assert_eq!(out.indices[0], indices);
            return Ok(Evaluation {
                metrics: compute_metrics(z, &values)?,
                reconstruction: values,
                index_bits: lfq.rate_bits(),
                packed_bits: lfq.rate_bits(),
                side_bits: 0.0,
                utilization,
                stream: (out, grid),
            });
        }
    };
    let cfg = if fit { cfg.with_scales(fit_scales(z, &cfg)?)? } else { cfg };
    let out = rfsq_quantize(z, &cfg)?;
    let rate = rate_report(&cfg, z.m());
    let utilization = out
        .indices
        .iter()
        .zip(cfg.levels())
        .map(|(idx, s)| index_usage(idx, s.codebook_size()).0)
        .sum::<f64>()
        / cfg.stages() as f64;
    Ok(Evaluation {
        metrics: compute_metrics(z, &out.q_total)?,
        reconstruction: out.q_total.clone(),
        index_bits: rate.index_bits,
        packed_bits: rate.packed_bits,
        side_bits: rate.side_bits,
        utilization,
        stream: (out, cfg),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub seed: u64,
    pub l1: f64,
    pub mse: f64,
    pub psnr: f64,
    pub index_bits: f64,
    pub side_bits: f64,
    pub utilization: f64,
}

pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>, CliError> {
    let dist: Distribution = cfg
        .distribution
        .parse()
        .map_err(|e: rfsq::Error| CliError::Usage(format!("benchmark distribution: {e}")))?;
    let specs = cfg
        .methods
        .iter()
        .map(|m| m.parse::<MethodSpec>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(specs.len() * cfg.seeds.len());
    for (i, spec) in specs.iter().enumerate() {
        for &seed in &cfg.seeds {
            let row = (|| {
                let z = gen_synthetic(dist, cfg.vectors, spec.dim(), seed)?;
                let ev = evaluate(spec, &z)?;
                Ok::<_, CliError>(BenchRow {
                    method: spec.to_string(),
                    seed,
                    l1: ev.metrics.l1,
                    mse: ev.metrics.mse,
                    psnr: ev.metrics.psnr,
                    index_bits: ev.index_bits,
                    side_bits: ev.side_bits,
                    utilization: ev.utilization,
                })
            })()
            .map_err(|e| e.context(format!("benchmark row {} ({spec}, seed {seed})", i + 1)))?;
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_bench_csv(rows: &[BenchRow], out: impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.seed.to_string(),
            r.l1.to_string(),
            r.mse.to_string(),
            r.psnr.to_string(),
            r.index_bits.to_string(),
            r.side_bits.to_string(),
            r.utilization.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_method_list_is_header_only() {
        let cfg = BenchConfig::from_toml("distribution = \"uniform:-1,1\"\nvectors = 10\nseeds = [1]\nmethods = []\n").unwrap();
        let rows = run_benchmark(&cfg).unwrap();
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "method,seed,l1,mse,psnr,index_bits,side_bits,utilization\n");
    }

    #[test]
    fn failing_row_is_named() {
        let cfg = BenchConfig {
            distribution: "uniform:-1,1".into(),
            vectors: 10,
            seeds: vec![7],
            // 1e-50 parses but underflows the f32 wire scale
            methods: vec!["fsq:levels=4,4".into(), "rfsq:stages=1:strategy=scale:levels=4,4:alpha=1e-50".into()],
        };
        let err = run_benchmark(&cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("benchmark row 2"), "{msg}");
        assert!(msg.contains("seed 7"), "{msg}");
        let bad_dist = BenchConfig { distribution: "uniform:1,0".into(), ..cfg };
        assert!(run_benchmark(&bad_dist).unwrap_err().to_string().contains("distribution"));
    }

    #[test]
    fn rows_follow_config_order() {
        let cfg = BenchConfig {
            distribution: "gaussian:0,0.5,1".into(),
            vectors: 200,
            seeds: vec![3, 1],
            methods: vec!["lfq:dim=4".into(), "fsq:levels=5,5".into()],
        };
        let rows = run_benchmark(&cfg).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.method.as_str(), r.seed)).collect();
        assert_eq!(keys, vec![("lfq:dim=4", 3), ("lfq:dim=4", 1), ("fsq:levels=5,5", 3), ("fsq:levels=5,5", 1)]);
        assert_eq!(rows[0].index_bits, 4.0);
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(BenchConfig::from_toml("distribution = \"uniform:-1,1\"\nvectors = 1\nseeds = []\nbogus = 1\n").is_err());
    }

    #[test]
    fn lfq_matches_two_level_grid() {
        let spec: MethodSpec = "lfq:dim=6".parse().unwrap();
        let z = gen_synthetic(Distribution::Uniform { lo: -1.0, hi: 1.0 }, 500, 6, 2).unwrap();
        let z = FeatureBlock::new(
            z.data().iter().enumerate().map(|(i, &v)| if i % 7 == 0 { 0.0 } else { v }).collect(),
            500,
            6,
        )
        .unwrap();
        let ev = evaluate(&spec, &z).unwrap();
        let (out, _) = &ev.stream;
        assert_eq!(out.q_total.data(), ev.reconstruction.data());
        let (_, idx) = lfq_quantize(&z, rfsq::lfq::LfqConfig::new(6).unwrap()).unwrap();
        assert_eq!(out.indices[0], idx);
    }
}
