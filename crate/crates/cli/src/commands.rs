//! Subcommand bodies. Each writes its report to `out` so tests can capture
//! it.

use std::fs;
use std::io::Write;
use std::path::Path;

use rfsq::codec::{decode_stream, encode_stream, rate_report};
use rfsq::fit::fit_scales;
use rfsq::pipeline::{decay_diagnostics, rfsq_dequantize, rfsq_quantize};
use rfsq::tensor::{gen_synthetic, load_block, mse, save_block, Distribution};
use rfsq::{FeatureBlock, Strategy};

use crate::bench::{csv_err, evaluate, run_benchmark, write_bench_csv, BenchConfig};
use crate::method::{MethodSpec, Quantizer};
use crate::CliError;

pub const QUANTIZE_CSV_HEADER: [&str; 8] = [
    "method",
    "l1",
    "mse",
    "psnr",
    "index_bits",
    "packed_bits",
    "side_bits",
    "total_bits",
];

pub const DIAGNOSE_CSV_HEADER: [&str; 5] = [
    "k",
    "mean_abs_residual",
    "input_std",
    "code_utilization",
    "code_entropy",
];

/// Vectors drawn by `diagnose` when no input file is given.
pub const SYNTHETIC_VECTORS: usize = 10_000;

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<FeatureBlock, CliError> {
    load_block(path).map_err(|e| CliError::from(e).context(path.display()))
}

fn parse_spec(spec: &str) -> Result<MethodSpec, CliError> {
    Ok(spec.parse::<MethodSpec>()?)
}

fn check_dim(spec: &MethodSpec, z: &FeatureBlock) -> Result<(), CliError> {
    if spec.dim() != z.d() {
        return Err(CliError::Usage(format!(
            "{spec} expects {} channels, input has {}",
            spec.dim(),
            z.d()
        )));
    }
    Ok(())
}

/// Either a file given by `--csv` or `out`.
fn csv_target<'a>(csv: Option<&Path>, out: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    Ok(match csv {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?),
        None => Box::new(out),
    })
}

pub fn quantize(input: &Path, spec: &str, output: &Path, csv: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = parse_spec(spec)?;
    let z = load(input)?;
    check_dim(&spec, &z)?;
    let ev = evaluate(&spec, &z)?;
    let (stream_out, cfg) = &ev.stream;
    let bytes = encode_stream(stream_out, cfg)?;
    fs::write(output, bytes).map_err(|e| CliError::Io(format!("{}: {e}", output.display())))?;
    let mut w = csv::Writer::from_writer(csv_target(csv, out)?);
    w.write_record(QUANTIZE_CSV_HEADER).map_err(csv_err)?;
    w.write_record([
        spec.to_string(),
        ev.metrics.l1.to_string(),
        ev.metrics.mse.to_string(),
        ev.metrics.psnr.to_string(),
        ev.index_bits.to_string(),
        ev.packed_bits.to_string(),
        ev.side_bits.to_string(),
        (ev.index_bits + ev.side_bits).to_string(),
    ])
    .map_err(csv_err)?;
    w.flush()?;
    Ok(())
}

pub fn dequantize(input: &Path, output: &Path) -> Result<(), CliError> {
    let bytes = read_file(input)?;
    let stream = decode_stream(&bytes).map_err(|e| CliError::from(e).context(input.display()))?;
    let q = rfsq_dequantize(&stream.indices, &stream.side_info, &stream.cfg)?;
    save_block(&q, output).map_err(|e| CliError::from(e).context(output.display()))?;
    Ok(())
}

pub fn diagnose(
    input: Option<&Path>,
    spec: &str,
    seed: u64,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let spec = parse_spec(spec)?;
    let Quantizer::Rfsq { cfg, fit } = spec.quantizer()? else {
        return Err(CliError::Usage("diagnose needs an fsq or rfsq method".into()));
    };
    let z = match input {
        Some(p) => load(p)?,
        None => gen_synthetic(
            Distribution::Uniform { lo: -1.0, hi: 1.0 },
            SYNTHETIC_VECTORS,
            spec.dim(),
            seed,
        )?,
    };
    check_dim(&spec, &z)?;
    let cfg = if fit { cfg.with_scales(fit_scales(&z, &cfg)?)? } else { cfg };
    let report = decay_diagnostics(&z, &cfg)?;
    let mut w = csv::Writer::from_writer(csv_target(csv, out)?);
    w.write_record(DIAGNOSE_CSV_HEADER).map_err(csv_err)?;
    for (k, s) in report.stages.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            s.mean_abs_residual.to_string(),
            s.input_std.to_string(),
            s.code_utilization.to_string(),
            s.code_entropy.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn fit(input: &Path, spec: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = parse_spec(spec)?;
    let Quantizer::Rfsq { cfg, .. } = spec.quantizer()? else {
        return Err(CliError::Usage("fit-scales needs an rfsq method".into()));
    };
    if cfg.strategy() != Strategy::Scale {
        return Err(CliError::Usage(format!("fit-scales needs strategy=scale, got {}", cfg.strategy())));
    }
    let z = load(input)?;
    check_dim(&spec, &z)?;
    let alphas = fit_scales(&z, &cfg)?;
    let unit = mse(&z, &rfsq_quantize(&z, &cfg)?.q_total)?;
    let fitted = mse(&z, &rfsq_quantize(&z, &cfg.with_scales(alphas.clone())?)?.q_total)?;
    writeln!(out, "{}", spec.with_alphas(alphas))?;
    eprintln!("mse with unit scales {unit}, with fitted scales {fitted}");
    Ok(())
}

pub fn benchmark(config: &Path, csv: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(config).map_err(|e| CliError::Io(format!("{}: {e}", config.display())))?;
    let cfg = BenchConfig::from_toml(&text)?;
    let rows = run_benchmark(&cfg)?;
    write_bench_csv(&rows, csv_target(csv, out)?)
}

pub fn info(spec: &str, input: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = parse_spec(spec)?;
    let m = match input {
        Some(p) => load(p)?.m().max(1),
        None => 1,
    };
    writeln!(out, "method: {spec}")?;
    match spec.quantizer()? {
        Quantizer::Lfq(cfg) => {
            writeln!(out, "codebook {}  rate {} bits", cfg.codebook_size(), cfg.rate_bits())?;
        }
        Quantizer::Rfsq { cfg, .. } => {
            for (k, s) in cfg.levels().iter().enumerate() {
                writeln!(
                    out,
                    "stage {}: levels {s}  codebook {}  rate {} bits  packed {} bits",
                    k + 1,
                    s.codebook_size(),
                    s.rate_bits(),
                    s.packed_bits()
                )?;
            }
            let r = rate_report(&cfg, m);
            writeln!(
                out,
                "per vector (m={m}): index_bits {}  packed_bits {}  side_bits {}  total_bits {}",
                r.index_bits, r.packed_bits, r.side_bits, r.total_bits
            )?;
            if cfg.stages() > 1 {
                writeln!(
                    out,
                    "note: {} stages spend {} index bits per vector in total, not the {} bits of a single stage",
                    cfg.stages(),
                    r.index_bits,
                    cfg.levels()[0].rate_bits()
                )?;
            }
        }
    }
    Ok(())
}

pub fn generate(output: &Path, dist: &str, vectors: usize, dim: usize, seed: u64) -> Result<(), CliError> {
    let dist: Distribution = dist.parse()?;
    let z = gen_synthetic(dist, vectors, dim, seed)?;
    save_block(&z, output).map_err(|e| CliError::from(e).context(output.display()))?;
    Ok(())
}
