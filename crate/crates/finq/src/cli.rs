//! `finq` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or model errors.
//! Results go to `--out` (or stdout); diagnostics go to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use finq_core::applications::{
    detect_outliers, generate_scenario, nowcast, parse_shock, pca_compare, relative_value, residual_signal,
    sample_synthetic, SampleSpec, ScenarioMove, ScenarioRequest, DEFAULT_OUTLIER_THRESHOLD,
};
use finq_core::market_data::{
    default_anchor_layout, generate_synthetic_history, load_history, AnchorLayout, CsvFormat, CurveHistory,
    MarketObject, NelsonSiegelParams, TenorGrid, ValueUnits,
};
use finq_core::ndmath::Rng;
use finq_core::pipeline::{load_model, save_model, train_pipeline, FinqModel, PipelineConfig};
use serde::Serialize;

use crate::server::{serve, ServiceConfig, DEFAULT_BODY_LIMIT};
use crate::wire::{DecompositionBody, SamplesBody, ScenarioBody};

#[derive(Debug, Parser)]
#[command(name = "finq", version, about = "Multiresolution curve decomposition with calibrated VAE cascades")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Curve history CSV: a `date` column followed by one column per tenor.
    #[arg(long)]
    pub data: PathBuf,
    /// Values in the CSV are percentages.
    #[arg(long)]
    pub percent: bool,
    /// Skip rows with empty cells instead of failing.
    #[arg(long)]
    pub skip_incomplete: bool,
}

impl DataArgs {
    fn load(&self) -> Result<CurveHistory, CliError> {
        let format = CsvFormat {
            units: if self.percent { ValueUnits::Percent } else { ValueUnits::Decimal },
            skip_incomplete: self.skip_incomplete,
        };
        Ok(load_history(&self.data, &format)?)
    }
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model bundle; falls back to `FINQ_MODEL`.
    #[arg(long, env = "FINQ_MODEL")]
    pub model: PathBuf,
}

impl ModelArg {
    fn load(&self) -> Result<FinqModel, CliError> {
        Ok(load_model(&self.model)?)
    }
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic Nelson-Siegel curve history as CSV.
    GenerateData {
        #[arg(long, default_value_t = 700)]
        n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Idiosyncratic noise standard deviation (decimal rate).
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        start: Option<NaiveDate>,
        /// Comma-separated tenor labels; the 18-tenor standard grid by default.
        #[arg(long, value_delimiter = ',')]
        tenors: Option<Vec<String>>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train a cascade and write the model bundle.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Anchor layout JSON `{"layers": [["2Y",...], ...]}`; default anchors when omitted.
        #[arg(long)]
        anchors: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        /// Fail on degenerate residual layers instead of flooring their scale.
        #[arg(long)]
        strict: bool,
    },
    /// Decompose one dated curve (the latest by default) or the whole history.
    Decompose {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, conflicts_with = "all")]
        date: Option<NaiveDate>,
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Full-curve scenario from anchor moves such as `10Y=+10bp`.
    Scenario {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "move", value_name = "TENOR=SHOCK")]
        moves: Vec<String>,
        /// History to take the current curve from; the model's mean shape otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        date: Option<NaiveDate>,
        #[arg(long, requires = "data")]
        percent: bool,
        /// Anchor level the moves belong to; inferred when omitted.
        #[arg(long)]
        level: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Draw synthetic curves from the cascade.
    Sample {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Per-layer sampling spec as JSON; every layer samples its prior when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Write CSV rows instead of JSON.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Fill a partially observed curve.
    Nowcast {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "observe", value_name = "TENOR=VALUE")]
        observe: Vec<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Robust z-score outliers of quantized latents.
    Outliers {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = DEFAULT_OUTLIER_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Residual series of one tenor against each intermediate reconstruction (CSV).
    ResidualSignal {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        tenor: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Spreads of a second history over the model's reconstruction of `--data`.
    RelativeValue {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        data: DataArgs,
        /// History of the second instrument, same grid and dates.
        #[arg(long)]
        other: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Base-anchor residuals against a PCA baseline (CSV).
    PcaCompare {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        data: DataArgs,
        /// First test date; PCA is fitted on earlier dates.
        #[arg(long)]
        split_date: Option<NaiveDate>,
        #[arg(long, default_value_t = 3)]
        components: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Serve the JSON API.
    Serve {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory of static assets served for paths outside the API.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BODY_LIMIT)]
        body_limit: usize,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<finq_core::Error> for CliError {
    fn from(e: finq_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn emit(out: &OutArg, bytes: &[u8]) -> Result<(), CliError> {
    match &out.out {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: &OutArg, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

fn split_pair(text: &str) -> Result<(String, &str), CliError> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected TENOR=VALUE, got {text:?}")))?;
    Ok((k.trim().to_string(), v.trim()))
}

fn pick(history: &CurveHistory, date: Option<NaiveDate>) -> Result<MarketObject, CliError> {
    match date {
        Some(d) => history
            .get_by_date(d)
            .cloned()
            .ok_or_else(|| CliError::Data(format!("no curve dated {d}"))),
        None => history
            .objects()
            .last()
            .cloned()
            .ok_or_else(|| CliError::Data("history is empty".into())),
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenerateData {
            n,
            seed,
            noise,
            start,
            tenors,
            out,
        } => {
            let grid = Arc::new(match tenors {
                Some(t) => TenorGrid::from_labels(&t)?,
                None => TenorGrid::standard(),
            });
            let mut params = NelsonSiegelParams::default();
            if let Some(s) = noise {
                params.noise_std = s;
            }
            if let Some(d) = start {
                params.start_date = d;
            }
            let s = generate_synthetic_history(&grid, &params, n, &mut Rng::new(seed))?;
            let mut buf = Vec::new();
            s.history.write_csv(&mut buf)?;
            emit(&out, &buf)
        }
        Command::Train {
            data,
            anchors,
            out,
            seed,
            epochs,
            strict,
        } => {
            let history = data.load()?;
            let layout = match anchors {
                Some(p) => AnchorLayout::load(p, history.grid())?,
                None => default_anchor_layout(history.grid())?,
            };
            let mut config = PipelineConfig::with_seed(seed);
            config.strict = strict;
            if let Some(e) = epochs {
                config.set_epochs(e);
            }
            let (model, report) = train_pipeline(&history, &layout, &config)?;
            for (k, l) in report.layers.iter().enumerate() {
                let last = l.loss_trace.last().map(|e| e.total).unwrap_or(f64::NAN);
                eprintln!(
                    "layer {k}: final loss {last:.6e}, mean anchor error {:.3e}",
                    l.mean_anchor_error
                );
            }
            save_model(&model, &out)?;
            Ok(())
        }
        Command::Decompose {
            model,
            data,
            date,
            all,
            out,
        } => {
            let model = model.load()?;
            let history = data.load()?;
            if all {
                let bodies = history
                    .objects()
                    .iter()
                    .map(|o| DecompositionBody::of(&model.decompose(o)?))
                    .collect::<Result<Vec<_>, _>>()?;
                emit_json(&out, &bodies)
            } else {
                let x = pick(&history, date)?;
                emit_json(&out, &DecompositionBody::of(&model.decompose(&x)?)?)
            }
        }
        Command::Scenario {
            model,
            moves,
            data,
            date,
            percent,
            level,
            out,
        } => {
            let model = model.load()?;
            let moves = moves
                .iter()
                .map(|m| {
                    let (tenor, v) = split_pair(m)?;
                    let shock = parse_shock(v).map_err(|e| CliError::Usage(e.to_string()))?;
                    Ok(ScenarioMove { tenor, shock })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let current = match data {
                Some(p) => {
                    let args = DataArgs {
                        data: p,
                        percent,
                        skip_incomplete: false,
                    };
                    pick(&args.load()?, date)?
                }
                None => MarketObject::new(model.grid().clone(), model.mean_shape()?, None)?,
            };
            let request = ScenarioRequest { current, moves, level };
            let r = generate_scenario(&model, &request, None)?;
            if !r.converged {
                eprintln!("warning: scenario missed a moved anchor by {:.3e}", r.max_shock_miss);
            }
            emit_json(&out, &ScenarioBody::of(&r)?)
        }
        Command::Sample {
            model,
            count,
            seed,
            spec,
            csv,
            out,
        } => {
            let model = model.load()?;
            let spec = match spec {
                Some(p) => {
                    let mut s: SampleSpec = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                    s.count = count;
                    s
                }
                None => SampleSpec::all_prior(model.num_layers(), count),
            };
            let samples = sample_synthetic(&model, &spec, &mut Rng::new(seed))?;
            if csv {
                emit(&out, &samples_csv(model.grid(), &samples)?)
            } else {
                emit_json(&out, &SamplesBody::of(model.grid(), &samples))
            }
        }
        Command::Nowcast { model, observe, out } => {
            let model = model.load()?;
            let mut partial = BTreeMap::new();
            for o in &observe {
                let (tenor, v) = split_pair(o)?;
                let value = parse_shock(v).map_err(|e| CliError::Usage(e.to_string()))?;
                partial.insert(tenor, value);
            }
            emit_json(&out, &nowcast(&model, &partial, None)?)
        }
        Command::Outliers {
            model,
            data,
            threshold,
            out,
        } => {
            let model = model.load()?;
            let report = detect_outliers(&model, &data.load()?, threshold)?;
            eprintln!("{} flags at threshold {threshold}", report.flags.len());
            emit_json(&out, &report)
        }
        Command::ResidualSignal {
            model,
            data,
            tenor,
            out,
        } => {
            let model = model.load()?;
            let s = residual_signal(&model, &data.load()?, &tenor)?;
            for (j, st) in s.stats.iter().enumerate() {
                eprintln!(
                    "{tenor} vs level {}: mean {:.3e}, std {:.3e}, se {:.3e}",
                    j + 1,
                    st.mean,
                    st.std,
                    st.standard_error
                );
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["date".to_string()];
            header.extend((0..s.residuals.len()).map(|j| format!("resid_o{j}")));
            w.write_record(&header).map_err(|e| CliError::Data(e.to_string()))?;
            for (t, d) in s.dates.iter().enumerate() {
                let mut rec = vec![d.to_string()];
                rec.extend(s.residuals.iter().map(|r| r[t].to_string()));
                w.write_record(&rec).map_err(|e| CliError::Data(e.to_string()))?;
            }
            emit(&out, &w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)
        }
        Command::RelativeValue {
            model,
            data,
            other,
            out,
        } => {
            let model = model.load()?;
            let a = data.load()?;
            let b = DataArgs {
                data: other,
                percent: data.percent,
                skip_incomplete: data.skip_incomplete,
            }
            .load()?;
            let report = relative_value(&model, &a, &b)?;
            for c in report.candidates() {
                eprintln!("candidate {}: mean spread {:.3e}, std {:.3e}", c.tenor, c.stats.mean, c.stats.std);
            }
            emit_json(&out, &report)
        }
        Command::PcaCompare {
            model,
            data,
            split_date,
            components,
            out,
        } => {
            let model = model.load()?;
            let r = pca_compare(&model, &data.load()?, split_date, components)?;
            for s in &r.summaries {
                eprintln!(
                    "{} ({} dates): finq mean {:.3e} max {:.3e}; pca mean {:.3e} max {:.3e}",
                    s.period, s.dates, s.finq_mean, s.finq_max, s.pca_mean, s.pca_max
                );
            }
            let mut buf = Vec::new();
            r.write_csv(&mut buf)?;
            emit(&out, &buf)
        }
        Command::Serve {
            model,
            bind,
            port,
            static_dir,
            body_limit,
        } => {
            if !model.model.is_file() {
                return Err(CliError::Data(format!("model bundle {} not found", model.model.display())));
            }
            if let Some(d) = &static_dir {
                if !d.is_dir() {
                    return Err(CliError::Usage(format!("static directory {} not found", d.display())));
                }
            }
            let config = ServiceConfig {
                bind: SocketAddr::new(bind, port),
                model_path: model.model,
                static_dir,
                body_limit,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve(config)).map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

fn samples_csv(grid: &TenorGrid, samples: &[MarketObject]) -> Result<Vec<u8>, CliError> {
    let err = |e: csv::Error| CliError::Data(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample".to_string()];
    header.extend(grid.labels().iter().cloned());
    w.write_record(&header).map_err(err)?;
    for (i, s) in samples.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(s.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}
