//! `ucreg`: the workbench pipeline from the command line. Every subcommand
//! prints compact JSON (or CSV where noted) on stdout, byte-identical to the
//! corresponding service response.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ucreg_core::chart::{train_and_evaluate, ChartSpec, EvaluationOptions};
use ucreg_core::correlation::{build_panorama as correlate, CorrelationPanorama};
use ucreg_core::data::{decompose_target, parse_delimiter, Dataset, DatasetSummary, DecompositionSummary, LoadOptions};
use ucreg_core::logit::{FitConfig, Profile};
use ucreg_core::query::{batch_query, query, QuerySession};
use ucreg_core::radviz::attribute_view;
use ucreg_core::store::{build_panorama, BuildOptions, PanoramaFile};

#[derive(Debug, Parser)]
#[command(name = "ucreg", version, about = "Correlation panorama, logistic regression and profile queries")]
struct Cli {
    /// Cap on worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pretty-print JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dataset summary, target decomposition and correlation panorama.
    Inspect {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated attributes to leave out of the panorama.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
    },
    /// Attribute RadViz layout.
    Layout {
        #[command(flatten)]
        data: DataArgs,
        /// `global`, a label name or an attribute name.
        #[arg(long, default_value = "global")]
        focus: String,
        /// Comma-separated labels whose anchors are hidden.
        #[arg(long, value_delimiter = ',')]
        hidden: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        distortion: f64,
    },
    /// Train a chart and report ROC/AUC on a held-out split.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated labels; one label fits label-vs-rest.
        #[arg(long, value_delimiter = ',', required = true)]
        labels: Vec<String>,
        /// Comma-separated explanatory attributes.
        #[arg(long, value_delimiter = ',', required = true)]
        attrs: Vec<String>,
        #[arg(long)]
        title: Option<String>,
        /// Held-out fraction; 0 evaluates on the training rows.
        #[arg(long, default_value_t = 0.2)]
        split: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        fit: FitArgs,
        /// Also write the item (probability) layout of the evaluated rows.
        #[arg(long)]
        lorrviz: Option<PathBuf>,
    },
    /// Train several charts and save them as one panorama file.
    Panorama {
        #[command(flatten)]
        data: DataArgs,
        /// JSON array of {title, labels, attributes[, target]}.
        #[arg(long)]
        charts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// RFC 3339 creation time to record instead of now.
        #[arg(long)]
        created: Option<String>,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Query a panorama file with one profile or a sequence of states.
    Query {
        #[arg(long)]
        panorama: PathBuf,
        /// JSON object {attribute: value}; prints per-chart probabilities.
        #[arg(long, conflicts_with = "states", required_unless_present = "states")]
        profile: Option<PathBuf>,
        /// CSV with one state per row; prints the streamgraph CSV.
        #[arg(long)]
        states: Option<PathBuf>,
        /// Fill attributes the input leaves out with the stored means.
        #[arg(long)]
        fill_defaults: bool,
    },
    /// Score every row of a table and lay the probabilities out radially.
    Batch {
        #[arg(long)]
        panorama: PathBuf,
        #[command(flatten)]
        data: TableArgs,
        /// Column whose values color the points.
        #[arg(long)]
        color_by: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        distortion: f64,
        /// Write per-row probabilities here instead of JSON on stdout.
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Write the layouts (one per chart) here.
        #[arg(long)]
        out_layout: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        /// Overrides UCREG_ADDR.
        #[arg(long)]
        addr: Option<SocketAddr>,
        /// Request body cap in bytes; overrides UCREG_MAX_UPLOAD.
        #[arg(long)]
        max_upload: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct TableArgs {
    /// CSV/TSV input.
    #[arg(long)]
    data: PathBuf,
    /// Field delimiter: one character or `tab`. Defaults to tab for .tsv files.
    #[arg(long)]
    delimiter: Option<String>,
    /// Column holding row identifiers.
    #[arg(long)]
    id_column: Option<String>,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[command(flatten)]
    table: TableArgs,
    /// Categorical column to decompose into labels.
    #[arg(long)]
    target: Option<String>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Ridge strength on standardized weights.
    #[arg(long)]
    l2: Option<f64>,
}

impl FitArgs {
    fn config(&self) -> FitConfig {
        let d = FitConfig::default();
        FitConfig {
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            tol: self.tol.unwrap_or(d.tol),
            l2: self.l2.unwrap_or(d.l2),
        }
    }
}

impl TableArgs {
    fn load(&self, allow_empty: bool) -> Result<Dataset> {
        let tsv = self.data.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
        let mut opts = if tsv { LoadOptions::tsv() } else { LoadOptions::default() };
        if let Some(d) = &self.delimiter {
            opts.delimiter = parse_delimiter(d).with_context(|| format!("unsupported delimiter `{d}`"))?;
        }
        opts.id_column = self.id_column.clone();
        opts.allow_empty = allow_empty;
        let file = File::open(&self.data).with_context(|| format!("cannot open {}", self.data.display()))?;
        Dataset::load(file, &opts).with_context(|| format!("cannot load {}", self.data.display()))
    }
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let ds = self.table.load(false)?;
        Ok(match &self.target {
            Some(t) => ds.with_target(t)?,
            None => ds,
        })
    }

    fn target(&self, ds: &Dataset) -> Result<String> {
        match ds.target() {
            Some(t) => Ok(t.to_owned()),
            None => bail!("--target is required; candidates: {}", ds.candidate_targets().join(", ")),
        }
    }
}

#[derive(Debug, Serialize)]
struct InspectReport {
    summary: DatasetSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    decomposition: Option<DecompositionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    panorama: Option<CorrelationPanorama>,
}

#[derive(Debug, Deserialize)]
struct ChartArg {
    title: Option<String>,
    target: Option<String>,
    labels: Vec<String>,
    attributes: Vec<String>,
}

struct Output {
    pretty: bool,
}

impl Output {
    fn json<T: Serialize>(&self, value: &T) -> Result<()> {
        let text = if self.pretty {
            serde_json::to_string_pretty(value)?
        } else {
            serde_json::to_string(value)?
        };
        let mut out = std::io::stdout().lock();
        writeln!(out, "{text}")?;
        Ok(())
    }

    fn text(&self, text: &str) -> Result<()> {
        std::io::stdout().lock().write_all(text.as_bytes())?;
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn read_panorama(path: &Path) -> Result<PanoramaFile> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    PanoramaFile::load(&bytes).with_context(|| format!("cannot load {}", path.display()))
}

fn fill(pf: &PanoramaFile, profile: Profile, defaults: bool) -> Profile {
    if !defaults {
        return profile;
    }
    let mut full = pf.default_profile();
    full.extend(profile);
    full
}

fn run(cli: Cli) -> Result<()> {
    let out = Output { pretty: cli.pretty };
    match cli.command {
        Command::Inspect { data, exclude } => {
            let ds = data.load()?;
            let (decomposition, panorama) = match ds.target() {
                Some(t) => {
                    let dec = decompose_target(&ds, t)?;
                    let excluded: HashSet<String> = exclude.into_iter().collect();
                    let p = correlate(&ds, &dec, &excluded)?;
                    (Some(dec.summary()), Some(p))
                }
                None => (None, None),
            };
            out.json(&InspectReport {
                summary: ds.summary(),
                decomposition,
                panorama,
            })
        }
        Command::Layout {
            data,
            focus,
            hidden,
            exclude,
            distortion,
        } => {
            let ds = data.load()?;
            let dec = decompose_target(&ds, &data.target(&ds)?)?;
            let p = correlate(&ds, &dec, &exclude.into_iter().collect())?;
            out.json(&attribute_view(p, &ds, &focus, &hidden, distortion)?)
        }
        Command::Fit {
            data,
            labels,
            attrs,
            title,
            split,
            seed,
            fit,
            lorrviz,
        } => {
            let ds = data.load()?;
            let spec = ChartSpec {
                title: title.unwrap_or_else(|| labels.join(" / ")),
                target: data.target(&ds)?,
                labels,
                attributes: attrs,
            };
            let opts = EvaluationOptions {
                split: (split > 0.0).then_some(split),
                seed,
            };
            let (report, evaluation) = train_and_evaluate(&ds, &spec, &opts, &fit.config())?;
            if let Some(path) = lorrviz {
                write_file(&path, evaluation.lorrviz(1.0)?.to_json().as_bytes())?;
            }
            out.json(&report)
        }
        Command::Panorama {
            data,
            charts,
            out: path,
            created,
            fit,
        } => {
            let ds = data.load()?;
            let text = std::fs::read_to_string(&charts).with_context(|| format!("cannot read {}", charts.display()))?;
            let args: Vec<ChartArg> =
                serde_json::from_str(&text).with_context(|| format!("invalid chart list in {}", charts.display()))?;
            let specs = args
                .into_iter()
                .map(|c| {
                    Ok(ChartSpec {
                        title: c.title.unwrap_or_else(|| c.labels.join(" / ")),
                        target: match c.target {
                            Some(t) => t,
                            None => data.target(&ds)?,
                        },
                        labels: c.labels,
                        attributes: c.attributes,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let pf = build_panorama(&ds, &specs, &fit.config(), &BuildOptions { created })?;
            write_file(&path, &pf.save())?;
            eprintln!("wrote {} chart(s) to {}", pf.charts.len(), path.display());
            Ok(())
        }
        Command::Query {
            panorama,
            profile,
            states,
            fill_defaults,
        } => {
            let pf = read_panorama(&panorama)?;
            if let Some(path) = profile {
                let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                let p: BTreeMap<String, f64> =
                    serde_json::from_str(&text).with_context(|| format!("invalid profile in {}", path.display()))?;
                return out.json(&query(&pf, &fill(&pf, p, fill_defaults))?);
            }
            let path = states.expect("clap enforces --profile or --states");
            let table = TableArgs {
                data: path,
                delimiter: None,
                id_column: None,
            }
            .load(false)?;
            let mut session = QuerySession::new(Arc::new(pf));
            for row in 0..table.n_rows() {
                let mut p = Profile::new();
                for name in table.attribute_names() {
                    if let Some(v) = table.attribute(name)?[row] {
                        p.insert(name.to_owned(), v);
                    }
                }
                let p = fill(session.panorama(), p, fill_defaults);
                session
                    .submit_state(p)
                    .with_context(|| format!("state {} (data row {})", row, row + 2))?;
            }
            out.text(&session.streamgraph_csv())
        }
        Command::Batch {
            panorama,
            data,
            color_by,
            distortion,
            out_csv,
            out_layout,
        } => {
            let pf = read_panorama(&panorama)?;
            let table = data.load(true)?;
            let result = batch_query(&pf, &table, color_by.as_deref(), distortion)?;
            if out_csv.is_none() && out_layout.is_none() {
                return out.json(&result);
            }
            if let Some(path) = out_csv {
                write_file(&path, result.to_csv(table.row_ids()).as_bytes())?;
            }
            if let Some(path) = out_layout {
                let layouts: Vec<_> = result
                    .charts
                    .iter()
                    .map(|c| serde_json::json!({ "title": c.title, "layout": c.layout }))
                    .collect();
                write_file(&path, serde_json::to_string(&layouts)?.as_bytes())?;
            }
            Ok(())
        }
        Command::Serve { addr, max_upload } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let mut config = ucreg_server::Config::from_env().map_err(anyhow::Error::msg)?;
            if let Some(a) = addr {
                config.addr = a;
            }
            if let Some(m) = max_upload {
                config.max_upload = m;
            }
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(ucreg_server::serve(config))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
