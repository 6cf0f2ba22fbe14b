//! The `cbir` command line.
//!
//! Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.
//! Human-readable tables go to standard output (suppressed by `--quiet`);
//! `--records FILE` additionally writes one JSON object per line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evalharness::{compare_classifiers, evaluate_retrieval, SyntheticSpec};
use crate::features::{extract_features_from_path, ExtractionParams, DEFAULT_BINS};
use crate::mknn::{classify_knn, Classification, ClassifierConfig, MknnClassifier, DEFAULT_K};
use crate::retrieval::{label_unlabeled, query_by_example};
use crate::store::{build_index, load_index, quantize_vector, save_index};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const DEFAULT_TOP: usize = 10;
const DEFAULT_SEEDS: usize = 50;

#[derive(Debug, Parser)]
#[command(
    name = "cbir",
    version,
    about = "Color-histogram image retrieval with MKNN labeling"
)]
pub struct Cli {
    /// Suppress human-readable output.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// Also write machine-readable records (JSON lines) to this file.
    #[arg(long, global = true, value_name = "FILE")]
    pub records: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an index from a directory of images.
    Index {
        #[arg(long, value_name = "DIR")]
        images: PathBuf,
        /// Label map: one "relative/path<TAB>label" per line.
        #[arg(long, value_name = "FILE")]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BINS, value_name = "N")]
        bins: usize,
        #[arg(long, value_name = "INDEX")]
        out: PathBuf,
    },
    /// Rank indexed images by distance to a query image.
    Query {
        #[arg(long, value_name = "INDEX")]
        index: PathBuf,
        #[arg(long, value_name = "FILE")]
        image: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP, value_name = "N")]
        top: usize,
    },
    /// Predict the class of an image from the labeled entries of an index.
    Classify {
        #[arg(long, value_name = "INDEX")]
        index: PathBuf,
        #[arg(long, value_name = "FILE")]
        image: PathBuf,
        #[command(flatten)]
        neighbors: NeighborArgs,
        #[arg(long, value_enum, default_value_t = Method::Mknn)]
        method: Method,
    },
    /// Assign MKNN labels to every unlabeled entry and write a new index.
    LabelUnlabeled {
        #[arg(long, value_name = "INDEX")]
        index: PathBuf,
        #[command(flatten)]
        neighbors: NeighborArgs,
        #[arg(long, value_name = "INDEX2")]
        out: PathBuf,
    },
    /// Recall, precision and fallout with every entry used as a query.
    Evaluate {
        #[arg(long, value_name = "INDEX")]
        index: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP, value_name = "N")]
        top: usize,
    },
    /// Compare MKNN with KNN on synthetic Gaussian clusters.
    Compare {
        /// JSON synthetic spec; defaults to the built-in two-cluster
        /// reference with 15% label noise.
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
        #[command(flatten)]
        neighbors: NeighborArgs,
        #[arg(long, default_value_t = DEFAULT_SEEDS, value_name = "S")]
        seeds: usize,
    },
}

#[derive(Debug, Args)]
pub struct NeighborArgs {
    /// Voting neighbors.
    #[arg(long, default_value_t = DEFAULT_K, value_name = "K")]
    pub k: usize,
    /// Validity neighbors [default: K].
    #[arg(long, value_name = "H")]
    pub h: Option<usize>,
}

impl NeighborArgs {
    fn config(&self) -> ClassifierConfig {
        ClassifierConfig::new(self.k).with_h(self.h.unwrap_or(self.k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mknn,
    Knn,
}

/// One line of `--records` output.
#[derive(Debug, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum Record<'a> {
    Indexed {
        entries: usize,
        labeled: usize,
        unlabeled: usize,
        skipped: usize,
    },
    Skipped {
        id: &'a str,
        reason: &'a str,
    },
    Result {
        rank: usize,
        id: &'a str,
        distance: f64,
        label: Option<&'a str>,
    },
    Classification {
        method: &'a str,
        predicted_label: &'a str,
        confidence: f64,
        per_class_totals: &'a std::collections::BTreeMap<String, f64>,
    },
    Assignment {
        id: &'a str,
        assigned_label: &'a str,
        confidence: f64,
    },
    Query {
        id: &'a str,
        recall: Option<f64>,
        precision: Option<f64>,
        fallout: Option<f64>,
    },
    QuerySkipped {
        id: &'a str,
    },
    MacroAverage {
        queries: usize,
        skipped: usize,
        recall: Option<f64>,
        precision: Option<f64>,
        fallout: Option<f64>,
    },
    Seed {
        seed: u64,
        k: usize,
        h: usize,
        knn_accuracy: f64,
        mknn_accuracy: f64,
    },
    Summary {
        seeds: usize,
        k: usize,
        h: usize,
        knn_accuracy: f64,
        mknn_accuracy: f64,
        mknn_win_or_tie_rate: f64,
    },
}

struct Output<'w> {
    human: Option<&'w mut dyn Write>,
    records: Option<BufWriter<File>>,
}

impl Output<'_> {
    fn line(&mut self, text: std::fmt::Arguments<'_>) -> Result<()> {
        if let Some(w) = self.human.as_mut() {
            w.write_fmt(text)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn record(&mut self, record: Record<'_>) -> Result<()> {
        if let Some(w) = self.records.as_mut() {
            serde_json::to_writer(&mut *w, &record).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        if let Some(w) = self.records.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

/// Parses `args` (including the program name) and runs the command,
/// writing human output to `stdout` and diagnostics to `stderr`. Returns
/// the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let records = cli
        .records
        .as_deref()
        .map(|p| File::create(p).map(BufWriter::new))
        .transpose()?;
    let mut out = Output {
        human: if cli.quiet { None } else { Some(stdout) },
        records,
    };
    match &cli.command {
        Command::Index {
            images,
            labels,
            bins,
            out: index_path,
        } => cmd_index(&mut out, images, labels.as_deref(), *bins, index_path)?,
        Command::Query { index, image, top } => cmd_query(&mut out, index, image, *top)?,
        Command::Classify {
            index,
            image,
            neighbors,
            method,
        } => cmd_classify(&mut out, index, image, &neighbors.config(), *method)?,
        Command::LabelUnlabeled {
            index,
            neighbors,
            out: out_path,
        } => cmd_label_unlabeled(&mut out, index, &neighbors.config(), out_path)?,
        Command::Evaluate { index, top } => cmd_evaluate(&mut out, index, *top)?,
        Command::Compare {
            spec,
            neighbors,
            seeds,
        } => cmd_compare(&mut out, spec.as_deref(), &neighbors.config(), *seeds)?,
    }
    out.finish()
}

fn cmd_index(
    out: &mut Output<'_>,
    images: &Path,
    labels: Option<&Path>,
    bins: usize,
    index_path: &Path,
) -> Result<()> {
    let params = ExtractionParams::new(bins)?;
    let report = build_index(images, labels, params)?;
    save_index(&report.index, index_path)?;
    let idx = &report.index;
    for s in &report.skipped {
        out.line(format_args!("skipped {}: {}", s.id, s.reason))?;
        out.record(Record::Skipped {
            id: &s.id,
            reason: &s.reason,
        })?;
    }
    out.line(format_args!(
        "indexed {} images ({} labeled, {} unlabeled, {} skipped)",
        idx.len(),
        idx.labeled_count(),
        idx.unlabeled_count(),
        report.skipped.len()
    ))?;
    out.record(Record::Indexed {
        entries: idx.len(),
        labeled: idx.labeled_count(),
        unlabeled: idx.unlabeled_count(),
        skipped: report.skipped.len(),
    })
}

fn cmd_query(out: &mut Output<'_>, index: &Path, image: &Path, top: usize) -> Result<()> {
    let idx = load_index(index)?;
    let results = query_by_example(&idx, image, top)?;
    out.line(format_args!("rank\tid\tdistance\tlabel"))?;
    for (i, r) in results.iter().enumerate() {
        out.line(format_args!(
            "{}\t{}\t{:.6}\t{}",
            i + 1,
            r.id,
            r.distance,
            r.label.as_deref().unwrap_or("-")
        ))?;
        out.record(Record::Result {
            rank: i + 1,
            id: &r.id,
            distance: r.distance,
            label: r.label.as_deref(),
        })?;
    }
    Ok(())
}

fn cmd_classify(
    out: &mut Output<'_>,
    index: &Path,
    image: &Path,
    config: &ClassifierConfig,
    method: Method,
) -> Result<()> {
    let idx = load_index(index)?;
    let train = idx.train_samples(true);
    if config.k == 0 || config.k > train.len() {
        return Err(Error::Config(format!(
            "k={} but the index has {} labeled entries",
            config.k,
            train.len()
        )));
    }
    let query = quantize_vector(extract_features_from_path(image, idx.params())?.values());
    let (name, c): (&str, Classification) = match method {
        Method::Mknn => (
            "mknn",
            MknnClassifier::fit(train, *config)?.classify(&query)?,
        ),
        Method::Knn => ("knn", classify_knn(&train, &query, config.k)?),
    };
    out.line(format_args!("predicted: {}", c.predicted_label))?;
    out.line(format_args!("confidence: {:.6}", c.confidence))?;
    out.line(format_args!("class totals:"))?;
    for (label, total) in &c.per_class_totals {
        out.line(format_args!("  {label}\t{total:.6}"))?;
    }
    out.line(format_args!("neighbors:"))?;
    out.line(format_args!("  id\tlabel\tdistance\tvalidity\tweight"))?;
    for v in &c.votes {
        out.line(format_args!(
            "  {}\t{}\t{:.6}\t{:.6}\t{:.6}",
            v.sample_id, v.label, v.distance, v.validity, v.weight
        ))?;
    }
    out.record(Record::Classification {
        method: name,
        predicted_label: &c.predicted_label,
        confidence: c.confidence,
        per_class_totals: &c.per_class_totals,
    })
}

fn cmd_label_unlabeled(
    out: &mut Output<'_>,
    index: &Path,
    config: &ClassifierConfig,
    out_path: &Path,
) -> Result<()> {
    let idx = load_index(index)?;
    let (assignments, labeled) = label_unlabeled(&idx, config)?;
    save_index(&labeled, out_path)?;
    out.line(format_args!("id\tassigned_label\tconfidence"))?;
    for a in &assignments {
        out.line(format_args!(
            "{}\t{}\t{:.6}",
            a.id, a.assigned_label, a.confidence
        ))?;
        out.record(Record::Assignment {
            id: &a.id,
            assigned_label: &a.assigned_label,
            confidence: a.confidence,
        })?;
    }
    out.line(format_args!(
        "assigned {} labels; wrote {}",
        assignments.len(),
        out_path.display()
    ))
}

fn cmd_evaluate(out: &mut Output<'_>, index: &Path, top: usize) -> Result<()> {
    let idx = load_index(index)?;
    let queries: Vec<String> = idx.entries().iter().map(|e| e.id.clone()).collect();
    let ev = evaluate_retrieval(&idx, &queries, top)?;
    out.line(format_args!("id\trecall\tprecision\tfallout"))?;
    for q in &ev.per_query {
        out.line(format_args!(
            "{}\t{}\t{}\t{}",
            q.id,
            opt(q.report.recall),
            opt(q.report.precision),
            opt(q.report.fallout)
        ))?;
        out.record(Record::Query {
            id: &q.id,
            recall: q.report.recall,
            precision: q.report.precision,
            fallout: q.report.fallout,
        })?;
    }
    for id in &ev.skipped {
        out.record(Record::QuerySkipped { id })?;
    }
    let m = ev.macro_average;
    out.line(format_args!(
        "macro average over {} queries ({} skipped): recall {} precision {} fallout {}",
        ev.per_query.len(),
        ev.skipped.len(),
        opt(m.recall),
        opt(m.precision),
        opt(m.fallout)
    ))?;
    out.record(Record::MacroAverage {
        queries: ev.per_query.len(),
        skipped: ev.skipped.len(),
        recall: m.recall,
        precision: m.precision,
        fallout: m.fallout,
    })
}

fn cmd_compare(
    out: &mut Output<'_>,
    spec: Option<&Path>,
    config: &ClassifierConfig,
    seeds: usize,
) -> Result<()> {
    let spec = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<SyntheticSpec>(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?
        }
        None => SyntheticSpec::reference(0),
    };
    let report = compare_classifiers(&spec, config, seeds)?;
    out.line(format_args!("seed\tknn_accuracy\tmknn_accuracy"))?;
    for s in &report.per_seed {
        out.line(format_args!(
            "{}\t{:.6}\t{:.6}",
            s.seed, s.knn_accuracy, s.mknn_accuracy
        ))?;
        out.record(Record::Seed {
            seed: s.seed,
            k: report.k,
            h: report.h,
            knn_accuracy: s.knn_accuracy,
            mknn_accuracy: s.mknn_accuracy,
        })?;
    }
    let rate = report.mknn_win_or_tie_rate();
    out.line(format_args!(
        "mean over {} seeds (k={}, h={}): knn {:.6} mknn {:.6}; mknn wins or ties on {:.1}% of seeds",
        report.seeds,
        report.k,
        report.h,
        report.knn_accuracy,
        report.mknn_accuracy,
        rate * 100.0
    ))?;
    out.record(Record::Summary {
        seeds: report.seeds,
        k: report.k,
        h: report.h,
        knn_accuracy: report.knn_accuracy,
        mknn_accuracy: report.mknn_accuracy,
        mknn_win_or_tie_rate: rate,
    })
}
