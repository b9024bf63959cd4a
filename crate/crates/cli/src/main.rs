use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cream_core::harness::pipeline::{EvalReport, Pipeline, Protocol, Variant};
use cream_core::harness::session::{load_sessions, write_sessions, SessionStream};
use cream_core::harness::synth::{generate_synthetic_stream, SynthConfig};
use cream_core::harness::{EmbeddingStore, RunConfig};
use cream_core::lshproto::{optimal_epsilon, sufficient_bits};
use cream_core::snapshot::MemorySnapshot;
use cream_core::trainer::EncoderAdapter;

#[derive(Parser)]
#[command(name = "cream", version, about = "Streaming dense retrieval with a soft cluster memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session loop and write an evaluation report.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "full")]
        variant: Variant,
        /// Report path; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the final memory (memory.json + prototypes.crmp) here.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Write the final adapter checkpoint here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Start from this adapter checkpoint instead of the identity.
        #[arg(long)]
        init_checkpoint: Option<PathBuf>,
        /// Write every session's pseudo-labeled samples as JSON lines.
        #[arg(long)]
        dump_samples: Option<PathBuf>,
    },
    /// Sufficient LSH bit size for M token embeddings.
    Bits {
        #[arg(long)]
        tokens: u64,
        /// Distortion rate; defaults to the benefit-optimal value.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Write a synthetic drifting stream as session_<t>.jsonl files.
    Synth {
        /// Overrides the config; 5 by default.
        #[arg(long)]
        topics: Option<usize>,
        /// Overrides the config; 10 by default.
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON file overriding generator parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run several pipeline variants on the same stream.
    Ablate {
        #[command(flatten)]
        input: InputArgs,
        /// Variants to run; all four when omitted.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        variant: Vec<Variant>,
        /// Report path; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Directory of session_<t>.jsonl files.
    #[arg(long)]
    sessions: PathBuf,
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "shared")]
    protocol: Protocol,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Precomputed base embeddings (CRME file).
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

impl InputArgs {
    fn load(&self) -> Result<(RunConfig, Vec<SessionStream>, Option<EmbeddingStore>)> {
        let cfg = match &self.config {
            Some(p) => RunConfig::from_json(&read(p)?).with_context(|| format!("config {}", p.display()))?,
            None => RunConfig::default(),
        };
        let sessions = load_sessions(&self.sessions).with_context(|| format!("sessions in {}", self.sessions.display()))?;
        if sessions.is_empty() {
            bail!("no session_<t>.jsonl files in {}", self.sessions.display());
        }
        let store = match &self.embeddings {
            Some(p) => Some(EmbeddingStore::parse(&read(p)?).with_context(|| format!("embeddings {}", p.display()))?),
            None => None,
        };
        Ok((cfg, sessions, store))
    }

    fn pipeline(&self, cfg: RunConfig, variant: Variant, store: Option<EmbeddingStore>) -> Result<Pipeline> {
        let mut p = Pipeline::new(cfg, variant, self.protocol, self.seed)?;
        if let Some(store) = store {
            p = p.with_embeddings(store)?;
        }
        Ok(p)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(path: Option<&Path>, json: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, format!("{json}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn summary(report: &EvalReport) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    eprintln!(
        "{:<15} S@5 {:>6}  R@10 {:>6}",
        report.variant.to_string(),
        fmt(report.average.success_at_5),
        fmt(report.average.recall_at_10)
    );
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            input,
            variant,
            report,
            snapshot,
            checkpoint,
            init_checkpoint,
            dump_samples,
        } => {
            let (cfg, sessions, store) = input.load()?;
            let mut pipeline = input.pipeline(cfg, variant, store)?;
            if let Some(p) = &init_checkpoint {
                let adapter = EncoderAdapter::read_checkpoint(&read(p)?).with_context(|| format!("checkpoint {}", p.display()))?;
                pipeline = pipeline.with_adapter(adapter)?;
            }
            let mut samples_out = match &dump_samples {
                Some(p) => Some(BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
                None => None,
            };
            let mut rows = Vec::with_capacity(sessions.len());
            for s in &sessions {
                let outcome = pipeline.run_session(s)?;
                log::info!("session {} done", s.index);
                if let Some(out) = samples_out.as_mut() {
                    for sample in &outcome.samples {
                        let mut line = serde_json::to_value(sample)?;
                        line["session"] = s.index.into();
                        serde_json::to_writer(&mut *out, &line)?;
                        out.write_all(b"\n")?;
                    }
                }
                rows.push(outcome.report);
            }
            if let Some(mut out) = samples_out {
                out.flush()?;
            }
            let result = pipeline.report(rows);
            summary(&result);
            emit(report.as_deref(), &result.to_json()?)?;
            if let Some(dir) = &snapshot {
                MemorySnapshot::from_memory(pipeline.memory()).write_dir(dir)?;
            }
            if let Some(p) = &checkpoint {
                let mut out = BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?);
                pipeline.adapter().write_checkpoint(&mut out)?;
                out.flush()?;
            }
        }
        Command::Bits { tokens, epsilon } => {
            let eps = epsilon.unwrap_or_else(optimal_epsilon);
            let r = sufficient_bits(tokens, eps)?;
            println!("{}", serde_json::to_string(&r)?);
        }
        Command::Synth {
            topics,
            sessions,
            seed,
            out,
            config,
        } => {
            let mut cfg = match &config {
                Some(p) => serde_json::from_slice::<SynthConfig>(&read(p)?).with_context(|| format!("synth config {}", p.display()))?,
                None => SynthConfig::default(),
            };
            cfg.topics = topics.unwrap_or(cfg.topics);
            cfg.sessions = sessions.unwrap_or(cfg.sessions);
            let stream = generate_synthetic_stream(&cfg, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_sessions(&out, &stream)?;
        }
        Command::Ablate { input, variant, report } => {
            let variants = if variant.is_empty() { Variant::ALL.to_vec() } else { variant };
            let (cfg, sessions, store) = input.load()?;
            let mut reports = Vec::with_capacity(variants.len());
            for v in variants {
                let mut p = input.pipeline(cfg.clone(), v, store.clone())?;
                let r = p.run(&sessions)?;
                summary(&r);
                reports.push(r);
            }
            emit(report.as_deref(), &serde_json::to_string_pretty(&reports)?)?;
        }
    }
    Ok(())
}
