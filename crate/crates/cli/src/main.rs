//! Command-line front end: scenario generation, online replay,
//! evaluation, latency benchmarking and the codec size table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use v2xlink_core::error::{Error, Result};
use v2xlink_core::harness::{
    default_agents, evaluate, generate_scenario, load_frame_logs, load_scenario, replay,
    save_frame_logs, save_scenario, ActorPlacement, FusionMode, PipelineCfg, RunRecord,
    ScenarioCfg,
};
use v2xlink_core::netsim::{measure_one_way, paper_wifi, resolve_link, VirtualNet};
use v2xlink_core::pillar::GridSpec;
use v2xlink_core::txcodec::{message_size, sample_message, stage_timings, ElemType, MsgType};

#[derive(Parser)]
#[command(
    name = "v2xlink",
    about = "Multi-agent BEV perception pipeline over a simulated V2X network",
    version
)]
struct Cli {
    /// Plain-text key = value file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded scenario and per-agent frame logs.
    Gen {
        #[arg(long)]
        seed: Option<u64>,
        /// Number of agents (agent 0 is the default ego).
        #[arg(long)]
        agents: Option<usize>,
        /// Scenario length in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Frame rate in Hz.
        #[arg(long)]
        rate: Option<f64>,
        /// Number of randomly placed actors.
        #[arg(long)]
        actors: Option<usize>,
        /// Output directory (scenario.json plus agent_* folders).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay frame logs through the pipeline over a simulated link.
    Replay {
        /// Directory produced by `gen`.
        #[arg(long)]
        logs: Option<PathBuf>,
        /// none | late | early | intermediate-max | intermediate-attention.
        #[arg(long)]
        mode: Option<String>,
        /// Channel compression ratio for intermediate modes.
        #[arg(long)]
        ratio: Option<u16>,
        /// Ship u8-quantized feature payloads.
        #[arg(long)]
        quantize: bool,
        /// Built-in link profile name or config file path.
        #[arg(long)]
        link: Option<String>,
        /// Freshness window in milliseconds ("inf" for unbounded).
        #[arg(long)]
        tau_ms: Option<String>,
        /// Comma-separated ego agent ids (default: all agents).
        #[arg(long)]
        egos: Option<String>,
        /// Encoder stage profile (name or 4 comma-separated ms values).
        #[arg(long)]
        encoder: Option<String>,
        /// Decoder stage profile.
        #[arg(long)]
        decoder: Option<String>,
        /// Output record file (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a replay record against its scenario.
    Eval {
        /// Record file written by `replay`.
        #[arg(long)]
        record: Option<PathBuf>,
        /// scenario.json written by `gen`.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Output directory for metrics/latency CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure one-way latency (RTT/2) for a message kind over a link.
    BenchLatency {
        /// Built-in link profile name or config file path.
        #[arg(long)]
        link: Option<String>,
        /// metadata | intermediate | detections | pointcloud | ping.
        #[arg(long)]
        msg_kind: Option<String>,
        /// Round-trip repetitions.
        #[arg(long)]
        n: Option<usize>,
        /// Compression ratio for the intermediate message kind.
        #[arg(long)]
        ratio: Option<u16>,
    },
    /// Print the message-size / predicted-latency table per ratio.
    CodecBench {
        /// Single ratio (default: 1, 8, 32, 64).
        #[arg(long)]
        ratio: Option<u16>,
    },
}

/// Key = value defaults loaded from --config.
struct Defaults(BTreeMap<String, String>);

impl Defaults {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!(
                        "{}:{}: expected 'key = value'",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Defaults(map))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Config(format!("config key '{key}': bad value '{raw}'"))),
        }
    }
}

fn pick<T: FromStr>(cli: Option<T>, cfg: &Defaults, key: &str, default: T) -> Result<T> {
    Ok(match cli {
        Some(v) => v,
        None => cfg.parse(key)?.unwrap_or(default),
    })
}

fn pick_required<T: FromStr>(cli: Option<T>, cfg: &Defaults, key: &str) -> Result<T> {
    match cli {
        Some(v) => Ok(v),
        None => cfg
            .parse(key)?
            .ok_or_else(|| Error::Config(format!("missing --{key} (no config default either)"))),
    }
}

fn parse_tau(raw: &str) -> Result<f64> {
    if raw == "inf" || raw == "infinite" {
        return Ok(f64::INFINITY);
    }
    raw.parse::<f64>()
        .map_err(|_| Error::Config(format!("bad tau '{raw}'")))
}

fn parse_msg_kind(raw: &str) -> Result<MsgType> {
    match raw {
        "metadata" => Ok(MsgType::Metadata),
        "intermediate" => Ok(MsgType::Intermediate),
        "detections" => Ok(MsgType::Detections),
        "pointcloud" => Ok(MsgType::PointCloud),
        "ping" => Ok(MsgType::Ping),
        other => Err(Error::Config(format!("unknown message kind '{other}'"))),
    }
}

fn human_size(bytes: u64) -> String {
    let b = bytes as f64;
    if b >= 1024.0 * 1024.0 {
        format!("{:.2} MiB", b / (1024.0 * 1024.0))
    } else if b >= 1024.0 {
        format!("{:.2} KiB", b / 1024.0)
    } else {
        format!("{bytes} B")
    }
}

fn cmd_gen(cfg: &Defaults, args: GenArgs) -> Result<()> {
    let seed = pick(args.seed, cfg, "seed", 0)?;
    let agents = pick(args.agents, cfg, "agents", 2)?;
    let duration = pick(args.duration, cfg, "duration", 5.0)?;
    let rate = pick(args.rate, cfg, "rate", 10.0)?;
    let actors = pick(args.actors, cfg, "actors", 8)?;
    let out: PathBuf = pick_required(args.out, cfg, "out")?;

    let scenario_cfg = ScenarioCfg {
        agents: default_agents(agents),
        actors: ActorPlacement::Random { count: actors },
        duration_s: duration,
        rate_hz: rate,
        ..ScenarioCfg::default()
    };
    let (scenario, logs) = generate_scenario(seed, &scenario_cfg)?;
    std::fs::create_dir_all(&out)?;
    save_scenario(&out.join("scenario.json"), &scenario)?;
    save_frame_logs(&out, &logs)?;
    println!(
        "wrote scenario seed {seed}: {} agents x {} frames -> {}",
        logs.len(),
        logs.first().map(|l| l.frames.len()).unwrap_or(0),
        out.display()
    );
    Ok(())
}

struct GenArgs {
    seed: Option<u64>,
    agents: Option<usize>,
    duration: Option<f64>,
    rate: Option<f64>,
    actors: Option<usize>,
    out: Option<PathBuf>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_replay(cfg: &Defaults, args: ReplayArgs) -> Result<()> {
    let logs_dir: PathBuf = pick_required(args.logs, cfg, "logs")?;
    let mode = FusionMode::parse(&pick(args.mode, cfg, "mode", "none".to_string())?)?;
    let ratio = pick(args.ratio, cfg, "ratio", 1)?;
    let link_arg = pick(args.link, cfg, "link", "ideal".to_string())?;
    let tau = parse_tau(&pick(args.tau_ms, cfg, "tau-ms", "100".to_string())?)?;
    let out: PathBuf = pick_required(args.out, cfg, "out")?;
    let quantize = args.quantize || cfg.parse::<bool>("quantize")?.unwrap_or(false);
    let egos = match pick(args.egos, cfg, "egos", String::new()) {
        Ok(raw) if !raw.is_empty() => Some(
            raw.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::Config(format!("bad ego id '{s}'")))
                })
                .collect::<Result<Vec<u32>>>()?,
        ),
        _ => None,
    };
    let encoder = stage_timings(&pick(args.encoder, cfg, "encoder", "zero".to_string())?)?;
    let decoder = stage_timings(&pick(args.decoder, cfg, "decoder", "zero".to_string())?)?;

    let scenario = load_scenario(&logs_dir.join("scenario.json"))?;
    let logs = load_frame_logs(&logs_dir)?;
    let link = resolve_link(&link_arg)?;
    let pipeline = PipelineCfg {
        mode,
        ratio,
        quantize,
        tau_ms: tau,
        egos,
        encoder_profile: encoder,
        decoder_profile: decoder,
        ..PipelineCfg::default()
    };
    let records = replay(&logs, &scenario, &pipeline, &link)?;
    let json = serde_json::to_string(&records)
        .map_err(|e| Error::Format(format!("record encode: {e}")))?;
    std::fs::write(&out, json)?;
    for r in &records {
        println!(
            "ego {}: {} frames, consumed {} collaborator messages",
            r.ego_id,
            r.frames.len(),
            r.frames.iter().map(|f| f.consumed).sum::<usize>()
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

struct ReplayArgs {
    logs: Option<PathBuf>,
    mode: Option<String>,
    ratio: Option<u16>,
    quantize: bool,
    link: Option<String>,
    tau_ms: Option<String>,
    egos: Option<String>,
    encoder: Option<String>,
    decoder: Option<String>,
    out: Option<PathBuf>,
}

fn cmd_eval(cfg: &Defaults, record: Option<PathBuf>, scenario: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let record_path: PathBuf = pick_required(record, cfg, "record")?;
    let scenario_path: PathBuf = pick_required(scenario, cfg, "scenario")?;
    let out: PathBuf = pick_required(out, cfg, "out")?;

    let scenario = load_scenario(&scenario_path)?;
    let text = std::fs::read_to_string(&record_path)?;
    let records: Vec<RunRecord> =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("record decode: {e}")))?;
    std::fs::create_dir_all(&out)?;
    for record in &records {
        let report = evaluate(record, &scenario)?;
        std::fs::write(
            out.join(format!("metrics_ego{}.csv", record.ego_id)),
            report.metrics_csv(),
        )?;
        std::fs::write(
            out.join(format!("latency_ego{}.csv", record.ego_id)),
            report.latency_csv(),
        )?;
        print!("{}", report.render_text());
    }
    println!("wrote CSV reports to {}", out.display());
    Ok(())
}

fn cmd_bench_latency(cfg: &Defaults, args: BenchArgs) -> Result<()> {
    let link_arg = pick(args.link, cfg, "link", "paper-wifi".to_string())?;
    let kind = parse_msg_kind(&pick(args.msg_kind, cfg, "msg-kind", "intermediate".to_string())?)?;
    let n = pick(args.n, cfg, "n", 100)?;
    let ratio = pick(args.ratio, cfg, "ratio", 32)?;

    let link = resolve_link(&link_arg)?;
    let msg = sample_message(kind, &GridSpec::default(), ratio)?;
    let mut net = VirtualNet::new();
    net.add_node(0);
    net.add_node(1);
    net.set_link_bidir(0, 1, link);
    let stats = measure_one_way(&mut net, 0, 1, &msg, n)?;
    println!(
        "{} message: {} ({} bytes)",
        kind.name(),
        human_size(msg.serialized_len() as u64),
        msg.serialized_len()
    );
    println!(
        "one-way latency over {n} round-trips: mean {:.3} ms, std {:.3} ms, min {:.3} ms, max {:.3} ms ({} dropped)",
        stats.mean_ms, stats.std_ms, stats.min_ms, stats.max_ms, stats.dropped
    );
    Ok(())
}

struct BenchArgs {
    link: Option<String>,
    msg_kind: Option<String>,
    n: Option<usize>,
    ratio: Option<u16>,
}

fn cmd_codec_bench(cfg: &Defaults, ratio: Option<u16>) -> Result<()> {
    let ratios: Vec<u16> = match ratio.or(cfg.parse::<u16>("ratio")?) {
        Some(r) => vec![r],
        None => vec![1, 8, 32, 64],
    };
    let spec = GridSpec::default();
    let wifi = paper_wifi();
    println!("grid {}x{}x{} (f32)", spec.height(), spec.width(), spec.channels);
    println!("{:>6} {:>14} {:>12} {:>12}", "ratio", "message", "bytes", "latency");
    for r in ratios {
        let size = message_size(&spec, r, ElemType::F32)?;
        println!(
            "{:>6} {:>14} {:>12} {:>9.1} ms",
            format!("{r}x"),
            human_size(size),
            size,
            wifi.nominal_delay_ms(size)
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Defaults::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Gen {
            seed,
            agents,
            duration,
            rate,
            actors,
            out,
        } => cmd_gen(
            &cfg,
            GenArgs {
                seed,
                agents,
                duration,
                rate,
                actors,
                out,
            },
        ),
        Cmd::Replay {
            logs,
            mode,
            ratio,
            quantize,
            link,
            tau_ms,
            egos,
            encoder,
            decoder,
            out,
        } => cmd_replay(
            &cfg,
            ReplayArgs {
                logs,
                mode,
                ratio,
                quantize,
                link,
                tau_ms,
                egos,
                encoder,
                decoder,
                out,
            },
        ),
        Cmd::Eval {
            record,
            scenario,
            out,
        } => cmd_eval(&cfg, record, scenario, out),
        Cmd::BenchLatency {
            link,
            msg_kind,
            n,
            ratio,
        } => cmd_bench_latency(
            &cfg,
            BenchArgs {
                link,
                msg_kind,
                n,
                ratio,
            },
        ),
        Cmd::CodecBench { ratio } => cmd_codec_bench(&cfg, ratio),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
