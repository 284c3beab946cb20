use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use idnc_core::experiment::{run_experiment, ExperimentConfig, Parallelism};
use idnc_core::model::{ChannelParams, PerceivedState, ReceiverId};
use idnc_core::sim::{
    changed_rows, sample_heterogeneous_params, FeedbackOutcome, FrameConfig, PolicyKind, Simulation,
};
use idnc_core::verify::{run_criterion, CRITERIA};
use idnc_core::IdncError;

#[derive(Parser)]
#[command(
    name = "idnc",
    version,
    about = "IDNC recovery simulations with lossy feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and write the result table.
    Run {
        /// Experiment config file.
        config: Option<PathBuf>,
        #[arg(long = "config", value_name = "PATH", conflicts_with = "config")]
        config_flag: Option<PathBuf>,
        /// Master seed, overriding the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 picks automatically.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Output file; standard output when absent from flags and config.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_parser = ["csv", "json"])]
        format: Option<String>,
    },
    /// Run the oracle and statistical acceptance checks.
    Verify {
        /// Criterion numbers to run, e.g. `--criteria 1,4`; all by default.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
    /// Trace one seeded frame transmission by transmission.
    Demo {
        #[arg(short = 'M', long, default_value_t = 4)]
        receivers: usize,
        #[arg(short = 'N', long, default_value_t = 5)]
        packets: usize,
        #[arg(long, default_value_t = 0.6)]
        mu: f64,
        /// Mean erasure probability; 0 makes every channel lossless.
        #[arg(short, long, default_value_t = 0.3)]
        p: f64,
        #[arg(long, default_value = "ML")]
        policy: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Draw q_i below p_i instead of q_i = p_i.
        #[arg(long)]
        non_reciprocal: bool,
        /// Print the graph of every slot in DOT format.
        #[arg(long)]
        dot: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            config_flag,
            seed,
            threads,
            output,
            format,
        } => run(config.or(config_flag), seed, threads, output, format),
        Command::Verify { criteria } => return verify(&criteria),
        Command::Demo {
            receivers,
            packets,
            mu,
            p,
            policy,
            seed,
            non_reciprocal,
            dot,
        } => demo(receivers, packets, mu, p, &policy, seed, !non_reciprocal, dot),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("idnc: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(
    path: Option<PathBuf>,
    seed: Option<u64>,
    threads: usize,
    output: Option<PathBuf>,
    format: Option<String>,
) -> Result<(), IdncError> {
    let path = path.ok_or_else(|| IdncError::Config("no config file given".into()))?;
    let text = fs::read_to_string(&path)
        .map_err(|e| IdncError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(format) = format {
        config.format = format.parse()?;
    }
    if output.is_some() {
        config.output = output;
    }
    let table = run_experiment(&config, Parallelism::from_env(threads))?;
    let truncated: usize = table.rows.iter().map(|r| r.truncated_count).sum();
    if truncated > 0 {
        eprintln!("idnc: warning: {truncated} truncated frames excluded from the means");
    }
    let rendered = table.render(config.format);
    match &config.output {
        Some(out) => fs::write(out, rendered)
            .map_err(|e| IdncError::Config(format!("cannot write {}: {e}", out.display())))?,
        None => {
            let _ = std::io::stdout().write_all(rendered.as_bytes());
        }
    }
    Ok(())
}

fn verify(criteria: &[u8]) -> ExitCode {
    let ids = if criteria.is_empty() {
        CRITERIA.to_vec()
    } else {
        criteria.to_vec()
    };
    let mut failed = 0;
    for id in ids {
        match run_criterion(id) {
            Some(report) => {
                println!("{report}");
                if !report.passed {
                    failed += 1;
                }
            }
            None => {
                eprintln!("idnc: unknown criterion {id}");
                return ExitCode::from(1);
            }
        }
    }
    if failed == 0 {
        println!("verify: all checks passed");
        ExitCode::SUCCESS
    } else {
        println!("verify: {failed} checks failed");
        ExitCode::from(2)
    }
}

fn row_codes(state: &PerceivedState, r: ReceiverId) -> String {
    state
        .sfm()
        .row(r)
        .iter()
        .zip(state.tracker().theta_row(r))
        .map(|(s, t)| {
            if *t > 0 {
                format!("{}({t})", s.code())
            } else {
                s.code().to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn packet_list(packets: impl IntoIterator<Item = usize>) -> String {
    let items: Vec<String> = packets.into_iter().map(|j| j.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

#[allow(clippy::too_many_arguments)]
fn demo(
    receivers: usize,
    packets: usize,
    mu: f64,
    p: f64,
    policy: &str,
    seed: u64,
    reciprocal: bool,
    dot: bool,
) -> Result<(), IdncError> {
    let policy: PolicyKind = policy.parse()?;
    let lossless = p == 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A lossless demo still draws demands with the usual sampler.
    let mut network = sample_heterogeneous_params(
        if lossless { 0.5 } else { p },
        mu,
        receivers,
        packets,
        reciprocal,
        &mut rng,
    )?;
    if lossless {
        network.channels = vec![ChannelParams::new(0.0, 0.0)?; receivers];
    }
    let config = FrameConfig::new(network.clone(), policy);
    let mut sim = Simulation::new(&config, seed)?;

    println!("frame: M={receivers} N={packets} policy={policy} seed={seed}");
    for i in 0..receivers {
        let r = ReceiverId(i);
        let ch = sim.channels()[i];
        println!(
            "  r{i}: p={:.3} q={:.3} wants {}",
            ch.p,
            ch.q,
            packet_list(network.demand.wants(r).ones())
        );
    }
    println!("after initial phase:");
    for i in 0..receivers {
        println!("  r{i}: {}", row_codes(sim.perceived(), ReceiverId(i)));
    }

    loop {
        let before = sim.perceived().clone();
        if dot && !sim.is_finished() {
            print!("{}", sim.graph().to_dot());
        }
        let Some(trace) = sim.step()? else { break };
        let targets: Vec<String> = trace
            .plan
            .primary
            .iter()
            .map(|v| format!("r{}:{}", v.receiver.0, v.packet.0))
            .chain(
                trace
                    .plan
                    .secondary
                    .iter()
                    .map(|v| format!("r{}:{}*", v.receiver.0, v.packet.0)),
            )
            .collect();
        println!(
            "slot {}: send {} targets {}",
            trace.slot,
            trace
                .plan
                .coded
                .iter()
                .map(|pk| pk.0.to_string())
                .collect::<Vec<_>>()
                .join("^"),
            targets.join(" ")
        );
        let got: Vec<String> = (0..receivers)
            .filter(|&i| trace.received[i])
            .map(|i| format!("r{i}"))
            .collect();
        println!(
            "  received: {}",
            if got.is_empty() {
                "none".into()
            } else {
                got.join(" ")
            }
        );
        if !trace.decoded.is_empty() {
            let dec: Vec<String> = trace
                .decoded
                .iter()
                .map(|(r, pk)| format!("r{}<-{}", r.0, pk.0))
                .collect();
            println!("  decoded: {}", dec.join(" "));
        }
        let delayed: Vec<String> = (0..receivers)
            .filter(|&i| trace.delay[i] > 0)
            .map(|i| format!("r{i}"))
            .collect();
        if !delayed.is_empty() {
            println!("  decoding delay +1: {}", delayed.join(" "));
        }
        let fb: Vec<String> = trace
            .feedback
            .iter()
            .map(|f| {
                let what = match f.outcome {
                    FeedbackOutcome::Heard => "heard",
                    FeedbackOutcome::Unheard => "unheard",
                };
                format!("r{} {what}", f.receiver.0)
            })
            .collect();
        println!("  feedback: {}", fb.join(", "));
        for (r, changes) in changed_rows(&before, sim.perceived()) {
            let desc: Vec<String> = changes
                .iter()
                .map(|(pk, a, b)| format!("{}:{}->{}", pk.0, a.code(), b.code()))
                .collect();
            println!("  r{} state: {}", r.0, desc.join(" "));
        }
    }
    let m = sim.metrics();
    let completion = m
        .completion_delay
        .map_or_else(|| "not reached".to_string(), |d| d.to_string());
    println!(
        "done: recovery transmissions {}, completion delay {completion}, mean decoding delay {:.3}{}",
        m.transmissions,
        m.mean_decoding_delay(),
        if m.truncated { " (truncated)" } else { "" }
    );
    Ok(())
}
