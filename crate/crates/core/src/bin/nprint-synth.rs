//! Command-line front end: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (including a
//! non-compliant `validate` result and an exceeded repair bound).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nprint_synth::generator::{self, ClassProfile, DEFAULT_TAU};
use nprint_synth::image_codec::{self, ReadOptions};
use nprint_synth::metrics::{self, MetricMode};
use nprint_synth::nprint::{self, NprintMatrix};
use nprint_synth::packet::{FlowTrace, Packet};
use nprint_synth::{fsutil, pcap, repair, traffic_report};

#[derive(Parser)]
#[command(name = "nprint-synth", version, about = "Packet captures as bit images: encode, synthesize, repair, score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ImageRead {
    /// Snap arbitrary colors to the nearest trit color and accept lossy formats.
    #[arg(long)]
    lenient_image: bool,
}

impl ImageRead {
    fn options(&self) -> ReadOptions {
        ReadOptions { strict: !self.lenient_image }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Encode the flows of a capture as PNG images.
    Encode {
        #[arg(long, env = "NPRINT_SYNTH_PCAP_IN")]
        pcap_in: PathBuf,
        /// Output file for one flow, or a directory when several are written.
        #[arg(long, env = "NPRINT_SYNTH_IMAGE_OUT")]
        image_out: PathBuf,
        /// Encode only this flow (0-based, in order of first packet).
        #[arg(long)]
        flow: Option<usize>,
    },
    /// Decode an image back to a capture (1 ms packet spacing).
    Decode {
        #[arg(long, env = "NPRINT_SYNTH_IMAGE_IN")]
        image_in: PathBuf,
        #[arg(long, env = "NPRINT_SYNTH_PCAP_OUT")]
        pcap_out: PathBuf,
        #[command(flatten)]
        image: ImageRead,
    },
    /// Learn a class profile from every capture in a directory.
    Profile {
        #[arg(long, env = "NPRINT_SYNTH_PCAP_DIR")]
        pcap_dir: PathBuf,
        #[arg(long, env = "NPRINT_SYNTH_PROFILE_OUT")]
        profile_out: PathBuf,
        #[arg(long, default_value = "default")]
        label: String,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
    },
    /// Sample images from a profile.
    Generate {
        #[arg(long, env = "NPRINT_SYNTH_PROFILE_IN")]
        profile_in: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Image i uses seed + i.
        #[arg(long, env = "NPRINT_SYNTH_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "NPRINT_SYNTH_IMAGE_DIR")]
        image_dir: PathBuf,
    },
    /// Make a generated image protocol-compliant and write it as a capture.
    Repair {
        #[arg(long, env = "NPRINT_SYNTH_IMAGE_IN")]
        image_in: PathBuf,
        #[arg(long, env = "NPRINT_SYNTH_PROFILE_IN")]
        profile_in: PathBuf,
        #[arg(long, env = "NPRINT_SYNTH_PCAP_OUT")]
        pcap_out: PathBuf,
        #[arg(long, env = "NPRINT_SYNTH_REPORT_OUT")]
        report_out: Option<PathBuf>,
        /// Seeds timestamp resampling.
        #[arg(long, env = "NPRINT_SYNTH_SEED", default_value_t = 0)]
        seed: u64,
        /// Exit 2 (after writing outputs) if more trits than this were changed.
        #[arg(long, default_value_t = 0.15)]
        max_repaired_fraction: f64,
        #[command(flatten)]
        image: ImageRead,
    },
    /// Score synthetic traffic against real traffic (captures or images).
    Compare {
        #[arg(long, env = "NPRINT_SYNTH_REAL_DIR")]
        real_dir: PathBuf,
        #[arg(long, env = "NPRINT_SYNTH_SYNTH_DIR")]
        synth_dir: PathBuf,
        #[arg(long, env = "NPRINT_SYNTH_REPORT_OUT")]
        report_out: Option<PathBuf>,
        #[arg(long, default_value = "per-field")]
        metric_mode: MetricMode,
        #[command(flatten)]
        image: ImageRead,
    },
    /// Summarize a capture; with --synth-in, side by side with a second one.
    Report {
        #[arg(long, env = "NPRINT_SYNTH_PCAP_IN")]
        pcap_in: PathBuf,
        #[arg(long)]
        synth_in: Option<PathBuf>,
        #[arg(long, env = "NPRINT_SYNTH_JSON_OUT")]
        json_out: Option<PathBuf>,
    },
    /// Check every flow of a capture for protocol compliance.
    Validate {
        #[arg(long, env = "NPRINT_SYNTH_PCAP_IN")]
        pcap_in: PathBuf,
        #[arg(long, env = "NPRINT_SYNTH_REPORT_OUT")]
        report_out: Option<PathBuf>,
    },
}

/// A data error with the file it concerns.
struct Failure(String);

fn ctx<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure(format!("{}: {e}", path.display()))
}

type Outcome = Result<(), Failure>;

fn read_flows(path: &Path) -> Result<Vec<FlowTrace>, Failure> {
    let packets = pcap::read_pcap(path).map_err(ctx(path))?;
    Ok(encodable_flows(&packets, path))
}

/// Split into flows, keeping only packets the bit layout can hold.
fn encodable_flows(packets: &[Packet], path: &Path) -> Vec<FlowTrace> {
    let kept: Vec<Packet> = packets.iter().filter(|p| nprint::encode_packet(p).is_ok()).cloned().collect();
    if kept.len() < packets.len() {
        log::warn!("{}: skipped {} fragmented or unencodable packets", path.display(), packets.len() - kept.len());
    }
    pcap::split_flows(&kept)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fsutil::write_string(path, text).map_err(ctx(path))
}

fn load_profile(path: &Path) -> Result<ClassProfile, Failure> {
    ClassProfile::load(path).map_err(ctx(path))
}

/// Matrices from every capture and image in a directory.
fn load_matrices(dir: &Path, opts: ReadOptions) -> Result<Vec<NprintMatrix>, Failure> {
    let files = fsutil::list_files(dir, &["pcap", "png", "jpg", "jpeg", "webp"]).map_err(ctx(dir))?;
    let mut out = Vec::new();
    for f in files {
        if f.extension().is_some_and(|e| e.eq_ignore_ascii_case("pcap")) {
            for flow in read_flows(&f)? {
                out.push(nprint::encode_flow(&flow).map_err(ctx(&f))?);
            }
        } else {
            out.push(image_codec::image_to_matrix_with(&f, opts).map_err(ctx(&f))?);
        }
    }
    Ok(out)
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Encode { pcap_in, image_out, flow } => {
            let flows = read_flows(&pcap_in)?;
            let chosen: Vec<(usize, &FlowTrace)> = match flow {
                Some(i) => vec![(i, flows.get(i).ok_or_else(|| Failure(format!("{}: no flow {i} ({} flows)", pcap_in.display(), flows.len())))?)],
                None => flows.iter().enumerate().collect(),
            };
            if chosen.is_empty() {
                return Err(Failure(format!("{}: no encodable flows", pcap_in.display())));
            }
            let single = chosen.len() == 1;
            if !single {
                std::fs::create_dir_all(&image_out).map_err(ctx(&image_out))?;
            }
            for (i, f) in chosen {
                let m = nprint::encode_flow(f).map_err(ctx(&pcap_in))?;
                let path = if single { image_out.clone() } else { image_out.join(format!("flow_{i:04}.png")) };
                image_codec::matrix_to_image(&m, &path).map_err(ctx(&path))?;
            }
        }
        Command::Decode { image_in, pcap_out, image } => {
            let m = image_codec::image_to_matrix_with(&image_in, image.options()).map_err(ctx(&image_in))?;
            let mut flow = nprint::decode_flow(&m).map_err(ctx(&image_in))?;
            for (i, p) in flow.packets.iter_mut().enumerate() {
                p.timestamp_us = i as u64 * 1000;
            }
            pcap::write_pcap(&flow.packets, &pcap_out).map_err(ctx(&pcap_out))?;
        }
        Command::Profile { pcap_dir, profile_out, label, tau } => {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Failure(format!("--tau {tau} outside [0, 1]")));
            }
            let files = fsutil::list_files(&pcap_dir, &["pcap"]).map_err(ctx(&pcap_dir))?;
            let mut flows = Vec::new();
            for f in &files {
                flows.extend(read_flows(f)?);
            }
            let profile = generator::build_class_profile(&flows, &label, tau).map_err(ctx(&pcap_dir))?;
            profile.save(&profile_out).map_err(ctx(&profile_out))?;
            eprintln!("profile {label:?}: {} flows from {} captures", flows.len(), files.len());
        }
        Command::Generate { profile_in, count, seed, image_dir } => {
            let profile = load_profile(&profile_in)?;
            std::fs::create_dir_all(&image_dir).map_err(ctx(&image_dir))?;
            for i in 0..count {
                let m = generator::generate(&profile, seed.wrapping_add(i as u64));
                let path = image_dir.join(format!("synth_{i:04}.png"));
                image_codec::matrix_to_image(&m, &path).map_err(ctx(&path))?;
            }
        }
        Command::Repair { image_in, profile_in, pcap_out, report_out, seed, max_repaired_fraction, image } => {
            let profile = load_profile(&profile_in)?;
            let m = image_codec::image_to_matrix_with(&image_in, image.options()).map_err(ctx(&image_in))?;
            let fixed = repair::repair(&m, &profile, seed);
            pcap::write_pcap(&fixed.flow.packets, &pcap_out).map_err(ctx(&pcap_out))?;
            if let Some(path) = &report_out {
                write_text(path, &fixed.report.to_json())?;
            }
            let frac = fixed.report.repaired_fraction;
            eprintln!("{} packets, repaired fraction {frac:.4}", fixed.flow.len());
            if frac > max_repaired_fraction {
                return Err(Failure(format!("repaired fraction {frac:.4} exceeds --max-repaired-fraction {max_repaired_fraction}")));
            }
        }
        Command::Compare { real_dir, synth_dir, report_out, metric_mode, image } => {
            let real = load_matrices(&real_dir, image.options())?;
            let synth = load_matrices(&synth_dir, image.options())?;
            let r = metrics::compare_matrices(&real, &synth, metric_mode).map_err(|e| Failure(e.to_string()))?;
            print!("{r}");
            if let Some(path) = &report_out {
                write_text(path, &r.to_json())?;
            }
        }
        Command::Report { pcap_in, synth_in, json_out } => {
            let real = traffic_report::report_packets(&pcap::read_pcap(&pcap_in).map_err(ctx(&pcap_in))?);
            match &synth_in {
                Some(s) => {
                    let synth = traffic_report::report_packets(&pcap::read_pcap(s).map_err(ctx(s))?);
                    print!("{}", traffic_report::side_by_side(&[("real", &real), ("synthetic", &synth)]));
                    if let Some(path) = &json_out {
                        let both = serde_json::json!({ "real": real, "synthetic": synth });
                        write_text(path, &serde_json::to_string_pretty(&both).expect("serializes"))?;
                    }
                }
                None => {
                    print!("{}", real.to_text());
                    if let Some(path) = &json_out {
                        write_text(path, &real.to_json())?;
                    }
                }
            }
        }
        Command::Validate { pcap_in, report_out } => {
            let packets = pcap::read_pcap(&pcap_in).map_err(ctx(&pcap_in))?;
            let reports: Vec<repair::ComplianceReport> = pcap::split_flows(&packets).iter().map(repair::validate).collect();
            let violations: usize = reports.iter().map(|r| r.violations.len()).sum();
            if let Some(path) = &report_out {
                write_text(path, &serde_json::to_string_pretty(&reports).expect("serializes"))?;
            }
            println!("{} flows, {} packets, {violations} violations", reports.len(), packets.len());
            if violations > 0 {
                return Err(Failure(format!("{}: {violations} protocol violations", pcap_in.display())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
