//! `fsmwm`: derive, embed, package, test and attack FSM watermarks from the
//! command line. Every artifact is a file; every random choice comes from a
//! seed flag.
//!
//! Exit codes: 0 success, 1 fail verdict or invalid partitions, 2 usage
//! error, 3 input error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use fsm_watermark::attack::{
    adversarial_extension, block_projection, estimate_output_count, informed_attack, FsmOracle, IoTranscript,
    OracleBudget,
};
use fsm_watermark::crypt::{build_decryption_machine, build_watermark_machine, random_perm_key, PermKey};
use fsm_watermark::decomposition::{
    decompose, fixed_partitions_lprk, is_input_preserving, is_orthogonal, minimal_decomposition, Partition,
    PartitionPair, DEFAULT_STATE_CAP,
};
use fsm_watermark::graph::{connectivity_graph, standard_cg_machine};
use fsm_watermark::io::{
    parse_blocks, parse_fsm, parse_key_line, parse_kiss2, write_blocks, write_fsm, write_key_line,
};
use fsm_watermark::redux::{lpr, lpr_k, LprkSpec};
use fsm_watermark::verify::{
    embed, scan_verify, scan_watermark_test, watermark_test, EmbedOptions, Mode, Package, Secret,
};
use fsm_watermark::Fsm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KEY_SEED: u64 = 1;
const SCHEME_SEED: u64 = 2;
const SESSION_SEED: u64 = 3;
const PROBE_SEED: u64 = 4;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(String),
}

impl From<fsm_watermark::Error> for Failure {
    fn from(e: fsm_watermark::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

#[derive(Parser)]
#[command(name = "fsmwm", version, about = "Behavioural watermarks for finite state machines")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedMode {
    Matrix,
    Fixed,
    Optimal,
}

impl From<EmbedMode> for Mode {
    fn from(m: EmbedMode) -> Self {
        match m {
            EmbedMode::Matrix => Mode::Matrix,
            EmbedMode::Fixed => Mode::Fixed,
            EmbedMode::Optimal => Mode::Optimal,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitMode {
    Fixed,
    Optimal,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackKind {
    /// Rebuild the independent machine of a fixed decomposition.
    Informed,
    /// Count distinct outputs by random probing.
    Estimate,
    /// Record random runs and extend them with one unseen output.
    Extension,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the standard machine of a machine's connectivity graph.
    ExtractCg {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive the m-state chain of a host machine.
    Lpr {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive the k-branch, n-step machine of a host machine.
    Lprk {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        /// Hash width; searched for when left out.
        #[arg(long)]
        z: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relabel a chain by a permutation key and write the watermark machine.
    EncryptMatrix {
        #[arg(long = "in")]
        input: PathBuf,
        /// Key file; a key is drawn from --key-seed when left out.
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, default_value_t = KEY_SEED)]
        key_seed: u64,
        /// Where to write the drawn key.
        #[arg(long)]
        key_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the decryption machine for a chain and key.
    BuildDecrypt {
        #[arg(long)]
        lpr: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a machine into independent and dependent factors.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "fixed")]
        mode: SplitMode,
        /// Chain length; fixed mode only.
        #[arg(long, required_if_eq("mode", "fixed"))]
        n: Option<usize>,
        /// Branch count; fixed mode only.
        #[arg(long, required_if_eq("mode", "fixed"))]
        k: Option<usize>,
        /// Largest machine optimal mode will search.
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
        /// Writes PREFIX.pi_i, PREFIX.pi_d, PREFIX.independent.fsm and
        /// PREFIX.dependent.fsm.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Embed a watermark: write the shipped package and the verifier's secret.
    EmitPackage {
        #[arg(long)]
        host: PathBuf,
        #[arg(long, value_enum, default_value = "fixed")]
        mode: EmbedMode,
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Branch count; matrix mode always uses one.
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        z: Option<u32>,
        #[arg(long, default_value_t = KEY_SEED)]
        key_seed: u64,
        #[arg(long, default_value_t = SCHEME_SEED)]
        scheme_seed: u64,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
        #[arg(long)]
        package: PathBuf,
        #[arg(long)]
        secret: PathBuf,
    },
    /// Run the watermark test on one branch.
    Verify {
        #[arg(long)]
        package: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        #[arg(long, default_value_t = 0)]
        branch: usize,
        #[arg(long)]
        len: usize,
        /// Reach the shipped machine through its scan chain only.
        #[arg(long)]
        scan: bool,
        #[arg(long, default_value_t = SESSION_SEED)]
        seed: u64,
    },
    /// Record the scan-chain session a tester would see for one branch.
    ScanTest {
        #[arg(long)]
        package: PathBuf,
        #[arg(long, default_value_t = 0)]
        branch: usize,
        #[arg(long)]
        len: usize,
        #[arg(long, default_value_t = SESSION_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attack the shipped machine of a package through a black-box oracle.
    Attack {
        #[arg(long, value_enum)]
        kind: AttackKind,
        #[arg(long)]
        package: PathBuf,
        /// Branch-select width; taken from the package when left out.
        #[arg(long)]
        chi: Option<u32>,
        #[arg(long, default_value_t = 200)]
        probes: usize,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long, default_value_t = 40)]
        patience: usize,
        /// Number of recorded runs for the extension attack.
        #[arg(long, default_value_t = 8)]
        runs: usize,
        #[arg(long, default_value_t = PROBE_SEED)]
        seed: u64,
        /// Where to write a rebuilt or extended machine.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a partition pair against a machine.
    ValidatePartitions {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        pi_i: PathBuf,
        #[arg(long)]
        pi_d: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: fsm_watermark::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// JSON machine documents start with `{`; anything else is read as KISS2.
fn read_machine(path: &Path) -> Result<Fsm, Failure> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        in_file(path, parse_fsm(&text))
    } else {
        in_file(path, parse_kiss2(&text))
    }
}

fn read_partition(path: &Path) -> Result<Partition, Failure> {
    let blocks = in_file(path, parse_blocks(&read(path)?))?;
    in_file(path, Partition::new(blocks))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::ExtractCg { input, out } => {
            let m = read_machine(&input)?;
            write(&out, &write_fsm(&standard_cg_machine(&connectivity_graph(&m))))?;
        }
        Cmd::Lpr { input, m, out } => {
            let host = read_machine(&input)?;
            let chain = lpr(&connectivity_graph(&host), m)?;
            write(&out, &write_fsm(&standard_cg_machine(&chain)))?;
        }
        Cmd::Lprk { input, n, k, z, out } => {
            let host = read_machine(&input)?;
            let g = connectivity_graph(&host);
            let spec = match z {
                Some(z) => LprkSpec::new(n, k, z)?,
                None => LprkSpec::auto(&g, n, k)?,
            };
            write(&out, &write_fsm(&lpr_k(&g, &spec)?))?;
        }
        Cmd::EncryptMatrix {
            input,
            key,
            key_seed,
            key_out,
            out,
        } => {
            let chain = connectivity_graph(&read_machine(&input)?);
            let key = match key {
                Some(path) => in_file(&path, parse_key_line(&read(&path)?).and_then(PermKey::new))?,
                None => random_perm_key(chain.vertices().len(), key_seed)?,
            };
            let watermark = build_watermark_machine(&key, &chain)?;
            if let Some(path) = key_out {
                write(&path, &write_key_line(key.image()))?;
            }
            write(&out, &write_fsm(&watermark))?;
        }
        Cmd::BuildDecrypt { lpr, key, out } => {
            let chain = connectivity_graph(&read_machine(&lpr)?);
            let key = in_file(&key, parse_key_line(&read(&key)?).and_then(PermKey::new))?;
            write(&out, &write_fsm(&build_decryption_machine(&key, &chain)?))?;
        }
        Cmd::Decompose {
            input,
            mode,
            n,
            k,
            cap,
            out_prefix,
        } => {
            let m = read_machine(&input)?;
            let pair = match (mode, n, k) {
                (SplitMode::Fixed, Some(n), Some(k)) => fixed_partitions_lprk(&m, n, k)?,
                (SplitMode::Fixed, _, _) => return Err(Failure::Usage("fixed mode needs --n and --k".into())),
                (SplitMode::Optimal, _, _) => minimal_decomposition(&m, cap)?,
            };
            let d = decompose(&m, pair)?;
            write(&with_suffix(&out_prefix, ".pi_i"), &write_blocks(d.pair.pi_i.blocks()))?;
            write(&with_suffix(&out_prefix, ".pi_d"), &write_blocks(d.pair.pi_d.blocks()))?;
            write(
                &with_suffix(&out_prefix, ".independent.fsm"),
                &write_fsm(&d.independent),
            )?;
            write(&with_suffix(&out_prefix, ".dependent.fsm"), &write_fsm(&d.dependent))?;
            println!("blocks: {} + {}", d.pair.pi_i.len(), d.pair.pi_d.len());
        }
        Cmd::EmitPackage {
            host,
            mode,
            n,
            k,
            z,
            key_seed,
            scheme_seed,
            cap,
            package,
            secret,
        } => {
            let mode = Mode::from(mode);
            let opts = EmbedOptions {
                mode,
                n,
                k: if mode == Mode::Matrix { 1 } else { k },
                z,
                key_seed,
                scheme_seed,
                cap,
            };
            let (p, s) = embed(&read_machine(&host)?, &opts)?;
            write(&package, &p.to_json())?;
            write(&secret, &s.to_json())?;
        }
        Cmd::Verify {
            package,
            secret,
            branch,
            len,
            scan,
            seed,
        } => {
            let p = in_file(&package, Package::from_json(&read(&package)?))?;
            let s = in_file(&secret, Secret::from_json(&read(&secret)?))?;
            let verdict = if scan {
                scan_verify(&p, &s, branch, len, seed)?.0
            } else {
                watermark_test(&p, &s, branch, len)?
            };
            print!("{verdict}");
            return Ok(verdict.pass);
        }
        Cmd::ScanTest {
            package,
            branch,
            len,
            seed,
            out,
        } => {
            let p = in_file(&package, Package::from_json(&read(&package)?))?;
            write(&out, &scan_watermark_test(&p, branch, len, seed)?.to_string())?;
        }
        Cmd::Attack {
            kind,
            package,
            chi,
            probes,
            steps,
            patience,
            runs,
            seed,
            out,
        } => {
            let p = in_file(&package, Package::from_json(&read(&package)?))?;
            let target = p.watermark;
            match kind {
                AttackKind::Informed => {
                    let mut oracle = FsmOracle::new(target);
                    let rebuilt = informed_attack(&mut oracle, chi.unwrap_or(p.tap.chi))?;
                    println!("states: {}", rebuilt.num_states());
                    println!("resets: {}", oracle.resets);
                    if let Some(path) = out {
                        write(&path, &write_fsm(&rebuilt))?;
                    }
                }
                AttackKind::Estimate => {
                    let budget = OracleBudget::new(probes, steps, patience)?;
                    let mut oracle = FsmOracle::new(target);
                    let est = estimate_output_count(&mut oracle, budget, &block_projection, seed)?;
                    println!("outputs: {}", est.count);
                    println!("probes: {}", est.probes);
                    println!("note: {}", est.note);
                }
                AttackKind::Extension => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let alphabet = target.inputs().to_vec();
                    let words: Vec<Vec<String>> = (0..runs)
                        .map(|_| {
                            (0..steps)
                                .map(|_| alphabet[rng.gen_range(0..alphabet.len())].clone())
                                .collect()
                        })
                        .collect();
                    let t = IoTranscript::record(&target, &words);
                    let j = t.distinct_outputs().len();
                    let ext = adversarial_extension(&t, j)?;
                    println!("observed outputs: {j}");
                    println!("extension states: {}", ext.num_states());
                    if let Some(path) = out {
                        write(&path, &write_fsm(&ext))?;
                    }
                }
            }
        }
        Cmd::ValidatePartitions { input, pi_i, pi_d } => {
            let m = read_machine(&input)?;
            let pair = PartitionPair {
                pi_i: read_partition(&pi_i)?,
                pi_d: read_partition(&pi_d)?,
            };
            let checks = [
                ("pi_i covers the states", pair.pi_i.covers(m.states())),
                ("pi_d covers the states", pair.pi_d.covers(m.states())),
                ("pi_i is input-preserving", is_input_preserving(&m, &pair.pi_i)),
                ("pi_d is input-preserving", is_input_preserving(&m, &pair.pi_d)),
                ("pi_i and pi_d are orthogonal", is_orthogonal(&pair.pi_i, &pair.pi_d)),
            ];
            for (what, ok) in checks {
                println!("{}: {what}", if ok { "ok" } else { "FAILED" });
            }
            let valid = pair.is_valid_for(&m);
            println!("{}", if valid { "valid" } else { "invalid" });
            return Ok(valid);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let outcome = config::apply(argv, &Cli::command()).and_then(|argv| match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli.cmd),
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            Ok(true)
        }
        Err(e) => {
            let _ = e.print();
            Err(Failure::Usage(String::new()))
        }
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("usage error: {msg}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
