mod store;

use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fdd_core::dht::DhtError;
use fdd_core::fuzzy::{presets, FuzzyConfig, FuzzyError};
use fdd_core::harness::{self, BenchmarkConfig, HarnessError, Op, ScenarioConfig};
use fdd_core::ledger::{
    create_tx, import_chain, verify_chain, AclEntry, Action, Chain, Genesis, GenesisConfig, LedgerError, Permission,
    SignedTx, Transaction,
};
use fdd_core::reputation::{ReputationError, ReputationRecord, ReputationStore};
use fdd_core::crypto::{encrypt_pointer, Group};
use fdd_core::{ContentAddress, DetectionDecision, Detector, DetectorConfig, FuzzySystem, TelemetryFrame};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use store::{load_chain, DataDir};

#[derive(Parser)]
#[command(name = "fdd", version, about = "False data injection detection for vehicular telemetry, with a permissioned ledger and DHT storage")]
struct Cli {
    /// RNG seed; overrides any seed in a config file.
    #[arg(long, global = true, env = "FDD_SEED")]
    seed: Option<u64>,
    /// Directory holding the genesis, chain, keys, reputation table and DHT.
    #[arg(long, global = true, env = "FDD_DATA", default_value = "fdd-data")]
    data_dir: PathBuf,
    /// Log progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the fuzzy inference system.
    #[command(subcommand)]
    Fuzzy(FuzzyCmd),
    /// Run detection over NDJSON telemetry frames and update reputations.
    Detect {
        /// NDJSON frames, or `-` for stdin.
        #[arg(long)]
        input: PathBuf,
        /// Fuzzy system TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Detector TOML (baseline window, thresholds).
        #[arg(long)]
        detector: Option<PathBuf>,
    },
    /// Inspect source reputations.
    #[command(subcommand)]
    Reputation(ReputationCmd),
    /// Register and inspect device keys.
    #[command(subcommand)]
    Keys(KeysCmd),
    /// Submit to and inspect the ledger.
    #[command(subcommand)]
    Ledger(LedgerCmd),
    /// Content-addressed payload storage.
    #[command(subcommand)]
    Dht(DhtCmd),
    /// Simulated READ/WRITE throughput benchmark.
    Bench {
        #[arg(long, value_enum)]
        op: OpArg,
        /// `a,b,c`, `a..b:step` or a single rate in tx/s.
        #[arg(long)]
        workloads: String,
        /// Benchmark TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for benchmark.csv and benchmark.dat.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detection study with ROC and accuracy sweep.
    Study {
        /// Scenario TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fuzzy system TOML.
        #[arg(long)]
        fuzzy: Option<PathBuf>,
        /// Injection rates for the accuracy sweep.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        rates: Vec<f64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FuzzyCmd {
    /// Infer the verdict for one pair of deviations, in percent.
    Eval {
        #[arg(long, allow_negative_numbers = true)]
        error: f64,
        #[arg(long, allow_negative_numbers = true)]
        weight: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the default fuzzy system as TOML.
    Defaults,
}

#[derive(Subcommand)]
enum ReputationCmd {
    Show { id: String },
    List,
}

#[derive(Subcommand)]
enum KeysCmd {
    /// Issue a key through the cosigners and record the registration.
    Register {
        #[arg(long)]
        id: String,
    },
    Show {
        #[arg(long)]
        id: String,
    },
}

#[derive(Subcommand)]
enum LedgerCmd {
    /// Create the genesis configuration and an empty chain.
    Init {
        /// Genesis TOML.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Sign and commit one data transaction.
    Submit {
        #[arg(long)]
        id: String,
        #[arg(long, value_enum)]
        action: ActionArg,
        /// File to store in the DHT (store).
        #[arg(long)]
        payload: Option<PathBuf>,
        /// Target address in hex (update, access).
        #[arg(long)]
        ads: Option<String>,
        /// Comma-separated `identity:read` or `identity:write` entries.
        #[arg(long, default_value = "")]
        acl: String,
        /// Transaction time in ms; defaults to one second after the tip.
        #[arg(long)]
        time: Option<i64>,
    },
    /// Look up an address or a device.
    Query {
        #[arg(long, conflicts_with = "device", required_unless_present = "device")]
        ads: Option<String>,
        /// Also evaluate the ACL for this identity.
        #[arg(long, requires = "ads")]
        requester: Option<String>,
        #[arg(long)]
        device: Option<String>,
    },
    /// Re-validate every block of a chain export.
    VerifyChain {
        /// Chain export; defaults to the data directory's chain.
        path: Option<PathBuf>,
    },
    /// Print the genesis, block headers and world state.
    Dump,
}

#[derive(Subcommand)]
enum DhtCmd {
    Put { file: PathBuf },
    Get {
        address: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Stats,
    /// Drop corrupt copies and restore the replication factor.
    Rebalance,
}

#[derive(Clone, Copy, ValueEnum)]
enum OpArg {
    Read,
    Write,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActionArg {
    Store,
    Update,
    Access,
}

impl From<ActionArg> for Action {
    fn from(a: ActionArg) -> Self {
        match a {
            ActionArg::Store => Action::Store,
            ActionArg::Update => Action::Update,
            ActionArg::Access => Action::Access,
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    /// Bad input or a refused request.
    Invalid(String),
    Runtime(String),
    Integrity { height: u64, reason: String },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) | Failure::Integrity { .. } => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => f.write_str(m),
            Failure::Integrity { height, reason } => write!(f, "integrity violation at height {height}: {reason}"),
        }
    }
}

pub fn invalid(e: impl fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

pub fn runtime(e: impl fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

impl From<LedgerError> for Failure {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Integrity { height, reason } => Failure::Integrity { height, reason },
            LedgerError::Config(_) | LedgerError::Rejected(_) | LedgerError::SubmissionRefused(_) => invalid(e),
            e => runtime(e),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io(_) => runtime(e),
            e => invalid(e),
        }
    }
}

impl From<FuzzyError> for Failure {
    fn from(e: FuzzyError) -> Self {
        invalid(e)
    }
}

impl From<ReputationError> for Failure {
    fn from(e: ReputationError) -> Self {
        match e {
            ReputationError::NotFound(_) => invalid(e),
            e => runtime(e),
        }
    }
}

impl From<DhtError> for Failure {
    fn from(e: DhtError) -> Self {
        match e {
            DhtError::InvalidAddress(_) | DhtError::EmptyPayload | DhtError::NotFound(_) => invalid(e),
            e => runtime(e),
        }
    }
}

struct Ctx {
    seed: Option<u64>,
    data: DataDir,
    verbose: bool,
}

impl Ctx {
    /// Flag or env seed, then the config file's, then a fresh one.
    fn seed_or(&self, configured: Option<u64>) -> u64 {
        self.seed.or(configured).unwrap_or_else(|| {
            let s = rand::rngs::OsRng.next_u64();
            eprintln!("seed: {s}");
            s
        })
    }

    /// Signing randomness bound to the seed and to what is being signed, so
    /// a fixed seed never reuses a nonce across different transactions.
    fn rng(&self, context: &[&[u8]]) -> ChaCha20Rng {
        match self.seed {
            Some(seed) => {
                let mut h = Sha256::new();
                h.update(b"fdd/cli");
                h.update(seed.to_le_bytes());
                for part in context {
                    h.update((part.len() as u64).to_le_bytes());
                    h.update(part);
                }
                ChaCha20Rng::from_seed(h.finalize().into())
            }
            None => ChaCha20Rng::from_entropy(),
        }
    }

    fn log(&self, msg: impl fmt::Display) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    toml::from_str(&read_text(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn fuzzy_system(path: Option<&Path>) -> Result<FuzzySystem, Failure> {
    match path {
        Some(p) => Ok(FuzzyConfig::from_toml_str(&read_text(p)?)?.build()?),
        None => Ok(presets::default_system()),
    }
}

fn print_json(v: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn parse_ads(s: &str) -> Result<ContentAddress, Failure> {
    s.parse().map_err(|e: DhtError| invalid(e))
}

fn parse_acl(s: &str) -> Result<Vec<AclEntry>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|e| !e.is_empty())
        .map(|e| {
            let (who, perm) = e.split_once(':').ok_or_else(|| invalid(format!("ACL entry `{e}` needs `id:read` or `id:write`")))?;
            let perm = match perm {
                "read" => Permission::Read,
                "write" => Permission::Write,
                other => return Err(invalid(format!("unknown permission `{other}`"))),
            };
            Ok(AclEntry::new(who, perm))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let ctx = Ctx { seed: cli.seed, data: DataDir::new(cli.data_dir), verbose: cli.verbose > 0 };
    match run(&ctx, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(ctx: &Ctx, command: Command) -> Result<(), Failure> {
    match command {
        Command::Fuzzy(FuzzyCmd::Eval { error, weight, config }) => {
            let out = fuzzy_system(config.as_deref())?.infer(error, weight)?;
            let line = json!({
                "verdict": out.verdict,
                "severity": out.severity,
                "clamped": out.clamped,
                "inconclusive": out.inconclusive,
                "firing_strengths": out.firing_strengths,
            });
            println!("{line}");
            Ok(())
        }
        Command::Fuzzy(FuzzyCmd::Defaults) => {
            print!("{}", FuzzyConfig::from_system(&presets::default_system()).to_toml_string());
            Ok(())
        }
        Command::Detect { input, config, detector } => detect(ctx, &input, config.as_deref(), detector.as_deref()),
        Command::Reputation(ReputationCmd::Show { id }) => {
            print_json(ctx.data.reputation()?.get_status(&id)?);
            Ok(())
        }
        Command::Reputation(ReputationCmd::List) => {
            print_json(&ctx.data.reputation()?.records().collect::<Vec<_>>());
            Ok(())
        }
        Command::Keys(cmd) => keys(ctx, cmd),
        Command::Ledger(cmd) => ledger(ctx, cmd),
        Command::Dht(cmd) => dht(ctx, cmd),
        Command::Bench { op, workloads, config, out } => {
            let mut cfg: BenchmarkConfig = match &config {
                Some(p) => load_toml(p)?,
                None => BenchmarkConfig::default(),
            };
            cfg.seed = ctx.seed.unwrap_or(cfg.seed);
            let op = match op {
                OpArg::Read => Op::Read,
                OpArg::Write => Op::Write,
            };
            let report = harness::run_benchmark(op, &harness::parse_workloads(&workloads)?, &cfg)?;
            if let Some(dir) = out {
                for p in harness::emit(&dir, "benchmark", |w| harness::write_benchmark_csv(&report, w)).map_err(runtime)? {
                    ctx.log(format!("wrote {}", p.display()));
                }
            }
            let mut stdout = io::stdout().lock();
            harness::write_benchmark_csv(&report, &mut stdout).map_err(runtime)?;
            Ok(())
        }
        Command::Study { config, fuzzy, rates, out } => study(ctx, config.as_deref(), fuzzy.as_deref(), &rates, &out),
    }
}

fn detect(ctx: &Ctx, input: &Path, config: Option<&Path>, detector: Option<&Path>) -> Result<(), Failure> {
    let dcfg: DetectorConfig = match detector {
        Some(p) => load_toml(p)?,
        None => DetectorConfig::default(),
    };
    let mut det = Detector::new(fuzzy_system(config)?, dcfg).map_err(invalid)?;
    let reader: Box<dyn BufRead> = if input == Path::new("-") {
        Box::new(io::stdin().lock())
    } else {
        Box::new(io::BufReader::new(fs::File::open(input).map_err(|e| invalid(format!("{}: {e}", input.display())))?))
    };
    let mut reps = ctx.data.reputation()?;
    let mut stdout = io::stdout().lock();
    let (mut frames, mut flagged) = (0usize, 0usize);
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(runtime)?;
        if line.trim().is_empty() {
            continue;
        }
        let decision = match serde_json::from_str::<TelemetryFrame>(&line) {
            Ok(frame) => det.detect(&frame),
            Err(e) => {
                let raw: serde_json::Value = serde_json::from_str(&line).unwrap_or_default();
                DetectionDecision::rejected(
                    raw.get("vehicle_id").and_then(|v| v.as_str()).unwrap_or(""),
                    raw.get("timestamp").and_then(|v| v.as_i64()).unwrap_or(0),
                    format!("line {}: {e}", n + 1),
                )
            }
        };
        frames += 1;
        if decision.is_fdi() {
            flagged += 1;
        }
        if !decision.flags.malformed {
            if !reps.contains(&decision.vehicle_id) {
                reps.init(&decision.vehicle_id, decision.timestamp)?;
            }
            reps.update_rep(&decision.vehicle_id, &decision)?;
        }
        serde_json::to_writer(&mut stdout, &decision).map_err(runtime)?;
        writeln!(stdout).map_err(runtime)?;
    }
    ctx.data.save_reputation(&reps)?;
    ctx.log(format!("{frames} frames, {flagged} flagged"));
    Ok(())
}

fn study(ctx: &Ctx, config: Option<&Path>, fuzzy: Option<&Path>, rates: &[f64], out: &Path) -> Result<(), Failure> {
    let mut cfg: ScenarioConfig = match config {
        Some(p) => load_toml(p)?,
        None => ScenarioConfig::default(),
    };
    cfg.seed = ctx.seed.unwrap_or(cfg.seed);
    let system = fuzzy_system(fuzzy)?;
    let dcfg = DetectorConfig { baseline_window: cfg.baseline_window, ..Default::default() };
    let scenario = harness::generate_scenario(&cfg)?;
    let report = harness::run_detection_study(&scenario, &system, &dcfg)?;
    let sweep = harness::accuracy_sweep(&cfg, rates, &system, &dcfg)?;
    let mut written = Vec::new();
    written.extend(harness::emit(out, "detection_study", |w| harness::write_study_csv(&report, w)).map_err(runtime)?);
    written.extend(harness::emit(out, "roc", |w| harness::write_roc_csv(&report.roc, w)).map_err(runtime)?);
    written.extend(harness::emit(out, "accuracy_sweep", |w| harness::write_sweep_csv(&sweep, w)).map_err(runtime)?);
    for p in &written {
        ctx.log(format!("wrote {}", p.display()));
    }
    print_json(&json!({
        "seed": cfg.seed,
        "frames": report.overall.total(),
        "confusion": report.overall,
        "accuracy": report.accuracy(),
        "tpr": report.overall.tpr(),
        "fpr": report.overall.fpr(),
        "auc": report.roc.auc,
        "sweep": sweep,
        "files": written,
    }));
    Ok(())
}

fn keys(ctx: &Ctx, cmd: KeysCmd) -> Result<(), Failure> {
    match cmd {
        KeysCmd::Register { id } => {
            if ctx.data.has_key(&id)? {
                return Err(invalid(format!("`{id}` already has a key")));
            }
            let genesis = ctx.data.genesis(|| ctx.seed_or(None))?;
            let mut chain = ctx.data.chain(&genesis)?;
            if chain.state().devices.contains_key(&id) {
                return Err(invalid(format!("`{id}` is already registered")));
            }
            let now = chain.last_timestamp() + 1000;
            let mut rng = ctx.rng(&[b"register", id.as_bytes(), &chain.tip()]);
            let (keys, stx) = genesis.enroll(&id, now, &mut rng)?;
            let outcome = chain.commit_direct(&genesis, &[stx], now)?.remove(0);
            if let Some(why) = outcome.rejection {
                return Err(invalid(format!("registration rejected: {why}")));
            }
            ctx.data.save_chain(&genesis, &chain)?;
            let path = ctx.data.save_key(&genesis.rules, &keys)?;
            ctx.log(format!("wrote {}", path.display()));
            print_json(&json!({
                "id": id,
                "public_key": hex::encode(keys.pk.to_bytes(&genesis.rules.params)),
                "height": chain.height(),
            }));
            Ok(())
        }
        KeysCmd::Show { id } => {
            let genesis = ctx.data.genesis(|| ctx.seed_or(None))?;
            let keys = ctx.data.load_key(&genesis.rules, &id)?;
            let chain = ctx.data.chain(&genesis)?;
            let g = &genesis.rules.params.group;
            print_json(&json!({
                "id": id,
                "public_key": hex::encode(keys.pk.to_bytes(&genesis.rules.params)),
                "combined": hex::encode(g.encode_element(&keys.combined)),
                "registered_at": chain.state().devices.get(&id).map(|d| d.registered_at),
            }));
            Ok(())
        }
    }
}

fn ledger(ctx: &Ctx, cmd: LedgerCmd) -> Result<(), Failure> {
    match cmd {
        LedgerCmd::Init { config } => {
            let mut cfg: GenesisConfig = match &config {
                Some(p) => GenesisConfig::from_toml_str(&read_text(p)?)?,
                None => GenesisConfig::default(),
            };
            cfg.seed = ctx.seed_or(config.is_some().then_some(cfg.seed));
            let genesis = ctx.data.init_genesis(cfg)?;
            print_json(&json!({
                "data_dir": ctx.data.root(),
                "peers": genesis.rules.peers,
                "f": genesis.rules.f,
                "genesis_digest": hex::encode(genesis.rules.digest),
            }));
            Ok(())
        }
        LedgerCmd::Submit { id, action, payload, ads, acl, time } => {
            submit(ctx, &id, action.into(), payload.as_deref(), ads.as_deref(), &acl, time)
        }
        LedgerCmd::Query { ads, requester, device } => {
            let genesis = ctx.data.genesis(|| ctx.seed_or(None))?;
            let chain = ctx.data.chain(&genesis)?;
            let state = chain.state().to_json(&genesis.rules);
            if let Some(dev) = device {
                let entry = state["devices"].get(&dev).ok_or_else(|| invalid(format!("device `{dev}` is not registered")))?;
                print_json(entry);
                return Ok(());
            }
            let ads = parse_ads(ads.as_deref().expect("clap requires ads or device"))?;
            let entry = state["ads"].get(ads.to_string()).ok_or_else(|| invalid(format!("ADS {ads} not found")))?;
            let mut out = json!({ "ads": ads, "entry": entry });
            if let Some(r) = requester {
                out["decision"] = json!(chain.state().apply_acl(&ads, &r));
                out["requester"] = json!(r);
            }
            print_json(&out);
            Ok(())
        }
        LedgerCmd::VerifyChain { path } => {
            let path = path.unwrap_or_else(|| ctx.data.chain_path());
            let bytes = fs::read(&path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let (config, blocks) = import_chain(&bytes)?;
            let rules = Genesis::new(config)?.rules;
            let report = verify_chain(&rules, &blocks);
            print_json(&report);
            match (report.first_bad_height, report.reason) {
                (Some(height), Some(reason)) => Err(Failure::Integrity { height, reason }),
                _ => Ok(()),
            }
        }
        LedgerCmd::Dump => {
            let genesis = ctx.data.genesis(|| ctx.seed_or(None))?;
            let chain = load_chain(&ctx.data.chain_path(), Some(&genesis.rules))?;
            let headers: Vec<_> = chain.blocks().iter().map(|b| json!({ "hash": hex::encode(b.hash()), "header": b.header })).collect();
            print_json(&json!({
                "genesis": genesis.published_config(),
                "blocks": headers,
                "state": chain.state().to_json(&genesis.rules),
            }));
            Ok(())
        }
    }
}

fn submit(
    ctx: &Ctx,
    id: &str,
    action: Action,
    payload: Option<&Path>,
    ads: Option<&str>,
    acl: &str,
    time: Option<i64>,
) -> Result<(), Failure> {
    let genesis = ctx.data.genesis(|| ctx.seed_or(None))?;
    let mut chain: Chain = ctx.data.chain(&genesis)?;
    let keys = ctx.data.load_key(&genesis.rules, id)?;
    let mut acl = parse_acl(acl)?;
    let mut dht = None;
    let ads = match (action, payload, ads) {
        (Action::Store, Some(p), None) => {
            let data = fs::read(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            let mut d = ctx.data.dht()?;
            let addr = d.put(&data)?;
            dht = Some(d);
            addr
        }
        (Action::Store, _, _) => return Err(invalid("store needs --payload and no --ads")),
        (_, None, Some(a)) => parse_ads(a)?,
        (_, _, _) => return Err(invalid(format!("{action} needs --ads and no --payload"))),
    };
    if action == Action::Access && acl.is_empty() {
        acl.push(AclEntry::new(id, Permission::Read));
    }
    let timestamp = time.unwrap_or_else(|| chain.last_timestamp() + 1000);
    let reps = ctx.data.reputation()?;
    let record: ReputationRecord = match reps.get_status(id) {
        Ok(r) => r.clone(),
        Err(_) => {
            let mut fresh = ReputationStore::new(*reps.config()).expect("valid config");
            fresh.init(id, timestamp)?.clone()
        }
    };
    let mut rng = ctx.rng(&[b"submit", id.as_bytes(), &chain.tip(), &ads.0, action.to_string().as_bytes(), &timestamp.to_le_bytes()]);
    let pointer = match action {
        Action::Access => Vec::new(),
        _ => encrypt_pointer(&genesis.rules.params, &keys.combined, &ads.0, &mut rng),
    };
    let tx = create_tx(id, acl, action, ads, pointer, &record, timestamp)?;
    let stx = SignedTx::sign(Transaction::Data(tx), &keys, &mut rng);
    let outcome = chain.commit_direct(&genesis, &[stx], timestamp)?.remove(0);
    if let Some(why) = &outcome.rejection {
        print_json(&json!({ "accepted": false, "outcome": outcome }));
        return Err(invalid(format!("transaction rejected: {why}")));
    }
    if let Some(d) = &dht {
        ctx.data.save_dht(d)?;
    }
    ctx.data.save_chain(&genesis, &chain)?;
    print_json(&json!({ "accepted": true, "ads": ads, "height": chain.height(), "outcome": outcome }));
    Ok(())
}

fn dht(ctx: &Ctx, cmd: DhtCmd) -> Result<(), Failure> {
    let mut dht = ctx.data.dht()?;
    match cmd {
        DhtCmd::Put { file } => {
            let data = fs::read(&file).map_err(|e| invalid(format!("{}: {e}", file.display())))?;
            let addr = dht.put(&data)?;
            ctx.data.save_dht(&dht)?;
            print_json(&json!({ "address": addr, "bytes": data.len(), "replicas": dht.holders(&addr) }));
        }
        DhtCmd::Get { address, out } => {
            let addr = parse_ads(&address)?;
            let data = dht.get(&addr)?;
            ctx.data.save_dht(&dht)?;
            match out {
                Some(p) => fs::write(&p, &data).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
                None => io::stdout().lock().write_all(&data).map_err(runtime)?,
            }
        }
        DhtCmd::Stats => print_json(&dht.stats()),
        DhtCmd::Rebalance => {
            let report = dht.rebalance();
            ctx.data.save_dht(&dht)?;
            print_json(&report);
        }
    }
    Ok(())
}
