//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use fdd_core::crypto::{
    cosign_issuance, derive_keys, gen_partial_secret, register_device, setup_standard, setup_toy, sign_tx,
    verify_issuance, verify_tx_sig, Cosigner, CosignerKey, DeviceKeyPair, DeviceSecret, Group, KgdPublic,
    SystemParams, Verification,
};
use fdd_core::dht::{ContentAddress, Dht, DhtError};
use fdd_core::fuzzy::{presets, Verdict};
use fdd_core::harness::{
    accuracy_sweep, generate_scenario, parse_workloads, run_benchmark, run_detection_study, write_benchmark_csv,
    write_roc_csv, write_study_csv, write_sweep_csv, Band, BenchmarkConfig, BenchmarkReport, Op, ScenarioConfig,
};
use fdd_core::ledger::{
    create_tx, export_chain, import_chain, replay_world_state, verify_chain, AclEntry, Action, Behavior, Chain,
    Consortium, ConsortiumConfig, Genesis, GenesisConfig, LedgerError, Permission, SignedTx, SubmissionResult,
    Transaction,
};
use fdd_core::reputation::{ReputationConfig, ReputationRecord, ReputationStore};
use fdd_core::sim::{NetConfig, SECOND};
use fdd_core::DetectorConfig;

/// Relative tolerance between the centroid and the grid oracle.
const CENTROID_REL_TOL: f64 = 1e-6;
const SEVERITY_ANCHOR: f64 = 85.0;
const SEVERITY_BAND: f64 = 10.0;
const LEDGER_RUNS: u64 = 100;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

// ---------------------------------------------------------------------------
// 1. fuzzy oracle equivalence

fn trap(x: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    if (b..=c).contains(&x) {
        1.0
    } else if x <= a || x >= d {
        0.0
    } else if x < b {
        (x - a) / (b - a)
    } else {
        (d - x) / (d - c)
    }
}

/// Degrees of the three default input terms.
fn input_degrees(x: f64) -> [f64; 3] {
    [trap(x, 0.0, 0.0, 15.0, 30.0), trap(x, 20.0, 37.5, 37.5, 55.0), trap(x, 45.0, 60.0, 100.0, 100.0)]
}

fn output_degrees(y: f64) -> [f64; 3] {
    [trap(y, 0.0, 0.0, 20.0, 40.0), trap(y, 30.0, 50.0, 50.0, 70.0), trap(y, 60.0, 80.0, 100.0, 100.0)]
}

const MATRIX: [[usize; 3]; 3] = [[0, 0, 1], [0, 1, 2], [1, 2, 2]];

/// Mamdani min/max with centroid by a 10,001-point trapezoid sum.
fn grid_centroid(e: f64, w: f64) -> Option<f64> {
    let (de, dw) = (input_degrees(e), input_degrees(w));
    let mut s = [0.0f64; 3];
    for i in 0..3 {
        for j in 0..3 {
            let v = MATRIX[i][j];
            s[v] = s[v].max(de[i].min(dw[j]));
        }
    }
    let n = 10_001;
    let (mut mass, mut moment) = (0.0, 0.0);
    for k in 0..n {
        let y = 100.0 * k as f64 / (n - 1) as f64;
        let mu = output_degrees(y).iter().zip(&s).map(|(m, s)| m.min(*s)).fold(0.0, f64::max);
        let wt = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        mass += wt * mu;
        moment += wt * mu * y;
    }
    (mass > 0.0).then(|| moment / mass)
}

fn fuzzy_oracle() -> Check {
    let system = presets::default_system();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (e, w) = (rng.gen_range(0.0..=100.0), rng.gen_range(0.0..=100.0));
        let out = system.infer(e, w).map_err(|err| format!("infer({e}, {w}): {err}"))?;
        let oracle = grid_centroid(e, w).ok_or_else(|| format!("oracle empty at ({e}, {w})"))?;
        let rel = (out.severity - oracle).abs() / oracle.abs();
        ensure!(rel <= CENTROID_REL_TOL, "({e:.6}, {w:.6}): centroid {} vs oracle {oracle} (rel {rel:.2e})", out.severity);
        worst = worst.max(rel);
    }
    Ok(format!("1000 pairs, max rel err {worst:.2e} (tol {CENTROID_REL_TOL:.0e})"))
}

// ---------------------------------------------------------------------------
// 2. rule matrix

fn rule_matrix() -> Check {
    let system = presets::default_system();
    let mut grid = vec![[Verdict::No; 101]; 101];
    for (e, row) in grid.iter_mut().enumerate() {
        for (w, cell) in row.iter_mut().enumerate() {
            *cell = system.infer(e as f64, w as f64).map_err(|err| err.to_string())?.verdict;
        }
    }
    for e in 0..101 {
        for w in 0..101 {
            if e > 0 {
                ensure!(grid[e][w] >= grid[e - 1][w], "verdict drops along error at ({e}, {w})");
            }
            if w > 0 {
                ensure!(grid[e][w] >= grid[e][w - 1], "verdict drops along weight at ({e}, {w})");
            }
        }
    }
    ensure!(grid[0][0] == Verdict::No, "(0, 0) gives {:?}", grid[0][0]);
    ensure!(grid[100][100] == Verdict::Yes, "(100, 100) gives {:?}", grid[100][100]);
    ensure!(system.rules().cell("trivial", "minor") == Some(Verdict::No), "(trivial, minor) is not NO");

    // one point inside the core of each term
    let core = [5.0, 37.5, 80.0];
    let matrix = system.rules();
    for (i, et) in matrix.error_terms().iter().enumerate() {
        for (j, wt) in matrix.weight_terms().iter().enumerate() {
            let declared = matrix.cells()[i][j];
            let out = system.infer(core[i], core[j]).map_err(|err| err.to_string())?;
            ensure!(out.verdict == declared, "({et}, {wt}) infers {:?}, declared {declared:?}", out.verdict);
            let fired: Vec<_> = out.firing_strengths.iter().filter(|r| r.strength > 0.0).collect();
            ensure!(
                fired.len() == 1 && fired[0].verdict == declared && fired[0].strength == 1.0,
                "({et}, {wt}) fires {fired:?}"
            );
        }
    }
    let counts = Verdict::ALL.map(|v| grid.iter().flatten().filter(|c| **c == v).count());
    Ok(format!("101x101 monotone, NO/WARNING/YES cells {counts:?}, 9 matrix cells match"))
}

// ---------------------------------------------------------------------------
// 3. detection guarantees

fn detection() -> Check {
    let system = presets::default_system();
    let config = DetectorConfig::default();
    let strict = ScenarioConfig {
        injection_rate: 0.5,
        injected: Band::new(60.0, 100.0),
        clean: Band::new(0.0, 10.0),
        ..Default::default()
    };
    let report = run_detection_study(&generate_scenario(&strict).map_err(|e| e.to_string())?, &system, &config)
        .map_err(|e| e.to_string())?;
    let c = report.overall;
    ensure!(c.tp > 0 && c.tn > 0, "degenerate study {c:?}");
    ensure!(c.tpr() == 1.0, "TPR {} ({} missed)", c.tpr(), c.fn_);
    ensure!(c.fpr() == 0.0, "FPR {} ({} false alarms)", c.fpr(), c.fp);

    let rows = accuracy_sweep(&ScenarioConfig::default(), &[0.1, 0.9], &system, &config).map_err(|e| e.to_string())?;
    let (low, high) = (rows[0].accuracy, rows[1].accuracy);
    ensure!(low >= high, "accuracy {low} at rate 0.1 is below {high} at rate 0.9");
    Ok(format!(
        "TP {} FN {} TN {} FP {}; AUC {:.4}; accuracy {low:.3} @0.1 >= {high:.3} @0.9",
        c.tp, c.fn_, c.tn, c.fp, report.roc.auc
    ))
}

// ---------------------------------------------------------------------------
// 4. severity anchor

fn severity_anchor() -> Check {
    let system = presets::default_system();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=40 {
        for j in 0..=40 {
            let (e, w) = (60.0 + i as f64, 60.0 + j as f64);
            let out = system.infer(e, w).map_err(|err| err.to_string())?;
            ensure!(
                (out.severity - SEVERITY_ANCHOR).abs() <= SEVERITY_BAND,
                "severity {} at ({e}, {w}) is outside {SEVERITY_ANCHOR} +/- {SEVERITY_BAND}",
                out.severity
            );
            ensure!(out.verdict == Verdict::Yes, "verdict {:?} at ({e}, {w})", out.verdict);
            lo = lo.min(out.severity);
            hi = hi.max(out.severity);
        }
    }
    Ok(format!("error and weight deviation in [60, 100]: severity {lo:.3}..{hi:.3}, verdict YES"))
}

// ---------------------------------------------------------------------------
// 5. reputation arithmetic

#[derive(Clone, Copy)]
struct OracleRecord {
    alpha: f64,
    beta: f64,
    quarantined: bool,
}

fn reputation() -> Check {
    let config = ReputationConfig::default();
    let mut store = ReputationStore::new(config).map_err(|e| e.to_string())?;
    let r0 = store.init("v", 0).map_err(|e| e.to_string())?.level;
    ensure!(r0 == 0.5, "initial R = {r0}");
    let r1 = store.apply("v", Verdict::Yes, 100.0, 1).map_err(|e| e.to_string())?.new_r;
    ensure!(r1 == 0.25, "R after one YES at D=100 is {r1}");

    let ids: Vec<String> = (0..25).map(|i| format!("src-{i}")).collect();
    let mut live = ReputationStore::new(config).map_err(|e| e.to_string())?;
    let mut oracle = vec![OracleRecord { alpha: 1.0, beta: 1.0, quarantined: false }; ids.len()];
    for id in &ids {
        live.init(id, 0).map_err(|e| e.to_string())?;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for t in 1..=10_000i64 {
        let k = rng.gen_range(0..ids.len());
        let verdict = Verdict::ALL[rng.gen_range(0..3)];
        let d: f64 = rng.gen_range(0.0..=100.0);
        let up = live.apply(&ids[k], verdict, d, t).map_err(|e| e.to_string())?;
        ensure!((0.0..=1.0).contains(&up.new_r), "R = {} out of range", up.new_r);

        let o = &mut oracle[k];
        match verdict {
            Verdict::Yes => o.beta += 1.0 + d / 100.0,
            Verdict::Warning => o.beta += (0.5 * d) / 100.0,
            Verdict::No => o.alpha += 1.0,
        }
        let r = o.alpha / (o.alpha + o.beta);
        o.quarantined = if o.quarantined { r <= 0.3 + 0.05 } else { r < 0.3 };
    }
    let mut quarantined = 0;
    for (id, o) in ids.iter().zip(&oracle) {
        let rec: &ReputationRecord = live.get_status(id).map_err(|e| e.to_string())?;
        ensure!(
            rec.alpha == o.alpha && rec.beta == o.beta && rec.level == o.alpha / (o.alpha + o.beta),
            "{id}: live ({}, {}) vs oracle ({}, {})",
            rec.alpha,
            rec.beta,
            o.alpha,
            o.beta
        );
        ensure!(rec.quarantined == o.quarantined, "{id}: quarantine state differs");
        quarantined += o.quarantined as usize;
    }
    let restored = ReputationStore::from_json(config, &live.to_json()).map_err(|e| e.to_string())?;
    ensure!(restored == live, "snapshot round trip changed the store");
    Ok(format!("R 0.5 -> 0.25; 10000 decisions over 25 sources match the oracle exactly ({quarantined} quarantined)"))
}

// ---------------------------------------------------------------------------
// 6. certificateless crypto

fn kgd<G: Group>(params: &SystemParams<G>, n: usize, rng: &mut ChaCha20Rng) -> (KgdPublic<G>, Vec<Cosigner<G>>) {
    let keys: Vec<_> = (0..n).map(|i| CosignerKey::generate(params, i, rng)).collect();
    let kgd = KgdPublic::from_keys(&keys).expect("keys are consistent");
    (kgd, keys.into_iter().map(|k| Cosigner::new(params.clone(), k)).collect())
}

fn mutate(bytes: &[u8], i: usize, x: u8) -> Vec<u8> {
    let mut v = bytes.to_vec();
    v[i] ^= x;
    v
}

fn toy_oracle(seed: u64, rng: &mut ChaCha20Rng) -> Result<usize, String> {
    let params = setup_toy(seed);
    let g = &params.group;
    let (p, q, gen) = (BigUint::from(g.p()), BigUint::from(g.q()), BigUint::from(g.g()));
    let big = |v: u64| BigUint::from(v);
    let mut checks = 0;
    for _ in 0..200 {
        let (a, b) = (g.random_scalar(rng), g.random_scalar(rng));
        let ea = g.mul_gen(&a);
        ensure!(big(ea) == gen.modpow(&big(a), &p), "g^a mismatch");
        let eb = g.mul(&ea, &b);
        ensure!(big(eb) == big(ea).modpow(&big(b), &p), "(g^a)^b mismatch");
        ensure!(big(g.add(&ea, &eb)) == big(ea) * big(eb) % &p, "group operation mismatch");
        ensure!(big(g.scalar_add(&a, &b)) == (big(a) + big(b)) % &q, "scalar add mismatch");
        ensure!(big(g.scalar_mul(&a, &b)) == big(a) * big(b) % &q, "scalar mul mismatch");
        ensure!(big(ea).modpow(&q, &p) == BigUint::from(1u8), "element outside the subgroup");
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        ensure!(big(g.scalar_from_wide(&wide)) == BigUint::from_bytes_be(&wide) % &q, "wide reduction mismatch");
        checks += 7;
    }

    let (kgd, mut cosigners) = kgd(&params, 4, rng);
    let (_, partial, keys) = register_device(&params, &kgd, &mut cosigners, "toy-device", rng).map_err(|e| e.to_string())?;
    let master = kgd.publics.iter().fold(BigUint::from(1u8), |acc, e| acc * big(*e) % &p);
    let h = fdd_core::crypto::identity_hash(&params, "toy-device", &partial.r_point);
    ensure!(
        gen.modpow(&big(partial.ps), &p) == big(partial.r_point) * master.modpow(&big(h), &p) % &p,
        "g^PS != R * P^H1(ID, R)"
    );
    let q_sum = (big(keys.sk.ps) + big(keys.sk.x)) % &q;
    ensure!(big(keys.combined) == gen.modpow(&q_sum, &p), "combined key is not g^(PS + X)");
    Ok(checks + 2)
}

fn crypto() -> Check {
    let params = setup_standard();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let (kgd, mut cosigners) = kgd(&params, 4, &mut rng);

    let devices: Vec<DeviceKeyPair<_>> = (0..100)
        .map(|i| register_device(&params, &kgd, &mut cosigners, &format!("veh-{i:03}"), &mut rng).map(|(_, _, k)| k))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;

    let mut mutations = 0usize;
    for i in 0..1000 {
        let dev = &devices[i % devices.len()];
        let mut msg = vec![0u8; rng.gen_range(1..=96)];
        rng.fill_bytes(&mut msg);
        let sig = sign_tx(&params, dev, &msg, &mut rng).to_bytes(&params);
        ensure!(verify_tx_sig(&params, &kgd, &dev.pk, &dev.id, &msg, &sig), "round trip {i} failed");

        let exhaustive = i < 10;
        let positions = |len: usize, rng: &mut ChaCha20Rng| -> Vec<usize> {
            if exhaustive { (0..len).collect() } else { vec![rng.gen_range(0..len)] }
        };
        for j in positions(msg.len(), &mut rng) {
            let x = rng.gen_range(1..=255u8);
            ensure!(!verify_tx_sig(&params, &kgd, &dev.pk, &dev.id, &mutate(&msg, j, x), &sig), "message byte {j} ^ {x:#04x} accepted");
            mutations += 1;
        }
        for j in positions(sig.len(), &mut rng) {
            let x = rng.gen_range(1..=255u8);
            ensure!(!verify_tx_sig(&params, &kgd, &dev.pk, &dev.id, &msg, &mutate(&sig, j, x)), "signature byte {j} ^ {x:#04x} accepted");
            mutations += 1;
        }

        let other = &devices[(i + 1 + rng.gen_range(0..devices.len() - 1)) % devices.len()];
        ensure!(!verify_tx_sig(&params, &kgd, &other.pk, &other.id, &msg, &sig), "{} signature accepted as {}", dev.id, other.id);
        ensure!(!verify_tx_sig(&params, &kgd, &dev.pk, &other.id, &msg, &sig), "identity swap with own key accepted");
        ensure!(!verify_tx_sig(&params, &kgd, &other.pk, &dev.id, &msg, &sig), "key swap accepted");
    }

    let mut subsets = 0;
    for mask in 1u32..15 {
        let secret = DeviceSecret::generate(&params, "subset", &mut rng);
        let mut part: Vec<&mut Cosigner<_>> =
            cosigners.iter_mut().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| c).collect();
        ensure!(
            gen_partial_secret(&params, &kgd, &mut part, &secret.request(), &mut rng).is_err(),
            "subset {mask:04b} issued a partial secret"
        );
        let sub = cosign_issuance(&params, &kgd, &mut part, &secret.request(), &mut rng).map_err(|e| e.to_string())?;
        let verdict = verify_issuance(&params, &kgd, &sub.message(secret.commitment), &sub.signature);
        ensure!(verdict != Verification::Accept, "subset {mask:04b} issuance verified");
        ensure!(derive_keys(&params, &kgd, &secret, &sub).is_err(), "subset {mask:04b} derived keys");
        subsets += 1;
    }

    let mut toy_checks = 0;
    for seed in 0..5 {
        toy_checks += toy_oracle(seed, &mut rng)?;
    }
    Ok(format!(
        "100 devices, 1000 round trips, {mutations} mutations and 3000 swaps rejected, {subsets} strict subsets rejected, {toy_checks} toy checks"
    ))
}

// ---------------------------------------------------------------------------
// 7. ledger safety

fn fresh_record(id: &str) -> ReputationRecord {
    let mut store = ReputationStore::new(ReputationConfig::default()).expect("default config");
    store.init(id, 0).expect("new id").clone()
}

fn data_tx(
    c: &Consortium,
    keys: &DeviceKeyPair<fdd_core::crypto::Secp256k1>,
    action: Action,
    ads: ContentAddress,
    acl: Vec<AclEntry>,
    rng: &mut ChaCha20Rng,
) -> SignedTx {
    let tx = create_tx(&keys.id, acl, action, ads, b"ptr".to_vec(), &fresh_record(&keys.id), c.now_ms()).expect("valid tx");
    SignedTx::sign(Transaction::Data(tx), keys, rng)
}

fn ledger_run(seed: u64) -> Result<(Consortium, usize), String> {
    let behaviors = match seed % 4 {
        0 => vec![],
        1 => vec![Behavior::Honest, Behavior::Crashed],
        2 => vec![Behavior::Honest, Behavior::Equivocating],
        _ => vec![Behavior::Honest, Behavior::Honest, Behavior::Equivocating],
    };
    let net = if seed % 5 == 4 { NetConfig { loss: 0.02, ..Default::default() } } else { NetConfig::default() };
    let genesis = Genesis::new(GenesisConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut c = Consortium::new(genesis, ConsortiumConfig { seed, net, behaviors, ..Default::default() });
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);

    let (a, _) = c.enroll("rsu-a").map_err(|e| e.to_string())?;
    let (b, _) = c.enroll("rsu-b").map_err(|e| e.to_string())?;
    c.settle(30 * SECOND).map_err(|e| e.to_string())?;
    let mut sids = Vec::new();
    let mut stored = Vec::new();
    for i in 0..5u8 {
        let ads = ContentAddress::of(&[seed as u8, i]);
        stored.push(ads);
        sids.push(c.submit(data_tx(&c, &a, Action::Store, ads, vec![AclEntry::new("rsu-b", Permission::Read)], &mut rng)));
    }
    c.settle(30 * SECOND).map_err(|e| e.to_string())?;
    let acl = vec![AclEntry::new("rsu-b", Permission::Read)];
    sids.push(c.submit(data_tx(&c, &b, Action::Access, stored[0], acl, &mut rng)));
    c.settle(30 * SECOND).map_err(|e| e.to_string())?;
    for sid in &sids {
        ensure!(matches!(c.result(*sid), SubmissionResult::Committed { .. }), "seed {seed}: {:?}", c.result(*sid));
    }
    Ok((c, sids.len() + 2))
}

/// Byte ranges of each block inside an export, length prefix included.
fn block_spans(export: &[u8], blocks: &[fdd_core::ledger::Block]) -> Vec<std::ops::Range<usize>> {
    let mut end = export.len();
    let mut spans: Vec<_> = blocks
        .iter()
        .rev()
        .map(|b| {
            let start = end - 4 - b.to_bytes().len();
            let span = start..end;
            end = start;
            span
        })
        .collect();
    spans.reverse();
    spans
}

fn detected_height(bytes: &[u8]) -> Result<Option<u64>, String> {
    match import_chain(bytes) {
        Err(LedgerError::Integrity { height, .. }) => Ok(Some(height)),
        Err(e) => Err(format!("tampered export failed outside any block: {e}")),
        Ok((config, blocks)) => {
            let rules = Genesis::new(config).map_err(|e| e.to_string())?.rules;
            Ok(verify_chain(&rules, &blocks).first_bad_height)
        }
    }
}

fn ledger() -> Check {
    let mut equivocation_runs = 0;
    let mut committed = 0;
    let mut tampers = 0;
    for seed in 0..LEDGER_RUNS {
        let (c, txs) = ledger_run(seed)?;
        equivocation_runs += (seed % 4 >= 2) as u64;
        ensure!(c.divergence().is_none(), "seed {seed}: honest peers diverge at {:?}", c.divergence());
        for p in c.honest_peers() {
            let chain = c.chain(p);
            let rules = chain.rules();
            let replayed = replay_world_state(rules, chain.blocks()).map_err(|e| format!("seed {seed}: {e}"))?;
            ensure!(replayed.to_bytes(rules) == chain.state().to_bytes(rules), "seed {seed}: replay differs on peer {p}");

            let mut state = Chain::new(rules.clone()).state().clone();
            for block in &chain.blocks()[1..] {
                for stx in &block.txs {
                    let out = state.apply(rules, stx, block.header.timestamp, block.header.height);
                    ensure!(out.flags.v1 && out.flags.v2 && out.accepted(), "seed {seed}: committed tx {out:?}");
                }
            }
        }
        let best = c.best_chain();
        ensure!(best.state().devices.len() == 2 && best.state().ads.len() == 5, "seed {seed}: incomplete state");
        committed += txs;

        let export = export_chain(&c.genesis().published_config(), best.blocks());
        let spans = block_spans(&export, best.blocks());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let exhaustive = seed == 0;
        for (h, span) in spans.iter().enumerate() {
            let offsets: Vec<usize> =
                if exhaustive { span.clone().collect() } else { (0..2).map(|_| rng.gen_range(span.clone())).collect() };
            for i in offsets {
                let x = rng.gen_range(1..=255u8);
                let got = detected_height(&mutate(&export, i, x))?;
                ensure!(got == Some(h as u64), "seed {seed}: byte {i} of block {h} ^ {x:#04x} detected at {got:?}");
                tampers += 1;
            }
        }
    }
    Ok(format!(
        "{LEDGER_RUNS} runs ({equivocation_runs} with an equivocating leader), {committed} txs committed with V1 and V2, replay equal, {tampers} tampered bytes located"
    ))
}

// ---------------------------------------------------------------------------
// 8. DHT durability

fn dht() -> Check {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut dht = Dht::with_nodes(3, 12);
    let mut stored = Vec::new();
    for i in 0..40 {
        let len = match i {
            0 => 1,
            1 => 1 << 20,
            _ => (2f64.powf(rng.gen_range(0.0..20.0)) as usize).clamp(1, 1 << 20),
        };
        let mut data = vec![0u8; len];
        rng.fill_bytes(&mut data);
        let addr = dht.put(&data).map_err(|e| e.to_string())?;
        ensure!(dht.get(&addr).map_err(|e| e.to_string())? == data, "get after put differs for {len} bytes");
        stored.push((addr, data));
    }

    let mut failures = 0;
    for (addr, data) in stored.iter().step_by(4) {
        let holders = dht.replica_set(addr);
        for name in &holders[..2] {
            dht.kill(name).map_err(|e| e.to_string())?;
            failures += 1;
        }
        dht.rebalance();
        ensure!(dht.stats().under_replicated == 0, "under-replicated after rebalance");
        ensure!(dht.get(addr).map_err(|e| e.to_string())? == *data, "read after two failures differs");
        for name in &holders[..2] {
            dht.revive(name).map_err(|e| e.to_string())?;
        }
        dht.rebalance();
    }

    let mut corrupted = 0;
    for (addr, data) in stored.iter().skip(1).step_by(5) {
        let holders = dht.holders(addr);
        let bad = &holders[rng.gen_range(0..holders.len())];
        ensure!(dht.corrupt(bad, addr, rng.gen()).map_err(|e| e.to_string())?, "no copy to corrupt");
        corrupted += 1;
        ensure!(dht.get(addr).map_err(|e| e.to_string())? == *data, "corrupt copy served");
        dht.rebalance();
        ensure!(dht.integrity_violations().is_empty(), "corrupt copy kept after rebalance");
    }

    let (addr, _) = &stored[2];
    for name in dht.holders(addr) {
        dht.corrupt(&name, addr, 7).map_err(|e| e.to_string())?;
    }
    ensure!(matches!(dht.get(addr), Err(DhtError::IntegrityFailure(_))), "fully corrupted address did not fail");
    for (a, data) in &stored {
        if a != addr {
            ensure!(dht.get(a).map_err(|e| e.to_string())? == *data, "unrelated read failed");
        }
    }
    Ok(format!(
        "40 payloads 1 B..1 MiB, {failures} replica failures survived with k=3, {corrupted} corrupt copies never served"
    ))
}

// ---------------------------------------------------------------------------
// 9. benchmark shape

fn sweep() -> Result<(BenchmarkReport, BenchmarkReport), String> {
    let config = BenchmarkConfig::default();
    let workloads = parse_workloads("100..1000:100").map_err(|e| e.to_string())?;
    let read = run_benchmark(Op::Read, &workloads, &config).map_err(|e| e.to_string())?;
    let write = run_benchmark(Op::Write, &workloads, &config).map_err(|e| e.to_string())?;
    Ok((read, write))
}

fn benchmark() -> Check {
    let (read, write) = sweep()?;
    let sat_r = read.saturation(Op::Read).ok_or("empty READ sweep")?;
    let sat_w = write.saturation(Op::Write).ok_or("empty WRITE sweep")?;
    let tp = |r: &BenchmarkReport| r.rows.iter().map(|x| x.throughput).collect::<Vec<_>>();
    let (tp_r, tp_w) = (tp(&read), tp(&write));
    let peak = read.rows.iter().position(|r| r.workload == sat_r).expect("saturation row");
    ensure!(peak > 0 && peak + 1 < tp_r.len(), "READ saturates at the sweep edge ({sat_r})");
    ensure!(tp_r[..=peak].windows(2).all(|w| w[1] > w[0]), "READ throughput does not rise to {sat_r}: {tp_r:?}");
    ensure!(tp_r[peak..].windows(2).all(|w| w[1] <= w[0]), "READ throughput does not decline after {sat_r}: {tp_r:?}");
    ensure!(tp_r.last() < Some(&tp_r[peak]), "READ throughput never declines");
    ensure!(sat_w < sat_r, "WRITE saturates at {sat_w}, READ at {sat_r}");
    for (r, w) in read.rows.iter().zip(&write.rows) {
        ensure!(w.delay > r.delay, "WL {}: WRITE delay {} <= READ delay {}", r.workload, w.delay, r.delay);
    }
    for (report, sat) in [(&read, sat_r), (&write, sat_w)] {
        let sr: Vec<f64> = report.rows.iter().filter(|r| r.workload >= sat).map(|r| r.success_rate).collect();
        ensure!(sr.windows(2).all(|w| w[1] <= w[0]), "SR increases beyond saturation: {sr:?}");
    }
    Ok(format!(
        "READ peaks {:.0} tx/s at WL {sat_r}, WRITE peaks {:.0} tx/s at WL {sat_w}; WRITE delay above READ at all 10 WLs",
        tp_r[peak],
        tp_w.iter().cloned().fold(0.0, f64::max)
    ))
}

// ---------------------------------------------------------------------------
// 10. determinism

fn csv_outputs() -> Result<Vec<(&'static str, Vec<u8>)>, String> {
    let io = |e: std::io::Error| e.to_string();
    let (read, write) = sweep()?;
    let mut out = Vec::new();
    for (name, report) in [("bench_read.csv", &read), ("bench_write.csv", &write)] {
        let mut buf = Vec::new();
        write_benchmark_csv(report, &mut buf).map_err(io)?;
        out.push((name, buf));
    }
    let system = presets::default_system();
    let config = DetectorConfig::default();
    let scenario = generate_scenario(&ScenarioConfig::default()).map_err(|e| e.to_string())?;
    let study = run_detection_study(&scenario, &system, &config).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_study_csv(&study, &mut buf).map_err(io)?;
    out.push(("study.csv", buf));
    let mut buf = Vec::new();
    write_roc_csv(&study.roc, &mut buf).map_err(io)?;
    out.push(("roc.csv", buf));
    let rows = accuracy_sweep(&ScenarioConfig { n_cases: 10, ..Default::default() }, &[0.1, 0.5, 0.9], &system, &config)
        .map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).map_err(io)?;
    out.push(("sweep.csv", buf));
    Ok(out)
}

fn determinism() -> Check {
    let first = csv_outputs()?;
    let second = csv_outputs()?;
    let mut bytes = 0;
    for ((name, a), (_, b)) in first.iter().zip(&second) {
        ensure!(!a.is_empty(), "{name} is empty");
        ensure!(a == b, "{name} differs between runs");
        bytes += a.len();
    }
    let export = |seed| -> Result<Vec<u8>, String> {
        let (c, _) = ledger_run(seed)?;
        Ok(export_chain(&c.genesis().published_config(), c.best_chain().blocks()))
    };
    ensure!(export(2)? == export(2)?, "chain export differs between runs");
    Ok(format!("{} CSV files ({bytes} bytes) and a chain export identical on repeat", first.len()))
}

// ---------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "fuzzy oracle equivalence", limit: Some(Duration::from_secs(10)), run: fuzzy_oracle },
        Criterion { name: "rule-matrix behavior", limit: None, run: rule_matrix },
        Criterion { name: "detection guarantees", limit: Some(Duration::from_secs(30)), run: detection },
        Criterion { name: "severity anchor", limit: None, run: severity_anchor },
        Criterion { name: "reputation arithmetic", limit: None, run: reputation },
        Criterion { name: "certificateless crypto", limit: Some(Duration::from_secs(60)), run: crypto },
        Criterion { name: "ledger safety", limit: None, run: ledger },
        Criterion { name: "DHT durability", limit: None, run: dht },
        Criterion { name: "benchmark shape", limit: Some(Duration::from_secs(120)), run: benchmark },
        Criterion { name: "determinism", limit: None, run: determinism },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str()) || *f == n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        let limit = c.limit.map(|l| format!(", limit {}s", l.as_secs())).unwrap_or_default();
        match result {
            Ok(detail) => println!("PASS [{n:>2}] {} ({:.2}s{limit}): {detail}", c.name, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL [{n:>2}] {} ({:.2}s{limit}): {why}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
