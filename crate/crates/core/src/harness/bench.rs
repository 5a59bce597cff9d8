use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::sim::{SimTime, MS, SECOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Op {
    Read,
    Write,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Read => "READ",
            Op::Write => "WRITE",
        })
    }
}

impl FromStr for Op {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "read" => Ok(Op::Read),
            "write" => Ok(Op::Write),
            _ => Err(HarnessError::Config(format!("unknown operation `{s}`"))),
        }
    }
}

/// Service costs of the peer handlers, in simulated microseconds.
///
/// Every request first costs `admission_us` of handler time (decoding and
/// authentication) even when it is then refused, so offered load beyond
/// capacity eats into useful work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    /// Handler cores shared by all request kinds.
    pub cores: usize,
    pub admission_us: SimTime,
    /// World-state and DHT lookup.
    pub query_us: SimTime,
    /// V1 and V2 checks of a write.
    pub endorse_us: SimTime,
    /// Block validation and state update, per transaction.
    pub commit_us: SimTime,
    /// Replicated DHT put after commit.
    pub dht_put_us: SimTime,
    /// One network hop between peers; a PBFT round takes three.
    pub hop_us: SimTime,
    pub batch_size: usize,
    pub batch_timeout_us: SimTime,
    /// Requests arriving while this many wait for service are refused.
    pub queue_cap: usize,
    /// Requests still queued after this long fail.
    pub request_timeout_us: SimTime,
    /// Service times vary uniformly by this fraction.
    pub jitter: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            cores: 2,
            admission_us: 1_500,
            query_us: 2_500,
            endorse_us: 2_500,
            commit_us: 3_000,
            dht_put_us: 800,
            hop_us: 5 * MS,
            batch_size: 64,
            batch_timeout_us: 50 * MS,
            queue_cap: 256,
            request_timeout_us: 2 * SECOND,
            jitter: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub cost: CostModel,
    /// Highest rate the load generator can offer, if limited.
    pub generator_limit: Option<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { seed: 11, duration_s: 10.0, cost: CostModel::default(), generator_limit: None }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let c = &self.cost;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(HarnessError::Config("duration must be positive".into()));
        }
        if c.cores == 0 || c.batch_size == 0 || c.queue_cap == 0 {
            return Err(HarnessError::Config("cores, batch size and queue cap must be positive".into()));
        }
        if !(0.0..1.0).contains(&c.jitter) {
            return Err(HarnessError::Config("jitter must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub op: Op,
    /// Offered load, tx/s.
    pub workload: u32,
    /// Committed tx/s within the run.
    pub throughput: f64,
    pub success_rate: f64,
    /// Mean commit latency, seconds.
    pub delay: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub generated: u64,
    pub submitted: u64,
    pub refused: u64,
    pub committed: u64,
    pub failed: u64,
    pub utilization: f64,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    pub fn op(&self, op: Op) -> impl Iterator<Item = &BenchmarkRow> {
        self.rows.iter().filter(move |r| r.op == op)
    }

    /// Workload with the highest throughput; the lowest such on ties.
    pub fn saturation(&self, op: Op) -> Option<u32> {
        self.op(op)
            .fold(None::<&BenchmarkRow>, |best, r| match best {
                Some(b) if b.throughput >= r.throughput => Some(b),
                _ => Some(r),
            })
            .map(|r| r.workload)
    }
}

/// Parses `a..b:step`, `a,b,c` or a single number.
pub fn parse_workloads(spec: &str) -> Result<Vec<u32>, HarnessError> {
    let bad = || HarnessError::Config(format!("bad workload list `{spec}`"));
    if let Some((range, step)) = spec.split_once(':') {
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let (a, b, step): (u32, u32, u32) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if step == 0 || a > b {
            return Err(bad());
        }
        return Ok((a..=b).step_by(step as usize).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

pub fn run_benchmark(op: Op, workloads: &[u32], config: &BenchmarkConfig) -> Result<BenchmarkReport, HarnessError> {
    config.validate()?;
    let rows = workloads.iter().map(|&wl| Des::new(op, wl, config).run()).collect();
    Ok(BenchmarkReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Admission(usize),
    Query(usize),
    Endorse(usize),
    Commit(usize),
}

impl Kind {
    fn priority(self) -> usize {
        match self {
            Kind::Admission(_) => 0,
            Kind::Commit(_) => 1,
            Kind::Query(_) | Kind::Endorse(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Arrival(usize),
    Done(Kind),
    BatchTimer(u64),
    Ordered(usize),
    Stored(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fate {
    Open,
    Refused,
    Failed,
    Committed(SimTime),
}

struct Des<'a> {
    op: Op,
    workload: u32,
    config: &'a BenchmarkConfig,
    rng: ChaCha20Rng,
    now: SimTime,
    seq: u64,
    events: BTreeMap<(SimTime, u64), Ev>,
    arrivals: Vec<SimTime>,
    fate: Vec<Fate>,
    queues: [VecDeque<(Kind, SimTime)>; 3],
    busy: usize,
    busy_time: SimTime,
    batch: Vec<usize>,
    batch_seq: u64,
    blocks: Vec<Vec<usize>>,
}

impl<'a> Des<'a> {
    fn new(op: Op, workload: u32, config: &'a BenchmarkConfig) -> Self {
        let seed = config.seed ^ ((op as u64) << 40) ^ u64::from(workload).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Self {
            op,
            workload,
            config,
            rng: ChaCha20Rng::seed_from_u64(seed),
            now: 0,
            seq: 0,
            events: BTreeMap::new(),
            arrivals: Vec::new(),
            fate: Vec::new(),
            queues: Default::default(),
            busy: 0,
            busy_time: 0,
            batch: Vec::new(),
            batch_seq: 0,
            blocks: Vec::new(),
        }
    }

    fn at(&mut self, t: SimTime, ev: Ev) {
        self.seq += 1;
        self.events.insert((t, self.seq), ev);
    }

    fn cost(&self, kind: Kind) -> SimTime {
        let c = &self.config.cost;
        match kind {
            Kind::Admission(_) => c.admission_us,
            Kind::Query(_) => c.query_us,
            Kind::Endorse(_) => c.endorse_us,
            Kind::Commit(b) => c.commit_us * self.blocks[b].len() as u64,
        }
    }

    fn jittered(&mut self, t: SimTime) -> SimTime {
        let j = self.config.cost.jitter;
        if j == 0.0 || t == 0 {
            return t;
        }
        (t as f64 * self.rng.gen_range(1.0 - j..1.0 + j)).round() as SimTime
    }

    fn enqueue(&mut self, kind: Kind) {
        self.queues[kind.priority()].push_back((kind, self.now));
        self.dispatch();
    }

    fn dispatch(&mut self) {
        while self.busy < self.config.cost.cores {
            let Some((kind, since)) = self.queues.iter_mut().find_map(VecDeque::pop_front) else { return };
            if let Kind::Query(r) | Kind::Endorse(r) = kind {
                if self.now - since > self.config.cost.request_timeout_us {
                    self.fate[r] = Fate::Failed;
                    continue;
                }
            }
            let d = self.jittered(self.cost(kind));
            self.busy += 1;
            self.busy_time += d;
            self.at(self.now + d, Ev::Done(kind));
        }
    }

    fn waiting(&self) -> usize {
        self.queues[2].len()
    }

    fn cut_batch(&mut self) {
        if self.batch.is_empty() {
            return;
        }
        self.batch_seq += 1;
        let block = self.blocks.len();
        self.blocks.push(std::mem::take(&mut self.batch));
        let delay = self.jittered(3 * self.config.cost.hop_us);
        self.at(self.now + delay, Ev::Ordered(block));
    }

    fn run(mut self) -> BenchmarkRow {
        let duration = (self.config.duration_s * SECOND as f64) as SimTime;
        let limited = self.config.generator_limit.is_some_and(|l| f64::from(self.workload) > l);
        let rate = match self.config.generator_limit {
            Some(l) => f64::from(self.workload).min(l),
            None => f64::from(self.workload),
        };
        if rate > 0.0 {
            let mut t = 0.0;
            loop {
                t += -(1.0 - self.rng.gen::<f64>()).ln() / rate * SECOND as f64;
                if t >= duration as f64 {
                    break;
                }
                self.arrivals.push(t as SimTime);
            }
        }
        self.fate = vec![Fate::Open; self.arrivals.len()];
        for i in 0..self.arrivals.len() {
            self.at(self.arrivals[i], Ev::Arrival(i));
        }

        while let Some(((t, _), ev)) = self.events.pop_first() {
            self.now = t;
            match ev {
                Ev::Arrival(r) => self.enqueue(Kind::Admission(r)),
                Ev::Done(kind) => {
                    self.busy -= 1;
                    match kind {
                        Kind::Admission(r) => {
                            if self.waiting() >= self.config.cost.queue_cap {
                                self.fate[r] = Fate::Refused;
                            } else if self.op == Op::Read {
                                self.queues[2].push_back((Kind::Query(r), self.now));
                            } else {
                                self.queues[2].push_back((Kind::Endorse(r), self.now));
                            }
                        }
                        Kind::Query(r) => self.fate[r] = Fate::Committed(self.now),
                        Kind::Endorse(r) => {
                            self.batch.push(r);
                            if self.batch.len() == 1 {
                                let seq = self.batch_seq;
                                self.at(self.now + self.config.cost.batch_timeout_us, Ev::BatchTimer(seq));
                            }
                            if self.batch.len() >= self.config.cost.batch_size {
                                self.cut_batch();
                            }
                        }
                        Kind::Commit(b) => {
                            let d = self.jittered(self.config.cost.dht_put_us);
                            self.at(self.now + d, Ev::Stored(b));
                        }
                    }
                    self.dispatch();
                }
                Ev::BatchTimer(seq) => {
                    if seq == self.batch_seq {
                        self.cut_batch();
                    }
                }
                Ev::Ordered(b) => self.enqueue(Kind::Commit(b)),
                Ev::Stored(b) => {
                    for i in 0..self.blocks[b].len() {
                        let r = self.blocks[b][i];
                        self.fate[r] = Fate::Committed(self.now);
                    }
                }
            }
        }
        self.row(duration, limited)
    }

    fn row(&self, duration: SimTime, limited: bool) -> BenchmarkRow {
        let generated = self.arrivals.len() as u64;
        let mut delays: Vec<f64> = Vec::new();
        let (mut refused, mut failed, mut in_window) = (0u64, 0u64, 0u64);
        for (r, f) in self.fate.iter().enumerate() {
            match *f {
                Fate::Committed(t) => {
                    delays.push((t - self.arrivals[r]) as f64 / SECOND as f64);
                    if t <= duration {
                        in_window += 1;
                    }
                }
                Fate::Refused => refused += 1,
                Fate::Failed | Fate::Open => failed += 1,
            }
        }
        let committed = delays.len() as u64;
        let secs = duration as f64 / SECOND as f64;
        let mean = if delays.is_empty() { 0.0 } else { delays.iter().sum::<f64>() / delays.len() as f64 };
        delays.sort_by(f64::total_cmp);
        BenchmarkRow {
            op: self.op,
            workload: self.workload,
            throughput: in_window as f64 / secs,
            success_rate: if generated == 0 { 1.0 } else { committed as f64 / generated as f64 },
            delay: mean,
            p50: percentile(&delays, 0.50),
            p95: percentile(&delays, 0.95),
            p99: percentile(&delays, 0.99),
            generated,
            submitted: generated - refused,
            refused,
            committed,
            failed,
            utilization: (self.busy_time as f64 / (self.config.cost.cores as f64 * duration as f64)).min(1.0),
            flag: limited.then(|| "generator-saturated".to_string()),
        }
    }
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}
