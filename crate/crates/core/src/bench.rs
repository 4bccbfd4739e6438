//! Throughput benchmark over the cart-pole environment.
//!
//! Every stage runs the same seeded workload: reset, `warmup` untimed steps,
//! then `frames` timed steps with uniform random actions. Timing covers
//! dynamics, rendering and readback together.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::BackendKind;
use crate::env::{action_rng, make_cartpole_shard, EnvConfig};
use crate::error::{Error, Result};
use crate::soft::{RenderPath, RenderStats};
use crate::tiling::{combine_frame_digests, frame_digest, from_hex, plan_layout, to_hex, DEFAULT_MAX_ATLAS_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Naive,
    Tiled,
    Readback,
    Instanced,
    Workers,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Naive, Stage::Tiled, Stage::Readback, Stage::Instanced, Stage::Workers];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Naive => "naive",
            Stage::Tiled => "tiled",
            Stage::Readback => "readback",
            Stage::Instanced => "instanced",
            Stage::Workers => "workers",
        }
    }

    pub fn render_path(self) -> RenderPath {
        match self {
            Stage::Naive => RenderPath::Naive,
            Stage::Tiled | Stage::Readback => RenderPath::Tiled,
            Stage::Instanced | Stage::Workers => RenderPath::Instanced,
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

fn default_warmup() -> usize {
    10
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub stage: Stage,
    pub scenes: usize,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub backend: BackendKind,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
}

impl BenchConfig {
    pub fn new(stage: Stage, scenes: usize, frames: usize) -> Self {
        BenchConfig {
            stage,
            scenes,
            width: 64,
            height: 64,
            frames,
            backend: BackendKind::Soft,
            workers: 1,
            seed: 0,
            warmup: default_warmup(),
        }
    }

    /// Rejects configurations that cannot run, before any work happens.
    pub fn validate(&self) -> Result<()> {
        if self.scenes < 1 {
            return Err(Error::InvalidSpec("scene_count must be ≥ 1".into()));
        }
        if self.frames < 1 {
            return Err(Error::Config("frames must be ≥ 1".into()));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::Config("width and height must be ≥ 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::Config("workers must be ≥ 1".into()));
        }
        if self.workers > 1 && self.stage != Stage::Workers {
            return Err(Error::Config(format!(
                "workers > 1 requires stage=workers (got stage={})",
                self.stage
            )));
        }
        if self.workers > self.scenes {
            return Err(Error::Config(format!(
                "{} workers cannot split {} scenes",
                self.workers, self.scenes
            )));
        }
        let largest = shards(self.scenes, self.workers)[0].1;
        plan_layout(largest, self.width, self.height, DEFAULT_MAX_ATLAS_DIM)?;
        Ok(())
    }

    /// Readback is a separate step only on the hardware backend.
    pub fn readback_noop(&self) -> bool {
        self.stage == Stage::Readback && self.backend == BackendKind::Soft
    }

    fn env_config(&self) -> EnvConfig {
        let mut c = EnvConfig::new(self.scenes);
        c.width = self.width;
        c.height = self.height;
        c.backend = self.backend;
        c.seed = self.seed;
        c.render_path = self.stage.render_path();
        c
    }
}

/// `(offset, count)` per worker; the first `scenes % workers` get one extra.
pub fn shards(scenes: usize, workers: usize) -> Vec<(usize, usize)> {
    let base = scenes / workers;
    let extra = scenes % workers;
    let mut offset = 0;
    (0..workers)
        .map(|w| {
            let n = base + usize::from(w < extra);
            let shard = (offset, n);
            offset += n;
            shard
        })
        .collect()
}

/// One shard of work, as sent to a worker process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerTask {
    pub index: usize,
    pub config: BenchConfig,
    pub scene_offset: usize,
    pub scenes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerReport {
    pub index: usize,
    pub scene_offset: usize,
    pub scenes: usize,
    pub wall_seconds: f64,
    pub fps: f64,
    pub stats: RenderStats,
    /// Hex SHA-256 of each scene's final frame, in scene order.
    pub frame_checksums: Vec<String>,
}

/// Runs `scenes` scenes starting at global index `offset` through `path`.
pub fn run_shard(config: &BenchConfig, index: usize, offset: usize, scenes: usize) -> Result<WorkerReport> {
    let mut env = make_cartpole_shard(&config.env_config(), offset, scenes)?;
    env.reset(config.seed)?;
    let mut rngs: Vec<_> = (0..scenes).map(|s| action_rng(config.seed, (offset + s) as u64)).collect();
    let mut actions = vec![0.0; scenes];
    let mut step = |env: &mut crate::env::CartPoleEnv| -> Result<()> {
        for (a, rng) in actions.iter_mut().zip(rngs.iter_mut()) {
            *a = rng.random_range(-1.0..=1.0);
        }
        env.step(&actions)?;
        Ok(())
    };
    for _ in 0..config.warmup {
        step(&mut env)?;
    }
    let before = env.renderer_stats();
    let start = Instant::now();
    for _ in 0..config.frames {
        step(&mut env)?;
    }
    let wall_seconds = start.elapsed().as_secs_f64().max(1e-9);
    let obs = env.observations();
    Ok(WorkerReport {
        index,
        scene_offset: offset,
        scenes,
        wall_seconds,
        fps: (scenes * config.frames) as f64 / wall_seconds,
        stats: env.renderer_stats() - before,
        frame_checksums: (0..scenes).map(|s| to_hex(&frame_digest(obs.frame(s)))).collect(),
    })
}

/// Runs worker shards somewhere and collects their reports.
pub trait WorkerLauncher {
    fn launch(&self, tasks: &[WorkerTask]) -> Result<Vec<WorkerReport>>;
}

/// Runs shards one after another in this process.
#[derive(Debug, Default, Clone, Copy)]
pub struct InProcessLauncher;

impl WorkerLauncher for InProcessLauncher {
    fn launch(&self, tasks: &[WorkerTask]) -> Result<Vec<WorkerReport>> {
        tasks
            .iter()
            .map(|t| run_shard(&t.config, t.index, t.scene_offset, t.scenes))
            .collect()
    }
}

/// Spawns one process per shard: `program args...` reads a [`WorkerTask`]
/// as JSON on stdin and writes a [`WorkerReport`] as JSON on stdout.
#[derive(Debug, Clone)]
pub struct ProcessLauncher {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ProcessLauncher {
    pub fn new(program: impl Into<PathBuf>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ProcessLauncher {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl WorkerLauncher for ProcessLauncher {
    fn launch(&self, tasks: &[WorkerTask]) -> Result<Vec<WorkerReport>> {
        let worker_err = |index, reason: String| Error::Worker { index, reason };
        let mut children = Vec::with_capacity(tasks.len());
        for t in tasks {
            let mut child = Command::new(&self.program)
                .args(&self.args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn()
                .map_err(|e| Error::io(&self.program, e))?;
            let payload = serde_json::to_vec(t).expect("task serializes");
            let mut stdin = child.stdin.take().expect("piped");
            stdin.write_all(&payload).map_err(|e| worker_err(t.index, e.to_string()))?;
            drop(stdin);
            children.push((t.index, child));
        }
        let mut reports = Vec::with_capacity(children.len());
        for (index, child) in children {
            let out = child.wait_with_output().map_err(|e| worker_err(index, e.to_string()))?;
            if !out.status.success() {
                let stderr = String::from_utf8_lossy(&out.stderr).trim().to_string();
                return Err(worker_err(index, format!("exited with {}: {stderr}", out.status)));
            }
            let report: WorkerReport =
                serde_json::from_slice(&out.stdout).map_err(|e| worker_err(index, format!("bad report: {e}")))?;
            reports.push(report);
        }
        Ok(reports)
    }
}

/// Entry point for a worker process: task on stdin, report on stdout.
/// Returns the process exit code.
pub fn worker_main() -> i32 {
    let mut input = String::new();
    if let Err(e) = std::io::stdin().read_to_string(&mut input) {
        eprintln!("worker: reading task: {e}");
        return 2;
    }
    let task: WorkerTask = match serde_json::from_str(&input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("worker: bad task: {e}");
            return 2;
        }
    };
    match run_shard(&task.config, task.index, task.scene_offset, task.scenes) {
        Ok(report) => {
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            0
        }
        Err(e) => {
            eprintln!("worker {}: {e}", task.index);
            if matches!(e, Error::BackendUnavailable(_)) {
                3
            } else {
                1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostInfo {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub hostname: String,
}

impl HostInfo {
    pub fn current() -> Self {
        let hostname = std::fs::read_to_string("/proc/sys/kernel/hostname")
            .ok()
            .or_else(|| std::env::var("HOSTNAME").ok())
            .or_else(|| std::env::var("COMPUTERNAME").ok())
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|| "unknown".into());
        HostInfo {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            hostname,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub wall_seconds: f64,
    /// Observation frames per wall-second, `S * N / wall_seconds`; summed
    /// over workers for the workers stage.
    pub fps: f64,
    pub stats: RenderStats,
    pub workers: Vec<WorkerReport>,
    pub host: HostInfo,
    /// Combined digest of every scene's final frame; independent of sharding.
    pub final_frame_checksum: String,
    pub counter_laws_ok: bool,
    pub counter_law_violations: Vec<String>,
    pub readback_noop: bool,
    /// Timed steps include the stub dynamics, not just rendering.
    pub includes_dynamics: bool,
    pub notes: Vec<String>,
}

/// Instances per scene for each cart-pole group.
fn cartpole_instances() -> Vec<usize> {
    crate::env::cartpole_scene_spec(1, 1, 1)
        .groups
        .iter()
        .map(|g| g.instances_per_scene)
        .collect()
}

/// Checks the counters of `frames` steps over `scenes` scenes against the
/// stage's accounting law. `instances` holds instances per scene per group.
pub fn counter_law_violations(
    stage: Stage,
    stats: &RenderStats,
    scenes: usize,
    instances: &[usize],
    frames: usize,
) -> Vec<String> {
    let (s, n) = (scenes as u64, frames as u64);
    let per_scene: u64 = instances.iter().map(|&i| i as u64).sum();
    let mut expect = vec![("frames_produced", stats.frames_produced, s * n)];
    match stage {
        Stage::Naive => {
            expect.push(("target_binds", stats.target_binds, s * n));
            expect.push(("draw_calls", stats.draw_calls, s * per_scene * n));
        }
        Stage::Tiled | Stage::Readback => {
            expect.push(("target_binds", stats.target_binds, n));
            expect.push(("draw_calls", stats.draw_calls, s * per_scene * n));
        }
        Stage::Instanced | Stage::Workers => {
            expect.push(("target_binds", stats.target_binds, n));
            expect.push(("draw_calls", stats.draw_calls, instances.len() as u64 * n));
            expect.push(("instances_drawn", stats.instances_drawn, s * per_scene * n));
        }
    }
    expect
        .into_iter()
        .filter(|(_, got, want)| got != want)
        .map(|(name, got, want)| format!("{} stage: {name} = {got}, expected {want}", stage.name()))
        .collect()
}

/// Runs the benchmark; the workers stage hands its shards to `launcher`.
pub fn run_benchmark(config: &BenchConfig, launcher: &dyn WorkerLauncher) -> Result<BenchReport> {
    config.validate()?;
    let instances = cartpole_instances();
    let workers = if config.stage == Stage::Workers {
        let tasks: Vec<WorkerTask> = shards(config.scenes, config.workers)
            .into_iter()
            .enumerate()
            .map(|(index, (offset, scenes))| WorkerTask {
                index,
                config: config.clone(),
                scene_offset: offset,
                scenes,
            })
            .collect();
        let mut reports = launcher.launch(&tasks)?;
        reports.sort_by_key(|r| r.index);
        reports
    } else {
        vec![run_shard(config, 0, 0, config.scenes)?]
    };

    let mut violations = Vec::new();
    for w in &workers {
        for v in counter_law_violations(config.stage, &w.stats, w.scenes, &instances, config.frames) {
            violations.push(format!("worker {}: {v}", w.index));
        }
    }
    let stats = workers.iter().fold(RenderStats::default(), |acc, w| acc + w.stats);
    let digests: Vec<[u8; 32]> = workers
        .iter()
        .flat_map(|w| w.frame_checksums.iter())
        .map(|h| from_hex(h).ok_or_else(|| Error::Config(format!("malformed frame checksum {h:?}"))))
        .collect::<Result<_>>()?;
    if digests.len() != config.scenes {
        return Err(Error::CountMismatch {
            what: "frame checksums".into(),
            expected: config.scenes,
            actual: digests.len(),
        });
    }
    let wall_seconds = workers.iter().map(|w| w.wall_seconds).fold(0.0, f64::max);
    let fps = workers.iter().map(|w| w.fps).sum();

    let mut notes = Vec::new();
    if config.readback_noop() {
        notes.push("readback stage on the soft backend: frames already live in host memory, so it runs the tiled path".into());
    }
    if config.stage == Stage::Workers {
        notes.push("workers ran concurrently; wall_seconds is the slowest worker, fps the sum over workers".into());
    }

    Ok(BenchReport {
        config: config.clone(),
        wall_seconds,
        fps,
        stats,
        workers,
        host: HostInfo::current(),
        final_frame_checksum: combine_frame_digests(digests),
        counter_laws_ok: violations.is_empty(),
        counter_law_violations: violations,
        readback_noop: config.readback_noop(),
        includes_dynamics: true,
        notes,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    stage: &'a str,
    backend: String,
    scenes: usize,
    width: u32,
    height: u32,
    frames: usize,
    workers: usize,
    seed: u64,
    worker: usize,
    scene_offset: usize,
    worker_scenes: usize,
    wall_seconds: f64,
    fps: f64,
    target_binds: u64,
    draw_calls: u64,
    instances_drawn: u64,
    matrix_uploads: u64,
    frames_produced: u64,
    total_fps: f64,
    final_frame_checksum: &'a str,
    counter_laws_ok: bool,
}

/// Serializes `report`; CSV has one row per worker.
pub fn format_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let c = &report.config;
            for wr in &report.workers {
                w.serialize(CsvRow {
                    stage: c.stage.name(),
                    backend: c.backend.to_string(),
                    scenes: c.scenes,
                    width: c.width,
                    height: c.height,
                    frames: c.frames,
                    workers: c.workers,
                    seed: c.seed,
                    worker: wr.index,
                    scene_offset: wr.scene_offset,
                    worker_scenes: wr.scenes,
                    wall_seconds: wr.wall_seconds,
                    fps: wr.fps,
                    target_binds: wr.stats.target_binds,
                    draw_calls: wr.stats.draw_calls,
                    instances_drawn: wr.stats.instances_drawn,
                    matrix_uploads: wr.stats.matrix_uploads,
                    frames_produced: wr.stats.frames_produced,
                    total_fps: report.fps,
                    final_frame_checksum: &report.final_frame_checksum,
                    counter_laws_ok: report.counter_laws_ok,
                })
                .expect("csv row serializes");
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
        }
    }
}

pub fn emit_report(report: &BenchReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_report(report, format)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(stage: Stage, scenes: usize, frames: usize) -> BenchConfig {
        BenchConfig {
            width: 16,
            height: 16,
            warmup: 2,
            ..BenchConfig::new(stage, scenes, frames)
        }
    }

    #[test]
    fn stage_counters() {
        let n = 3;
        let naive = run_benchmark(&quick(Stage::Naive, 4, n), &InProcessLauncher).unwrap();
        assert_eq!(naive.stats.target_binds, 4 * 3);
        assert_eq!(naive.stats.draw_calls, 12 * 3);
        let tiled = run_benchmark(&quick(Stage::Tiled, 4, n), &InProcessLauncher).unwrap();
        assert_eq!(tiled.stats.target_binds, 3);
        let inst = run_benchmark(&quick(Stage::Instanced, 4, n), &InProcessLauncher).unwrap();
        assert_eq!(inst.stats.draw_calls, 3 * 3);
        for r in [&naive, &tiled, &inst] {
            assert!(r.counter_laws_ok, "{:?}", r.counter_law_violations);
            assert!(r.fps > 0.0);
            assert_eq!(r.stats.frames_produced, 12);
        }
        assert_eq!(naive.final_frame_checksum, inst.final_frame_checksum);
        assert_eq!(tiled.final_frame_checksum, inst.final_frame_checksum);
    }

    #[test]
    fn violations_are_reported() {
        let stats = RenderStats {
            target_binds: 2,
            draw_calls: 3,
            instances_drawn: 6,
            matrix_uploads: 0,
            frames_produced: 2,
        };
        assert!(counter_law_violations(Stage::Instanced, &stats, 2, &[1, 2, 0], 1).len() == 1);
        assert!(counter_law_violations(Stage::Instanced, &stats, 2, &[1, 2, 0], 2).len() == 3);
    }

    #[test]
    fn shards_cover_scenes() {
        assert_eq!(shards(10, 4), vec![(0, 3), (3, 3), (6, 2), (8, 2)]);
        assert_eq!(shards(4, 4), vec![(0, 1), (1, 1), (2, 1), (3, 1)]);
    }

    #[test]
    fn workers_match_single_process() {
        let one = run_benchmark(&quick(Stage::Workers, 5, 4), &InProcessLauncher).unwrap();
        let mut cfg = quick(Stage::Workers, 5, 4);
        cfg.workers = 3;
        let three = run_benchmark(&cfg, &InProcessLauncher).unwrap();
        assert_eq!(one.final_frame_checksum, three.final_frame_checksum);
        assert_eq!(three.workers.len(), 3);
        assert_eq!(three.stats.frames_produced, 20);
        assert!(three.counter_laws_ok, "{:?}", three.counter_law_violations);
    }

    #[test]
    fn invalid_configs_fail_fast() {
        let mut c = quick(Stage::Instanced, 4, 1);
        c.workers = 2;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = quick(Stage::Workers, 2, 1);
        c.workers = 3;
        assert!(c.validate().is_err());
        assert!(quick(Stage::Naive, 0, 1).validate().is_err());
        assert!(quick(Stage::Naive, 1, 0).validate().is_err());
        let c = BenchConfig {
            width: 512,
            height: 512,
            ..BenchConfig::new(Stage::Instanced, 10_000, 1)
        };
        assert!(matches!(c.validate(), Err(Error::AtlasTooLarge { .. })));
    }

    #[test]
    fn readback_on_soft_is_flagged() {
        let r = run_benchmark(&quick(Stage::Readback, 2, 1), &InProcessLauncher).unwrap();
        assert!(r.readback_noop);
        assert!(!r.notes.is_empty());
        assert!(r.counter_laws_ok);
    }

    #[test]
    fn json_round_trip_and_csv_rows() {
        let mut cfg = quick(Stage::Workers, 4, 2);
        cfg.workers = 2;
        let r = run_benchmark(&cfg, &InProcessLauncher).unwrap();
        let back: BenchReport = serde_json::from_str(&format_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(back, r);
        let csv = format_report(&r, ReportFormat::Csv);
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        assert_eq!(rd.records().count(), 2);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("csv".parse::<ReportFormat>().unwrap(), ReportFormat::Csv);
        assert!("xml".parse::<ReportFormat>().is_err());
        assert_eq!("workers".parse::<Stage>().unwrap(), Stage::Workers);
    }
}
