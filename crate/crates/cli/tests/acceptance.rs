//! Acceptance suite. Prints one `PASS`/`FAIL`/`SKIP` line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Tolerances are pinned here, next to each check.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use batchrender::bench::InProcessLauncher;
use batchrender::scenario::{batch_params, random_batch};
use batchrender::{
    apply_clip_remap, compose_trs, make_renderer, partition_atlas, plan_layout, rotation_from_hpr, run_benchmark,
    stitch, BackendKind, BatchState, BenchConfig, BenchReport, ClipRemap, Error, FrameBatch, RenderPath, RenderStats,
    ShadingConfig, SoftRenderer, Stage, TileLayout, Vec3, Vec4,
};
use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_BATCHES: usize = 50;
const ORACLE_SIDE: u32 = 64;
const ORACLE_BUDGET_SECONDS: f64 = 60.0;
const ISOLATION_BATCHES: u64 = 10;
const TRANSFORM_CASES: usize = 1000;
const COMPOSE_TOL: f64 = 1e-5;
const ORTHO_TOL: f64 = 1e-6;
const REMAP_TOL: f64 = 1e-6;
const MAX_LAYOUT_SCENES: usize = 4096;
const DETERMINISM_STEPS: usize = 100;
const DETERMINISM_SCENES: usize = 8;
const THROUGHPUT_SCENES: usize = 64;
const THROUGHPUT_FRAMES: usize = 100;
const THROUGHPUT_TRIALS: usize = 3;
const GPU_MIN_IDENTICAL: f64 = 0.99;
const GPU_MAX_CHANNEL_DIFF: u8 = 3;
const GPU_SPEEDUP_SCENES: usize = 1024;
const GPU_MIN_SPEEDUP: f64 = 10.0;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

type Check = fn() -> Outcome;

fn main() {
    let checks: [(&str, Check); 9] = [
        ("oracle_equivalence", oracle_equivalence),
        ("counter_laws", counter_laws),
        ("tile_isolation", tile_isolation),
        ("transform_algebra", transform_algebra),
        ("layout_properties", layout_properties),
        ("determinism", determinism),
        ("soft_throughput_ordering", soft_throughput_ordering),
        ("gpu_cross_backend_agreement", gpu_agreement),
        ("gpu_instancing_speedup", gpu_speedup),
    ];
    // libtest-style filter: `cargo test --test acceptance -- layout`.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in checks {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS {name} ({secs:.1}s): {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {d}");
            }
            Outcome::Skip(d) => println!("SKIP {name}: {d}"),
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn soft_render(r: &mut SoftRenderer, state: &BatchState, path: RenderPath) -> (FrameBatch, RenderStats) {
    let layout = TileLayout::new(state.scene_count(), state.width(), state.height()).unwrap();
    match path {
        RenderPath::Naive => r
            .render_naive(state, state.width(), state.height(), &ShadingConfig::default())
            .unwrap(),
        RenderPath::Tiled => {
            let (t, st) = r.render_tiled(state, &layout, &ShadingConfig::default()).unwrap();
            (partition_atlas(&t.color, &layout).unwrap(), st)
        }
        RenderPath::Instanced => {
            let (t, st) = r.render_instanced(state, &layout, &ShadingConfig::default()).unwrap();
            (partition_atlas(&t.color, &layout).unwrap(), st)
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = SoftRenderer::new();
    for k in 0..ORACLE_BATCHES {
        let (seed, s, i) = batch_params(k);
        let state = random_batch(seed, s, i, ORACLE_SIDE, ORACLE_SIDE).unwrap();
        let naive = soft_render(&mut r, &state, RenderPath::Naive).0;
        for path in [RenderPath::Tiled, RenderPath::Instanced] {
            let other = soft_render(&mut r, &state, path).0;
            if other != naive {
                let bad = naive.as_bytes().iter().zip(other.as_bytes()).filter(|(a, b)| a != b).count();
                return Outcome::Fail(format!("batch {k} (S={s}, I={i}) {path:?}: {bad} bytes differ"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        secs <= ORACLE_BUDGET_SECONDS,
        format!("{ORACLE_BATCHES} batches byte-exact across 3 paths in {secs:.1}s (budget {ORACLE_BUDGET_SECONDS}s)"),
    )
}

fn bench_bin() -> &'static str {
    env!("CARGO_BIN_EXE_bench")
}

fn run_cli(args: &[String], out: &Path) -> Result<BenchReport, String> {
    let status = Command::new(bench_bin())
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!(
            "bench {} exited {}: {}",
            args.join(" "),
            status.status,
            String::from_utf8_lossy(&status.stderr).trim()
        ));
    }
    let text = std::fs::read_to_string(out).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn strs(a: &[&str]) -> Vec<String> {
    a.iter().map(|s| s.to_string()).collect()
}

fn counter_laws() -> Outcome {
    // Renderer level: counts follow from the batch shape alone.
    let mut r = SoftRenderer::new();
    for k in 0..12 {
        let (seed, s, i) = batch_params(k);
        let state = random_batch(seed, s, i, 16, 16).unwrap();
        let groups = state.groups().len() as u64;
        let per_scene: u64 = state.groups().iter().map(|g| g.instances_per_scene() as u64).sum();
        let s = s as u64;
        let n = soft_render(&mut r, &state, RenderPath::Naive).1;
        let t = soft_render(&mut r, &state, RenderPath::Tiled).1;
        let m = soft_render(&mut r, &state, RenderPath::Instanced).1;
        let got = [n.target_binds, n.draw_calls, t.target_binds, m.draw_calls, m.target_binds];
        let want = [s, s * per_scene, 1, groups, 1];
        if got != want {
            return Outcome::Fail(format!("batch {k}: [naive binds, naive draws, tiled binds, inst draws, inst binds] = {got:?}, want {want:?}"));
        }
    }
    // Bench level: every stage through the CLI, with the cart-pole scene's
    // three single-instance groups.
    let dir = tempfile::tempdir().unwrap();
    let (scenes, frames) = (6u64, 4u64);
    for stage in Stage::ALL {
        let workers = if stage == Stage::Workers { "3" } else { "1" };
        let args = strs(&[
            "--stage",
            stage.name(),
            "--scenes",
            "6",
            "--width",
            "16",
            "--height",
            "16",
            "--frames",
            "4",
            "--warmup",
            "2",
            "--workers",
            workers,
        ]);
        let rep = match run_cli(&args, &dir.path().join(format!("{stage}.json"))) {
            Ok(r) => r,
            Err(e) => return Outcome::Fail(e),
        };
        let st = rep.stats;
        let ok = match stage {
            Stage::Naive => st.target_binds == scenes * frames && st.draw_calls == scenes * 3 * frames,
            Stage::Tiled | Stage::Readback => st.target_binds == frames && st.draw_calls == scenes * 3 * frames,
            Stage::Instanced => st.target_binds == frames && st.draw_calls == 3 * frames,
            Stage::Workers => st.target_binds == 3 * frames && st.draw_calls == 3 * 3 * frames,
        };
        if !ok || !rep.counter_laws_ok || st.frames_produced != scenes * frames {
            return Outcome::Fail(format!("{stage} stage: {st:?}, reported violations {:?}", rep.counter_law_violations));
        }
    }
    Outcome::Pass("12 random batches x 3 paths and all 5 bench stages match exactly".into())
}

fn tile_isolation() -> Outcome {
    let mut r = SoftRenderer::new();
    for seed in 0..ISOLATION_BATCHES {
        let (_, s, i) = batch_params(seed as usize + 1);
        let s = s.max(2);
        let mut state = random_batch(7000 + seed, s, i, 32, 32).unwrap();
        let before: Vec<FrameBatch> = [RenderPath::Naive, RenderPath::Tiled, RenderPath::Instanced]
            .into_iter()
            .map(|p| soft_render(&mut r, &state, p).0)
            .collect();
        for g in 0..state.groups().len() {
            let group = &state.groups()[g];
            if group.is_shared() {
                continue;
            }
            let (p, h) = (group.positions().clone(), group.hprs().clone());
            let mut sc = group.scales().clone();
            sc.slice_mut(s![0, .., ..]).mapv_inplace(|v| v * 100.0);
            state.set_instance_transforms(g, p, h, sc).unwrap();
        }
        for (k, path) in [RenderPath::Naive, RenderPath::Tiled, RenderPath::Instanced]
            .into_iter()
            .enumerate()
        {
            let after = soft_render(&mut r, &state, path).0;
            for sc in 1..s {
                if before[k].frame(sc) != after.frame(sc) {
                    return Outcome::Fail(format!("batch {seed} {path:?}: scene {sc} changed"));
                }
            }
        }
    }
    Outcome::Pass(format!("{ISOLATION_BATCHES} batches, other tiles byte-identical on all paths"))
}

fn rotate_axis(p: [f64; 3], axis: usize, deg: f64) -> [f64; 3] {
    let (s, c) = deg.to_radians().sin_cos();
    let (i, j) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let mut out = p;
    out[i] = c * p[i] - s * p[j];
    out[j] = s * p[i] + c * p[j];
    out
}

fn v(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn transform_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut v3 = |lo: f64, hi: f64| [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)];
    let (mut compose_err, mut ortho_err, mut remap_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut grid = ChaCha8Rng::seed_from_u64(0x711e);
    for _ in 0..TRANSFORM_CASES {
        let (pos, hpr, scale, pt) = (v3(-100.0, 100.0), v3(-360.0, 360.0), v3(0.01, 100.0), v3(-1.0, 1.0));
        let m = compose_trs(v(pos), v(hpr), v(scale)).unwrap();
        let got = m.transform_point(v(pt));
        let got = [got.x, got.y, got.z];
        // Scale, roll about Y, pitch about X, heading about Z, translate.
        let mut want = [pt[0] * scale[0], pt[1] * scale[1], pt[2] * scale[2]];
        want = rotate_axis(want, 1, hpr[2]);
        want = rotate_axis(want, 0, hpr[1]);
        want = rotate_axis(want, 2, hpr[0]);
        for k in 0..3 {
            compose_err = compose_err.max((got[k] - (want[k] + pos[k])).abs());
        }

        let r = rotation_from_hpr(v(hpr)).unwrap();
        let rtr = r.transpose() * r;
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                ortho_err = ortho_err.max((rtr.at(i, j) - id).abs());
            }
        }
        ortho_err = ortho_err.max((r.det3() - 1.0).abs());

        let rows = grid.random_range(1..=64u32);
        let cols = grid.random_range(1..=64u32);
        let (row, col) = (grid.random_range(0..rows), grid.random_range(0..cols));
        let w = grid.random_range(0.1..50.0);
        let remap = ClipRemap::for_tile(rows, cols, row, col);
        for (x, y) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
            let o = apply_clip_remap(Vec4::new(x * w, y * w, 0.0, w), &remap);
            // Tile edges in NDC: column col spans [-1 + 2c/C, -1 + 2(c+1)/C],
            // row 0 is at the top.
            let want_x = if x < 0.0 { -1.0 + 2.0 * col as f64 / cols as f64 } else { -1.0 + 2.0 * (col + 1) as f64 / cols as f64 };
            let want_y = if y > 0.0 { 1.0 - 2.0 * row as f64 / rows as f64 } else { 1.0 - 2.0 * (row + 1) as f64 / rows as f64 };
            remap_err = remap_err.max((o.x / o.w - want_x).abs()).max((o.y / o.w - want_y).abs());
        }
    }
    check(
        compose_err <= COMPOSE_TOL && ortho_err <= ORTHO_TOL && remap_err <= REMAP_TOL,
        format!(
            "{TRANSFORM_CASES} cases: compose max err {compose_err:.2e} (tol {COMPOSE_TOL:e}), \
             orthonormality {ortho_err:.2e} (tol {ORTHO_TOL:e}), remap corners {remap_err:.2e} (tol {REMAP_TOL:e})"
        ),
    )
}

fn layout_properties() -> Outcome {
    for s in 1..=MAX_LAYOUT_SCENES {
        let (w, h) = (2u32, 1u32);
        let l = match TileLayout::new(s, w, h) {
            Ok(l) => l,
            Err(e) => return Outcome::Fail(format!("S={s}: {e}")),
        };
        let mut c = 1usize;
        while c * c < s {
            c += 1;
        }
        if (l.cols as usize, l.rows as usize) != (c, s.div_ceil(c)) {
            return Outcome::Fail(format!("S={s}: grid {}x{}, want {c}x{}", l.cols, l.rows, s.div_ceil(c)));
        }
        let mut covered = HashSet::new();
        for k in 0..s {
            let t = l.tile(k).unwrap();
            if (t.row as usize, t.col as usize) != (k / c, k % c) {
                return Outcome::Fail(format!("S={s}: scene {k} at ({}, {})", t.row, t.col));
            }
            for y in t.rect.y0..t.rect.y0 + t.rect.height {
                for x in t.rect.x0..t.rect.x0 + t.rect.width {
                    if x >= l.atlas_width() || y >= l.atlas_height() || !covered.insert((x, y)) {
                        return Outcome::Fail(format!("S={s}: tile {k} overlaps or leaves the atlas at ({x}, {y})"));
                    }
                }
            }
        }
        let data: Vec<u8> = (0..s * (w * h * 4) as usize).map(|i| (i * 7 + s) as u8).collect();
        let frames = FrameBatch::new(s, w, h, data).unwrap();
        let back = partition_atlas(&stitch(&frames, &l, [0, 0, 0, 0]).unwrap(), &l).unwrap();
        if back != frames {
            return Outcome::Fail(format!("S={s}: partition(stitch(x)) != x"));
        }
    }
    match plan_layout(10_000, 512, 512, 16384) {
        Err(Error::AtlasTooLarge { .. }) => Outcome::Pass(format!(
            "S=1..={MAX_LAYOUT_SCENES} grid, disjoint, round trip; S=10000 at 512x512 rejected as atlas_too_large"
        )),
        other => Outcome::Fail(format!("S=10000 at 512x512 gave {other:?}")),
    }
}

fn determinism_args(workers: usize) -> Vec<String> {
    let mut a = strs(&["--stage", "workers", "--width", "64", "--height", "64", "--warmup", "0", "--seed", "1234"]);
    a.extend(["--scenes".into(), DETERMINISM_SCENES.to_string()]);
    a.extend(["--frames".into(), DETERMINISM_STEPS.to_string()]);
    a.extend(["--workers".into(), workers.to_string()]);
    a
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut sums = Vec::new();
    for (run, workers) in [1, 1, 1, 4].into_iter().enumerate() {
        match run_cli(&determinism_args(workers), &dir.path().join(format!("run{run}.json"))) {
            Ok(r) => sums.push((workers, r.final_frame_checksum)),
            Err(e) => return Outcome::Fail(e),
        }
    }
    let first = &sums[0].1;
    check(
        sums.iter().all(|(_, c)| c == first),
        format!(
            "{DETERMINISM_STEPS} steps, S={DETERMINISM_SCENES}: checksums {:?}",
            sums.iter().map(|(k, c)| format!("k={k}:{}", &c[..12])).collect::<Vec<_>>()
        ),
    )
}

fn best_fps(stage: Stage, backend: BackendKind, scenes: usize) -> Result<f64, Error> {
    let mut best = 0.0f64;
    for _ in 0..THROUGHPUT_TRIALS {
        let cfg = BenchConfig {
            backend,
            ..BenchConfig::new(stage, scenes, THROUGHPUT_FRAMES)
        };
        best = best.max(run_benchmark(&cfg, &InProcessLauncher)?.fps);
    }
    Ok(best)
}

fn soft_throughput_ordering() -> Outcome {
    let naive = best_fps(Stage::Naive, BackendKind::Soft, THROUGHPUT_SCENES).unwrap();
    let inst = best_fps(Stage::Instanced, BackendKind::Soft, THROUGHPUT_SCENES).unwrap();
    check(
        inst >= naive,
        format!("S={THROUGHPUT_SCENES}, 64x64, N={THROUGHPUT_FRAMES}, best of {THROUGHPUT_TRIALS}: instanced {inst:.0} fps, naive {naive:.0} fps"),
    )
}

fn gpu_agreement() -> Outcome {
    let mut gpu = match make_renderer(BackendKind::Gpu) {
        Ok(r) => r,
        Err(e) => return Outcome::Skip(format!("no GPU device ({e})")),
    };
    let mut soft = SoftRenderer::new();
    let (mut same, mut total, mut max_diff) = (0usize, 0usize, 0u8);
    for k in 0..ORACLE_BATCHES {
        let (seed, s, i) = batch_params(k);
        let state = random_batch(seed, s, i, ORACLE_SIDE, ORACLE_SIDE).unwrap();
        let layout = TileLayout::new(s, ORACLE_SIDE, ORACLE_SIDE).unwrap();
        let want = soft_render(&mut soft, &state, RenderPath::Instanced).0;
        let mut got = FrameBatch::zeroed(s, ORACLE_SIDE, ORACLE_SIDE);
        if let Err(e) = gpu.render_into(&state, &layout, &ShadingConfig::default(), RenderPath::Instanced, &mut got) {
            return Outcome::Fail(format!("batch {k}: {e}"));
        }
        for (a, b) in want.as_bytes().chunks_exact(4).zip(got.as_bytes().chunks_exact(4)) {
            total += 1;
            same += (a == b) as usize;
            max_diff = a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).fold(max_diff, u8::max);
        }
    }
    let frac = same as f64 / total as f64;
    check(
        frac >= GPU_MIN_IDENTICAL && max_diff <= GPU_MAX_CHANNEL_DIFF,
        format!("{:.3}% identical pixels (min {}%), max channel diff {max_diff} (max {GPU_MAX_CHANNEL_DIFF})", frac * 100.0, GPU_MIN_IDENTICAL * 100.0),
    )
}

fn gpu_speedup() -> Outcome {
    if let Err(e) = make_renderer(BackendKind::Gpu) {
        return Outcome::Skip(format!("no GPU device ({e})"));
    }
    let naive = best_fps(Stage::Naive, BackendKind::Gpu, GPU_SPEEDUP_SCENES);
    let inst = best_fps(Stage::Instanced, BackendKind::Gpu, GPU_SPEEDUP_SCENES);
    match (naive, inst) {
        (Ok(n), Ok(i)) => check(
            i >= GPU_MIN_SPEEDUP * n,
            format!("S={GPU_SPEEDUP_SCENES}: instanced {i:.0} fps vs naive {n:.0} fps ({:.1}x, min {GPU_MIN_SPEEDUP}x)", i / n),
        ),
        (Err(e), _) | (_, Err(e)) => Outcome::Fail(e.to_string()),
    }
}
