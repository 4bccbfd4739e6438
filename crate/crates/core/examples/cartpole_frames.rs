//! Writes a few cart-pole observations as PPM files.
//!
//! `cargo run -p batchrender --example cartpole_frames -- <out_dir> [scenes] [steps]`

use batchrender::{make_cartpole_env, EnvConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "frames".into());
    let scenes: usize = args.next().map_or(Ok(4), |s| s.parse())?;
    let steps: usize = args.next().map_or(Ok(15), |s| s.parse())?;
    let mut config = EnvConfig::new(scenes);
    config.width = 128;
    config.height = 128;
    let mut env = make_cartpole_env(&config)?;
    env.reset(7)?;
    for _ in 0..steps {
        env.step(&vec![1.0; scenes])?;
    }
    std::fs::create_dir_all(&out)?;
    env.observations().write_ppm_dir(&out)?;
    println!("wrote {scenes} frames to {out}");
    Ok(())
}
