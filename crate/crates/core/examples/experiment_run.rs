//! Driving the experiment commands from code rather than the CLI. Each result
//! file embeds the configuration that produced it, so it can be fed back as a
//! config to reproduce itself.
//!
//! ```bash
//! cargo run --release --example experiment_run
//! ```

use resnet_spectra::experiments::{run, Command, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("resnet-spectra-example");
    let config = RunConfig {
        model: "tiny:2:2,4,8".parse()?,
        images: vec![0, 1],
        out: out.clone(),
        timestamp: Some("2026-01-01T00:00:00Z".into()),
        ..RunConfig::default()
    };
    for command in [Command::Propagate, Command::Bins] {
        for path in run(command, config.clone())? {
            let text = std::fs::read_to_string(&path)?;
            println!("== {} ({} lines)", path.display(), text.lines().count());
            for line in text.lines().skip(1).take(4) {
                println!("   {line}");
            }
        }
    }

    let bins = out.join("bins.csv");
    let before = std::fs::read(&bins)?;
    run(Command::Bins, RunConfig::from_path(&bins)?)?;
    println!(
        "rerun from embedded config identical: {}",
        std::fs::read(&bins)? == before
    );
    Ok(())
}
