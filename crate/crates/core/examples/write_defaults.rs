//! Regenerates the bundled cluster and profile files under `configs/`.

use std::fs;
use std::path::PathBuf;

use splitplace::model::{ClusterConfig, ProfileSet};

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("configs"));
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join("cluster.json"),
        ClusterConfig::default_cluster().to_json() + "\n",
    )?;
    fs::write(
        dir.join("profiles.json"),
        ProfileSet::defaults().to_json() + "\n",
    )?;
    println!("wrote {}", dir.display());
    Ok(())
}
