//! End-to-end run writing scree, embeddings, distances, heat maps and a manifest.
use equimaps::data::DatasetSpec;
use equimaps::pipeline::{rerun_manifest, run_pipeline, RunConfig, Setting};

fn main() -> equimaps::Result<()> {
    let out = std::env::temp_dir().join("equimaps-pipeline-example");
    let _ = std::fs::remove_dir_all(&out);
    let mut cfg = RunConfig::new(DatasetSpec::torus(80, 1).with_copy(4, std::f64::consts::FRAC_PI_2), &out);
    cfg.nodes = 32;
    cfg.eps = Setting::Value(1.0);
    cfg.t2 = Some(4);
    let manifest = run_pipeline(&cfg)?;
    println!("resolved: {}", serde_json::to_string(&manifest.resolved).unwrap());
    for o in &manifest.outputs {
        println!("wrote {o}");
    }
    for w in &manifest.warnings {
        println!("warning: {w}");
    }
    let again = rerun_manifest(&out.join("manifest.json"), Some(&out.join("rerun")))?;
    println!("rerun resolved the same numerics: {}", again.resolved == manifest.resolved);
    Ok(())
}
