//! Generator-loss ablation as a manifest experiment: four data-free arms that
//! differ only in the generator objective, plus a KD reference arm.
//! Writes per-arm reports, logs and `comparison.csv` to the output directory.
//!
//! ```text
//! cargo run --release --example generator_ablation -- teacher.ckpt [out_dir] [epochs]
//! ```

use dfkd_beam::experiment::{run_manifest, Arm, ArmPipeline, Manifest};
use dfkd_beam::losses::{GeneratorLossKind, KdConfig};
use dfkd_beam::scenario::{make_dataset, ScenarioConfig, Split};

fn main() -> dfkd_beam::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let teacher = args.next().expect("usage: generator_ablation teacher.ckpt [out_dir] [epochs]");
    let out = args.next().unwrap_or_else(|| "ablation".into());
    let epochs: usize = args.next().map_or(50, |a| a.parse().expect("epochs must be an integer"));

    let kl = KdConfig::kl(KdConfig::DEFAULT_TEMPERATURE);
    let df = |name: &str, kind| Arm {
        kd: Some(kl.clone().with_generator_loss(kind)),
        epochs: Some(epochs),
        generator_epochs: Some(epochs),
        ..Arm::new(name, ArmPipeline::DistillDf)
    };
    let manifest = Manifest {
        name: "generator-loss-ablation".into(),
        seed: 0,
        dataset: "default".into(),
        teacher: Some(teacher.into()),
        teacher_epochs: None,
        eval_split: Split::Test,
        arms: vec![
            df("weighted", GeneratorLossKind::Weighted),
            df("metadata_only", GeneratorLossKind::MetadataOnly),
            df("activation_only", GeneratorLossKind::ActivationOnly),
            df("entropy_only", GeneratorLossKind::EntropyOnly),
            Arm { kd: Some(kl.clone()), ..Arm::new("kd", ArmPipeline::DistillKd) },
        ],
    };
    manifest.validate()?;

    let ds = make_dataset(&ScenarioConfig::default())?;
    let outcome = run_manifest(&manifest, &ds, Some(out.as_ref()))?;
    println!("{:<16} mean top-1 {:.3}", "teacher", outcome.teacher_report.mean_top1());
    for arm in &outcome.arms {
        match &arm.result {
            Ok(r) => println!(
                "{:<16} top-1 v=0 {:.3}  mean {:.3}  top-5 mean {:.3}",
                arm.name,
                r.offsets[0].top1,
                r.mean_top1(),
                r.mean_top5()
            ),
            Err(e) => println!("{:<16} failed: {e}", arm.name),
        }
    }
    println!("wrote {out}/comparison.csv");
    Ok(())
}
