// Scratch harness for inspecting ablation behavior while tuning defaults.

use ordmil::datamodel::ShiftConfig;
use ordmil::training::{run_ablation, TrainConfig, Variant};

fn main() {
    let shift = ShiftConfig::default();
    let train = TrainConfig::default();
    let seeds: Vec<u64> = (1..=5).collect();
    let t0 = std::time::Instant::now();
    let report = run_ablation(&shift, &train, &Variant::ALL, &seeds, None).unwrap();
    let elapsed = t0.elapsed();
    println!("elapsed: {:.1?}s total", elapsed);
    for v in &report.variants {
        let accs: Vec<String> = v.runs.iter().map(|r| format!("{:.3}", r.instance.accuracy)).collect();
        let aligns: Vec<String> = v.runs.iter().map(|r| format!("{:.2}", r.alignment.mean)).collect();
        println!(
            "{:<12} mean_acc={:.4} mean_f1={:.4} mean_qwk={:?} align={:.3} | accs={:?} aligns={:?}",
            v.variant,
            v.mean_instance_accuracy,
            v.mean_instance_macro_f1,
            v.mean_instance_qwk.map(|q| (q * 1000.0).round() / 1000.0),
            v.mean_alignment,
            accs,
            aligns
        );
    }
}
