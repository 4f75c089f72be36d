use std::sync::Arc;
use robhaz::hazards::ExponentialBaseline;
use robhaz::mdpde::{fit_mdpde, FitOptions, ModelSpec, Theta};
use robhaz::simulation::*;

fn main() {
    let spec = ModelSpec::new(Arc::new(ExponentialBaseline), 3);
    // drifted beta2 = 1.6 data + 5% mean-31 contamination (criterion 6 contaminated cell)
    let drifted = Theta::new(vec![1.0], vec![1.0, 1.6, 1.0]);
    let mut config = SimConfig::new(spec.clone(), drifted, 100, 271828);
    config.censoring_target = 0.05;
    config.contamination = Some(Contamination { epsilon: 0.05, scheme: ContaminationScheme::ExponentialMean(31.0), keep_status: false });
    let mut rows = Vec::new();
    for rep in 0..200 {
        let data = simulate_dataset(&config, rep).unwrap();
        if let Ok(f) = fit_mdpde(&spec, &data, 0.5, None, &FitOptions::default()) {
            if f.converged {
                let w = 100.0 * (f.theta_hat.beta[1] - 1.0).powi(2) / f.sigma[(2, 2)];
                rows.push((f.theta_hat.beta[1], f.sigma[(2, 2)], w));
            }
        }
    }
    let mut s: Vec<f64> = rows.iter().map(|r| r.1).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    println!("Sigma22 quantiles: q10={:.2} q50={:.2} q75={:.2} q90={:.2} max={:.1}", s[n/10], s[n/2], s[3*n/4], s[9*n/10], s[n-1]);
    let misses: Vec<&(f64, f64, f64)> = rows.iter().filter(|r| r.2 <= 3.841).collect();
    println!("misses: {}/{}", misses.len(), n);
    let mb: Vec<f64> = misses.iter().map(|r| r.0).collect();
    let ms: Vec<f64> = misses.iter().map(|r| r.1).collect();
    println!("miss beta2: mean={:.3} min={:.3} max={:.3}", mb.iter().sum::<f64>()/mb.len() as f64,
        mb.iter().cloned().fold(f64::INFINITY, f64::min), mb.iter().cloned().fold(0.0f64, f64::max));
    println!("miss Sigma22: median={:.2}", { let mut m = ms.clone(); m.sort_by(|a,b| a.partial_cmp(b).unwrap()); m[m.len()/2] });
}
