//! Robust model selection: the divergence information criterion (DIC),
//! data-driven choice of the tuning parameter by estimated asymptotic
//! mean squared error (AMSE), and exhaustive search over covariate
//! subsets and baseline families.
//!
//! `DIC = H_{n,α}(θ̂) + ((α+1)/n) tr(K_{n,α} J_{n,α}⁻¹)`; smaller is
//! better, and the α → 0 limit is the Takeuchi information criterion
//! divided by n. The tuning parameter is chosen by minimizing
//! `AMSE(α) = ‖θ̂_α − θ̂_P‖² + tr(Σ_{n,α})/n` over a grid, with the
//! α = 0.5 estimate as pilot θ̂_P.

use rayon::prelude::*;

use crate::data::CensoredDataset;
use crate::error::{Error, Result};
use crate::hazards::baseline_by_name;
use crate::inference::{wald_test, HypothesisSpec};
use crate::mdpde::{fit_mdpde, FitOptions, FitResult, ModelSpec, Theta};

/// DIC of a converged fit: the objective value plus the trace penalty
/// ((α+1)/n)·tr(K J⁻¹).
pub fn dic(fit: &FitResult) -> Result<f64> {
    if !fit.converged {
        return Err(Error::NonConvergence("DIC requires a converged fit".into()));
    }
    Ok(fit.objective_value + dic_penalty(fit)?)
}

fn dic_penalty(fit: &FitResult) -> Result<f64> {
    // tr(K J⁻¹) = tr(J⁻¹ K), computed through a solve
    let jinv_k = fit.j_hat.solve(&fit.k_hat).map_err(|e| match e {
        Error::NearSingular { condition, .. } => {
            Error::DegenerateInformation(format!("J_n singular in DIC penalty (condition {condition:.3e})"))
        }
        other => other,
    })?;
    Ok((fit.alpha + 1.0) / fit.n as f64 * jinv_k.trace())
}

/// Estimated asymptotic mean squared error of a fit against a pilot
/// estimate: squared parameter distance plus tr(Σ_{n,α})/n.
pub fn amse_estimate(fit_alpha: &FitResult, pilot: &Theta) -> Result<f64> {
    if pilot.dim() != fit_alpha.theta_hat.dim() {
        return Err(Error::Domain(format!(
            "pilot dimension {} does not match fit dimension {}",
            pilot.dim(),
            fit_alpha.theta_hat.dim()
        )));
    }
    let bias2: f64 = fit_alpha
        .theta_hat
        .flat()
        .iter()
        .zip(pilot.flat())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(bias2 + fit_alpha.sigma.trace() / fit_alpha.n as f64)
}

/// The default search grid on [0, 1] with step 0.05 (21 points).
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// A finer 0.01-step grid for two-decimal reporting.
pub fn fine_alpha_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.01).collect()
}

/// Options for [`select_alpha`].
#[derive(Debug, Clone)]
pub struct SelectAlphaOptions {
    /// Tuning parameter of the pilot estimator.
    pub pilot_alpha: f64,
    /// Re-pilot at the current winner and repeat until it stabilizes.
    pub iterate: bool,
    pub max_rounds: usize,
}

impl Default for SelectAlphaOptions {
    fn default() -> Self {
        SelectAlphaOptions { pilot_alpha: 0.5, iterate: false, max_rounds: 5 }
    }
}

/// AMSE value of one grid point; `amse` is absent when that fit failed.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AmseEntry {
    pub alpha: f64,
    pub amse: Option<f64>,
    pub converged: bool,
}

/// Outcome of a tuning-parameter search.
#[derive(Debug, Clone)]
pub struct AlphaSelection {
    pub alpha_hat: f64,
    pub table: Vec<AmseEntry>,
    /// Pilot tuning parameter of the final round.
    pub pilot_alpha: f64,
    pub rounds: usize,
    /// The fit at the selected α (reused by callers).
    pub fit: FitResult,
}

/// Choose the tuning parameter by minimizing the estimated AMSE over
/// `grid`, with the pilot fitted at `options.pilot_alpha` (0.5 by
/// default) and every grid fit warm-started from the pilot. Grid points
/// whose fit fails are skipped with a gap in the table; if every point
/// fails the search is a hard error.
pub fn select_alpha(
    spec: &ModelSpec,
    data: &CensoredDataset,
    grid: &[f64],
    options: &SelectAlphaOptions,
) -> Result<AlphaSelection> {
    if grid.is_empty() {
        return Err(Error::Domain("alpha grid must not be empty".into()));
    }
    if grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::Domain("alpha grid must lie within [0, 1]".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("alpha grid must be strictly increasing".into()));
    }

    let fit_options = FitOptions::default();
    let mut pilot_alpha = options.pilot_alpha;
    let mut pilot = fit_mdpde(spec, data, pilot_alpha, None, &fit_options)?;
    if !pilot.converged {
        return Err(Error::NonConvergence(format!("pilot fit at alpha = {pilot_alpha} did not converge")));
    }

    let rounds_allowed = if options.iterate { options.max_rounds } else { 1 };
    let mut previous_alpha: Option<f64> = None;
    let mut rounds = 0usize;
    loop {
        rounds += 1;
        let pilot_theta = pilot.theta_hat.clone();
        let entries: Vec<(AmseEntry, Option<FitResult>)> = grid
            .par_iter()
            .map(|&alpha| {
                match fit_mdpde(spec, data, alpha, Some(&pilot_theta), &fit_options) {
                    Ok(fit) if fit.converged => match amse_estimate(&fit, &pilot_theta) {
                        Ok(a) if a.is_finite() => {
                            (AmseEntry { alpha, amse: Some(a), converged: true }, Some(fit))
                        }
                        _ => (AmseEntry { alpha, amse: None, converged: true }, None),
                    },
                    _ => (AmseEntry { alpha, amse: None, converged: false }, None),
                }
            })
            .collect();

        let mut best: Option<usize> = None;
        for (i, (entry, _)) in entries.iter().enumerate() {
            if let Some(a) = entry.amse {
                if best.map_or(true, |b| a < entries[b].0.amse.unwrap()) {
                    best = Some(i);
                }
            }
        }
        let best = best.ok_or_else(|| Error::NonConvergence("every grid fit failed in the tuning search".into()))?;
        let (table, fits): (Vec<AmseEntry>, Vec<Option<FitResult>>) = entries.into_iter().unzip();
        let alpha_hat = table[best].alpha;
        let fit = fits.into_iter().nth(best).flatten().expect("winning entry has a fit");

        let stabilized = previous_alpha.map_or(false, |prev| (prev - alpha_hat).abs() < 1e-12);
        if rounds >= rounds_allowed || stabilized {
            return Ok(AlphaSelection { alpha_hat, table, pilot_alpha, rounds, fit });
        }
        previous_alpha = Some(alpha_hat);
        pilot_alpha = alpha_hat;
        pilot = fit.clone();
    }
}

/// One candidate model in the search: a baseline family plus a covariate
/// subset (0-based column indices into the full dataset).
#[derive(Debug, Clone, serde::Serialize)]
pub struct CandidateModel {
    pub baseline: String,
    pub subset: Vec<usize>,
    pub label: String,
}

/// Search outcome for one candidate.
#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub candidate: CandidateModel,
    pub alpha_hat: Option<f64>,
    pub dic: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
    pub fit: Option<FitResult>,
}

/// Winner coefficient summary: estimate, standard error and the p-value
/// of the significance test H₀: β_j = 0 at the winner's α̂.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CoefficientReport {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
}

/// Full table of the model search plus the winning candidate.
#[derive(Debug)]
pub struct DicReport {
    pub outcomes: Vec<CandidateOutcome>,
    /// Index of the winner in `outcomes`; absent when every candidate failed.
    pub winner: Option<usize>,
    /// Significance tests of the winner's coefficients.
    pub winner_coefficients: Vec<CoefficientReport>,
    /// Baseline-parameter estimates and standard errors of the winner.
    pub winner_baseline: Vec<(String, f64, f64)>,
}

impl DicReport {
    pub fn winner_outcome(&self) -> Option<&CandidateOutcome> {
        self.winner.map(|i| &self.outcomes[i])
    }

    /// Candidate table as CSV: `candidate,baseline,subset,alpha_hat,dic,converged`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["candidate", "baseline", "subset", "alpha_hat", "dic", "converged", "winner"])
            .map_err(|e| Error::Schema(format!("csv write failed: {e}")))?;
        for (i, o) in self.outcomes.iter().enumerate() {
            let subset = o
                .candidate
                .subset
                .iter()
                .map(|j| (j + 1).to_string())
                .collect::<Vec<_>>()
                .join("+");
            w.write_record([
                o.candidate.label.clone(),
                o.candidate.baseline.clone(),
                subset,
                o.alpha_hat.map_or(String::new(), |a| format!("{a:.2}")),
                o.dic.map_or(String::new(), |d| format!("{d:.6}")),
                o.converged.to_string(),
                (self.winner == Some(i)).to_string(),
            ])
            .map_err(|e| Error::Schema(format!("csv write failed: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable summary: the candidate ranking and the winner's
    /// coefficient table (estimate, SE, p-value).
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str("candidate                     baseline      alpha_hat        DIC\n");
        let mut ranked: Vec<&CandidateOutcome> = self.outcomes.iter().filter(|o| o.dic.is_some()).collect();
        ranked.sort_by(|a, b| a.dic.partial_cmp(&b.dic).unwrap());
        for o in &ranked {
            out.push_str(&format!(
                "{:<29} {:<13} {:>9} {:>10}\n",
                o.candidate.label,
                o.candidate.baseline,
                o.alpha_hat.map_or(String::new(), |a| format!("{a:.2}")),
                o.dic.map_or(String::new(), |d| format!("{d:.4}")),
            ));
        }
        for o in self.outcomes.iter().filter(|o| o.dic.is_none()) {
            out.push_str(&format!(
                "{:<29} {:<13} failed: {}\n",
                o.candidate.label,
                o.candidate.baseline,
                o.error.as_deref().unwrap_or("unknown")
            ));
        }
        if let Some(w) = self.winner_outcome() {
            out.push_str(&format!(
                "\nselected model: {} ({} baseline), alpha_hat = {:.2}, DIC = {:.4}\n",
                w.candidate.label,
                w.candidate.baseline,
                w.alpha_hat.unwrap_or(f64::NAN),
                w.dic.unwrap_or(f64::NAN)
            ));
            out.push_str("\nterm          estimate        SE   p-value\n");
            for c in &self.winner_coefficients {
                out.push_str(&format!("{:<12} {:>9.4} {:>9.4} {:>9.4}\n", c.name, c.estimate, c.se, c.p_value));
            }
            for (name, est, se) in &self.winner_baseline {
                out.push_str(&format!("{name:<12} {est:>9.4} {se:>9.4}         -\n"));
            }
        } else {
            out.push_str("\nno candidate converged; no model selected\n");
        }
        out
    }
}

/// Options for [`model_search`].
#[derive(Debug, Clone)]
pub struct ModelSearchOptions {
    /// Largest covariate subset size; defaults to p (all subsets).
    pub max_subset_size: Option<usize>,
    /// Tuning grid handed to [`select_alpha`] per candidate.
    pub grid: Vec<f64>,
    pub select: SelectAlphaOptions,
    /// Lift the 2^p enumeration guard (p ≤ 15) deliberately.
    pub allow_large_p: bool,
}

impl Default for ModelSearchOptions {
    fn default() -> Self {
        ModelSearchOptions {
            max_subset_size: None,
            grid: default_alpha_grid(),
            select: SelectAlphaOptions::default(),
            allow_large_p: false,
        }
    }
}

fn subsets_up_to(p: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 1u32..(1u32 << p) {
        let subset: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        if subset.len() <= max_size {
            out.push(subset);
        }
    }
    out
}

/// Exhaustive model search: for every baseline family and every
/// non-empty covariate subset, select α̂ by AMSE, fit at α̂ and compute
/// the DIC; the candidate with the smallest DIC wins (ties: fewer
/// covariates, then label order). For the winner, each coefficient gets
/// a significance test H₀: β_j = 0 at level `tau` and α̂.
///
/// The intercept-only model (empty subset) is excluded from the search.
/// Individual candidate failures are recorded in the table, not fatal.
pub fn model_search(
    data: &CensoredDataset,
    baselines: &[String],
    tau: f64,
    options: &ModelSearchOptions,
) -> Result<DicReport> {
    let p = data.covariate_dim();
    if p == 0 {
        return Err(Error::Validation("model search needs at least one covariate column".into()));
    }
    if p > 15 && !options.allow_large_p {
        return Err(Error::Validation(format!(
            "p = {p} would enumerate {} subsets; pass allow_large_p to proceed",
            (1u64 << p) - 1
        )));
    }
    if baselines.is_empty() {
        return Err(Error::Domain("at least one baseline family is required".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("tau must lie in (0,1), got {tau}")));
    }

    let max_size = options.max_subset_size.unwrap_or(p).min(p);
    let mut candidates = Vec::new();
    for baseline in baselines {
        baseline_by_name(baseline)?; // fail fast on unknown names
        for subset in subsets_up_to(p, max_size) {
            let names: Vec<&str> = subset.iter().map(|&j| data.covariate_names()[j].as_str()).collect();
            let label = format!("{}: {}", baseline, names.join("+"));
            candidates.push(CandidateModel { baseline: baseline.clone(), subset, label });
        }
    }

    let outcomes: Vec<CandidateOutcome> = candidates
        .into_par_iter()
        .map(|candidate| {
            let run = || -> Result<(f64, f64, FitResult)> {
                let sub = data.subset_covariates(&candidate.subset)?;
                let baseline = baseline_by_name(&candidate.baseline)?;
                let spec = ModelSpec::new(baseline, sub.covariate_dim());
                let selection = select_alpha(&spec, &sub, &options.grid, &options.select)?;
                let dic_value = dic(&selection.fit)?;
                Ok((selection.alpha_hat, dic_value, selection.fit))
            };
            match run() {
                Ok((alpha_hat, dic_value, fit)) => CandidateOutcome {
                    candidate,
                    alpha_hat: Some(alpha_hat),
                    dic: Some(dic_value),
                    converged: true,
                    error: None,
                    fit: Some(fit),
                },
                Err(e) => CandidateOutcome {
                    candidate,
                    alpha_hat: None,
                    dic: None,
                    converged: false,
                    error: Some(e.to_string()),
                    fit: None,
                },
            }
        })
        .collect();

    // winner: smallest DIC, ties broken by fewer covariates then label
    let mut winner: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        let Some(d) = o.dic else { continue };
        let better = match winner {
            None => true,
            Some(w) => {
                let dw = outcomes[w].dic.unwrap();
                d < dw
                    || (d == dw
                        && (o.candidate.subset.len() < outcomes[w].candidate.subset.len()
                            || (o.candidate.subset.len() == outcomes[w].candidate.subset.len()
                                && o.candidate.label < outcomes[w].candidate.label)))
            }
        };
        if better {
            winner = Some(i);
        }
    }

    let mut winner_coefficients = Vec::new();
    let mut winner_baseline = Vec::new();
    if let Some(w) = winner {
        let fit = outcomes[w].fit.as_ref().expect("winner has a fit");
        let sub_names: Vec<String> = outcomes[w]
            .candidate
            .subset
            .iter()
            .map(|&j| data.covariate_names()[j].clone())
            .collect();
        let se = fit.standard_errors();
        let q = fit.theta_hat.gamma.len();
        for (j, name) in sub_names.iter().enumerate() {
            let test = wald_test(fit, &HypothesisSpec::coefficient_equals(j + 1, 0.0), tau)?;
            winner_coefficients.push(CoefficientReport {
                name: name.clone(),
                estimate: fit.theta_hat.beta[j],
                se: se[q + j],
                p_value: test.p_value,
            });
        }
        for (k, g) in fit.theta_hat.gamma.iter().enumerate() {
            winner_baseline.push((format!("gamma{}", k + 1), *g, se[k]));
        }
    }

    Ok(DicReport { outcomes, winner, winner_coefficients, winner_baseline })
}
