//! Blocked k-fold cross-validation of tail fits and greedy forward selection
//! of scale-formula terms.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{fit_nonstationary_gpd, FitSpec, Formula, Term};
use crate::error::{Error, Result};
use crate::gpd;
use crate::scoring;
use crate::series::{format_float, Series};
use crate::threshold_select::exponential_qq_loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvMetric {
    /// Truncated CRPS of each held-out excess.
    Crps,
    /// Competition loss of held-out transformed excesses against Exp(1) quantiles.
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub score: f64,
    pub k: usize,
    pub folds_used: usize,
    pub n_scored: usize,
    pub warnings: Vec<String>,
}

/// Fold labels: each stratum's rows (in time order) are cut into `k`
/// contiguous chunks, and fold `f` collects chunk `f` of every stratum.
pub fn blocked_stratified_folds(n: usize, strata: Option<&[f64]>, k: usize) -> Vec<usize> {
    let mut label = vec![0; n];
    let groups: Vec<Vec<usize>> = match strata {
        None => vec![(0..n).collect()],
        Some(s) => {
            let mut levels: Vec<f64> = s.to_vec();
            crate::numeric::sort_floats(&mut levels);
            levels.dedup();
            levels
                .iter()
                .map(|&l| (0..n).filter(|&r| s[r] == l || (s[r].is_nan() && l.is_nan())).collect())
                .collect()
        }
    };
    for g in groups {
        let m = g.len();
        for (pos, &r) in g.iter().enumerate() {
            label[r] = pos * k / m.max(1);
        }
    }
    label
}

/// Mean out-of-fold score of `spec` over `k` blocked folds. Folds without
/// held-out exceedances, or whose training fit fails, are skipped with a warning.
pub fn k_fold_cv(data: &Series, spec: &FitSpec, k: usize, metric: CvMetric) -> Result<CvResult> {
    let vars = spec.variables();
    let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let (data, _) = data.complete_cases(&var_refs)?;
    let n = data.n_rows();
    if k < 2 || k > n {
        return Err(Error::Argument(format!("fold count must lie in [2, {n}], got {k}")));
    }
    let strata = match spec.strata_var() {
        Some(v) => Some(data.column(&v)?.to_vec()),
        None => None,
    };
    let labels = blocked_stratified_folds(n, strata.as_deref(), k);
    let per_fold: Vec<(usize, Result<Vec<f64>>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&r| labels[r] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&r| labels[r] == f).collect();
            (f, fold_scores(&data, spec, &train, &test, metric))
        })
        .collect();
    let mut warnings = Vec::new();
    let mut scores = Vec::new();
    let mut folds_used = 0;
    for (f, r) in per_fold {
        match r {
            Ok(s) if !s.is_empty() => {
                folds_used += 1;
                scores.extend(s);
            }
            Ok(_) => warnings.push(format!("fold {f} has no held-out exceedances; skipped")),
            Err(e) => warnings.push(format!("fold {f} skipped: {e}")),
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if scores.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: 0,
            context: "no fold produced a score".into(),
        });
    }
    Ok(CvResult {
        score: scores.iter().sum::<f64>() / scores.len() as f64,
        k,
        folds_used,
        n_scored: scores.len(),
        warnings,
    })
}

fn fold_scores(data: &Series, spec: &FitSpec, train: &[usize], test: &[usize], metric: CvMetric) -> Result<Vec<f64>> {
    let fit = fit_nonstationary_gpd(spec, &data.select_rows(train))?;
    let held = data.select_rows(test);
    let ex = fit.exceedances(&held)?;
    let mut out = Vec::with_capacity(ex.len());
    let mut transformed = Vec::with_capacity(ex.len());
    for (r, z) in ex {
        let m = fit.row_model(&held, r)?;
        match metric {
            CvMetric::Crps => out.push(scoring::gpd_crps_truncated(z, m.params, scoring::crps_upper(m.params))),
            CvMetric::Loss => transformed.push(-gpd::log_survival_unchecked(z, m.params)),
        }
    }
    if metric == CvMetric::Loss && !transformed.is_empty() {
        // one fold-level value per held-out excess keeps folds weighted by size
        let l = exponential_qq_loss(&transformed);
        out = vec![l; transformed.len()];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub model: usize,
    pub formula: String,
    pub cv: f64,
    pub aic: f64,
    pub bic: f64,
    pub delta_crps: f64,
    pub delta_aic: f64,
    pub delta_bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionReport {
    pub models: Vec<ModelRow>,
    /// `model` id of the selected formula.
    pub chosen: usize,
    pub chosen_formula: String,
    pub k: usize,
}

impl SelectionReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "model,formula,delta_crps,delta_aic,delta_bic")?;
        for m in &self.models {
            writeln!(
                w,
                "{},\"{}\",{},{},{}",
                m.model,
                m.formula,
                format_float(m.delta_crps),
                format_float(m.delta_aic),
                format_float(m.delta_bic)
            )?;
        }
        Ok(())
    }
}

fn evaluate(data: &Series, spec: &FitSpec, formula: &Formula, k: usize) -> Result<(f64, f64, f64)> {
    let s = FitSpec {
        scale: formula.clone(),
        ..spec.clone()
    };
    let cv = k_fold_cv(data, &s, k, CvMetric::Crps)?;
    let fit = fit_nonstationary_gpd(&s, data)?;
    Ok((cv.score, fit.aic(), fit.bic()))
}

/// Greedy forward selection starting from `spec.scale`: each round adds the
/// pool term with the lowest CV-CRPS, stopping when no term improves it.
pub fn forward_select(data: &Series, spec: &FitSpec, pool: &[Term], k: usize) -> Result<SelectionReport> {
    let baseline = spec.scale.clone();
    let (cv0, aic0, bic0) = evaluate(data, spec, &baseline, k)?;
    let row = |id: usize, f: &Formula, cv: f64, aic: f64, bic: f64| ModelRow {
        model: id,
        formula: f.to_string(),
        cv,
        aic,
        bic,
        delta_crps: cv - cv0,
        delta_aic: aic - aic0,
        delta_bic: bic - bic0,
    };
    let mut models = vec![row(1, &baseline, cv0, aic0, bic0)];
    let mut current = baseline;
    let mut current_cv = cv0;
    let mut chosen = 1;
    let mut remaining: Vec<Term> = pool.iter().filter(|t| !current.terms.contains(t)).cloned().collect();
    while !remaining.is_empty() {
        let trials: Vec<(usize, Result<(f64, f64, f64)>)> = remaining
            .par_iter()
            .enumerate()
            .map(|(i, t)| (i, evaluate(data, spec, &current.with_term(t.clone()), k)))
            .collect();
        // (position in `remaining`, model id, score)
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, r) in &trials {
            match r {
                Ok((cv, aic, bic)) => {
                    let f = current.with_term(remaining[*i].clone());
                    models.push(row(models.len() + 1, &f, *cv, *aic, *bic));
                    if best.is_none_or(|b| *cv < b.2) {
                        best = Some((*i, models.len(), *cv));
                    }
                }
                Err(e) => log::warn!("term {} skipped: {e}", remaining[*i]),
            }
        }
        let Some((i, id, cv)) = best else { break };
        if cv >= current_cv {
            break;
        }
        current = current.with_term(remaining.remove(i));
        current_cv = cv;
        chosen = id;
    }
    Ok(SelectionReport {
        chosen_formula: models[chosen - 1].formula.clone(),
        models,
        chosen,
        k,
    })
}
