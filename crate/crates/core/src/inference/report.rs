use serde::Serialize;

use super::fit::FitResult;
use super::simulate::Truths;
use crate::error::{Error, Result};
use crate::format::fmt_num;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
}

impl RecoveryReport {
    pub fn coverage(&self) -> f64 {
        self.rows.iter().filter(|r| r.covered).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn row(&self, name: &str) -> Option<&RecoveryRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| Parameter | True value | Mean estimate | 95% credible interval | Covered | Abs. error |\n\
             |---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {} | {:.3} | [{:.3} ; {:.3}] | {} | {:.3} |\n",
                r.name,
                fmt_num(r.truth),
                r.mean,
                r.lower,
                r.upper,
                if r.covered { "yes" } else { "no" },
                r.abs_error
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,truth,mean,lower,upper,covered,abs_error\n");
        for r in &self.rows {
            s.push_str(&format!(
                "\"{}\",{},{},{},{},{},{}\n",
                r.name,
                fmt_num(r.truth),
                fmt_num(r.mean),
                fmt_num(r.lower),
                fmt_num(r.upper),
                r.covered,
                fmt_num(r.abs_error)
            ));
        }
        s
    }
}

/// Compares each truth with the posterior summary of the same name. Rows
/// follow the order of the fit summaries.
pub fn recovery_report(truths: &Truths, fit: &FitResult) -> Result<RecoveryReport> {
    if let Some(name) = truths.keys().find(|k| fit.summary(k).is_none()) {
        return Err(Error::InvalidArgument(format!("the fit has no parameter `{name}`")));
    }
    let rows = fit
        .summaries
        .iter()
        .filter_map(|s| {
            let truth = *truths.get(&s.name)?;
            Some(RecoveryRow {
                name: s.name.clone(),
                truth,
                mean: s.mean,
                lower: s.lower,
                upper: s.upper,
                covered: s.lower <= truth && truth <= s.upper,
                abs_error: (s.mean - truth).abs(),
            })
        })
        .collect();
    Ok(RecoveryReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::fit::ParameterSummary;
    use crate::inference::model::ParameterVector;

    fn fit_at(values: &[(&str, f64)]) -> FitResult {
        FitResult {
            parameter_names: vec![],
            map_point: ParameterVector {
                beta: vec![],
                log_sigma_c: vec![],
                theta: vec![],
                log_sigma_eps: vec![],
            },
            map_log_posterior: 0.0,
            map_converged: None,
            samples: vec![],
            n_iter: 0,
            burn_in: 0,
            seed: 0,
            acceptance_rate: 0.0,
            summaries: values
                .iter()
                .map(|(n, v)| ParameterSummary {
                    name: n.to_string(),
                    mean: *v,
                    sd: 0.0,
                    lower: *v,
                    upper: *v,
                    mcse: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_fit() {
        let vals = [("rho[c1,c2]", 0.9), ("sigma_c[c1]", 1.0)];
        let truths: Truths = vals.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let r = recovery_report(&truths, &fit_at(&vals)).unwrap();
        assert_eq!(r.coverage(), 1.0);
        assert!(r.rows.iter().all(|row| row.abs_error == 0.0 && row.covered));
        assert!(r.to_markdown().contains("| rho[c1,c2] | 0.9 | 0.900 | [0.900 ; 0.900] | yes | 0.000 |"));
        assert!(r.to_csv().starts_with("parameter,truth,mean,lower,upper,covered,abs_error\n\"rho[c1,c2]\",0.9,"));
    }

    #[test]
    fn missed_truth() {
        let truths: Truths = [("rho[c1,c2]".to_string(), 0.5)].into_iter().collect();
        let r = recovery_report(&truths, &fit_at(&[("rho[c1,c2]", 0.9)])).unwrap();
        assert!(!r.rows[0].covered);
        assert!((r.rows[0].abs_error - 0.4).abs() < 1e-15);
        assert_eq!(r.coverage(), 0.0);
    }

    #[test]
    fn mismatched_names() {
        let truths: Truths = [("rho[c1,c3]".to_string(), 0.8)].into_iter().collect();
        assert!(recovery_report(&truths, &fit_at(&[("rho[c1,c2]", 0.9)])).is_err());
    }
}
