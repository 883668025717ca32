//! Observation input and estimate output.

use std::path::Path;

use nalgebra::DVector;
use pmcjump::filters::{kalman_update_init, pmc_kalman_step, MixtureEstimate};
use pmcjump::simulate::format_float;
use pmcjump::ConditionalPmcModel;

use crate::{usage, Failure};

pub struct Observations {
    pub ys: Vec<DVector<f64>>,
    /// 0-based regimes from an `r` column, when present.
    pub regimes: Option<Vec<usize>>,
}

/// Reads `y1..yp` (and `r`, 1-based, if present). A file without `y`
/// columns is read as `p` plain numeric columns.
pub fn read_observations(path: &Path, p: usize) -> Result<Observations, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let named: Vec<usize> = (1..=p)
        .map(|i| headers.iter().position(|h| h.trim() == format!("y{i}")))
        .collect::<Option<Vec<_>>>()
        .unwrap_or_default();
    let y_cols: Vec<usize> = if !named.is_empty() {
        named
    } else if headers.len() == p && !headers.iter().any(|h| h.trim().starts_with('y')) {
        (0..p).collect()
    } else {
        return Err(usage(format!("{}: expected columns y1..y{p}", path.display())));
    };
    let r_col = headers.iter().position(|h| h.trim() == "r");
    let mut ys = Vec::new();
    let mut regimes = r_col.map(|_| Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| -> Result<f64, Failure> {
            let raw = record.get(c).unwrap_or("").trim();
            raw.parse::<f64>()
                .map_err(|_| usage(format!("{}: row {}: `{raw}` is not a number", path.display(), line + 1)))
        };
        ys.push(DVector::from_vec(y_cols.iter().map(|&c| field(c)).collect::<Result<Vec<_>, _>>()?));
        if let (Some(c), Some(rs)) = (r_col, regimes.as_mut()) {
            let r = field(c)?;
            if r < 1.0 || r.fract() != 0.0 {
                return Err(usage(format!("{}: row {}: regime `{r}` must be a positive integer", path.display(), line + 1)));
            }
            rs.push(r as usize - 1);
        }
    }
    if ys.is_empty() {
        return Err(usage(format!("{}: no observations", path.display())));
    }
    Ok(Observations { ys, regimes })
}

/// Pairwise Kalman filter along known regimes, with its covariance and a
/// one-hot regime column.
pub fn kalman_estimates(
    model: &ConditionalPmcModel,
    regimes: &[usize],
    ys: &[DVector<f64>],
) -> Result<Vec<MixtureEstimate>, Failure> {
    if regimes.len() != ys.len() {
        return Err(usage("`r` column length differs from the observations"));
    }
    let (mut post, _) = kalman_update_init(model.regime(regimes[0]), &ys[0])?;
    let mut out = Vec::with_capacity(ys.len());
    for k in 0..ys.len() {
        if k > 0 {
            post = pmc_kalman_step(&post, &ys[k - 1], &ys[k], model.block(regimes[k - 1], regimes[k]))?;
        }
        let mut probs = vec![0.0; model.k()];
        probs[regimes[k]] = 1.0;
        let second = post.second_moment();
        out.push(MixtureEstimate::from_components([(1.0, post.mean(), &second)], probs));
    }
    Ok(out)
}

/// Columns `k, x1..xm, var1..varm, p1..pK`.
pub fn write_estimates(path: &Path, estimates: &[MixtureEstimate]) -> Result<(), Failure> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let m = estimates.first().map_or(0, |e| e.mean.len());
    let k = estimates.first().map_or(0, |e| e.mode_probs.len());
    let mut header = vec!["k".to_string()];
    header.extend((1..=m).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("var{i}")));
    header.extend((1..=k).map(|i| format!("p{i}")));
    writer.write_record(&header)?;
    for (step, e) in estimates.iter().enumerate() {
        let mut row = vec![step.to_string()];
        row.extend(e.mean.iter().map(|&v| format_float(v)));
        row.extend((0..m).map(|i| format_float(e.cov[(i, i)])));
        row.extend(e.mode_probs.iter().map(|&v| format_float(v)));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
