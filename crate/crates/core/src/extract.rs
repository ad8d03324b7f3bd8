//! Turning a trained sparse network into a closed-form expression.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureRef;
use crate::eql_net::EqlParams;
use crate::error::{EqlError, Result};
use crate::expr::{simplify, Expr};
use crate::funcset::FuncKind;
use crate::scalar::Scalar;

/// Prune tolerance for human-facing output; verification uses 0.
pub const DEFAULT_PRUNE_TOL: f64 = 1e-4;

fn combine<T: Scalar>(row: &[T], inputs: &[Expr]) -> Expr {
    let terms: Vec<Expr> = row
        .iter()
        .zip(inputs)
        .filter(|(w, _)| **w != T::zero())
        .map(|(w, e)| Expr::prod(vec![Expr::constant(w.as_f64()), e.clone()]))
        .collect();
    match terms.len() {
        0 => Expr::constant(0.0),
        _ => Expr::sum(terms),
    }
}

/// Symbolic forward pass followed by [`simplify`].
pub fn to_expression<T: Scalar>(p: &EqlParams<T>, var_names: &[String], prune_tol: f64) -> Result<Expr> {
    if var_names.len() != p.input_dim() {
        return Err(EqlError::Dimension {
            what: "variable names",
            expected: p.input_dim(),
            got: var_names.len(),
        });
    }
    let mut layer_in: Vec<Expr> = var_names.iter().map(Expr::var).collect();
    let depth = p.depth();
    for w in &p.weights()[..depth] {
        let g: Vec<Expr> = (0..w.rows()).map(|r| combine(w.row(r), &layer_in)).collect();
        layer_in = p
            .units()
            .iter()
            .map(|&(kind, i)| match kind {
                FuncKind::Constant => Expr::constant(1.0),
                FuncKind::Identity => g[i].clone(),
                FuncKind::Square => Expr::pow(g[i].clone(), 2),
                FuncKind::Product => Expr::prod(vec![g[i].clone(), g[i + 1].clone()]),
                other => Expr::apply(other, g[i].clone()),
            })
            .collect();
    }
    let out = combine(p.weights()[depth].row(0), &layer_in);
    Ok(simplify(&out, prune_tol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub seed: u64,
    pub max_abs_err: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Compare network and expression on `n` seeded uniform points in `[0,1]^d`.
pub fn verify_equivalence<T: Scalar>(
    p: &EqlParams<T>,
    e: &Expr,
    var_names: &[String],
    n: usize,
    seed: u64,
    tol: f64,
) -> Result<EquivalenceReport> {
    if n == 0 {
        return Err(EqlError::Config("equivalence check needs at least one sample".into()));
    }
    if var_names.len() != p.input_dim() {
        return Err(EqlError::Dimension {
            what: "variable names",
            expected: p.input_dim(),
            got: var_names.len(),
        });
    }
    let compiled = e.compile(var_names)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = Vec::new();
    let mut x = vec![0.0; p.input_dim()];
    let mut xt = vec![T::zero(); p.input_dim()];
    let mut max_abs_err: f64 = 0.0;
    for _ in 0..n {
        for (xi, ti) in x.iter_mut().zip(xt.iter_mut()) {
            *xi = rng.gen_range(0.0..=1.0);
            *ti = T::of(*xi);
        }
        let net = p.predict(&xt)?.as_f64();
        let sym = compiled.eval(&x, &mut stack);
        let err = (net - sym).abs();
        // NaN on either side counts as a failure
        max_abs_err = if err.is_nan() { f64::INFINITY } else { max_abs_err.max(err) };
    }
    Ok(EquivalenceReport {
        samples: n,
        seed,
        max_abs_err,
        tol,
        pass: max_abs_err <= tol,
    })
}

/// Inputs joined to the output by at least one path of nonzero weights that
/// does not pass through a constant unit.
pub fn live_inputs<T: Scalar>(p: &EqlParams<T>) -> BTreeSet<usize> {
    let depth = p.depth();
    let head = p.weights()[depth].row(0);
    let mut live_h: Vec<bool> = head.iter().map(|w| *w != T::zero()).collect();
    for l in (0..depth).rev() {
        let w = &p.weights()[l];
        let mut live_g = vec![false; w.rows()];
        for (j, &(kind, i)) in p.units().iter().enumerate() {
            if !live_h[j] || kind == FuncKind::Constant {
                continue;
            }
            live_g[i] = true;
            if kind.is_binary() {
                live_g[i + 1] = true;
            }
        }
        let mut live_in = vec![false; w.cols()];
        for (r, _) in live_g.iter().enumerate().filter(|(_, l)| **l) {
            for (c, v) in w.row(r).iter().enumerate() {
                if *v != T::zero() {
                    live_in[c] = true;
                }
            }
        }
        live_h = live_in;
    }
    live_h
        .iter()
        .enumerate()
        .filter(|(_, l)| **l)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub variable: String,
    pub city: String,
    pub feature: String,
    pub lag: usize,
}

/// One row per free variable of `e`, in name order.
pub fn feature_report(e: &Expr, catalog: &BTreeMap<String, FeatureRef>) -> Result<Vec<FeatureRow>> {
    e.free_vars()
        .into_iter()
        .map(|v| {
            let r = catalog
                .get(&v)
                .ok_or_else(|| EqlError::Data(format!("variable `{v}` is not in the feature catalog")))?;
            Ok(FeatureRow {
                variable: v,
                city: r.city.clone(),
                feature: r.feature.clone(),
                lag: r.lag,
            })
        })
        .collect()
}

pub fn write_feature_report<W: Write>(rows: &[FeatureRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["variable", "city", "feature", "lag"])?;
    for r in rows {
        wr.write_record([r.variable.as_str(), &r.city, &r.feature, &r.lag.to_string()])?;
    }
    wr.flush().map_err(|e| EqlError::io("<feature report>", e))?;
    Ok(())
}

/// Catalog keyed by the standard `<city>_<feature>_lag<k>` names.
pub fn catalog_by_name(catalog: &[FeatureRef]) -> BTreeMap<String, FeatureRef> {
    catalog.iter().map(|r| (r.var_name(), r.clone())).collect()
}

fn wind(city: &str, lag: usize) -> FeatureRef {
    FeatureRef {
        city: city.to_string(),
        feature: "wind_speed".to_string(),
        lag,
    }
}

/// Single-letter names used in the published formulas.
pub fn legacy_aliases() -> BTreeMap<String, FeatureRef> {
    [
        ("x", wind("esbjerg", 3)),
        ("y", wind("esbjerg", 4)),
        ("z", wind("aalborg", 4)),
        ("α", wind("aarhus", 4)),
        ("β", wind("odense", 4)),
        ("γ", wind("roskilde", 4)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Rewrite single-letter aliases to the standard variable names.
pub fn expand_aliases(e: &Expr) -> Expr {
    let map: HashMap<String, String> = legacy_aliases()
        .into_iter()
        .map(|(k, v)| (k, v.var_name()))
        .collect();
    e.rename_vars(&map)
}
