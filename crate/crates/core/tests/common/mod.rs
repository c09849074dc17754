#![allow(dead_code)]

use crtnd_core::{PanelPotentialTable, PotentialCluster, PotentialTable};

/// Six clusters with heterogeneous ascertainment and one covariate that is
/// correlated with the control log-contrast.
pub fn oracle_table(lambda: f64) -> PotentialTable {
    let rows = [
        ("a", 40.0, 120.0, 0.7, 1.2),
        ("b", 55.0, 90.0, 1.3, 2.1),
        ("c", 18.0, 150.0, 0.9, 0.4),
        ("d", 72.0, 80.0, 1.8, 2.9),
        ("e", 30.0, 200.0, 0.5, 0.1),
        ("f", 64.0, 110.0, 1.1, 1.7),
    ];
    PotentialTable::new(
        lambda,
        rows.iter()
            .map(|&(id, oy0, oz0, c, x)| PotentialCluster {
                cluster_id: id.into(),
                oy0,
                oz0,
                c,
                covariates: vec![x],
            })
            .collect(),
    )
    .unwrap()
}

/// The same clusters with `c_i` tied to `O^Y(0) / O^Z(0)`.
pub fn coupled_oracle_table(lambda: f64) -> PotentialTable {
    let base = oracle_table(lambda);
    let clusters = base
        .clusters()
        .iter()
        .map(|c| PotentialCluster {
            c: 2.5 * c.oy0 / c.oz0,
            ..c.clone()
        })
        .collect();
    PotentialTable::new(lambda, clusters).unwrap()
}

/// Four clusters, three periods.
pub fn toy_panel(lambda: f64) -> PanelPotentialTable {
    let oy0 = vec![
        vec![20.0, 26.0, 31.0],
        vec![45.0, 40.0, 52.0],
        vec![12.0, 19.0, 15.0],
        vec![33.0, 29.0, 41.0],
    ];
    let oz0 = vec![
        vec![80.0, 85.0, 90.0],
        vec![60.0, 70.0, 66.0],
        vec![110.0, 100.0, 120.0],
        vec![75.0, 72.0, 81.0],
    ];
    let c = vec![
        vec![0.8, 0.9, 1.0],
        vec![1.4, 1.2, 1.3],
        vec![0.6, 0.7, 0.65],
        vec![1.1, 1.0, 1.2],
    ];
    PanelPotentialTable::new(
        lambda,
        ["w", "x", "y", "z"].iter().map(|s| s.to_string()).collect(),
        oy0,
        oz0,
        c,
    )
    .unwrap()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Variance with divisor `n`.
pub fn pop_var(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64
}
