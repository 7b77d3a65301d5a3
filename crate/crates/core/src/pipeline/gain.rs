//! Number, variety and value ratios of autonomous versus human-driven
//! experiment campaigns.

use std::ops::{Div, Mul};
use std::path::Path;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dae::csv_err;
use crate::error::{Error, Result};

/// Raw campaign figures; every value must be positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainInputs<T = f64> {
    pub n_human: T,
    pub n_auto: T,
    pub variety_human: T,
    pub variety_auto: T,
    pub value_human: T,
    pub value_auto: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport<T = f64> {
    pub n_human: T,
    pub n_auto: T,
    pub variety_human: T,
    pub variety_auto: T,
    pub value_human: T,
    pub value_auto: T,
    /// `(n_human / n_auto) (variety_auto / variety_human) (value_auto / value_human)`.
    pub gain: T,
}

/// Product of the three ratios, computed in `T` so exact types stay exact.
pub fn gain_factor<T>(inputs: &GainInputs<T>) -> Result<GainReport<T>>
where
    T: Clone + PartialOrd + Zero + Mul<Output = T> + Div<Output = T>,
{
    let GainInputs { n_human, n_auto, variety_human, variety_auto, value_human, value_auto } = inputs.clone();
    let named = [
        ("n_human", &n_human),
        ("n_auto", &n_auto),
        ("variety_human", &variety_human),
        ("variety_auto", &variety_auto),
        ("value_human", &value_human),
        ("value_auto", &value_auto),
    ];
    // `!(v > 0)` also rejects NaN.
    if let Some((name, _)) = named.iter().find(|(_, v)| !(**v > T::zero())) {
        return Err(Error::InvalidArgument(format!("{name} must be positive")));
    }
    let gain = (n_human.clone() / n_auto.clone())
        * (variety_auto.clone() / variety_human.clone())
        * (value_auto.clone() / value_human.clone());
    Ok(GainReport { n_human, n_auto, variety_human, variety_auto, value_human, value_auto, gain })
}

/// One named row of a gains CSV: `name,n_human,n_auto,variety_human,variety_auto,value_human,value_auto`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub name: String,
    #[serde(flatten)]
    pub inputs: GainInputs<f64>,
}

pub fn read_gain_csv(path: &Path) -> Result<Vec<GainRow>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 7 {
            return Err(Error::Parse(format!("gain row has {} fields, expected 7", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| Error::Parse(format!("bad number '{}' in gain row", &rec[i])))
        };
        rows.push(GainRow {
            name: rec[0].trim().to_string(),
            inputs: GainInputs {
                n_human: num(1)?,
                n_auto: num(2)?,
                variety_human: num(3)?,
                variety_auto: num(4)?,
                value_human: num(5)?,
                value_auto: num(6)?,
            },
        });
    }
    Ok(rows)
}

/// Area of the convex hull of planar points (monotone chain); zero for fewer
/// than three non-collinear points.
pub fn convex_hull_area(points: &[[f64; 2]]) -> f64 {
    let mut p: Vec<[f64; 2]> = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return 0.0;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n).map(|i| cross([0.0, 0.0], hull[i], hull[(i + 1) % n])).sum::<f64>().abs() / 2.0
}
