//! Finite-horizon transfer pairs stored as spectral elements.
//!
//! `R(k)` maps a disturbance at time `t - k` to the state at `t`, and `M(k)`
//! maps it to the input. `R(0)` is structurally zero and never stored.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{Mask, Provenance, SupportSpec};
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, fmt_f64};

/// Default zero-detection threshold.
pub const DEFAULT_TAU: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Causality {
    /// `M` starts at `k = 0`.
    #[serde(rename = "causal_M", alias = "causal_m")]
    CausalM,
    /// `R` and `M` both start at `k = 1`.
    #[serde(rename = "strictly_causal")]
    StrictlyCausal,
}

impl Causality {
    pub fn first_m_index(self) -> usize {
        match self {
            Self::CausalM => 0,
            Self::StrictlyCausal => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CausalM => "causal_M",
            Self::StrictlyCausal => "strictly_causal",
        }
    }
}

/// Spectral elements `R(1..=T)` and `M(k0..=T)`; everything past `T` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FirPair {
    causality: Causality,
    r: Vec<DMatrix<f64>>,
    m: Vec<DMatrix<f64>>,
}

impl FirPair {
    /// `r[k-1]` is `R(k)`; `m[k - k0]` is `M(k)`.
    pub fn new(causality: Causality, r: Vec<DMatrix<f64>>, m: Vec<DMatrix<f64>>) -> Result<Self> {
        let horizon = r.len();
        if horizon == 0 {
            return Err(Error::InvalidArgument("FIR horizon must be at least 1".into()));
        }
        let expected_m = horizon + 1 - causality.first_m_index();
        if m.len() != expected_m {
            return Err(dim_err("M element count", expected_m, m.len()));
        }
        let n = r[0].nrows();
        if let Some(bad) = r.iter().find(|e| e.shape() != (n, n)) {
            return Err(dim_err("R element", format!("{n}x{n}"), format!("{:?}", bad.shape())));
        }
        let inputs = m[0].nrows();
        if let Some(bad) = m.iter().find(|e| e.shape() != (inputs, n)) {
            return Err(dim_err("M element", format!("{inputs}x{n}"), format!("{:?}", bad.shape())));
        }
        Ok(Self { causality, r, m })
    }

    pub fn zeros(n: usize, m: usize, horizon: usize, causality: Causality) -> Self {
        let k0 = causality.first_m_index();
        Self {
            causality,
            r: vec![DMatrix::zeros(n, n); horizon],
            m: vec![DMatrix::zeros(m, n); horizon + 1 - k0],
        }
    }

    pub fn horizon(&self) -> usize {
        self.r.len()
    }

    pub fn causality(&self) -> Causality {
        self.causality
    }

    pub fn state_dim(&self) -> usize {
        self.r[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.m[0].nrows()
    }

    /// Indices `k` for which `M(k)` is stored.
    pub fn m_indices(&self) -> std::ops::RangeInclusive<usize> {
        self.causality.first_m_index()..=self.horizon()
    }

    /// `R(k)`, or `None` outside `1..=T`.
    pub fn r(&self, k: usize) -> Option<&DMatrix<f64>> {
        k.checked_sub(1).and_then(|i| self.r.get(i))
    }

    pub fn r_mut(&mut self, k: usize) -> Option<&mut DMatrix<f64>> {
        k.checked_sub(1).and_then(|i| self.r.get_mut(i))
    }

    /// `M(k)`, or `None` outside the stored range.
    pub fn m(&self, k: usize) -> Option<&DMatrix<f64>> {
        k.checked_sub(self.causality.first_m_index())
            .and_then(|i| self.m.get(i))
    }

    pub fn m_mut(&mut self, k: usize) -> Option<&mut DMatrix<f64>> {
        k.checked_sub(self.causality.first_m_index())
            .and_then(|i| self.m.get_mut(i))
    }

    pub fn r_elements(&self) -> &[DMatrix<f64>] {
        &self.r
    }

    pub fn m_elements(&self) -> &[DMatrix<f64>] {
        &self.m
    }

    /// Largest entry magnitude over all elements.
    pub fn max_abs(&self) -> f64 {
        self.r.iter().chain(&self.m).map(linalg::max_abs).fold(0.0, f64::max)
    }

    /// Input at time `t` driven by the disturbance history.
    pub fn convolve_m(&self, w: &[DVector<f64>], t: usize) -> Result<DVector<f64>> {
        convolve(self.causality.first_m_index(), &self.m, w, t)
    }

    /// State at time `t` driven by the disturbance history.
    pub fn convolve_r(&self, w: &[DVector<f64>], t: usize) -> Result<DVector<f64>> {
        convolve(1, &self.r, w, t)
    }

    /// Upcasts a strictly causal pair to the causal layout with `M(0) = 0`.
    pub fn to_causal(&self) -> Self {
        match self.causality {
            Causality::CausalM => self.clone(),
            Causality::StrictlyCausal => {
                let mut m = Vec::with_capacity(self.m.len() + 1);
                m.push(DMatrix::zeros(self.input_dim(), self.state_dim()));
                m.extend(self.m.iter().cloned());
                Self {
                    causality: Causality::CausalM,
                    r: self.r.clone(),
                    m,
                }
            }
        }
    }
}

/// `Σ_k elems[k - first] · w(t - k)`, with `w` zero outside the history.
///
/// `elems[0]` is the element at spectral index `first`.
pub fn convolve(first: usize, elems: &[DMatrix<f64>], w: &[DVector<f64>], t: usize) -> Result<DVector<f64>> {
    let Some(e0) = elems.first() else {
        return Err(Error::InvalidArgument("no spectral elements".into()));
    };
    let (rows, cols) = e0.shape();
    let mut out = DVector::zeros(rows);
    for (offset, elem) in elems.iter().enumerate() {
        let k = first + offset;
        let Some(idx) = t.checked_sub(k) else { break };
        let Some(wk) = w.get(idx) else { continue };
        if wk.len() != cols {
            return Err(dim_err("disturbance vector", cols, wk.len()));
        }
        out.gemv(1.0, elem, wk, 1.0);
    }
    Ok(out)
}

/// Quadratic cost weights: `Q` on states and `eps · I` on inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    q: DMatrix<f64>,
    eps: f64,
}

impl CostSpec {
    pub fn new(q: DMatrix<f64>, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("eps must be a finite nonnegative number, got {eps}")));
        }
        let scale = linalg::max_abs(&q).max(1.0);
        if !linalg::is_symmetric(&q, 1e-12 * scale) {
            return Err(Error::NotPsd { min_eigenvalue: f64::NAN });
        }
        let min_eigenvalue = if q.nrows() == 0 {
            0.0
        } else {
            q.clone().symmetric_eigenvalues().min()
        };
        if min_eigenvalue < -1e-12 * scale {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(Self { q, eps })
    }

    pub fn identity(n: usize, eps: f64) -> Result<Self> {
        Self::new(DMatrix::identity(n, n), eps)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Same `Q`, different input weight.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.q.clone(), eps)
    }
}

/// `Σ_k ‖Q^{1/2} R(k)‖_F² + eps · Σ_k ‖M(k)‖_F²`.
pub fn h2_cost_sq(pair: &FirPair, cost: &CostSpec) -> Result<f64> {
    Ok(state_cost_sq(pair, cost)? + cost.eps * pair.m.iter().map(|m| m.norm_squared()).sum::<f64>())
}

/// State part of [`h2_cost_sq`] alone.
pub fn state_cost_sq(pair: &FirPair, cost: &CostSpec) -> Result<f64> {
    if cost.q.nrows() != pair.state_dim() {
        return Err(dim_err("Q", pair.state_dim(), cost.q.nrows()));
    }
    // ‖Q^{1/2} R‖_F² = tr(Rᵀ Q R)
    Ok(pair.r.iter().map(|r| r.dot(&(&cost.q * r))).sum())
}

/// Response to a unit impulse `w(0) = e_i`, indexed by time `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

/// Column `i` of every spectral element, laid out in time.
pub fn impulse_columns(pair: &FirPair, i: usize) -> Result<ImpulseResponse> {
    let n = pair.state_dim();
    if i >= n {
        return Err(Error::InvalidArgument(format!("node {i} out of range for n={n}")));
    }
    let horizon = pair.horizon();
    let x = (0..=horizon)
        .map(|t| pair.r(t).map_or_else(|| DVector::zeros(n), |r| r.column(i).into_owned()))
        .collect();
    let u = (0..=horizon)
        .map(|t| {
            pair.m(t)
                .map_or_else(|| DVector::zeros(pair.input_dim()), |m| m.column(i).into_owned())
        })
        .collect();
    Ok(ImpulseResponse { x, u })
}

/// Masks of the entries with magnitude above `tau`.
pub fn support_of(pair: &FirPair, tau: f64) -> SupportSpec {
    let threshold = |e: &DMatrix<f64>| Mask::from_fn(e.nrows(), e.ncols(), |i, j| e[(i, j)].abs() > tau);
    SupportSpec::new(
        pair.causality,
        pair.r.iter().map(threshold).collect(),
        pair.m.iter().map(threshold).collect(),
        Provenance::Threshold { tau },
    )
    .expect("pair shapes are validated at construction")
}

#[derive(Serialize, Deserialize)]
struct ElementRecord {
    k: usize,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    r: Option<Vec<Vec<f64>>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    m: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct PairDocument {
    horizon: usize,
    causality: Causality,
    state_dim: usize,
    input_dim: usize,
    elements: Vec<ElementRecord>,
}

impl FirPair {
    /// JSON document with one `{"k", "R", "M"}` record per spectral index.
    pub fn to_json_value(&self) -> serde_json::Value {
        let elements = (self.causality.first_m_index()..=self.horizon())
            .map(|k| ElementRecord {
                k,
                r: self.r(k).map(linalg::to_rows),
                m: self.m(k).map(linalg::to_rows),
            })
            .collect();
        let doc = PairDocument {
            horizon: self.horizon(),
            causality: self.causality,
            state_dim: self.state_dim(),
            input_dim: self.input_dim(),
            elements,
        };
        serde_json::to_value(doc).expect("plain numeric document")
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.to_json_value())?;
        Ok(())
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let doc: PairDocument = serde_json::from_value(value)?;
        let mut pair = Self::zeros(doc.state_dim, doc.input_dim, doc.horizon, doc.causality);
        let matrix = |rows: &[Vec<f64>], k: usize, which: &str| {
            linalg::from_rows(rows).ok_or_else(|| Error::Format(format!("ragged {which}({k})")))
        };
        for rec in doc.elements {
            if let Some(rows) = rec.r {
                let mat = matrix(&rows, rec.k, "R")?;
                let slot = pair
                    .r_mut(rec.k)
                    .ok_or_else(|| Error::Format(format!("R index {} outside 1..={}", rec.k, doc.horizon)))?;
                if slot.shape() != mat.shape() {
                    return Err(dim_err(format!("R({})", rec.k), format!("{:?}", slot.shape()), format!("{:?}", mat.shape())));
                }
                *slot = mat;
            }
            if let Some(rows) = rec.m {
                let mat = matrix(&rows, rec.k, "M")?;
                let slot = pair
                    .m_mut(rec.k)
                    .ok_or_else(|| Error::Format(format!("M index {} outside the causal range", rec.k)))?;
                // An m x 0 or 0 x n matrix round-trips as an empty row list.
                if mat.is_empty() && slot.is_empty() {
                    continue;
                }
                if slot.shape() != mat.shape() {
                    return Err(dim_err(format!("M({})", rec.k), format!("{:?}", slot.shape()), format!("{:?}", mat.shape())));
                }
                *slot = mat;
            }
        }
        Ok(pair)
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        Self::from_json_value(serde_json::from_reader(input)?)
    }

    /// Long-format CSV `k,row,col,which,value` with 1-based row/col and
    /// every stored entry written.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "row", "col", "which", "value"])?;
        let blocks = (1..=self.horizon())
            .map(|k| (k, "R", self.r(k).unwrap()))
            .chain(self.m_indices().map(|k| (k, "M", self.m(k).unwrap())));
        for (k, which, mat) in blocks {
            for i in 0..mat.nrows() {
                for j in 0..mat.ncols() {
                    w.write_record([
                        k.to_string(),
                        (i + 1).to_string(),
                        (j + 1).to_string(),
                        which.to_string(),
                        fmt_f64(mat[(i, j)]),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads [`FirPair::write_csv`] output. Dimensions and horizon come from
    /// the largest indices present; a `k = 0` row marks a causal pair.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            k: usize,
            row: usize,
            col: usize,
            which: String,
            value: f64,
        }
        let mut entries: BTreeMap<(bool, usize, usize, usize), f64> = BTreeMap::new();
        let (mut n, mut m, mut horizon, mut causal) = (0, 0, 0, false);
        for rec in csv::Reader::from_reader(input).deserialize() {
            let rec: Row = rec?;
            if rec.row == 0 || rec.col == 0 {
                return Err(Error::Format("row/col are 1-based".into()));
            }
            let is_r = match rec.which.as_str() {
                "R" => true,
                "M" => false,
                other => return Err(Error::Format(format!("unknown block {other:?}"))),
            };
            if is_r {
                if rec.k == 0 {
                    return Err(Error::Format("R(0) is structurally zero".into()));
                }
                n = n.max(rec.row);
            } else {
                m = m.max(rec.row);
                causal |= rec.k == 0;
            }
            n = n.max(rec.col);
            horizon = horizon.max(rec.k);
            entries.insert((is_r, rec.k, rec.row - 1, rec.col - 1), rec.value);
        }
        if horizon == 0 {
            return Err(Error::Format("no spectral elements".into()));
        }
        let causality = if causal { Causality::CausalM } else { Causality::StrictlyCausal };
        let mut pair = Self::zeros(n, m, horizon, causality);
        for ((is_r, k, i, j), v) in entries {
            let slot = if is_r { pair.r_mut(k) } else { pair.m_mut(k) };
            slot.expect("indices bounded above")[(i, j)] = v;
        }
        Ok(pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(rng: &mut ChaCha8Rng, n: usize, m: usize, horizon: usize, causality: Causality) -> FirPair {
        let mut pair = FirPair::zeros(n, m, horizon, causality);
        for k in 1..=horizon {
            pair.r_mut(k).unwrap().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        for k in pair.m_indices() {
            pair.m_mut(k).unwrap().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        pair
    }

    fn random_history(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<DVector<f64>> {
        (0..len)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_r1_costs_n() {
        let mut pair = FirPair::zeros(8, 4, 3, Causality::StrictlyCausal);
        *pair.r_mut(1).unwrap() = DMatrix::identity(8, 8);
        let cost = CostSpec::identity(8, 0.0).unwrap();
        assert_eq!(h2_cost_sq(&pair, &cost).unwrap(), 8.0);
        let zero = FirPair::zeros(8, 4, 3, Causality::CausalM);
        assert_eq!(h2_cost_sq(&zero, &cost).unwrap(), 0.0);
    }

    #[test]
    fn cost_matches_elementwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = random_pair(&mut rng, 3, 2, 4, Causality::CausalM);
        let eps = 1e-6;
        let cost = CostSpec::identity(3, eps).unwrap();
        let mut brute = 0.0;
        for r in pair.r_elements() {
            for v in r.iter() {
                brute += v * v;
            }
        }
        for m in pair.m_elements() {
            for v in m.iter() {
                brute += eps * v * v;
            }
        }
        assert!((h2_cost_sq(&pair, &cost).unwrap() - brute).abs() <= 1e-12 * brute);
    }

    #[test]
    fn weighted_cost_uses_square_root_of_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pair = random_pair(&mut rng, 3, 1, 2, Causality::StrictlyCausal);
        let l = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let q = l.transpose() * &l;
        let cost = CostSpec::new(q, 0.0).unwrap();
        // Q = LᵀL, so ‖Q^{1/2}R‖² = ‖LR‖².
        let oracle: f64 = pair.r_elements().iter().map(|r| (&l * r).norm_squared()).sum();
        assert!((h2_cost_sq(&pair, &cost).unwrap() - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn indefinite_q_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(CostSpec::new(q, 0.1), Err(Error::NotPsd { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert!(CostSpec::new(asym, 0.1).is_err());
        assert!(CostSpec::identity(2, -1.0).is_err());
    }

    #[test]
    fn convolve_trivial_cases() {
        let mut pair = FirPair::zeros(3, 3, 2, Causality::CausalM);
        *pair.m_mut(0).unwrap() = DMatrix::identity(3, 3);
        let e2 = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        let hist = vec![DVector::zeros(3), DVector::zeros(3), e2.clone()];
        assert_eq!(pair.convolve_m(&hist, 2).unwrap(), e2);

        let k = DMatrix::from_row_slice(2, 5, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        let mut e4 = DVector::zeros(5);
        e4[3] = 1.0;
        let u1 = convolve(1, &[k.clone()], &[e4.clone()], 1).unwrap();
        assert_eq!(u1, k.column(3).into_owned());
    }

    #[test]
    fn convolve_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pair = random_pair(&mut rng, 4, 3, 5, Causality::CausalM);
        let w = random_history(&mut rng, 4, 12);
        for t in 0..15 {
            let got = pair.convolve_m(&w, t).unwrap();
            let mut oracle = DVector::<f64>::zeros(3);
            for k in 0..=5usize {
                if k > t || t - k >= w.len() {
                    continue;
                }
                let mk = pair.m(k).unwrap();
                for a in 0..3 {
                    for j in 0..4 {
                        oracle[a] += mk[(a, j)] * w[t - k][j];
                    }
                }
            }
            assert!((got - oracle).amax() <= 1e-12);
        }
    }

    #[test]
    fn convolve_rejects_wrong_length() {
        let pair = FirPair::zeros(3, 1, 2, Causality::StrictlyCausal);
        assert!(pair.convolve_m(&[DVector::zeros(2)], 1).is_err());
    }

    #[test]
    fn impulse_columns_layout() {
        let mut pair = FirPair::zeros(4, 2, 3, Causality::StrictlyCausal);
        *pair.r_mut(1).unwrap() = DMatrix::identity(4, 4);
        pair.m_mut(2).unwrap()[(1, 2)] = 0.5;
        let resp = impulse_columns(&pair, 2).unwrap();
        assert_eq!(resp.x.len(), 4);
        assert_eq!(resp.x[0], DVector::zeros(4));
        assert_eq!(resp.x[1], DVector::from_column_slice(&[0.0, 0.0, 1.0, 0.0]));
        assert_eq!(resp.u[2], DVector::from_column_slice(&[0.0, 0.5]));
        assert!(impulse_columns(&pair, 4).is_err());
    }

    #[test]
    fn h2_is_sum_over_impulse_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pair = random_pair(&mut rng, 5, 2, 4, Causality::CausalM);
        let cost = CostSpec::identity(5, 0.01).unwrap();
        let mut total = 0.0;
        for i in 0..5 {
            let resp = impulse_columns(&pair, i).unwrap();
            total += resp.x.iter().map(|v| v.norm_squared()).sum::<f64>();
            total += 0.01 * resp.u.iter().map(|v| v.norm_squared()).sum::<f64>();
        }
        let direct = h2_cost_sq(&pair, &cost).unwrap();
        assert!((total - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn support_thresholds() {
        let zero = FirPair::zeros(3, 2, 2, Causality::CausalM);
        let spec = support_of(&zero, DEFAULT_TAU);
        assert!(spec.r_masks().iter().chain(spec.m_masks()).all(Mask::is_empty));

        let mut pair = FirPair::zeros(2, 1, 1, Causality::StrictlyCausal);
        pair.r_mut(1).unwrap()[(0, 1)] = 2e-9;
        pair.r_mut(1).unwrap()[(1, 1)] = 5e-10;
        let spec = support_of(&pair, DEFAULT_TAU);
        assert!(spec.r_mask(1).unwrap().get(0, 1));
        assert!(!spec.r_mask(1).unwrap().get(1, 1));
    }

    #[test]
    fn json_and_csv_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for causality in [Causality::CausalM, Causality::StrictlyCausal] {
            let pair = random_pair(&mut rng, 3, 2, 3, causality);
            let mut buf = Vec::new();
            pair.write_json(&mut buf).unwrap();
            assert_eq!(FirPair::read_json(buf.as_slice()).unwrap(), pair);

            let mut buf = Vec::new();
            pair.write_csv(&mut buf).unwrap();
            assert_eq!(FirPair::read_csv(buf.as_slice()).unwrap(), pair);
        }
    }

    #[test]
    fn json_records_carry_k_r_m() {
        let pair = FirPair::zeros(2, 1, 2, Causality::CausalM);
        let v = pair.to_json_value();
        let elems = v["elements"].as_array().unwrap();
        assert_eq!(elems.len(), 3);
        assert_eq!(elems[0]["k"], 0);
        assert!(elems[0].get("R").is_none());
        assert_eq!(elems[1]["R"].as_array().unwrap().len(), 2);
        assert_eq!(v["causality"], "causal_M");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn convolution_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, t in 0usize..12) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pair = random_pair(&mut rng, 3, 2, 5, Causality::CausalM);
                let w1 = random_history(&mut rng, 3, 10);
                let w2 = random_history(&mut rng, 3, 10);
                let mix: Vec<_> = w1.iter().zip(&w2).map(|(a, b)| a * alpha + b * beta).collect();
                let lhs = pair.convolve_m(&mix, t).unwrap();
                let rhs = pair.convolve_m(&w1, t).unwrap() * alpha + pair.convolve_m(&w2, t).unwrap() * beta;
                prop_assert!((lhs - rhs).amax() <= 1e-12);
            }
        }
    }
}
