//! Sparsity sets over spectral elements: locality, communication delay and
//! self delay encoded as per-index boolean masks.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::plant::LinearSystem;
use crate::spectral::{Causality, FirPair};

/// Row-major boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i * self.cols + j] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_all(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// True when every allowed entry of `self` is allowed in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.shape() == other.shape() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Plain-text grid: `#` allowed/nonzero, `.` otherwise.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push(if self.get(i, j) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

/// Locality and delay parameters of the sparsity set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalityRule {
    /// Hop radius.
    pub d: usize,
    /// Time steps of latency per hop.
    #[serde(default)]
    pub comm_delay: usize,
    /// Extra steps before a node may use its own information.
    #[serde(default)]
    pub self_delay: usize,
}

impl LocalityRule {
    pub fn hops(d: usize) -> Self {
        Self {
            d,
            comm_delay: 0,
            self_delay: 0,
        }
    }

    /// Whether an entry coupling nodes at `dist` hops may be nonzero at
    /// spectral index `k`, given the first causal index `k0`.
    pub fn allows(&self, dist: Option<usize>, k: usize, k0: usize) -> bool {
        let Some(dist) = dist else { return false };
        dist <= self.d
            && k >= k0 + self.comm_delay * dist
            && (dist > 0 || k >= k0 + self.self_delay)
    }
}

/// How a support was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Locality {
        rule: LocalityRule,
        /// False when the R masks were replaced by all-true masks.
        r_constrained: bool,
    },
    Threshold {
        tau: f64,
    },
    Custom,
}

/// Per-spectral-index masks: `r_masks[k-1]` for `R(k)`, `k = 1..=T`;
/// `m_masks` starts at `k = 0` for [`Causality::CausalM`], else at `k = 1`.
/// `M` masks are indexed (actuator, disturbance node).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSpec {
    horizon: usize,
    causality: Causality,
    r_masks: Vec<Mask>,
    m_masks: Vec<Mask>,
    provenance: Provenance,
}

impl SupportSpec {
    pub fn new(
        causality: Causality,
        r_masks: Vec<Mask>,
        m_masks: Vec<Mask>,
        provenance: Provenance,
    ) -> Result<Self> {
        let horizon = r_masks.len();
        if horizon == 0 {
            return Err(Error::InvalidArgument("support horizon must be at least 1".into()));
        }
        let expected_m = horizon + 1 - causality.first_m_index();
        if m_masks.len() != expected_m {
            return Err(dim_err("M mask count", expected_m, m_masks.len()));
        }
        let (n, n2) = r_masks[0].shape();
        if n != n2 || r_masks.iter().any(|m| m.shape() != (n, n)) {
            return Err(dim_err("R masks", format!("{n}x{n}"), "mixed shapes"));
        }
        let (m, cols) = m_masks[0].shape();
        if cols != n || m_masks.iter().any(|mm| mm.shape() != (m, n)) {
            return Err(dim_err("M masks", format!("{m}x{n}"), "mixed shapes"));
        }
        Ok(Self {
            horizon,
            causality,
            r_masks,
            m_masks,
            provenance,
        })
    }

    /// Masks allowing everything.
    pub fn permissive(n: usize, m: usize, horizon: usize, causality: Causality) -> Self {
        let k0 = causality.first_m_index();
        Self {
            horizon,
            causality,
            r_masks: vec![Mask::filled(n, n, true); horizon],
            m_masks: vec![Mask::filled(m, n, true); horizon + 1 - k0],
            provenance: Provenance::Custom,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn causality(&self) -> Causality {
        self.causality
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn state_dim(&self) -> usize {
        self.r_masks[0].shape().0
    }

    pub fn input_dim(&self) -> usize {
        self.m_masks[0].shape().0
    }

    /// Mask of `R(k)`; `None` outside `1..=T`.
    pub fn r_mask(&self, k: usize) -> Option<&Mask> {
        k.checked_sub(1).and_then(|idx| self.r_masks.get(idx))
    }

    /// Mask of `M(k)`; `None` outside the causal range.
    pub fn m_mask(&self, k: usize) -> Option<&Mask> {
        k.checked_sub(self.causality.first_m_index())
            .and_then(|idx| self.m_masks.get(idx))
    }

    pub fn r_masks(&self) -> &[Mask] {
        &self.r_masks
    }

    pub fn m_masks(&self) -> &[Mask] {
        &self.m_masks
    }

    /// Communication delay per hop, when the support came from a locality rule.
    pub fn comm_delay(&self) -> usize {
        match self.provenance {
            Provenance::Locality { rule, .. } => rule.comm_delay,
            _ => 0,
        }
    }

    /// Replaces every R mask by an all-true mask, keeping the M masks.
    pub fn without_r_constraints(mut self) -> Self {
        for mask in &mut self.r_masks {
            *mask = Mask::filled(mask.rows, mask.cols, true);
        }
        match &mut self.provenance {
            Provenance::Locality { r_constrained, .. } => *r_constrained = false,
            other => *other = Provenance::Custom,
        }
        self
    }

    /// Overrides the R masks.
    pub fn with_r_masks(mut self, masks: Vec<Mask>) -> Result<Self> {
        if masks.len() != self.horizon || masks.iter().any(|m| m.shape() != self.r_masks[0].shape()) {
            return Err(dim_err("R mask override", self.horizon, masks.len()));
        }
        self.r_masks = masks;
        self.provenance = Provenance::Custom;
        Ok(self)
    }

    /// Overrides the M masks.
    pub fn with_m_masks(mut self, masks: Vec<Mask>) -> Result<Self> {
        if masks.len() != self.m_masks.len() || masks.iter().any(|m| m.shape() != self.m_masks[0].shape()) {
            return Err(dim_err("M mask override", self.m_masks.len(), masks.len()));
        }
        self.m_masks = masks;
        self.provenance = Provenance::Custom;
        Ok(self)
    }

    /// True when every mask of `self` is contained in the matching mask of
    /// `other` (indices missing from `other` count as all-false).
    pub fn is_subset_of(&self, other: &SupportSpec) -> bool {
        let r_ok = (1..=self.horizon).all(|k| match (self.r_mask(k), other.r_mask(k)) {
            (Some(a), Some(b)) => a.is_subset_of(b),
            (Some(a), None) => a.is_empty(),
            _ => true,
        });
        let k0 = self.causality.first_m_index();
        let m_ok = (k0..=self.horizon).all(|k| match (self.m_mask(k), other.m_mask(k)) {
            (Some(a), Some(b)) => a.is_subset_of(b),
            (Some(a), None) => a.is_empty(),
            _ => true,
        });
        r_ok && m_ok
    }

    /// CSV of allowed entries: `k,row,col,which` with 1-based row/col.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "row", "col", "which"])?;
        let k0 = self.causality.first_m_index();
        let blocks = (1..=self.horizon)
            .map(|k| (k, "R", self.r_mask(k).unwrap()))
            .chain((k0..=self.horizon).map(|k| (k, "M", self.m_mask(k).unwrap())));
        for (k, which, mask) in blocks {
            let (rows, cols) = mask.shape();
            for i in 0..rows {
                for j in 0..cols {
                    if mask.get(i, j) {
                        w.write_record([k.to_string(), (i + 1).to_string(), (j + 1).to_string(), which.to_string()])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the sparsity set for `sys` from a locality rule.
///
/// Entry `(i, j)` of `R(k)` is allowed iff `dist(i,j) <= d`,
/// `k >= k0 + comm_delay * dist(i,j)` and, on the diagonal,
/// `k >= k0 + self_delay`. `k0` is 0 for the M masks of a causal pair and
/// 1 otherwise. For `M`, row `α` uses the node actuated by actuator `α`.
pub fn locality_support(
    sys: &LinearSystem,
    rule: LocalityRule,
    horizon: usize,
    causality: Causality,
) -> Result<SupportSpec> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon T must be at least 1".into()));
    }
    let n = sys.state_dim();
    let dist = sys.topology().distance_matrix();
    let actuated = sys.actuated();
    let r_masks = (1..=horizon)
        .map(|k| Mask::from_fn(n, n, |i, j| rule.allows(dist[i][j], k, 1)))
        .collect();
    let k0 = causality.first_m_index();
    let m_masks = (k0..=horizon)
        .map(|k| Mask::from_fn(actuated.len(), n, |a, j| rule.allows(dist[actuated[a]][j], k, k0)))
        .collect();
    SupportSpec::new(
        causality,
        r_masks,
        m_masks,
        Provenance::Locality {
            rule,
            r_constrained: true,
        },
    )
}

fn check_shapes(pair: &FirPair, spec: &SupportSpec) -> Result<()> {
    if pair.horizon() != spec.horizon() {
        return Err(dim_err("horizon", spec.horizon(), pair.horizon()));
    }
    if pair.state_dim() != spec.state_dim() || pair.input_dim() != spec.input_dim() {
        return Err(dim_err(
            "pair vs support",
            format!("n={}, m={}", spec.state_dim(), spec.input_dim()),
            format!("n={}, m={}", pair.state_dim(), pair.input_dim()),
        ));
    }
    Ok(())
}

/// Zeroes every entry outside the mask. `M(0)` of a causal pair is cleared
/// when the support is strictly causal.
pub fn apply_mask(pair: &FirPair, spec: &SupportSpec) -> Result<FirPair> {
    check_shapes(pair, spec)?;
    let mut out = pair.clone();
    for k in 1..=pair.horizon() {
        let mask = spec.r_mask(k).unwrap();
        let r = out.r_mut(k).unwrap();
        for (i, j) in iter_shape(mask.shape()) {
            if !mask.get(i, j) {
                r[(i, j)] = 0.0;
            }
        }
    }
    for k in pair.m_indices() {
        let mask = spec.m_mask(k);
        let m = out.m_mut(k).unwrap();
        for (i, j) in iter_shape(m.shape()) {
            if !mask.is_some_and(|mask| mask.get(i, j)) {
                m[(i, j)] = 0.0;
            }
        }
    }
    Ok(out)
}

fn iter_shape((rows, cols): (usize, usize)) -> impl Iterator<Item = (usize, usize)> {
    (0..rows).flat_map(move |i| (0..cols).map(move |j| (i, j)))
}

/// Which block of the pair an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    R,
    M,
}

impl Block {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::R => "R",
            Self::M => "M",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskViolation {
    pub k: usize,
    pub block: Block,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskCheck {
    pub ok: bool,
    pub violations: Vec<MaskViolation>,
}

/// Lists off-mask entries with magnitude above `tol` (0-based row/col).
pub fn check_mask(pair: &FirPair, spec: &SupportSpec, tol: f64) -> Result<MaskCheck> {
    check_shapes(pair, spec)?;
    let mut violations = Vec::new();
    for k in 1..=pair.horizon() {
        let mask = spec.r_mask(k).unwrap();
        let r = pair.r(k).unwrap();
        for (i, j) in iter_shape(mask.shape()) {
            if !mask.get(i, j) && r[(i, j)].abs() > tol {
                violations.push(MaskViolation {
                    k,
                    block: Block::R,
                    row: i,
                    col: j,
                    value: r[(i, j)],
                });
            }
        }
    }
    for k in pair.m_indices() {
        let mask = spec.m_mask(k);
        let m = pair.m(k).unwrap();
        for (i, j) in iter_shape(m.shape()) {
            let allowed = mask.is_some_and(|mask| mask.get(i, j));
            if !allowed && m[(i, j)].abs() > tol {
                violations.push(MaskViolation {
                    k,
                    block: Block::M,
                    row: i,
                    col: j,
                    value: m[(i, j)],
                });
            }
        }
    }
    Ok(MaskCheck {
        ok: violations.is_empty(),
        violations,
    })
}
