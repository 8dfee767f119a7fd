//! Imbalance functionals over representation batches.
//!
//! * `pair`: sum of MMDs over all `K(K−1)/2` arm pairs.
//! * `ova`: sum over arms of the MMD between the arm and the pooled rest.
//! * `agg`: a single HSIC between the representation and the treatment
//!   embedding of each row.
//!
//! Pair and one-vs-all terms are scored as masked mean-embedding contrasts
//! `wᵀ G w` over one Gram matrix `G` of the whole batch, where `w` carries
//! `+1/n_a` on rows of the first group and `−1/n_b` on rows of the second.
//! Every term therefore costs the same regardless of arm sizes.

pub mod geodesic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Bandwidth, Kernel, KernelSpec};
use crate::math::Matrix;

pub use geodesic::{geodesic_penalty, GeodesicGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    Pair,
    Ova,
    Agg,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [StrategyKind::Pair, StrategyKind::Ova, StrategyKind::Agg];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Pair => "pair",
            StrategyKind::Ova => "ova",
            StrategyKind::Agg => "agg",
        }
    }

    /// Number of discrepancy terms for `k` treatments.
    pub fn term_count(self, k: usize) -> usize {
        match self {
            StrategyKind::Pair => k * k.saturating_sub(1) / 2,
            StrategyKind::Ova => k,
            StrategyKind::Agg => 1,
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(StrategyKind::Pair),
            "ova" => Ok(StrategyKind::Ova),
            "agg" => Ok(StrategyKind::Agg),
            other => Err(Error::InvalidArgument(format!("unknown strategy '{other}' (pair|ova|agg)"))),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Kernel on the representation.
    pub kernel: KernelSpec,
    /// Kernel on treatment embeddings (agg only).
    pub embed_kernel: KernelSpec,
    pub embedding_dim: usize,
    pub geodesic_weight: f64,
    pub min_arm_batch: usize,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            kernel: KernelSpec::rbf_median(),
            embed_kernel: KernelSpec::rbf_median(),
            embedding_dim: 8,
            geodesic_weight: 0.0,
            min_arm_batch: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == StrategyKind::Agg && self.embedding_dim == 0 {
            return Err(Error::InvalidArgument("agg strategy needs embedding_dim >= 1".into()));
        }
        if !(self.geodesic_weight >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "geodesic weight must be >= 0, got {}",
                self.geodesic_weight
            )));
        }
        if self.min_arm_batch == 0 {
            return Err(Error::InvalidArgument("min_arm_batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// Row indices of each treatment arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmGroups {
    pub indices: Vec<Vec<usize>>,
    pub has_empty: bool,
}

impl ArmGroups {
    pub fn counts(&self) -> Vec<usize> {
        self.indices.iter().map(Vec::len).collect()
    }

    pub fn samples(&self, z: &Matrix) -> Vec<Matrix> {
        self.indices.iter().map(|idx| z.select_rows(idx)).collect()
    }
}

pub fn group_by_arm(t: &[usize], k: usize) -> Result<ArmGroups> {
    let mut indices = vec![Vec::new(); k];
    for (i, &arm) in t.iter().enumerate() {
        if arm >= k {
            return Err(Error::InvalidArgument(format!("treatment {arm} at row {i} outside [0, {k})")));
        }
        indices[arm].push(i);
    }
    let has_empty = indices.iter().any(Vec::is_empty);
    Ok(ArmGroups { indices, has_empty })
}

/// Value of an imbalance functional with optional gradients.
#[derive(Debug, Clone)]
pub struct PenaltyValue {
    pub value: f64,
    pub grad_z: Option<Matrix>,
    pub grad_table: Option<Matrix>,
    pub terms_evaluated: usize,
    pub terms_skipped: usize,
}

fn check_rows(z: &Matrix, t: &[usize]) -> Result<()> {
    if z.rows() != t.len() {
        return Err(Error::shape("penalty rows", t.len(), z.rows()));
    }
    Ok(())
}

/// Sums `sqrt(wᵀ G w)` over the given contrasts, renormalising for skipped
/// ones. Each contrast is `(rows with +1/|a|, rows with −1/|b|)`.
fn contrast_sum(
    kernel: &Kernel,
    z: &Matrix,
    contrasts: &[Option<(Vec<usize>, Vec<usize>)>],
    want_grad: bool,
) -> Result<PenaltyValue> {
    let n = z.rows();
    let evaluated = contrasts.iter().filter(|c| c.is_some()).count();
    if evaluated == 0 {
        return Err(Error::Degenerate(format!(
            "all {} balance terms skipped: arms below min_arm_batch",
            contrasts.len()
        )));
    }
    let gram = kernel.gram(z, z)?;
    let gram_scale = gram.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // |w|₁ = 2 for every contrast
    let roundoff_floor = 256.0 * f64::EPSILON * 4.0 * gram_scale;
    let mut weights = want_grad.then(|| Matrix::zeros(n, n));
    let mut w = vec![0.0; n];
    let mut gw = vec![0.0; n];
    let mut value = 0.0;
    for (first, second) in contrasts.iter().flatten() {
        w.iter_mut().for_each(|x| *x = 0.0);
        let wa = 1.0 / first.len() as f64;
        let wb = -1.0 / second.len() as f64;
        for &i in first {
            w[i] = wa;
        }
        for &i in second {
            w[i] = wb;
        }
        for (r, out) in gw.iter_mut().enumerate() {
            *out = gram.row(r).iter().zip(&w).map(|(g, x)| g * x).sum();
        }
        let mmd2: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
        // Below the rounding floor of the quadratic form the contrast is zero;
        // the square root would otherwise amplify ~1e-17 noise to ~1e-9.
        let mmd = if mmd2 > roundoff_floor { mmd2.sqrt() } else { 0.0 };
        value += mmd;
        if let Some(acc) = weights.as_mut() {
            if mmd > 0.0 {
                let c = 0.5 / mmd;
                for r in 0..n {
                    let wr = c * w[r];
                    for (a, x) in acc.row_mut(r).iter_mut().zip(&w) {
                        *a += wr * x;
                    }
                }
            }
        }
    }
    let scale = contrasts.len() as f64 / evaluated as f64;
    let grad_z = match weights {
        Some(mut acc) => {
            acc.scale(scale);
            Some(kernel.symmetric_self_gram_grad(z, &gram, acc)?)
        }
        None => None,
    };
    Ok(PenaltyValue {
        value: value * scale,
        grad_z,
        grad_table: None,
        terms_evaluated: evaluated,
        terms_skipped: contrasts.len() - evaluated,
    })
}

/// Pairwise balancing: `Σ_{j<k} MMD(arm j, arm k)`.
pub fn r_pair(spec: &StrategySpec, z: &Matrix, t: &[usize], k: usize, want_grad: bool) -> Result<PenaltyValue> {
    check_rows(z, t)?;
    let groups = group_by_arm(t, k)?;
    let ok = |a: usize| groups.indices[a].len() >= spec.min_arm_batch;
    let mut contrasts = Vec::with_capacity(StrategyKind::Pair.term_count(k));
    for a in 0..k {
        for b in a + 1..k {
            contrasts.push((ok(a) && ok(b)).then(|| (groups.indices[a].clone(), groups.indices[b].clone())));
        }
    }
    let kernel = spec.kernel.kernel_for(z, z)?;
    contrast_sum(&kernel, z, &contrasts, want_grad)
}

/// One-vs-all balancing: `Σ_k MMD(arm k, all other rows pooled)`.
pub fn r_ova(spec: &StrategySpec, z: &Matrix, t: &[usize], k: usize, want_grad: bool) -> Result<PenaltyValue> {
    check_rows(z, t)?;
    let groups = group_by_arm(t, k)?;
    let contrasts: Vec<_> = (0..k)
        .map(|a| {
            let own = &groups.indices[a];
            let rest: Vec<usize> = (0..t.len()).filter(|&i| t[i] != a).collect();
            (own.len() >= spec.min_arm_batch && rest.len() >= spec.min_arm_batch).then(|| (own.clone(), rest))
        })
        .collect();
    let kernel = spec.kernel.kernel_for(z, z)?;
    contrast_sum(&kernel, z, &contrasts, want_grad)
}

/// Treatment aggregation: `HSIC(z, table[t])`, one term for any `K`.
///
/// The embedding Gram has only `K` distinct rows, so it is evaluated on the
/// table (`K × K`) and read through the treatment labels; the table gradient
/// comes from arm-block sums of the centered representation Gram.
pub fn r_agg(spec: &StrategySpec, z: &Matrix, t: &[usize], table: &Matrix, want_grad: bool) -> Result<PenaltyValue> {
    check_rows(z, t)?;
    let k = table.rows();
    if let Some(&bad) = t.iter().find(|&&a| a >= k) {
        return Err(Error::InvalidArgument(format!("treatment {bad} has no embedding row")));
    }
    let n = t.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            context: "r_agg",
            needed: 3,
            got: n,
        });
    }
    let kz = spec.kernel.kernel_for(z, z)?;
    let ke = match spec.embed_kernel.bandwidth {
        Bandwidth::Median => {
            let e = table.select_rows(t);
            spec.embed_kernel.kernel_for(&e, &e)?
        }
        Bandwidth::Fixed(_) => spec.embed_kernel.kernel_for(table, table)?,
    };
    let gram_z = kz.gram(z, z)?;
    let gram_t = ke.gram(table, table)?;
    let inv_n2 = 1.0 / (n * n) as f64;
    // tr(K H L H) = <H K H, L>; with L_ij = Lt[t_i, t_j] this reduces to
    // block sums of HKH against Lt, and those follow from the block sums of
    // K, the row sums of K and the arm counts
    let mut counts = vec![0.0; k];
    for &a in t {
        counts[a] += 1.0;
    }
    let mut raw = Matrix::zeros(k, k);
    let mut arm_rows = vec![0.0; k];
    let mut acc = vec![0.0; k];
    for i in 0..n {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (&a, v) in t.iter().zip(gram_z.row(i)) {
            acc[a] += v;
        }
        let row_total: f64 = acc.iter().sum();
        arm_rows[t[i]] += row_total;
        for (b, v) in raw.row_mut(t[i]).iter_mut().zip(&acc) {
            *b += v;
        }
    }
    let nf = n as f64;
    let grand_k = arm_rows.iter().sum::<f64>() / (nf * nf);
    let mut blocks = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let centred = raw.get(a, b) - (counts[b] * arm_rows[a] + counts[a] * arm_rows[b]) / nf
                + counts[a] * counts[b] * grand_k;
            blocks.set(a, b, centred);
        }
    }
    let value = inv_n2 * blocks.frobenius_dot(&gram_t);
    let (grad_z, grad_table) = if want_grad {
        // H L H from arm-level row means of L
        let arm_mean: Vec<f64> = (0..k)
            .map(|a| gram_t.row(a).iter().zip(&counts).map(|(l, c)| l * c).sum::<f64>() / n as f64)
            .collect();
        let grand = arm_mean.iter().zip(&counts).map(|(m, c)| m * c).sum::<f64>() / n as f64;
        let mut lc = Matrix::zeros(n, n);
        for i in 0..n {
            let (ti, mi) = (t[i], arm_mean[t[i]]);
            let lt = gram_t.row(ti);
            for (j, v) in lc.row_mut(i).iter_mut().enumerate() {
                *v = inv_n2 * (lt[t[j]] - mi - arm_mean[t[j]] + grand);
            }
        }
        blocks.scale(inv_n2);
        (
            Some(kz.symmetric_self_gram_grad(z, &gram_z, lc)?),
            Some(ke.symmetric_self_gram_grad(table, &gram_t, blocks)?),
        )
    } else {
        (None, None)
    };
    Ok(PenaltyValue {
        value,
        grad_z,
        grad_table,
        terms_evaluated: 1,
        terms_skipped: 0,
    })
}

/// `R̂_S(z)` for the configured strategy, plus `λ_geo · geodesic_penalty`
/// when a geodesic weight is set.
pub fn strategy_penalty(
    spec: &StrategySpec,
    z: &Matrix,
    t: &[usize],
    table: &Matrix,
    graph: Option<&GeodesicGraph>,
    want_grad: bool,
) -> Result<PenaltyValue> {
    spec.validate()?;
    let k = table.rows();
    let mut out = match spec.kind {
        StrategyKind::Pair => r_pair(spec, z, t, k, want_grad)?,
        StrategyKind::Ova => r_ova(spec, z, t, k, want_grad)?,
        StrategyKind::Agg => r_agg(spec, z, t, table, want_grad)?,
    };
    if spec.geodesic_weight > 0.0 {
        let graph = graph.ok_or_else(|| Error::InvalidArgument("geodesic weight set but no treatment graph given".into()))?;
        let (geo, geo_grad) = geodesic_penalty(table, graph, want_grad)?;
        out.value += spec.geodesic_weight * geo;
        if let Some(gg) = geo_grad {
            let acc = out.grad_table.get_or_insert_with(|| Matrix::zeros(table.rows(), table.cols()));
            acc.axpy(spec.geodesic_weight, &gg);
        }
    }
    Ok(out)
}
