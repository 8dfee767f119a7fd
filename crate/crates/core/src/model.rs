//! Representation network, outcome heads and the penalized objective
//! `ε̂_F + α·R̂_S`.

use serde::{Deserialize, Serialize};

use crate::balancing::{geodesic_penalty, strategy_penalty, GeodesicGraph, StrategyKind, StrategySpec};
use crate::error::{Error, Result};
use crate::math::{Activation, Matrix, MlpParams, ParamVector, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadMode {
    /// One head per treatment on `z`.
    MultiHead,
    /// One shared head on `z ⊕ e_t`.
    EmbedConditioned,
}

impl HeadMode {
    pub fn name(self) -> &'static str {
        match self {
            HeadMode::MultiHead => "multi_head",
            HeadMode::EmbedConditioned => "embed_conditioned",
        }
    }

    /// Default for `k` treatments under `strategy`: per-arm heads up to ten
    /// arms, a conditioned head beyond that and always for aggregation.
    pub fn default_for(k: usize, strategy: StrategyKind) -> Self {
        if k > 10 || strategy == StrategyKind::Agg {
            HeadMode::EmbedConditioned
        } else {
            HeadMode::MultiHead
        }
    }
}

impl std::str::FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi_head" => Ok(HeadMode::MultiHead),
            "embed_conditioned" => Ok(HeadMode::EmbedConditioned),
            other => Err(Error::InvalidArgument(format!(
                "unknown head mode '{other}' (multi_head|embed_conditioned)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub k: usize,
    pub d_z: usize,
    pub phi_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub head_mode: HeadMode,
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub phi: MlpParams,
    /// `K` heads in multi-head mode, one head otherwise.
    pub heads: Vec<MlpParams>,
    /// Treatment embeddings, `K × d_e`.
    pub table: Matrix,
    pub head_mode: HeadMode,
}

impl ModelParams {
    pub fn init(arch: &Architecture, rng: &mut RngStream) -> Result<Self> {
        if arch.k < 2 || arch.d_z == 0 || arch.input_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "architecture needs K >= 2, d_z >= 1, input_dim >= 1 (got K={}, d_z={}, d={})",
                arch.k, arch.d_z, arch.input_dim
            )));
        }
        if arch.head_mode == HeadMode::EmbedConditioned && arch.embedding_dim == 0 {
            return Err(Error::InvalidArgument("embed_conditioned heads need embedding_dim >= 1".into()));
        }
        let mut phi_dims = vec![arch.input_dim];
        phi_dims.extend(&arch.phi_hidden);
        phi_dims.push(arch.d_z);
        let phi = MlpParams::init(&phi_dims, Activation::Relu, Activation::Identity, &mut rng.derive(1))?;
        let head_in = match arch.head_mode {
            HeadMode::MultiHead => arch.d_z,
            HeadMode::EmbedConditioned => arch.d_z + arch.embedding_dim,
        };
        let mut head_dims = vec![head_in];
        head_dims.extend(&arch.head_hidden);
        head_dims.push(1);
        let count = match arch.head_mode {
            HeadMode::MultiHead => arch.k,
            HeadMode::EmbedConditioned => 1,
        };
        let mut head_rng = rng.derive(2);
        let heads = (0..count)
            .map(|_| MlpParams::init(&head_dims, Activation::Relu, Activation::Identity, &mut head_rng))
            .collect::<Result<Vec<_>>>()?;
        let mut table_rng = rng.derive(3);
        let d_e = arch.embedding_dim.max(1);
        let table = Matrix::from_vec(arch.k, d_e, (0..arch.k * d_e).map(|_| 0.1 * table_rng.normal()).collect())?;
        let model = Self {
            phi,
            heads,
            table,
            head_mode: arch.head_mode,
        };
        model.check()?;
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.table.rows()
    }

    pub fn d_z(&self) -> usize {
        self.phi.output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            phi: self.phi.zeros_like(),
            heads: self.heads.iter().map(MlpParams::zeros_like).collect(),
            table: Matrix::zeros(self.table.rows(), self.table.cols()),
            head_mode: self.head_mode,
        }
    }

    pub fn check(&self) -> Result<()> {
        let expected_in = match self.head_mode {
            HeadMode::MultiHead => {
                if self.heads.len() != self.k() {
                    return Err(Error::shape("ModelParams heads", self.k(), self.heads.len()));
                }
                self.d_z()
            }
            HeadMode::EmbedConditioned => {
                if self.heads.len() != 1 {
                    return Err(Error::shape("ModelParams heads", 1, self.heads.len()));
                }
                self.d_z() + self.table.cols()
            }
        };
        for h in &self.heads {
            if h.input_dim() != expected_in || h.output_dim() != 1 {
                return Err(Error::shape(
                    "ModelParams head dims",
                    format!("{expected_in} -> 1"),
                    format!("{} -> {}", h.input_dim(), h.output_dim()),
                ));
            }
        }
        Ok(())
    }

    pub fn represent(&self, x: &Matrix) -> Result<Matrix> {
        self.phi.predict(x)
    }

    fn conditioned_input(&self, z: &Matrix, e: &[f64]) -> Result<Matrix> {
        let mut emb = Matrix::zeros(z.rows(), e.len());
        for r in 0..z.rows() {
            emb.row_mut(r).copy_from_slice(e);
        }
        z.hstack(&emb)
    }

    /// `m̂_t` for every row of a representation batch, `n × K`.
    pub fn predict_from_z(&self, z: &Matrix) -> Result<Matrix> {
        let (n, k) = (z.rows(), self.k());
        let mut out = Matrix::zeros(n, k);
        for t in 0..k {
            let col = match self.head_mode {
                HeadMode::MultiHead => self.heads[t].predict(z)?,
                HeadMode::EmbedConditioned => self.heads[0].predict(&self.conditioned_input(z, self.table.row(t))?)?,
            };
            for i in 0..n {
                out.set(i, t, col.get(i, 0));
            }
        }
        Ok(out)
    }

    /// Mean head output over `z` at an arbitrary embedding vector.
    pub fn mean_at_embedding(&self, z: &Matrix, e: &[f64]) -> Result<f64> {
        if self.head_mode != HeadMode::EmbedConditioned {
            return Err(Error::UnsupportedMode("embedding queries need embed_conditioned heads".into()));
        }
        if e.len() != self.table.cols() {
            return Err(Error::shape("mean_at_embedding", self.table.cols(), e.len()));
        }
        Ok(self.heads[0].predict(&self.conditioned_input(z, e)?)?.mean())
    }
}

impl ParamVector for ModelParams {
    fn num_params(&self) -> usize {
        self.phi.num_params() + self.heads.iter().map(ParamVector::num_params).sum::<usize>() + self.table.as_slice().len()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.phi.write_params(out);
        for h in &self.heads {
            h.write_params(out);
        }
        out.extend_from_slice(self.table.as_slice());
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut pos = self.phi.read_params(src);
        for h in &mut self.heads {
            pos += h.read_params(&src[pos..]);
        }
        let t = self.table.as_mut_slice();
        t.copy_from_slice(&src[pos..pos + t.len()]);
        pos + t.len()
    }
}

/// `m̂_t(x_i)` for every row, `n × K`.
pub fn predict_means(theta: &ModelParams, x: &Matrix) -> Result<Matrix> {
    theta.predict_from_z(&theta.represent(x)?)
}

/// Observed-unit batch.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a Matrix,
    pub t: &'a [usize],
    pub y: &'a [f64],
}

impl<'a> Batch<'a> {
    pub fn new(x: &'a Matrix, t: &'a [usize], y: &'a [f64]) -> Result<Self> {
        if t.len() != x.rows() || y.len() != x.rows() {
            return Err(Error::shape(
                "Batch",
                format!("{} treatments and outcomes", x.rows()),
                format!("{} treatments, {} outcomes", t.len(), y.len()),
            ));
        }
        Ok(Self { x, t, y })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Loss value with the gradient laid out like the model.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Option<ModelParams>,
}

/// Factual predictions `m̂_{T_i}(x_i)` from a representation batch, with the
/// per-arm forward caches needed to backpropagate.
fn factual_from_z(theta: &ModelParams, z: &Matrix, t: &[usize], y: &[f64], want_grad: bool) -> Result<(f64, Option<(ModelParams, Matrix)>)> {
    let n = t.len();
    if n == 0 {
        return Err(Error::InsufficientData {
            context: "factual_loss",
            needed: 1,
            got: 0,
        });
    }
    let k = theta.k();
    if let Some(&bad) = t.iter().find(|&&a| a >= k) {
        return Err(Error::InvalidArgument(format!("treatment {bad} outside [0, {k})")));
    }
    let scale = 2.0 / n as f64;
    let mut loss = 0.0;
    match theta.head_mode {
        HeadMode::MultiHead => {
            let mut grads = want_grad.then(|| (theta.zeros_like(), Matrix::zeros(n, z.cols())));
            let mut idx = vec![Vec::new(); k];
            for (i, &a) in t.iter().enumerate() {
                idx[a].push(i);
            }
            for (a, rows) in idx.iter().enumerate() {
                if rows.is_empty() {
                    continue;
                }
                let za = z.select_rows(rows);
                let (pred, cache) = theta.heads[a].forward(&za)?;
                let mut g = Matrix::zeros(rows.len(), 1);
                for (r, &i) in rows.iter().enumerate() {
                    let err = pred.get(r, 0) - y[i];
                    loss += err * err;
                    g.set(r, 0, scale * err);
                }
                if let Some((gm, gz)) = grads.as_mut() {
                    let (gh, gza) = theta.heads[a].backward(&cache, &g)?;
                    gm.heads[a] = gh;
                    for (r, &i) in rows.iter().enumerate() {
                        gz.row_mut(i).copy_from_slice(gza.row(r));
                    }
                }
            }
            Ok((loss / n as f64, grads))
        }
        HeadMode::EmbedConditioned => {
            let input = z.hstack(&theta.table.select_rows(t))?;
            let (pred, cache) = theta.heads[0].forward(&input)?;
            let mut g = Matrix::zeros(n, 1);
            for i in 0..n {
                let err = pred.get(i, 0) - y[i];
                loss += err * err;
                g.set(i, 0, scale * err);
            }
            let grads = if want_grad {
                let mut gm = theta.zeros_like();
                let (gh, gin) = theta.heads[0].backward(&cache, &g)?;
                gm.heads[0] = gh;
                let (gz, ge) = gin.split_cols(z.cols());
                for (i, &a) in t.iter().enumerate() {
                    for (dst, src) in gm.table.row_mut(a).iter_mut().zip(ge.row(i)) {
                        *dst += src;
                    }
                }
                Some((gm, gz))
            } else {
                None
            };
            Ok((loss / n as f64, grads))
        }
    }
}

/// Mean squared factual error `mean_i (m̂_{T_i}(x_i) − Y_i)²`.
pub fn factual_loss(theta: &ModelParams, batch: Batch<'_>, want_grad: bool) -> Result<LossValue> {
    if want_grad {
        let (z, cache) = theta.phi.forward(batch.x)?;
        let (value, grads) = factual_from_z(theta, &z, batch.t, batch.y, true)?;
        let (mut gm, gz) = grads.expect("gradient requested");
        gm.phi = theta.phi.backward(&cache, &gz)?.0;
        Ok(LossValue { value, grad: Some(gm) })
    } else {
        let z = theta.represent(batch.x)?;
        let (value, _) = factual_from_z(theta, &z, batch.t, batch.y, false)?;
        Ok(LossValue { value, grad: None })
    }
}

/// Squared factual error of every unit.
pub fn factual_losses(theta: &ModelParams, batch: Batch<'_>) -> Result<Vec<f64>> {
    let means = predict_means(theta, batch.x)?;
    Ok((0..batch.len())
        .map(|i| {
            let e = means.get(i, batch.t[i]) - batch.y[i];
            e * e
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    pub value: f64,
    pub factual: f64,
    /// `R̂_S` without any geodesic contribution.
    pub imbalance: f64,
    pub geodesic: f64,
    pub grad: Option<ModelParams>,
}

/// Imbalance of a batch under `spec`, without the geodesic term.
pub fn imbalance(theta: &ModelParams, spec: &StrategySpec, x: &Matrix, t: &[usize]) -> Result<f64> {
    let z = theta.represent(x)?;
    let plain = StrategySpec {
        geodesic_weight: 0.0,
        ..*spec
    };
    Ok(strategy_penalty(&plain, &z, t, &theta.table, None, false)?.value)
}

/// `ε̂_F(fit) + α·R̂_S(balance) + λ_geo·geo(table)`. The balance batch
/// defaults to the fit batch.
pub fn objective(
    theta: &ModelParams,
    fit: Batch<'_>,
    balance: Option<(&Matrix, &[usize])>,
    alpha: f64,
    spec: &StrategySpec,
    graph: Option<&GeodesicGraph>,
    want_grad: bool,
) -> Result<ObjectiveValue> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    spec.validate()?;
    let factual = factual_loss(theta, fit, want_grad)?;
    let mut grad = factual.grad;
    let mut value = factual.value;
    let mut imbalance = 0.0;
    if alpha > 0.0 {
        let (bx, bt) = balance.unwrap_or((fit.x, fit.t));
        let plain = StrategySpec {
            geodesic_weight: 0.0,
            ..*spec
        };
        let (z, cache) = theta.phi.forward(bx)?;
        let pen = strategy_penalty(&plain, &z, bt, &theta.table, None, want_grad)?;
        imbalance = pen.value;
        value += alpha * pen.value;
        if let Some(g) = grad.as_mut() {
            if let Some(gz) = pen.grad_z {
                let gphi = theta.phi.backward(&cache, &gz.scaled(alpha))?.0;
                let mut acc = g.phi.flatten();
                for (a, b) in acc.iter_mut().zip(gphi.flatten()) {
                    *a += b;
                }
                g.phi.unflatten(&acc);
            }
            if let Some(gt) = pen.grad_table {
                g.table.axpy(alpha, &gt);
            }
        }
    }
    let mut geodesic = 0.0;
    if spec.geodesic_weight > 0.0 {
        let graph = graph.ok_or_else(|| Error::InvalidArgument("geodesic weight set but no treatment graph given".into()))?;
        let (geo, geo_grad) = geodesic_penalty(&theta.table, graph, want_grad)?;
        geodesic = geo;
        value += spec.geodesic_weight * geo;
        if let (Some(g), Some(gg)) = (grad.as_mut(), geo_grad) {
            g.table.axpy(spec.geodesic_weight, &gg);
        }
    }
    Ok(ObjectiveValue {
        value,
        factual: factual.value,
        imbalance,
        geodesic,
        grad,
    })
}
