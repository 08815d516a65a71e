//! Dense building blocks. Feature matrices hold one item per row; every
//! learnable tensor is a `DMatrix` so parameters share one storage format.

use nalgebra::DMatrix;
use rand::Rng;

pub type Matrix = DMatrix<f64>;

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Matrix {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// Visits every learnable tensor with a stable dotted name.
pub trait VisitParams {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `y = x·W + b` with `W` stored as `in × out` and `b` as `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Linear {
            weight: uniform_init(input, output, input, rng),
            bias: uniform_init(1, output, input, rng),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear { weight: Matrix::zeros(input, output), bias: Matrix::zeros(1, output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x * &self.weight;
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.bias[(0, j)]);
        }
        y
    }

    pub fn set_zero(&mut self) {
        self.weight.fill(0.0);
        self.bias.fill(0.0);
    }
}

impl VisitParams for Linear {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Linear, SiLU, linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Mlp { first: Linear::new(input, hidden, rng), second: Linear::new(hidden, output, rng) }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        self.second.forward(&self.first.forward(x).map(silu))
    }

    pub fn set_zero(&mut self) {
        self.first.set_zero();
        self.second.set_zero();
    }
}

impl VisitParams for Mlp {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.first.visit(&join(prefix, "first"), f);
        self.second.visit(&join(prefix, "second"), f);
    }
}

/// Per-column mean and biased variance of one normalized batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub rows: usize,
}

/// Whether batch norms use their running statistics or the statistics of
/// the rows they see (recording them for a later running-stat update).
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NormMode {
    #[default]
    Running,
    Batch(Vec<Moments>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Matrix,
    pub beta: Matrix,
    pub running_mean: Matrix,
    pub running_var: Matrix,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(dim: usize, eps: f64, momentum: f64) -> Self {
        BatchNorm {
            gamma: Matrix::from_element(1, dim, 1.0),
            beta: Matrix::zeros(1, dim),
            running_mean: Matrix::zeros(1, dim),
            running_var: Matrix::from_element(1, dim, 1.0),
            eps,
            momentum,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn forward(&self, x: &Matrix, mode: &mut NormMode) -> Matrix {
        let mut y = x.clone();
        let rows = x.nrows();
        let batch = match mode {
            NormMode::Running => None,
            NormMode::Batch(log) if rows > 0 => {
                let mut m = Moments { mean: vec![0.0; x.ncols()], var: vec![0.0; x.ncols()], rows };
                for (j, col) in x.column_iter().enumerate() {
                    let mean = col.sum() / rows as f64;
                    m.mean[j] = mean;
                    m.var[j] = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
                }
                log.push(m.clone());
                Some(m)
            }
            NormMode::Batch(_) => None,
        };
        for (j, mut col) in y.column_iter_mut().enumerate() {
            let (mean, var) = match &batch {
                Some(m) => (m.mean[j], m.var[j]),
                None => (self.running_mean[(0, j)], self.running_var[(0, j)]),
            };
            let scale = self.gamma[(0, j)] / (var + self.eps).sqrt();
            let shift = self.beta[(0, j)];
            for v in col.iter_mut() {
                *v = (*v - mean) * scale + shift;
            }
        }
        y
    }

    /// Exponential running-stat update with the unbiased batch variance.
    pub fn update_running(&mut self, m: &Moments) {
        let n = m.rows as f64;
        let unbias = if m.rows > 1 { n / (n - 1.0) } else { 1.0 };
        for j in 0..self.dim() {
            self.running_mean[(0, j)] = (1.0 - self.momentum) * self.running_mean[(0, j)] + self.momentum * m.mean[j];
            self.running_var[(0, j)] =
                (1.0 - self.momentum) * self.running_var[(0, j)] + self.momentum * m.var[j] * unbias;
        }
    }
}

impl VisitParams for BatchNorm {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
        f(join(prefix, "running_mean"), &mut self.running_mean);
        f(join(prefix, "running_var"), &mut self.running_var);
    }
}

/// Row-wise gather: `out[r] = x[index[r]]`.
pub fn gather_rows(x: &Matrix, index: &[usize]) -> Matrix {
    Matrix::from_fn(index.len(), x.ncols(), |r, c| x[(index[r], c)])
}

/// Row-wise scatter-add into `rows` buckets, visiting rows in order.
pub fn scatter_add_rows(x: &Matrix, index: &[usize], rows: usize) -> Matrix {
    let mut out = Matrix::zeros(rows, x.ncols());
    for c in 0..x.ncols() {
        for (r, &dst) in index.iter().enumerate() {
            out[(dst, c)] += x[(r, c)];
        }
    }
    out
}

/// Horizontal concatenation of equally tall blocks.
pub fn hcat(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Vertical concatenation of equally wide blocks.
pub fn vcat(blocks: &[Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    out
}
