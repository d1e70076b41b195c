//! Minimal reverse-mode automatic differentiation over row-major `f64` matrices.
//!
//! Every value on the tape is a 2-D array whose rows are batch items. The op
//! set is exactly what the diffusion chains and MLPs need; it is not a general
//! tensor library.

use ndarray::{Array2, Axis};

use crate::linalg::matmul;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Identifies a learnable tensor: which parameter group it belongs to and its
/// index inside that group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamRef {
    pub group: usize,
    pub index: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamRef),
    /// A parameter whose gradient is never accumulated (frozen network).
    Detached,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AffineCols(Var, Vec<f64>),
    Tanh(Var),
    Mish(Var),
    Square(Var),
    Concat(Vec<Var>),
    TileRows(Var, usize),
    MeanGroups(Var, usize),
    SumCols(Var),
    Mean(Var),
    KdeEntropy(Var, usize, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Records a computation so it can be differentiated afterwards.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// `tanh(softplus(x))` and `sigmoid(x)` from a single exponential:
/// with `n = eˣ(eˣ + 2)`, `tanh(ln(1 + eˣ)) = n / (n + 2)`.
fn mish_parts(x: f64) -> (f64, f64) {
    if x > 20.0 {
        return (1.0, 1.0);
    }
    let e = x.exp();
    let n = e * (e + 2.0);
    (n / (n + 2.0), e / (1.0 + e))
}

pub(crate) fn mish(x: f64) -> f64 {
    x * mish_parts(x).0
}

fn mish_grad(x: f64) -> f64 {
    let (t, sig) = mish_parts(x);
    t + x * (1.0 - t * t) * sig
}

fn sq_dist(x: &Array2<f64>, i: usize, j: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(x.row(j))
        .map(|(a, b)| (a - b).powi(2))
        .sum()
}

/// `log Σ_{j≠i} exp(−|x_i − x_j|²/2h²)` for every member `i` of a group.
fn kde_log_sums(x: &Array2<f64>, groups: usize, g: usize, h: f64) -> Vec<f64> {
    let m = x.nrows() / groups;
    (0..m)
        .map(|i| {
            let e: Vec<f64> = (0..m)
                .filter(|&j| j != i)
                .map(|j| -sq_dist(x, g + i * groups, g + j * groups) / (2.0 * h * h))
                .collect();
            let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            mx + e.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
        })
        .collect()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, value: Array2<f64>, id: ParamRef) -> Var {
        self.push(value, Op::Param(id))
    }

    /// A frozen parameter: enters the computation but never receives gradients.
    pub fn detached_param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Detached)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a 1×m row to every row of an n×m node.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    /// `y[i, j] = x[i, j] * scale[j] + shift[j]`.
    pub fn affine_cols(&mut self, a: Var, scale: &[f64], shift: &[f64]) -> Var {
        let mut v = self.value(a).clone();
        assert_eq!(v.ncols(), scale.len());
        assert_eq!(v.ncols(), shift.len());
        for mut row in v.rows_mut() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = *x * scale[j] + shift[j];
            }
        }
        self.push(v, Op::AffineCols(a, scale.to_vec()))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn mish(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(mish);
        self.push(v, Op::Mish(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Column-wise concatenation; all parts share the row count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat: row counts differ");
        self.push(v, Op::Concat(parts.to_vec()))
    }

    /// Stacks `k` copies of the node vertically (copy-major order).
    pub fn tile_rows(&mut self, a: Var, k: usize) -> Var {
        let src = self.value(a);
        let views: Vec<_> = (0..k).map(|_| src.view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("tile_rows");
        self.push(v, Op::TileRows(a, k))
    }

    /// Inverse of [`Tape::tile_rows`]: averages the `k` copy-major blocks.
    pub fn mean_groups(&mut self, a: Var, k: usize) -> Var {
        let src = self.value(a);
        let n = src.nrows() / k;
        assert_eq!(n * k, src.nrows(), "mean_groups: rows not divisible");
        let mut v = Array2::zeros((n, src.ncols()));
        for c in 0..k {
            v += &src.slice(ndarray::s![c * n..(c + 1) * n, ..]);
        }
        v /= k as f64;
        self.push(v, Op::MeanGroups(a, k))
    }

    /// Row sums, n×m → n×1.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(a))
    }

    /// Mean over every element, producing a 1×1 node.
    pub fn mean(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let m = src.sum() / src.len() as f64;
        self.push(Array2::from_elem((1, 1), m), Op::Mean(a))
    }

    /// Leave-one-out Gaussian kernel entropy estimate per group, where row `r`
    /// belongs to group `r % groups` (the layout of [`Tape::tile_rows`]):
    /// `Ĥ = −(1/m) Σ_i log[(1/(m−1)) Σ_{j≠i} N(x_i − x_j; 0, h²I)]`.
    pub fn kde_entropy(&mut self, a: Var, groups: usize, bandwidth: f64) -> Var {
        let src = self.value(a);
        let m = src.nrows() / groups;
        assert!(
            m >= 2 && m * groups == src.nrows(),
            "kde_entropy: need >= 2 rows per group"
        );
        assert!(bandwidth > 0.0, "kde_entropy: bandwidth must be positive");
        let d = src.ncols() as f64;
        let norm = (m as f64 - 1.0).ln()
            + 0.5 * d * (2.0 * std::f64::consts::PI * bandwidth * bandwidth).ln();
        let v = Array2::from_shape_fn((groups, 1), |(g, _)| {
            let lse = kde_log_sums(src, groups, g, bandwidth);
            -lse.iter().map(|l| l - norm).sum::<f64>() / m as f64
        });
        self.push(v, Op::KdeEntropy(a, groups, bandwidth))
    }

    /// Back-propagates from a 1×1 node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(
            self.value(root).dim(),
            (1, 1),
            "backward needs a scalar root"
        );
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        let mut params = Vec::new();
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Detached => {}
                Op::Param(id) => {
                    params.push((*id, g.clone()));
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    acc(&mut grads, *a, matmul(&g, &bv.t().to_owned()));
                    acc(&mut grads, *b, matmul(&av.t().to_owned(), &g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *row, gr);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::AffineCols(a, scale) => {
                    let mut ga = g;
                    for mut row in ga.rows_mut() {
                        for (j, x) in row.iter_mut().enumerate() {
                            *x *= scale[j];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = &g * &node.value.mapv(|y| 1.0 - y * y);
                    acc(&mut grads, *a, ga);
                }
                Op::Mish(a) => {
                    let ga = &g * &self.value(*a).mapv(mish_grad);
                    acc(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = &g * &self.value(*a).mapv(|x| 2.0 * x);
                    acc(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let gp = g.slice(ndarray::s![.., col..col + w]).to_owned();
                        acc(&mut grads, *p, gp);
                        col += w;
                    }
                }
                Op::TileRows(a, k) => {
                    let n = self.value(*a).nrows();
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for c in 0..*k {
                        ga += &g.slice(ndarray::s![c * n..(c + 1) * n, ..]);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::MeanGroups(a, k) => {
                    let scaled = g / *k as f64;
                    let views: Vec<_> = (0..*k).map(|_| scaled.view()).collect();
                    let ga = ndarray::concatenate(Axis(0), &views).expect("mean_groups grad");
                    acc(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let cols = self.value(*a).ncols();
                    let ga = g
                        .broadcast((g.nrows(), cols))
                        .expect("sum_cols grad")
                        .to_owned();
                    acc(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let src = self.value(*a);
                    let ga = Array2::from_elem(src.dim(), g[[0, 0]] / src.len() as f64);
                    acc(&mut grads, *a, ga);
                }
                Op::KdeEntropy(a, groups, h) => {
                    // ∂Ĥ/∂x_i = (1/(m h²)) Σ_{j≠i} K_ij (x_i − x_j)(1/S_i + 1/S_j)
                    let src = self.value(*a);
                    let m = src.nrows() / groups;
                    let mut ga = Array2::zeros(src.dim());
                    for grp in 0..*groups {
                        let lse = kde_log_sums(src, *groups, grp, *h);
                        let coef = g[[grp, 0]] / (m as f64 * h * h);
                        for i in 0..m {
                            let ri = grp + i * groups;
                            for j in 0..m {
                                if i == j {
                                    continue;
                                }
                                let rj = grp + j * groups;
                                let e = -sq_dist(src, ri, rj) / (2.0 * h * h);
                                let w = (e - lse[i]).exp() + (e - lse[j]).exp();
                                for c in 0..src.ncols() {
                                    ga[[ri, c]] += coef * w * (src[[ri, c]] - src[[rj, c]]);
                                }
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
            }
        }
        Gradients { params }
    }
}

/// Parameter gradients collected by [`Tape::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    params: Vec<(ParamRef, Array2<f64>)>,
}

impl Gradients {
    /// Sum of all gradients flowing into parameter `id` (it may be bound more
    /// than once). `None` if the parameter never received a gradient.
    pub fn get(&self, id: ParamRef) -> Option<Array2<f64>> {
        let mut out: Option<Array2<f64>> = None;
        for (pid, g) in &self.params {
            if *pid == id {
                match &mut out {
                    Some(o) => *o += g,
                    None => out = Some(g.clone()),
                }
            }
        }
        out
    }

    /// Gradients for every tensor of a group, zero-filled where absent.
    pub fn group(&self, group: usize, shapes: &[(usize, usize)]) -> Vec<Array2<f64>> {
        shapes
            .iter()
            .enumerate()
            .map(|(index, &shape)| {
                self.get(ParamRef { group, index })
                    .unwrap_or_else(|| Array2::zeros(shape))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric<F: Fn(&Array2<f64>) -> f64>(f: F, x: &Array2<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(x.dim());
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut p = x.clone();
                p[[i, j]] += h;
                let mut m = x.clone();
                m[[i, j]] -= h;
                g[[i, j]] = (f(&p) - f(&m)) / (2.0 * h);
            }
        }
        g
    }

    fn assert_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    fn kde_graph(w: &Array2<f64>, h: f64) -> (Tape, Var) {
        let mut t = Tape::new();
        let x = t.param(w.clone(), W);
        let e = t.kde_entropy(x, 2, h);
        let sq = t.square(e);
        let m = t.mean(sq);
        (t, m)
    }

    #[test]
    fn kde_entropy_gradient_matches_finite_differences() {
        let x = array![
            [0.1, -0.3],
            [0.5, 0.2],
            [-0.2, 0.4],
            [0.3, 0.0],
            [0.0, 0.7],
            [0.6, -0.5]
        ];
        let (t, root) = kde_graph(&x, 0.4);
        let g = t.backward(root).get(W).unwrap();
        let fd = numeric(
            |w| {
                let (t, r) = kde_graph(w, 0.4);
                t.scalar(r)
            },
            &x,
        );
        assert_close(&g, &fd, 1e-7);
    }

    #[test]
    fn kde_entropy_of_two_points() {
        // one group, two points at distance δ: Ĥ = δ²/2h² + ½log(2πh²)
        let (d, h) = (0.3, 0.5);
        let mut t = Tape::new();
        let x = t.input(array![[0.0], [d]]);
        let e = t.kde_entropy(x, 1, h);
        let want = d * d / (2.0 * h * h) + 0.5 * (2.0 * std::f64::consts::PI * h * h).ln();
        assert!((t.scalar(e) - want).abs() < 1e-12);
    }

    const W: ParamRef = ParamRef { group: 0, index: 0 };

    fn composite(w: &Array2<f64>) -> (Tape, Var) {
        let mut t = Tape::new();
        let x = t.input(array![[0.3, -0.7], [1.1, 0.2], [-0.4, 0.9]]);
        let wv = t.param(w.clone(), W);
        let h = t.matmul(x, wv);
        let h = t.mish(h);
        let h2 = t.tanh(h);
        let c = t.concat(&[h, h2]);
        let tiled = t.tile_rows(c, 2);
        let sq = t.square(tiled);
        let back = t.mean_groups(sq, 2);
        let s = t.sum_cols(back);
        let s = t.affine_cols(s, &[1.5], &[0.2]);
        let prod = t.mul(s, s);
        let out = t.mean(prod);
        (t, out)
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let w = array![[0.5, -0.2], [0.1, 0.8]];
        let (tape, out) = composite(&w);
        let g = tape.backward(out).get(W).unwrap();
        let f = |w: &Array2<f64>| {
            let (t, o) = composite(w);
            t.scalar(o)
        };
        assert_close(&g, &numeric(f, &w), 1e-6);
    }

    #[test]
    fn detached_params_receive_nothing() {
        let mut t = Tape::new();
        let w = t.detached_param(array![[2.0]]);
        let x = t.input(array![[3.0]]);
        let y = t.mul(w, x);
        let m = t.mean(y);
        let g = t.backward(m);
        assert!(g.get(W).is_none());
        assert_eq!(g.group(0, &[(1, 1)])[0], array![[0.0]]);
    }

    #[test]
    fn reused_param_accumulates() {
        let mut t = Tape::new();
        let w = t.param(array![[2.0]], W);
        let y = t.mul(w, w);
        let y = t.add_row(y, w);
        let y = t.sub(y, w);
        let s = t.scale(y, 3.0);
        let s = t.add(s, w);
        let m = t.mean(s);
        // d/dw (3 w^2 + w) = 6w + 1 = 13
        assert_eq!(t.backward(m).get(W).unwrap(), array![[13.0]]);
    }
}
