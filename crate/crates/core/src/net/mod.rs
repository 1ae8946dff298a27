//! Small differentiable building blocks: dense layers, two-layer MLPs with
//! recorded forward passes, parameter traversal, Adam, finite-difference
//! checking and a binary checkpoint format.
//!
//! Everything is generic over [`Real`] so the same code runs on `f64` and on
//! forward-mode dual numbers.

mod adam;
mod checkpoint;
mod gradcheck;

use rand::RngExt;
use thiserror::Error;

use crate::rng::Rng;
use crate::scalar::Real;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{central_difference, finite_diff_check, relative_error, GradCheck, GradCheckReport};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("non-finite gradient for {name}[{index}]")]
    NonFiniteGradient { name: String, index: usize },
    #[error("non-finite function value at coordinate {index}")]
    NonFiniteEvaluation { index: usize },
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape");
        Self { shape: shape.to_vec(), data }
    }

    /// Uniform on `[-bound, bound]`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut Rng) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.shape[1];
        &mut self.data[i * w..(i + 1) * w]
    }
}

/// Traversal over named parameter tensors in a fixed order.
pub trait Params<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<T>));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn flatten<T: Real, P: Params<T> + ?Sized>(p: &P) -> Vec<T> {
    let mut out = Vec::new();
    p.visit("", &mut |_, t| out.extend_from_slice(&t.data));
    out
}

pub fn n_params<T, P: Params<T> + ?Sized>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, t| n += t.data.len());
    n
}

/// Overwrites parameters from a flat vector in traversal order.
pub fn assign<T: Real, P: Params<T> + ?Sized>(p: &mut P, values: &[T]) {
    let mut off = 0;
    p.visit_mut(&mut |t| {
        let n = t.data.len();
        t.data.copy_from_slice(&values[off..off + n]);
        off += n;
    });
    assert_eq!(off, values.len(), "flat parameter length");
}

pub fn zero_like<T: Real, P: Params<T> + Clone>(p: &P) -> P {
    let mut out = p.clone();
    out.visit_mut(&mut |t| t.data.iter_mut().for_each(|x| *x = T::zero()));
    out
}

/// `a += scale * b` over all parameters.
pub fn axpy<T: Real, P: Params<T>>(a: &mut P, scale: T, b: &P) {
    let flat_b = flatten(b);
    let mut off = 0;
    a.visit_mut(&mut |t| {
        for x in t.data.iter_mut() {
            *x += scale * flat_b[off];
            off += 1;
        }
    });
}

/// One named parameter array with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Named, ordered parameters with matching gradients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    pub entries: Vec<ParamEntry>,
}

impl ParamSet {
    /// Collects values (and optionally gradients) from a model.
    pub fn collect<P: Params<f64> + ?Sized>(model: &P, grads: Option<&P>) -> Self {
        let mut entries = Vec::new();
        model.visit("", &mut |name, t| {
            entries.push(ParamEntry { name, shape: t.shape.clone(), value: t.data.clone(), grad: vec![0.0; t.len()] })
        });
        if let Some(g) = grads {
            let mut i = 0;
            g.visit("", &mut |_, t| {
                entries[i].grad.copy_from_slice(&t.data);
                i += 1;
            });
        }
        Self { entries }
    }

    /// Copies values into `model`, checking names and shapes.
    pub fn load_into<P: Params<f64> + ?Sized>(&self, model: &mut P) -> Result<(), NetError> {
        let mut expected = Vec::new();
        model.visit("", &mut |name, t| expected.push((name, t.shape.clone())));
        if expected.len() != self.entries.len() {
            return Err(NetError::ParamMismatch(format!(
                "model has {} tensors, set has {}",
                expected.len(),
                self.entries.len()
            )));
        }
        for ((name, shape), e) in expected.iter().zip(&self.entries) {
            if *name != e.name || *shape != e.shape {
                return Err(NetError::ParamMismatch(format!("{name}{shape:?} vs {}{:?}", e.name, e.shape)));
            }
        }
        let mut i = 0;
        model.visit_mut(&mut |t| {
            t.data.copy_from_slice(&self.entries[i].value);
            i += 1;
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| e.value.iter().copied()).collect()
    }

    pub fn grads(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| e.grad.iter().copied()).collect()
    }

    /// Name of the tensor holding flat index `i`, with the offset inside it.
    pub fn locate(&self, mut i: usize) -> Option<(&str, usize)> {
        for e in &self.entries {
            if i < e.value.len() {
                return Some((&e.name, i));
            }
            i -= e.value.len();
        }
        None
    }
}

/// `y = W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { w: Tensor::zeros(&[n_out, n_in]), b: Tensor::zeros(&[n_out]) }
    }

    /// Fan-in scaled uniform weights, zero bias.
    pub fn init(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        Self::init_scaled(n_in, n_out, 1.0, rng)
    }

    pub fn init_scaled(n_in: usize, n_out: usize, scale: f64, rng: &mut Rng) -> Self {
        let bound = scale * (3.0 / n_in as f64).sqrt();
        Self { w: Tensor::uniform(&[n_out, n_in], bound, rng), b: Tensor::zeros(&[n_out]) }
    }

    pub fn identity(n: usize) -> Self {
        let mut l = Self::zeros(n, n);
        for i in 0..n {
            l.w.data[i * n + i] = T::one();
        }
        l
    }

    pub fn n_in(&self) -> usize {
        self.w.shape[1]
    }

    pub fn n_out(&self) -> usize {
        self.w.shape[0]
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NetError> {
        if x.len() != self.n_in() {
            return Err(NetError::Dimension { what: "dense input", expected: self.n_in(), got: x.len() });
        }
        Ok(self.apply(x))
    }

    /// Forward pass without the dimension check.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.n_out())
            .map(|o| {
                let mut acc = self.b.data[o];
                for (w, xi) in self.w.row(o).iter().zip(x) {
                    acc += *w * *xi;
                }
                acc
            })
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut DenseLayer<T>) -> Vec<T> {
        let n_in = self.n_in();
        let mut dx = vec![T::zero(); n_in];
        for (o, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grad.b.data[o] += g;
            let wrow = self.w.row(o);
            let grow = grad.w.row_mut(o);
            for i in 0..n_in {
                grow[i] += g * x[i];
                dx[i] += g * wrow[i];
            }
        }
        dx
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> DenseLayer<U> {
        DenseLayer { w: self.w.map(f), b: self.b.map(f) }
    }
}

impl<T: Real> Params<T> for DenseLayer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "weight"), &self.w);
        f(join(prefix, "bias"), &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<T>)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Identity,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu<T: Real>(x: T) -> T {
    let inner = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    T::lit(0.5) * x * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let inner = T::lit(GELU_C) * (x + T::lit(GELU_A) * x * x * x);
    let t = inner.tanh();
    let dinner = T::lit(GELU_C) * (T::one() + T::lit(3.0 * GELU_A) * x * x);
    T::lit(0.5) * (T::one() + t) + T::lit(0.5) * x * (T::one() - t * t) * dinner
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Identity => x,
        }
    }

    pub fn grad<T: Real>(self, x: T) -> T {
        match self {
            Activation::Gelu => gelu_grad(x),
            Activation::Identity => T::one(),
        }
    }
}

/// `l2(act(l1(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub l1: DenseLayer<T>,
    pub l2: DenseLayer<T>,
    pub act: Activation,
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct MlpRecord<T> {
    pub input: Vec<T>,
    pub pre: Vec<T>,
    pub hidden: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Real> Mlp<T> {
    pub fn init(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut Rng) -> Self {
        Self { l1: DenseLayer::init(n_in, n_hidden, rng), l2: DenseLayer::init(n_hidden, n_out, rng), act: Activation::Gelu }
    }

    /// Both layers identity, no nonlinearity.
    pub fn identity(n: usize) -> Self {
        Self { l1: DenseLayer::identity(n), l2: DenseLayer::identity(n), act: Activation::Identity }
    }

    pub fn n_in(&self) -> usize {
        self.l1.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.l2.n_out()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, NetError> {
        Ok(self.forward_record(x)?.output)
    }

    pub fn forward_record(&self, x: &[T]) -> Result<MlpRecord<T>, NetError> {
        let pre = self.l1.forward(x)?;
        let hidden: Vec<T> = pre.iter().map(|&z| self.act.apply(z)).collect();
        let output = self.l2.forward(&hidden)?;
        Ok(MlpRecord { input: x.to_vec(), pre, hidden, output })
    }

    /// Backpropagates `dy` through a recorded pass; parameter gradients accumulate into `grad`.
    pub fn backward(&self, rec: &MlpRecord<T>, dy: &[T], grad: &mut Mlp<T>) -> Vec<T> {
        let dh = self.l2.backward(&rec.hidden, dy, &mut grad.l2);
        let dz: Vec<T> = dh.iter().zip(&rec.pre).map(|(&g, &z)| g * self.act.grad(z)).collect();
        self.l1.backward(&rec.input, &dz, &mut grad.l1)
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> Mlp<U> {
        Mlp { l1: self.l1.map(f), l2: self.l2.map(f), act: self.act }
    }
}

impl<T: Real> Params<T> for Mlp<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.l1.visit(&join(prefix, "l1"), f);
        self.l2.visit(&join(prefix, "l2"), f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<T>)) {
        self.l1.visit_mut(f);
        self.l2.visit_mut(f);
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    z.iter().map(|&v| v - lse).collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::rng::seeded;

    #[test]
    fn dense_forward_by_hand() {
        let id = DenseLayer::<f64>::identity(2);
        assert_eq!(id.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let sum = DenseLayer { w: Tensor::from_vec(&[1, 2], vec![1.0, 1.0]), b: Tensor::from_vec(&[1], vec![0.0]) };
        assert_eq!(sum.forward(&[2.0, 3.0]).unwrap(), vec![5.0]);
        let mut zero = DenseLayer::<f64>::zeros(3, 1);
        zero.b.data[0] = 7.0;
        assert_eq!(zero.forward(&[4.0, -1.0, 9.0]).unwrap(), vec![7.0]);
        assert!(matches!(sum.forward(&[1.0]), Err(NetError::Dimension { .. })));
    }

    #[test]
    fn scalar_output_input_gradient_is_weight_row() {
        let mut rng = seeded(1);
        let l = DenseLayer::<f64>::init(4, 1, &mut rng);
        let mut g = DenseLayer::zeros(4, 1);
        let x = [0.3, -1.0, 2.0, 0.5];
        let dx = l.backward(&x, &[1.0], &mut g);
        assert_eq!(dx, l.w.data);
        assert_eq!(g.w.data, x.to_vec());
        assert_eq!(g.b.data, vec![1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seeded(2);
        let m = Mlp::<f64>::init(3, 5, 2, &mut rng);
        let rec = m.forward_record(&[0.1, 0.2, 0.3]).unwrap();
        let mut g = zero_like(&m);
        let dx = m.backward(&rec, &[0.0, 0.0], &mut g);
        assert!(dx.iter().all(|&v| v == 0.0));
        assert!(flatten(&g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_layer_gradients_match_central_differences() {
        let mut rng = seeded(3);
        let m = Mlp::<f64>::init(3, 6, 2, &mut rng);
        let x = vec![0.4, -0.7, 1.1];
        let dy = [0.8, -1.3];
        let objective = |m: &Mlp<f64>, x: &[f64]| m.forward(x).unwrap().iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>();
        let rec = m.forward_record(&x).unwrap();
        let mut g = zero_like(&m);
        let dx = m.backward(&rec, &dy, &mut g);

        let check = GradCheck { h: 1e-5, tol: 1e-6, floor: 1e-8 };
        let r = finite_diff_check(|x| objective(&m, x), &x, &dx, &check).unwrap();
        assert!(r.passed, "input: {r:?}");
        let theta = flatten(&m);
        let r = finite_diff_check(
            |t| {
                let mut mm = m.clone();
                assign(&mut mm, t);
                objective(&mm, &x)
            },
            &theta,
            &flatten(&g),
            &check,
        )
        .unwrap();
        assert!(r.passed, "params: max rel {}", r.max_rel_error);
    }

    #[test]
    fn param_set_round_trip_and_names() {
        let mut rng = seeded(4);
        let m = Mlp::<f64>::init(2, 3, 1, &mut rng);
        let set = ParamSet::collect(&m, None);
        let names: Vec<_> = set.entries.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["l1.weight", "l1.bias", "l2.weight", "l2.bias"]);
        let mut other = Mlp::<f64>::init(2, 3, 1, &mut seeded(5));
        set.load_into(&mut other).unwrap();
        assert_eq!(other, m);
        let mut wrong = Mlp::<f64>::init(2, 4, 1, &mut rng);
        assert!(set.load_into(&mut wrong).is_err());
        assert_eq!(set.locate(6), Some(("l1.bias", 0)));
    }

    #[test]
    fn gelu_derivative_matches_dual() {
        use crate::scalar::Dual;
        for &x in &[-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let d = gelu(Dual::new(x, 1.0));
            assert!((d.eps - gelu_grad(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let a = Mlp::<f64>::init(4, 8, 3, &mut seeded(9));
        let b = Mlp::<f64>::init(4, 8, 3, &mut seeded(9));
        let x = [1.0, 2.0, 3.0, 4.0];
        let ya: Vec<u64> = a.forward(&x).unwrap().iter().map(|v| v.to_bits()).collect();
        let yb: Vec<u64> = b.forward(&x).unwrap().iter().map(|v| v.to_bits()).collect();
        assert_eq!(ya, yb);
    }

    proptest! {
        #[test]
        fn log_softmax_normalizes(z in proptest::collection::vec(-30.0f64..30.0, 20)) {
            let lp = log_softmax(&z);
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(lp.iter().all(|&v| v <= 0.0));
        }

        #[test]
        fn random_mlps_pass_gradient_check(seed in 0u64..1000) {
            let mut rng = seeded(seed);
            let m = Mlp::<f64>::init(3, 4, 1, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| crate::rng::normal(&mut rng)).collect();
            let rec = m.forward_record(&x).unwrap();
            let mut g = zero_like(&m);
            let dx = m.backward(&rec, &[1.0], &mut g);
            let r = finite_diff_check(|x| m.forward(x).unwrap()[0], &x, &dx, &GradCheck::default()).unwrap();
            prop_assert!(r.passed, "{:?}", r);
        }
    }
}
