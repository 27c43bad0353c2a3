use crate::graph::BackwardArgs;
use crate::{Error, Result, Scalar, Tensor, Var};

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<'g, T: Scalar> Var<'g, T> {
    /// Pointwise map whose local derivative is `df(input, output)`.
    fn unary(self, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Var<'g, T> {
        let out = self.value().map(f);
        self.graph.push(out, &[self], move |a: &BackwardArgs<'_, T>| {
            let x = a.inputs[0].data();
            let y = a.output.data();
            let data = a
                .grad
                .data()
                .iter()
                .zip(x.iter().zip(y))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(Tensor::from_vec(a.grad.shape().to_vec(), data).expect("same shape"))]
        })
    }

    /// `max(x, 0)`; the derivative at 0 is taken as 0.
    pub fn relu(self) -> Var<'g, T> {
        self.unary(
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g, T> {
        let s = T::of(slope);
        self.unary(
            move |x| if x > T::zero() { x } else { x * s },
            move |x, _| if x > T::zero() { T::one() } else { s },
        )
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(self) -> Var<'g, T> {
        self.unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    /// `|x|` with subgradient 0 at the kink.
    pub fn abs(self) -> Var<'g, T> {
        self.unary(
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn ln(self) -> Var<'g, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn exp(self) -> Var<'g, T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn neg(self) -> Var<'g, T> {
        self.scale(-1.0)
    }

    pub fn scale(self, c: f64) -> Var<'g, T> {
        let c = T::of(c);
        self.unary(move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g, T> {
        let c = T::of(c);
        self.unary(move |x| x + c, |_, _| T::one())
    }

    /// `1 - x`.
    pub fn one_minus(self) -> Var<'g, T> {
        self.unary(|x| T::one() - x, |_, _| -T::one())
    }

    fn binary(
        self,
        other: Var<'g, T>,
        name: &str,
        f: impl Fn(T, T) -> T,
        grads: impl Fn(T, T, T) -> (T, T) + 'static,
    ) -> Result<Var<'g, T>> {
        let out = {
            let a = self.value();
            let b = other.value();
            if a.shape() != b.shape() {
                return Err(Error::shape(
                    name,
                    format!("operand shapes {:?} and {:?} differ", a.shape(), b.shape()),
                ));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::from_vec(a.shape().to_vec(), data)?
        };
        Ok(self
            .graph
            .push(out, &[self, other], move |a: &BackwardArgs<'_, T>| {
                let shape = a.grad.shape().to_vec();
                let n = a.grad.numel();
                let (mut ga, mut gb) = (Vec::with_capacity(n), Vec::with_capacity(n));
                for ((&g, &x), &y) in a.grad.data().iter().zip(a.inputs[0].data()).zip(a.inputs[1].data()) {
                    let (da, db) = grads(g, x, y);
                    ga.push(da);
                    gb.push(db);
                }
                vec![
                    a.needs[0].then(|| Tensor::from_vec(shape.clone(), ga).expect("same shape")),
                    a.needs[1].then(|| Tensor::from_vec(shape, gb).expect("same shape")),
                ]
            }))
    }

    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, "add", |x, y| x + y, |g, _, _| (g, g))
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, "sub", |x, y| x - y, |g, _, _| (g, -g))
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        self.binary(other, "mul", |x, y| x * y, |g, x, y| (g * y, g * x))
    }
}
