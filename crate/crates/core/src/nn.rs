//! One-hidden-layer tanh network with hand-written backpropagation, and the
//! Adam optimizer over its flat parameter vector.

use rand::Rng;

use crate::error::{Error, Result};

/// `input -> tanh(hidden) -> linear(output)`.
///
/// Parameters live in one flat vector laid out as
/// `[w1 (hidden x input, row major), b1 (hidden), w2 (output x hidden), b2 (output)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
}

/// Hidden activations retained from a forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Mlp {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + output * hidden + output
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            params: vec![0.0; Self::param_count(input, hidden, output)],
        }
    }

    /// Uniform fan-in initialization; output-layer weights are scaled down by
    /// `output_scale`.
    pub fn random<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        output_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(input, hidden, output);
        let b1 = 1.0 / (input as f64).sqrt();
        let b2 = output_scale / (hidden as f64).sqrt();
        let (w1_end, b1_end, w2_end) = net.offsets();
        for p in &mut net.params[..w1_end] {
            *p = rng.random_range(-b1..b1);
        }
        for p in &mut net.params[b1_end..w2_end] {
            *p = rng.random_range(-b2..b2);
        }
        net
    }

    pub fn from_params(input: usize, hidden: usize, output: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::param_count(input, hidden, output) {
            return Err(Error::domain(format!(
                "expected {} parameters for a {input}-{hidden}-{output} network, got {}",
                Self::param_count(input, hidden, output),
                params.len()
            )));
        }
        Ok(Self {
            input,
            hidden,
            output,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }
    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }
    pub fn output_dim(&self) -> usize {
        self.output
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.hidden * self.input;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.output * self.hidden;
        (w1, b1, w2)
    }

    /// Human-readable name of a flat parameter index, e.g. `w1[3,0]`.
    pub fn param_name(&self, index: usize) -> String {
        let (w1, b1, w2) = self.offsets();
        if index < w1 {
            format!("w1[{},{}]", index / self.input, index % self.input)
        } else if index < b1 {
            format!("b1[{}]", index - w1)
        } else if index < w2 {
            let i = index - b1;
            format!("w2[{},{}]", i / self.hidden, i % self.hidden)
        } else {
            format!("b2[{}]", index - w2)
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Activations> {
        if x.len() != self.input {
            return Err(Error::domain(format!(
                "network expects {} inputs, got {}",
                self.input,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite network input"));
        }
        let (w1_end, b1_end, w2_end) = self.offsets();
        let w1 = &self.params[..w1_end];
        let b1 = &self.params[w1_end..b1_end];
        let w2 = &self.params[b1_end..w2_end];
        let b2 = &self.params[w2_end..];
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &w1[j * self.input..(j + 1) * self.input];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[j];
                z.tanh()
            })
            .collect();
        let output = (0..self.output)
            .map(|k| {
                let row = &w2[k * self.hidden..(k + 1) * self.hidden];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + b2[k]
            })
            .collect();
        Ok(Activations { hidden, output })
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, x: &[f64], act: &Activations, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(d_out.len(), self.output);
        let (w1_end, b1_end, w2_end) = self.offsets();
        let w2 = &self.params[b1_end..w2_end];
        let mut d_hidden = vec![0.0; self.hidden];
        for (k, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[w2_end + k] += g;
            let row = k * self.hidden;
            for j in 0..self.hidden {
                grad[b1_end + row + j] += g * act.hidden[j];
                d_hidden[j] += g * w2[row + j];
            }
        }
        for j in 0..self.hidden {
            let dz = d_hidden[j] * (1.0 - act.hidden[j] * act.hidden[j]);
            if dz == 0.0 {
                continue;
            }
            grad[w1_end + j] += dz;
            let row = j * self.input;
            for (i, &xi) in x.iter().enumerate() {
                grad[row + i] += dz * xi;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, n_params: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub(crate) fn restore(&mut self, m: Vec<f64>, v: Vec<f64>, steps: u64) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(Error::domain("optimizer moment sizes do not match"));
        }
        self.m = m;
        self.v = v;
        self.steps = steps;
        Ok(())
    }

    /// Descends `grad`. Fails without touching anything if any gradient
    /// component is non-finite; `name` maps a flat index to a parameter name.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], name: impl Fn(usize) -> String) -> Result<()> {
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { param: name(i) });
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Sum of outputs weighted by fixed coefficients, so d loss / d out is constant.
    fn weighted(net: &Mlp, x: &[f64], c: &[f64]) -> f64 {
        net.forward(x).unwrap().output.iter().zip(c).map(|(o, c)| o * c).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::random(3, 5, 2, 1.0, &mut rng);
        let x = [0.3, -0.7, 0.1];
        let c = [0.8, -1.3];
        let act = net.forward(&x).unwrap();
        let mut grad = vec![0.0; net.params().len()];
        net.backward(&x, &act, &c, &mut grad);
        let h = 1e-6;
        for (i, &g) in grad.iter().enumerate() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (weighted(&plus, &x, &c) - weighted(&minus, &x, &c)) / (2.0 * h);
            assert!((fd - g).abs() < 1e-8, "{} {} {}", net.param_name(i), fd, g);
        }
    }

    #[test]
    fn param_names_cover_layout() {
        let net = Mlp::zeros(2, 3, 1);
        assert_eq!(net.param_name(0), "w1[0,0]");
        assert_eq!(net.param_name(5), "w1[2,1]");
        assert_eq!(net.param_name(6), "b1[0]");
        assert_eq!(net.param_name(9), "w2[0,0]");
        assert_eq!(net.param_name(12), "b2[0]");
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut adam = Adam::new(0.1, 2);
        let mut p = vec![1.0, 2.0];
        let err = adam.step(&mut p, &[0.0, f64::NAN], |i| format!("p{i}")).unwrap_err();
        assert!(err.to_string().contains("p1"));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = Mlp::zeros(2, 3, 1);
        assert!(net.forward(&[0.0]).is_err());
        assert!(net.forward(&[0.0, f64::INFINITY]).is_err());
    }
}
