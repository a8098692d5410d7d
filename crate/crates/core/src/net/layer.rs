use rand::Rng;

/// Affine map `y = W·x + b` with `W` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Affine { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..=limit)).collect();
        Affine { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(y.len(), self.outputs);
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *out = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates `dL/dW += g ⊗ x`, `dL/db += g` into `grad` and, when
    /// requested, writes `dL/dx = Wᵀ·g`.
    pub fn backward(&self, x: &[f64], g: &[f64], grad: &mut Affine, dx: Option<&mut [f64]>) {
        for (o, go) in g.iter().enumerate() {
            if *go == 0.0 {
                continue;
            }
            grad.bias[o] += go;
            let row = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for (gw, v) in row.iter_mut().zip(x) {
                *gw += go * v;
            }
        }
        if let Some(dx) = dx {
            dx.iter_mut().for_each(|d| *d = 0.0);
            for (o, go) in g.iter().enumerate() {
                if *go == 0.0 {
                    continue;
                }
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += go * w;
                }
            }
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zeroes gradient entries whose pre-activation was not positive.
pub(crate) fn relu_backward(pre: &[f64], g: &mut [f64]) {
    for (gi, p) in g.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *gi = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_matches_definition() {
        let layer = Affine { inputs: 2, outputs: 2, weights: vec![1.0, 2.0, 3.0, 4.0], bias: vec![0.5, -0.5] };
        let x = [1.0, -1.0];
        let mut y = [0.0; 2];
        layer.forward(&x, &mut y);
        assert_eq!(y, [-0.5, -1.5]);

        let mut grad = Affine::zeros(2, 2);
        let mut dx = [0.0; 2];
        layer.backward(&x, &[1.0, 2.0], &mut grad, Some(&mut dx));
        assert_eq!(grad.weights, vec![1.0, -1.0, 2.0, -2.0]);
        assert_eq!(grad.bias, vec![1.0, 2.0]);
        assert_eq!(dx, [7.0, 10.0]);
    }
}
