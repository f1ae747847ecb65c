use crate::error::Result;
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug)]
struct Slot {
    id: NodeId,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction; epsilon is added after the square root. A
/// parameter whose gradient is all zeros on a fresh optimizer state is left
/// bit-identical by `step`.
#[derive(Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    slots: Vec<Slot>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &[NodeId], graph: &Graph) -> Self {
        let slots = params
            .iter()
            .map(|&id| {
                let n = graph.value(id).elems();
                Slot { id, m: vec![0.0; n], v: vec![0.0; n] }
            })
            .collect();
        Adam { cfg, t: 0, slots }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one update from the gradients currently stored on the graph.
    pub fn step(&mut self, graph: &mut Graph) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        let mut updated = Vec::new();
        for slot in &mut self.slots {
            let grad = graph.grad(slot.id);
            let value = graph.value(slot.id).data();
            updated.clear();
            updated.reserve(value.len());
            for ((&g, m), (v, &p)) in
                grad.iter().zip(&mut slot.m).zip(slot.v.iter_mut().zip(value))
            {
                *m = self.cfg.beta1 * *m + (1.0 - self.cfg.beta1) * g;
                *v = self.cfg.beta2 * *v + (1.0 - self.cfg.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                updated.push(p - self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.eps));
            }
            graph.set_value(slot.id, &updated)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_param(v: f64) -> (Graph, NodeId) {
        let mut g = Graph::new();
        let p = g.param(Tensor::vector(vec![v]).unwrap()).unwrap();
        g.seal_params();
        (g, p)
    }

    /// Drive the param's gradient to exactly `grad` via loss = grad * p.
    fn run_step(g: &mut Graph, p: NodeId, opt: &mut Adam, grad: f64) {
        g.reset_to_params();
        g.zero_grads();
        let c = g.constant(Tensor::vector(vec![grad]).unwrap()).unwrap();
        let prod = g.mul(p, c).unwrap();
        let loss = g.sum(prod).unwrap();
        g.backward(loss).unwrap();
        opt.step(g).unwrap();
    }

    #[test]
    fn matches_hand_recurrence_over_three_steps() {
        let (mut g, p) = scalar_param(1.0);
        let mut opt = Adam::new(AdamConfig::default(), &[p], &g);
        let grads = [1.0, 0.5, -0.25];
        let expect = [0.99900000001, 0.9980678203829816, 0.9975041590149633];
        for (grad, want) in grads.iter().zip(expect) {
            run_step(&mut g, p, &mut opt, *grad);
            let got = g.value(p).data()[0];
            assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
        }
        assert_eq!(opt.step_count(), 3);
    }

    #[test]
    fn first_step_from_zero_matches_closed_form() {
        let (mut g, p) = scalar_param(0.0);
        let mut opt = Adam::new(AdamConfig::default(), &[p], &g);
        run_step(&mut g, p, &mut opt, 1.0);
        let got = g.value(p).data()[0];
        assert!((got - (-0.0009999999900000003)).abs() < 1e-18);
    }

    #[test]
    fn zero_grad_on_fresh_state_leaves_param_bits_unchanged() {
        let (mut g, p) = scalar_param(0.123456789);
        let before = g.value(p).data()[0].to_bits();
        let mut opt = Adam::new(AdamConfig::default(), &[p], &g);
        run_step(&mut g, p, &mut opt, 0.0);
        assert_eq!(g.value(p).data()[0].to_bits(), before);
    }

    #[test]
    fn nonzero_momentum_moves_param_even_with_zero_grad() {
        let (mut g, p) = scalar_param(1.0);
        let mut opt = Adam::new(AdamConfig::default(), &[p], &g);
        run_step(&mut g, p, &mut opt, 1.0);
        let after_one = g.value(p).data()[0];
        run_step(&mut g, p, &mut opt, 0.0);
        assert!(g.value(p).data()[0] != after_one);
    }
}
