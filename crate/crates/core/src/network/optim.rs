//! NAdam and reduce-on-plateau learning-rate scheduling.

/// NAdam with the momentum-decay schedule
/// `μ_t = β1·(1 − ½·0.96^(t·ψ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub momentum_decay: f64,
    step: u64,
    mu_product: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl NAdam {
    pub fn new(lr: f64) -> NAdam {
        NAdam::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> NAdam {
        NAdam { lr, beta1, beta2, eps, momentum_decay: 0.004, step: 0, mu_product: 1.0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// First-moment buffers, one per parameter group.
    pub fn momentum(&self) -> &[Vec<f64>] {
        &self.m
    }

    fn mu(&self, t: u64) -> f64 {
        self.beta1 * (1.0 - 0.5 * 0.96f64.powf(t as f64 * self.momentum_decay))
    }

    /// One update over parallel lists of parameter and gradient slices.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), grads.len(), "one gradient group per parameter group");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step;
        let mu = self.mu(t);
        let mu_next = self.mu(t + 1);
        self.mu_product *= mu;
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        let c_grad = self.lr * (1.0 - mu) / (1.0 - self.mu_product);
        let c_mom = self.lr * mu_next / (1.0 - self.mu_product * mu_next);
        for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[gi], &mut self.v[gi]);
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let denom = (v[k] / bc2).sqrt() + self.eps;
                p[k] -= c_grad * g[k] / denom;
                p[k] -= c_mom * m[k] / denom;
            }
        }
    }
}

/// Reduce-on-plateau in `min` mode with a relative threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    /// Minimum change in lr for a reduction to be applied.
    pub eps: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64, eps: f64) -> PlateauScheduler {
        assert!(factor > 0.0 && factor < 1.0, "factor must lie in (0, 1)");
        assert!(patience >= 1, "patience must be at least 1");
        PlateauScheduler { lr, factor, patience, threshold, eps, best: f64::INFINITY, bad_epochs: 0 }
    }

    pub fn paper_default(lr: f64) -> PlateauScheduler {
        PlateauScheduler::new(lr, 0.5, 5, 1e-5, 1e-5)
    }

    /// Records an epoch loss and returns the learning rate for the next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - self.threshold) {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.patience {
            let reduced = self.lr * self.factor;
            if self.lr - reduced > self.eps {
                self.lr = reduced;
            }
            self.bad_epochs = 0;
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(opt: &mut NAdam, theta: &mut [f64], g: &[f64]) {
        opt.step(&mut [theta], &[g]);
    }

    #[test]
    fn nadam_single_step_trace() {
        // hand unroll: μ1 = 0.9(1 − ½·0.96^0.004), μ2 = 0.9(1 − ½·0.96^0.008),
        // m = 0.1, v̂ = 1, θ = −lr·[(1−μ1)/(1−μ1) + 0.1·μ2/(1−μ1μ2)] / (1+ε)
        let mu1 = 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.004));
        let mu2 = 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.008));
        let hand = -1e-3 * (1.0 + 0.1 * mu2 / (1.0 - mu1 * mu2)) / (1.0 + 1e-8);
        let mut opt = NAdam::new(1e-3);
        let mut theta = [0.0];
        run(&mut opt, &mut theta, &[1.0]);
        assert!((theta[0] - hand).abs() <= 1e-18);
        // torch.optim.NAdam (float64 params) after 1, 2, 3 steps; torch keeps
        // its step count and μ-product in float32, hence the looser tolerance
        for (k, torch) in [-0.001_056_451_780_770_273, -0.001_840_136_132_349_790_2, -0.002_572_353_254_300_373_6]
            .into_iter()
            .enumerate()
        {
            if k > 0 {
                run(&mut opt, &mut theta, &[1.0]);
            }
            assert!((theta[0] - torch).abs() <= 1e-10, "step {}: {}", k + 1, theta[0]);
        }
    }

    #[test]
    fn nadam_zero_gradient_keeps_params() {
        let mut opt = NAdam::new(1e-3);
        let mut theta = [0.7, -2.0];
        for _ in 0..50 {
            run(&mut opt, &mut theta, &[0.0, 0.0]);
        }
        assert_eq!(theta, [0.7, -2.0]);
    }

    #[test]
    fn nadam_without_momentum_tracks_raw_gradient() {
        let mut opt = NAdam::with_betas(1e-3, 0.0, 0.999, 1e-8);
        let mut theta = [0.0, 0.0];
        for g in [[0.5, -3.0], [1.5, 2.0], [-0.25, 4.0]] {
            run(&mut opt, &mut theta, &g);
            assert_eq!(opt.momentum()[0], g.to_vec());
        }
    }

    #[test]
    fn nadam_is_deterministic() {
        let traj = || {
            let mut opt = NAdam::new(1e-2);
            let mut theta = [1.0, 2.0, 3.0];
            let mut out = Vec::new();
            for k in 0..20 {
                let g: Vec<f64> = theta.iter().map(|t| (t * (k as f64 + 1.0)).sin()).collect();
                run(&mut opt, &mut theta, &g);
                out.extend(theta.iter().map(|t| t.to_bits()));
            }
            out
        };
        assert_eq!(traj(), traj());
    }

    #[test]
    fn plateau_decreasing_loss_keeps_lr() {
        let mut s = PlateauScheduler::paper_default(1e-3);
        for k in 0..30 {
            assert_eq!(s.observe(10.0 - k as f64 * 0.1), 1e-3);
        }
    }

    #[test]
    fn plateau_constant_loss_halves_lr() {
        let mut s = PlateauScheduler::paper_default(1e-3);
        // epoch 1 sets the reference; epochs 2..=6 are five bad epochs
        for _ in 0..6 {
            assert_eq!(s.observe(1.0), 1e-3);
        }
        // six non-improving epochs after the reference exceed patience 5
        assert_eq!(s.observe(1.0), 5e-4);
    }

    #[test]
    fn plateau_threshold_is_relative() {
        let mut s = PlateauScheduler::paper_default(1e-3);
        s.observe(1.0);
        // 1 − 5e-6 is within the 1e-5 relative band: not an improvement
        for _ in 0..5 {
            s.observe(1.0 - 5e-6);
        }
        assert_eq!(s.observe(1.0 - 5e-6), 5e-4);
    }

    #[test]
    fn plateau_eps_gates_small_reductions() {
        let mut s = PlateauScheduler::paper_default(1e-5);
        for _ in 0..20 {
            assert_eq!(s.observe(1.0), 1e-5);
        }
    }
}
