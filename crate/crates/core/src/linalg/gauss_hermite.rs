use std::f64::consts::PI;

/// Gauss–Hermite rule for the weight `exp(-x²)` on the real line.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule by Newton iteration on the orthonormal
    /// Hermite recurrence, seeded with the usual asymptotic root guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]` for `Z ~ N(0, sd²)`.
    pub fn normal_expectation(&self, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = std::f64::consts::SQRT_2 * sd;
        let norm = PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(scale * x))
            .sum::<f64>()
            / norm
    }

    /// Pairs of (standard-normal abscissa, log probability weight).
    pub fn normal_log_rule(&self) -> Vec<(f64, f64)> {
        let norm = PI.sqrt().ln();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (std::f64::consts::SQRT_2 * x, w.ln() - norm))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 32, 64] {
            let gh = GaussHermite::new(n);
            let s: f64 = gh.weights().iter().sum();
            assert!((s - PI.sqrt()).abs() < 1e-12, "n={n}: {s}");
        }
    }

    #[test]
    fn normal_moments_are_exact() {
        let gh = GaussHermite::new(32);
        // E[Z^2] = s², E[Z^4] = 3 s⁴, E[Z^6] = 15 s⁶
        let s = 1.7_f64;
        assert!((gh.normal_expectation(s, |z| z * z) - s * s).abs() < 1e-10);
        assert!((gh.normal_expectation(s, |z| z.powi(4)) - 3.0 * s.powi(4)).abs() < 1e-9);
        assert!((gh.normal_expectation(s, |z| z.powi(6)) - 15.0 * s.powi(6)).abs() < 1e-8);
        assert!(gh.normal_expectation(s, |z| z.powi(3)).abs() < 1e-10);
    }

    #[test]
    fn two_point_rule_is_known() {
        let gh = GaussHermite::new(2);
        let x = 0.5_f64.sqrt();
        assert!((gh.nodes()[0] - x).abs() < 1e-14);
        assert!((gh.weights()[0] - PI.sqrt() / 2.0).abs() < 1e-14);
    }
}
