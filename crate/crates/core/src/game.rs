//! Exact finite-space model of the minimax game: distributions over
//! enumerated states, measurement channels, the optimal discriminator, and
//! brute-force simplex searches for optimal generators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clamp applied before logs in `game_value`.
pub const VALUE_EPS: f64 = 1e-12;
/// Tolerance for simplex and row-stochastic sums.
pub const SUM_TOL: f64 = 1e-12;
/// Two JS values within this of the minimum count as co-minimizers.
pub const TIE_TOL: f64 = 1e-12;

/// Probability vector over an enumerated finite space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid_argument("distribution over zero states"));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::invalid_argument(format!(
                "negative or non-finite probability in {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid_argument(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(DiscreteDistribution { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid_argument("distribution over zero states"));
        }
        Ok(DiscreteDistribution {
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl TryFrom<Vec<f64>> for DiscreteDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        DiscreteDistribution::new(v)
    }
}

impl From<DiscreteDistribution> for Vec<f64> {
    fn from(d: DiscreteDistribution) -> Self {
        d.probs
    }
}

/// Row-stochastic matrix; rows index input states, columns output states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DiscreteChannel {
    rows: Vec<Vec<f64>>,
}

impl DiscreteChannel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::invalid_argument("channel with zero states"));
        }
        let width = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::invalid_argument(format!(
                    "channel row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::invalid_argument(format!(
                    "negative or non-finite entry in channel row {i}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::invalid_argument(format!(
                    "channel row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(DiscreteChannel { rows })
    }

    pub fn identity(n: usize) -> Result<Self> {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        DiscreteChannel::new(rows)
    }

    pub fn num_inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

impl TryFrom<Vec<Vec<f64>>> for DiscreteChannel {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        DiscreteChannel::new(v)
    }
}

impl From<DiscreteChannel> for Vec<Vec<f64>> {
    fn from(c: DiscreteChannel) -> Self {
        c.rows
    }
}

/// Distribution over outputs induced by sending `p_x` through the channel:
/// `p_y[j] = Σ_i p_x[i] K[i][j]`.
pub fn pushforward(
    channel: &DiscreteChannel,
    p_x: &DiscreteDistribution,
) -> Result<DiscreteDistribution> {
    if p_x.len() != channel.num_inputs() {
        return Err(Error::invalid_argument(format!(
            "distribution over {} states fed to channel with {} inputs",
            p_x.len(),
            channel.num_inputs()
        )));
    }
    let mut out = vec![0.0; channel.num_outputs()];
    for (i, &px) in p_x.probs().iter().enumerate() {
        for (o, &k) in out.iter_mut().zip(channel.row(i)) {
            *o += px * k;
        }
    }
    // Renormalization is deliberately avoided; validation enforces the
    // simplex invariant instead.
    DiscreteDistribution::new(out)
}

/// `D*[j] = p_r[j] / (p_r[j] + p_g[j])`, with 0.5 where both masses vanish.
pub fn optimal_discriminator(
    p_r: &DiscreteDistribution,
    p_g: &DiscreteDistribution,
) -> Result<Vec<f64>> {
    if p_r.len() != p_g.len() {
        return Err(Error::invalid_argument(
            "distributions live on different spaces",
        ));
    }
    Ok(p_r
        .probs()
        .iter()
        .zip(p_g.probs())
        .map(|(&r, &g)| if r + g == 0.0 { 0.5 } else { r / (r + g) })
        .collect())
}

/// Finite value function `Σ p_r log D + Σ p_g log(1-D)` in nats.
pub fn game_value(
    p_r: &DiscreteDistribution,
    p_g: &DiscreteDistribution,
    d: &[f64],
) -> Result<f64> {
    if p_r.len() != p_g.len() || d.len() != p_r.len() {
        return Err(Error::invalid_argument(
            "value function over mismatched spaces",
        ));
    }
    if d.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::invalid_argument(
            "discriminator entries must lie in [0, 1]",
        ));
    }
    let mut v = 0.0;
    for ((&r, &g), &dj) in p_r.probs().iter().zip(p_g.probs()).zip(d) {
        let dj = dj.clamp(VALUE_EPS, 1.0 - VALUE_EPS);
        if r > 0.0 {
            v += r * dj.ln();
        }
        if g > 0.0 {
            v += g * (1.0 - dj).ln();
        }
    }
    Ok(v)
}

/// Jensen-Shannon divergence in nats: the average of the two KL terms
/// against the midpoint, bounded by log 2. Relates to the game through
/// `game_value(p, q, D*) = 2 JS(p, q) - 2 log 2`.
pub fn js_divergence(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid_argument(
            "divergence over mismatched spaces",
        ));
    }
    let mut js = 0.0;
    for (&a, &b) in p.probs().iter().zip(q.probs()) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            js += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            js += 0.5 * b * (b / m).ln();
        }
    }
    Ok(js)
}

/// Enumerates every simplex grid point with coordinates `c_i / n` in
/// ascending lexicographic order of the coordinate vector.
fn simplex_grid(dims: usize, n: usize) -> Vec<Vec<f64>> {
    let mut points = Vec::new();
    let mut counts = vec![0usize; dims];
    fn rec(counts: &mut Vec<usize>, idx: usize, left: usize, n: usize, out: &mut Vec<Vec<f64>>) {
        if idx + 1 == counts.len() {
            counts[idx] = left;
            out.push(counts.iter().map(|&c| c as f64 / n as f64).collect());
            return;
        }
        for c in 0..=left {
            counts[idx] = c;
            rec(counts, idx + 1, left - c, n, out);
        }
    }
    rec(&mut counts, 0, n, n, &mut points);
    points
}

fn grid_resolution(grid_step: f64) -> Result<usize> {
    if !(grid_step > 0.0) {
        return Err(Error::invalid_argument("grid step must be positive"));
    }
    let n = (1.0 / grid_step).round();
    if n < 1.0 || (n * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid_argument(format!(
            "grid step {grid_step} does not divide 1"
        )));
    }
    Ok(n as usize)
}

/// All grid points minimizing `JS(p_y_r, Kᵀ p)` over the simplex, in
/// lexicographic order; every co-minimizer within `TIE_TOL` is reported.
pub fn generator_optimum_grid_search(
    channel: &DiscreteChannel,
    p_y_r: &DiscreteDistribution,
    grid_step: f64,
) -> Result<Vec<DiscreteDistribution>> {
    minimize_on_grid(channel.num_inputs(), grid_step, |p| {
        js_divergence(p_y_r, &pushforward(channel, p)?)
    })
}

fn minimize_on_grid(
    dims: usize,
    grid_step: f64,
    mut objective: impl FnMut(&DiscreteDistribution) -> Result<f64>,
) -> Result<Vec<DiscreteDistribution>> {
    if dims > 4 {
        return Err(Error::invalid_argument(format!(
            "exhaustive search over {dims} states is not supported (max 4)"
        )));
    }
    let n = grid_resolution(grid_step)?;
    let mut best = f64::INFINITY;
    let mut scored = Vec::new();
    for point in simplex_grid(dims, n) {
        let p = DiscreteDistribution::new(point)?;
        let js = objective(&p)?;
        if js < best {
            best = js;
        }
        scored.push((p, js));
    }
    Ok(scored
        .into_iter()
        .filter(|(_, js)| *js <= best + TIE_TOL)
        .map(|(p, _)| p)
        .collect())
}

/// Hidden-space mixture game: with probability `p2` the measurement is the
/// identity channel, otherwise the noise channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGameConfig {
    pub p2: f64,
    pub channel_id: DiscreteChannel,
    pub channel_noise: DiscreteChannel,
    /// Target measurement distribution p_y^r; when absent it is induced by
    /// pushing the real input distribution through the mixture.
    #[serde(default)]
    pub target: Option<DiscreteDistribution>,
}

/// Minimizer sets for the two component objectives and the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub id_minimizers: Vec<DiscreteDistribution>,
    pub noise_minimizers: Vec<DiscreteDistribution>,
    pub mixture_minimizers: Vec<DiscreteDistribution>,
    /// True iff the minimizer sets of the mixture and of every component
    /// with positive weight meet within one grid step.
    pub agreement: bool,
}

fn mixture_channel(cfg: &MixtureGameConfig) -> Result<DiscreteChannel> {
    let (id, noise) = (&cfg.channel_id, &cfg.channel_noise);
    if id.num_inputs() != noise.num_inputs() || id.num_outputs() != noise.num_outputs() {
        return Err(Error::invalid_argument(
            "identity and noise channels must share input and output spaces",
        ));
    }
    let rows = (0..id.num_inputs())
        .map(|i| {
            id.row(i)
                .iter()
                .zip(noise.row(i))
                .map(|(&a, &b)| cfg.p2 * a + (1.0 - cfg.p2) * b)
                .collect()
        })
        .collect();
    DiscreteChannel::new(rows)
}

fn sets_meet(a: &[DiscreteDistribution], b: &[DiscreteDistribution], step: f64) -> bool {
    a.iter().any(|x| {
        b.iter().any(|y| {
            x.probs()
                .iter()
                .zip(y.probs())
                .all(|(u, v)| (u - v).abs() <= step + 1e-9)
        })
    })
}

/// Compares where each mixture component wants the generator against where
/// the mixture objective itself does.
pub fn mixture_optimum_analysis(
    cfg: &MixtureGameConfig,
    p_x_r: &DiscreteDistribution,
    grid_step: f64,
) -> Result<MixtureReport> {
    if !(0.0..=1.0).contains(&cfg.p2) {
        return Err(Error::invalid_argument(format!(
            "mixture weight p2={} outside [0, 1]",
            cfg.p2
        )));
    }
    let mix = mixture_channel(cfg)?;
    let target = match &cfg.target {
        Some(t) => t.clone(),
        None => pushforward(&mix, p_x_r)?,
    };
    if target.len() != mix.num_outputs() {
        return Err(Error::invalid_argument(
            "target distribution does not live on the channel output space",
        ));
    }
    let id_minimizers = generator_optimum_grid_search(&cfg.channel_id, &target, grid_step)?;
    let noise_minimizers = generator_optimum_grid_search(&cfg.channel_noise, &target, grid_step)?;
    let mixture_minimizers = generator_optimum_grid_search(&mix, &target, grid_step)?;

    // A zero-weight component plays no part in the game, so it cannot
    // create disagreement.
    let mut agreement = true;
    if cfg.p2 > 0.0 {
        agreement &= sets_meet(&mixture_minimizers, &id_minimizers, grid_step);
    }
    if cfg.p2 < 1.0 {
        agreement &= sets_meet(&mixture_minimizers, &noise_minimizers, grid_step);
    }
    if cfg.p2 > 0.0 && cfg.p2 < 1.0 {
        agreement &= sets_meet(&id_minimizers, &noise_minimizers, grid_step);
    }
    Ok(MixtureReport {
        id_minimizers,
        noise_minimizers,
        mixture_minimizers,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(v.to_vec()).unwrap()
    }

    fn random_dist(n: usize, rng: &mut Rng) -> DiscreteDistribution {
        let raw: Vec<f64> = (0..n).map(|_| rng.uniform01() + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        DiscreteDistribution::new(raw.into_iter().map(|v| v / sum).collect()).unwrap()
    }

    fn random_channel(n_in: usize, n_out: usize, rng: &mut Rng) -> DiscreteChannel {
        let rows = (0..n_in)
            .map(|_| {
                let raw: Vec<f64> = (0..n_out).map(|_| rng.uniform01() + 1e-3).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        DiscreteChannel::new(rows).unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
    }

    #[test]
    fn channel_validation() {
        assert!(DiscreteChannel::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).is_ok());
        assert!(DiscreteChannel::new(vec![vec![0.9, 0.0]]).is_err());
        assert!(DiscreteChannel::new(vec![vec![1.0], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn identity_pushforward_is_identity() {
        let p = dist(&[0.2, 0.3, 0.5]);
        let k = DiscreteChannel::identity(3).unwrap();
        assert_eq!(pushforward(&k, &p).unwrap().probs(), p.probs());
    }

    #[test]
    fn two_state_pushforward_arithmetic() {
        let k = DiscreteChannel::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let p = dist(&[0.5, 0.5]);
        let y = pushforward(&k, &p).unwrap();
        assert!((y.probs()[0] - 0.75).abs() < 1e-15);
        assert!((y.probs()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pushforward_matches_summation_oracle() {
        let mut rng = Rng::new(31);
        let k = random_channel(4, 4, &mut rng);
        let p = random_dist(4, &mut rng);
        let y = pushforward(&k, &p).unwrap();
        for j in 0..4 {
            let mut acc = 0.0;
            for i in 0..4 {
                acc += p.probs()[i] * k.row(i)[j];
            }
            assert!((y.probs()[j] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn pushforward_dimension_mismatch() {
        let k = DiscreteChannel::identity(3).unwrap();
        let p = dist(&[0.5, 0.5]);
        assert!(matches!(
            pushforward(&k, &p),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn equal_distributions_give_constant_half_discriminator() {
        let p = dist(&[0.1, 0.6, 0.3]);
        let d = optimal_discriminator(&p, &p).unwrap();
        assert!(d.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn disjoint_supports_give_hard_discriminator() {
        let d = optimal_discriminator(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap();
        assert_eq!(d, vec![1.0, 0.0]);
    }

    #[test]
    fn discriminator_formula_evaluation() {
        let d = optimal_discriminator(&dist(&[0.8, 0.2]), &dist(&[0.4, 0.6])).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn value_at_optimum_for_equal_distributions() {
        let p = dist(&[0.3, 0.25, 0.45]);
        let d = optimal_discriminator(&p, &p).unwrap();
        let v = game_value(&p, &p, &d).unwrap();
        assert!((v + 2.0 * std::f64::consts::LN_2).abs() < 1e-10, "value {v}");
    }

    #[test]
    fn constant_half_discriminator_value() {
        let mut rng = Rng::new(37);
        for _ in 0..5 {
            let p = random_dist(4, &mut rng);
            let q = random_dist(4, &mut rng);
            let v = game_value(&p, &q, &[0.5; 4]).unwrap();
            assert!((v + 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_discriminator_beats_random_perturbations() {
        let mut rng = Rng::new(41);
        for n in 3..=5 {
            let p = random_dist(n, &mut rng);
            let q = random_dist(n, &mut rng);
            let d_star = optimal_discriminator(&p, &q).unwrap();
            let v_star = game_value(&p, &q, &d_star).unwrap();
            for _ in 0..1000 {
                let d: Vec<f64> = d_star
                    .iter()
                    .map(|&v| (v + (rng.uniform01() - 0.5) * 0.4).clamp(0.0, 1.0))
                    .collect();
                let v = game_value(&p, &q, &d).unwrap();
                assert!(v <= v_star + 1e-12, "random D value {v} beats optimum {v_star}");
            }
        }
    }

    #[test]
    fn js_of_identical_distributions_is_zero() {
        let p = dist(&[0.2, 0.5, 0.3]);
        assert_eq!(js_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn js_of_disjoint_supports_is_log_two() {
        let v = js_divergence(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn js_relates_to_game_value_at_optimum() {
        // Classic identity: V(D*) = 2 JS - 2 log 2. The factor 2 matters;
        // the disjoint-support case pins it (V = 0, JS = log 2).
        let mut rng = Rng::new(43);
        for _ in 0..20 {
            let p = random_dist(5, &mut rng);
            let q = random_dist(5, &mut rng);
            let d = optimal_discriminator(&p, &q).unwrap();
            let v = game_value(&p, &q, &d).unwrap();
            let js = js_divergence(&p, &q).unwrap();
            assert!(
                (v - (2.0 * js - 2.0 * std::f64::consts::LN_2)).abs() < 1e-10,
                "value {v} vs 2 JS - 2 log 2 = {}",
                2.0 * js - 2.0 * std::f64::consts::LN_2
            );
        }
    }

    #[test]
    fn identity_channel_grid_search_recovers_target() {
        let k = DiscreteChannel::identity(2).unwrap();
        let mins = generator_optimum_grid_search(&k, &dist(&[0.3, 0.7]), 0.01).unwrap();
        assert_eq!(mins.len(), 1);
        assert!((mins[0].probs()[0] - 0.3).abs() < 1e-12);
        assert!((mins[0].probs()[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn injective_channel_has_unique_grid_minimizer() {
        let k = DiscreteChannel::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let p_x_r = dist(&[0.6, 0.4]);
        let p_y_r = pushforward(&k, &p_x_r).unwrap();
        let mins = generator_optimum_grid_search(&k, &p_y_r, 0.01).unwrap();
        assert_eq!(mins.len(), 1);
        for (m, t) in mins[0].probs().iter().zip(p_x_r.probs()) {
            assert!((m - t).abs() <= 0.01 + 1e-12);
        }
    }

    #[test]
    fn constant_channel_makes_every_grid_point_optimal() {
        let k = DiscreteChannel::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let p_y_r = dist(&[1.0, 0.0]);
        let mins = generator_optimum_grid_search(&k, &p_y_r, 0.1).unwrap();
        assert_eq!(mins.len(), 11);
    }

    #[test]
    fn grid_step_must_divide_one() {
        let k = DiscreteChannel::identity(2).unwrap();
        assert!(matches!(
            generator_optimum_grid_search(&k, &dist(&[0.5, 0.5]), 0.3),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn two_state_mixture(p2: f64) -> MixtureGameConfig {
        MixtureGameConfig {
            p2,
            channel_id: DiscreteChannel::identity(2).unwrap(),
            channel_noise: DiscreteChannel::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap(),
            target: None,
        }
    }

    #[test]
    fn zero_weight_reduces_to_noise_channel_game() {
        let cfg = two_state_mixture(0.0);
        let p_x_r = dist(&[0.6, 0.4]);
        let report = mixture_optimum_analysis(&cfg, &p_x_r, 0.01).unwrap();
        let target = pushforward(&cfg.channel_noise, &p_x_r).unwrap();
        let direct =
            generator_optimum_grid_search(&cfg.channel_noise, &target, 0.01).unwrap();
        assert_eq!(report.mixture_minimizers, direct);
        assert_eq!(report.noise_minimizers, direct);
        assert!(report.agreement);
    }

    #[test]
    fn full_weight_reduces_to_identity_game() {
        let cfg = two_state_mixture(1.0);
        let p_x_r = dist(&[0.6, 0.4]);
        let report = mixture_optimum_analysis(&cfg, &p_x_r, 0.01).unwrap();
        assert_eq!(report.mixture_minimizers.len(), 1);
        assert_eq!(report.mixture_minimizers[0].probs(), p_x_r.probs());
        assert!(report.agreement);
    }

    #[test]
    fn half_weight_witness_shows_disagreement() {
        // With p2=0.5 the mixture wants p_x_r back, the identity component
        // wants the blurred target itself, and the noise component wants a
        // third point; the sets are pairwise more than one step apart.
        let cfg = two_state_mixture(0.5);
        let p_x_r = dist(&[0.6, 0.4]);
        let report = mixture_optimum_analysis(&cfg, &p_x_r, 0.01).unwrap();
        assert!(!report.agreement);
        assert_eq!(report.mixture_minimizers.len(), 1);
        assert!((report.mixture_minimizers[0].probs()[0] - 0.6).abs() < 1e-12);
        assert_eq!(report.id_minimizers.len(), 1);
        assert!((report.id_minimizers[0].probs()[0] - 0.7).abs() < 1e-12);
        assert_eq!(report.noise_minimizers.len(), 1);
        assert!((report.noise_minimizers[0].probs()[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn mixture_config_json_round_trip() {
        let cfg = two_state_mixture(0.25);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: MixtureGameConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    proptest! {
        #[test]
        fn pushforward_preserves_simplex(seed in 0u64..500) {
            let mut rng = Rng::new(seed);
            let k = random_channel(4, 3, &mut rng);
            let p = random_dist(4, &mut rng);
            let y = pushforward(&k, &p).unwrap();
            let sum: f64 = y.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() <= SUM_TOL);
            prop_assert!(y.probs().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn js_is_symmetric_and_bounded(seed in 0u64..500) {
            let mut rng = Rng::new(seed);
            let p = random_dist(5, &mut rng);
            let q = random_dist(5, &mut rng);
            let a = js_divergence(&p, &q).unwrap();
            let b = js_divergence(&q, &p).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
            prop_assert!(a <= std::f64::consts::LN_2 + 1e-12);
        }

        #[test]
        fn injective_channels_localize_the_minimizer(seed in 0u64..20) {
            // Random invertible-looking 3-state channels: diagonally
            // dominant rows keep the rank full.
            let mut rng = Rng::new(seed);
            let mut rows = Vec::new();
            for i in 0..3 {
                let mut row: Vec<f64> = (0..3).map(|_| rng.uniform01() * 0.2).collect();
                row[i] += 1.0;
                let s: f64 = row.iter().sum();
                rows.push(row.into_iter().map(|v| v / s).collect::<Vec<_>>());
            }
            let k = DiscreteChannel::new(rows).unwrap();
            let p_x_r = random_dist(3, &mut rng);
            let p_y_r = pushforward(&k, &p_x_r).unwrap();
            let mins = generator_optimum_grid_search(&k, &p_y_r, 0.01).unwrap();
            for m in &mins {
                for (a, b) in m.probs().iter().zip(p_x_r.probs()) {
                    prop_assert!((a - b).abs() <= 0.01 + 1e-9);
                }
            }
        }

        #[test]
        fn non_injective_channels_have_spread_minimizers(seed in 0u64..20) {
            // Both inputs map to the same output row, so the pushforward is
            // constant in p and every grid point co-minimizes.
            let mut rng = Rng::new(seed);
            let row: Vec<f64> = {
                let raw: Vec<f64> = (0..3).map(|_| rng.uniform01() + 0.1).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            };
            let k = DiscreteChannel::new(vec![row.clone(), row.clone()]).unwrap();
            let p_y_r = random_dist(3, &mut rng);
            let step = 0.05;
            let mins = generator_optimum_grid_search(&k, &p_y_r, step).unwrap();
            let spread = mins.iter().any(|a| {
                mins.iter().any(|b| {
                    a.probs()
                        .iter()
                        .zip(b.probs())
                        .any(|(x, y)| (x - y).abs() > 2.0 * step)
                })
            });
            prop_assert!(spread);
        }
    }
}
