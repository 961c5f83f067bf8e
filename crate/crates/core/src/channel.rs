//! Rayleigh block-fading draws, analog uncoded reception, SNR thresholding
//! and age-of-information bookkeeping for one link.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Per-slot communication state of one direction of one control system.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub direction: Direction,
    /// Current fading block, F x F.
    pub h: Matrix,
    /// Signal dimension F (state dimension uplink, action dimension downlink).
    pub dim: usize,
    /// Age of information in slots. Starts at 0 before the first slot and is
    /// at least 1 after every slot update.
    pub beta: u32,
    /// Slot of the most recent successful reception.
    pub last_reception_slot: Option<i64>,
    /// Scheduled this slot.
    pub alpha: bool,
    /// Transmission succeeded this slot (scheduled and SNR above threshold).
    pub xi: bool,
    /// Transmit power, linear scale.
    pub power: f64,
    /// SNR success threshold, linear scale.
    pub snr_threshold: f64,
    /// Receiver noise variance per component.
    pub noise_floor: f64,
}

impl LinkState {
    pub fn new(direction: Direction, dim: usize, snr_threshold: f64, noise_floor: f64) -> Self {
        Self {
            direction,
            h: Matrix::zeros(dim, dim),
            dim,
            beta: 0,
            last_reception_slot: None,
            alpha: false,
            xi: false,
            power: 0.0,
            snr_threshold,
            noise_floor,
        }
    }
}

/// Draws one flat-fading block: a single real N(0, variance_scale) tap
/// applied to every sample of the burst, represented as `h I`. The expected
/// squared Frobenius norm is `variance_scale * F`, keeping unit mean gain
/// per stream.
pub fn draw_channel<R: Rng>(dim: usize, variance_scale: f64, rng: &mut R) -> Matrix {
    let tap = variance_scale.sqrt() * rng.sample::<f64, _>(StandardNormal);
    Matrix::identity(dim, dim) * tap
}

/// Receiver SNR: `power * ||H||_F^2 / N0`.
pub fn snr(link: &LinkState) -> f64 {
    link.power * link.h.norm_squared() / link.noise_floor
}

/// Advances the AoI after the slot's transmission indicator is resolved:
/// reset to 1 on success, increment otherwise.
pub fn update_aoi(link: &mut LinkState, slot: i64) {
    if link.xi {
        link.beta = 1;
        link.last_reception_slot = Some(slot);
    } else {
        link.beta += 1;
    }
}

/// Analog uncoded transmission over the current fading block:
/// `received = sqrt(power) * H * signal + n`, `n ~ N(0, N0 I)`.
/// Returns the received vector and the success indicator.
pub fn transmit<R: Rng>(link: &LinkState, signal: &Vector, rng: &mut R) -> Result<(Vector, bool)> {
    if !link.alpha {
        return Err(Error::Contract("transmit called on an unscheduled link".into()));
    }
    if signal.len() != link.dim {
        return Err(Error::Dimension("signal length disagrees with link dimension".into()));
    }
    let noise_std = link.noise_floor.sqrt();
    let noise = Vector::from_iterator(
        link.dim,
        (0..link.dim).map(|_| noise_std * rng.sample::<f64, _>(StandardNormal)),
    );
    let received = &link.h * signal * link.power.sqrt() + noise;
    let success = snr(link) >= link.snr_threshold;
    Ok((received, success))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn scalar_link(power: f64, h: f64, n0: f64, th: f64) -> LinkState {
        let mut link = LinkState::new(Direction::Uplink, 1, th, n0);
        link.h = Matrix::from_element(1, 1, h);
        link.power = power;
        link
    }

    #[test]
    fn snr_arithmetic() {
        let link = scalar_link(1.0, 2.0, 2.0, 10.0);
        assert!((snr(&link) - 2.0).abs() < 1e-15); // 1 * 4 / 2

        let zero = scalar_link(0.0, 2.0, 2.0, 10.0);
        assert_eq!(snr(&zero), 0.0);
    }

    #[test]
    fn snr_identity_channel() {
        let f = 3;
        let mut link = LinkState::new(Direction::Uplink, f, 1.0, 0.5);
        link.h = Matrix::identity(f, f);
        link.power = 0.5; // P = N0
        assert!((snr(&link) - f as f64).abs() < 1e-15);
    }

    #[test]
    fn snr_is_homogeneous_in_power() {
        let base = scalar_link(1.3, 0.7, 0.01, 10.0);
        let scaled = scalar_link(1.3 * 4.0, 0.7, 0.01, 10.0);
        assert!((snr(&scaled) - 4.0 * snr(&base)).abs() < 1e-12);
    }

    #[test]
    fn aoi_increments_and_resets() {
        let mut link = scalar_link(1.0, 1.0, 1.0, 1.0);
        link.beta = 3;
        link.xi = false;
        update_aoi(&mut link, 10);
        assert_eq!(link.beta, 4);

        link.beta = 17;
        link.xi = true;
        update_aoi(&mut link, 11);
        assert_eq!(link.beta, 1);
        assert_eq!(link.last_reception_slot, Some(11));
    }

    #[test]
    fn aoi_counts_slots_without_receptions() {
        let mut link = scalar_link(1.0, 1.0, 1.0, 1.0);
        link.xi = false;
        for k in 0..25 {
            update_aoi(&mut link, k);
        }
        assert_eq!(link.beta, 25);
    }

    #[test]
    fn aoi_replays_an_indicator_trace() {
        let trace = [false, false, true, false, true, true, false, false, false, true];
        let mut link = scalar_link(1.0, 1.0, 1.0, 1.0);
        let mut expected = 0u32;
        for (k, &xi) in trace.iter().enumerate() {
            link.xi = xi;
            update_aoi(&mut link, k as i64);
            expected = if xi { 1 } else { expected + 1 };
            assert_eq!(link.beta, expected);
        }
    }

    #[test]
    fn channel_moments_and_independence() {
        let mut rng = stream(3, 0, Purpose::UplinkChannel);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let h = draw_channel(1, 1.0, &mut rng);
            acc += h[(0, 0)] * h[(0, 0)];
        }
        let second_moment = acc / n as f64;
        assert!((second_moment - 1.0).abs() < 0.05, "E[H^2] = {second_moment}");

        // consecutive draws are uncorrelated
        let mut rng = stream(4, 0, Purpose::UplinkChannel);
        let mut prev = draw_channel(1, 1.0, &mut rng)[(0, 0)];
        let (mut sum_xy, mut sum_x, mut sum_y, mut sum_x2, mut sum_y2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let pairs = 10_000;
        for _ in 0..pairs {
            let cur = draw_channel(1, 1.0, &mut rng)[(0, 0)];
            sum_xy += prev * cur;
            sum_x += prev;
            sum_y += cur;
            sum_x2 += prev * prev;
            sum_y2 += cur * cur;
            prev = cur;
        }
        let n = pairs as f64;
        let corr = (sum_xy - sum_x * sum_y / n)
            / ((sum_x2 - sum_x * sum_x / n).sqrt() * (sum_y2 - sum_y * sum_y / n).sqrt());
        assert!(corr.abs() < 0.05, "lag-1 correlation {corr}");
    }

    #[test]
    fn channel_draws_are_reproducible() {
        let mut a = stream(5, 1, Purpose::DownlinkChannel);
        let mut b = stream(5, 1, Purpose::DownlinkChannel);
        for _ in 0..10 {
            assert_eq!(draw_channel(4, 1.0, &mut a), draw_channel(4, 1.0, &mut b));
        }
    }

    #[test]
    fn frobenius_norm_scales_with_dimension() {
        let mut rng = stream(6, 0, Purpose::UplinkChannel);
        let f = 4;
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += draw_channel(f, 1.0, &mut rng).norm_squared();
        }
        let mean = acc / n as f64;
        assert!((mean - f as f64).abs() < 0.05 * f as f64, "E||H||^2 = {mean}");
    }

    #[test]
    fn transmit_requires_scheduling() {
        let link = scalar_link(1.0, 1.0, 1.0, 1.0);
        let mut rng = stream(7, 0, Purpose::UplinkRxNoise);
        let res = transmit(&link, &Vector::from_element(1, 1.0), &mut rng);
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn noiseless_identity_transmission_is_exact() {
        let mut link = LinkState::new(Direction::Uplink, 2, 1.0, 1e-300);
        link.h = Matrix::identity(2, 2);
        link.power = 1.0;
        link.alpha = true;
        let mut rng = stream(8, 0, Purpose::UplinkRxNoise);
        let signal = Vector::from_row_slice(&[0.4, -0.7]);
        let (received, xi) = transmit(&link, &signal, &mut rng).unwrap();
        assert!((received - &signal).norm() < 1e-9);
        assert!(xi);
    }

    #[test]
    fn below_threshold_power_fails() {
        // required power is th * N0 / ||H||^2 = 10 * 1 / 1 = 10
        let mut link = scalar_link(9.9, 1.0, 1.0, 10.0);
        link.alpha = true;
        let mut rng = stream(9, 0, Purpose::UplinkRxNoise);
        let (_, xi) = transmit(&link, &Vector::from_element(1, 1.0), &mut rng).unwrap();
        assert!(!xi);
        assert!(link.xi <= link.alpha);
    }

    #[test]
    fn receiver_noise_has_configured_covariance() {
        let n0 = 0.25;
        let mut link = LinkState::new(Direction::Downlink, 2, 1.0, n0);
        link.h = Matrix::identity(2, 2);
        link.power = 4.0;
        link.alpha = true;
        let mut rng = stream(10, 0, Purpose::DownlinkRxNoise);
        let signal = Vector::from_row_slice(&[1.0, -1.0]);
        let clean = &link.h * &signal * link.power.sqrt();
        let n = 10_000;
        let (mut var0, mut var1, mut cross) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let (received, _) = transmit(&link, &signal, &mut rng).unwrap();
            let e = received - &clean;
            var0 += e[0] * e[0];
            var1 += e[1] * e[1];
            cross += e[0] * e[1];
        }
        let n = n as f64;
        assert!((var0 / n - n0).abs() < 0.05 * n0);
        assert!((var1 / n - n0).abs() < 0.05 * n0);
        assert!((cross / n).abs() < 0.05 * n0);
    }
}
