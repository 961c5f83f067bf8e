//! The proposed scheduler: GPR banks at controller and actuator sides,
//! per-system virtual queues, closed-form auxiliaries, minimum-power
//! allocation and the min-weight link assignment.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::{
    aoi_auxiliary, allocate_power, assign_links, power_auxiliary, update_queues, Assignment,
    LinkCosts, Policy, QueueInputs, SchedulerKind, SchedulerParams, SlotDecision, SlotOutcome,
    SlotView, VirtualQueues,
};
use crate::estimation::{self, MmseResult};
use crate::numerics::{self, Matrix, Vector};
use crate::plant::LtiSystem;
use crate::prediction::{mirror_action_datum, GprBank, GprMode, KernelParams, SampleKind};
use crate::rng::{stream, Purpose};
use crate::stability;

struct SlotCache {
    /// Physical-unit prediction of the state, fed to the LQR fallback.
    x_hat: Vector,
    /// Bank-domain (normalized) predictions kept for recursive re-ingestion.
    x_hat_unit: Vector,
    u_hat_act_unit: Vector,
    u_hat_mirror_unit: Vector,
    /// Physical-unit action prediction applied by the actuator fallback.
    u_hat_actuator: Vector,
    var_u_mean: f64,
    var_d_mean: f64,
    glb_u: f64,
    glb_d: f64,
    glb_ud: f64,
    gamma_beta_u: f64,
    gamma_beta_d: f64,
    gamma_p_u: f64,
    gamma_p_d: f64,
    u_cmd: Vector,
}

pub struct StabilityAware {
    params: SchedulerParams,
    queues: Vec<VirtualQueues>,
    /// The banks model the unit-power normalized signals the links carry,
    /// matching the kernel scales; predictions are rescaled into plant units
    /// where the control loop needs them.
    state_banks: Vec<GprBank>,
    actuator_banks: Vec<GprBank>,
    /// Controller-side mirror of each actuator bank; shares its reception
    /// times, so its prediction variance equals the actuator's.
    mirror_banks: Vec<GprBank>,
    mirror_rngs: Vec<ChaCha12Rng>,
    amp_u: f64,
    amp_d: f64,
    cache: Vec<SlotCache>,
}

impl StabilityAware {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        sys: &LtiSystem,
        params: SchedulerParams,
        kernel: KernelParams,
        mode: GprMode,
        window: Option<usize>,
        amp_u: f64,
        amp_d: f64,
        master_seed: u64,
    ) -> Self {
        let d = sys.state_dim();
        let p = sys.action_dim();
        Self {
            params,
            queues: vec![VirtualQueues::default(); m],
            state_banks: (0..m).map(|_| GprBank::new(d, kernel, mode, window)).collect(),
            actuator_banks: (0..m).map(|_| GprBank::new(p, kernel, mode, window)).collect(),
            mirror_banks: (0..m).map(|_| GprBank::new(p, kernel, mode, window)).collect(),
            mirror_rngs: (0..m)
                .map(|i| stream(master_seed, i, Purpose::MirrorNoise))
                .collect(),
            amp_u,
            amp_d,
            cache: Vec::new(),
        }
    }

    pub fn queue_slice(&self) -> &[VirtualQueues] {
        &self.queues
    }
}

impl Policy for StabilityAware {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::StabilityAware
    }

    fn decide(&mut self, view: &SlotView) -> SlotDecision {
        let m = view.systems.len();
        let mut decision = SlotDecision::idle(m);
        let mut costs = LinkCosts {
            q1: vec![0.0; m],
            q2: vec![0.0; m],
            q3: vec![0.0; m],
            feasible_u: vec![false; m],
            feasible_d: vec![false; m],
        };
        let mut powers = vec![(0.0, 0.0); m];
        self.cache.clear();

        for (i, input) in view.systems.iter().enumerate() {
            let sys = input.sys;
            let q = &self.queues[i];
            if input.diverged {
                self.cache.push(SlotCache {
                    x_hat: Vector::zeros(sys.state_dim()),
                    x_hat_unit: Vector::zeros(sys.state_dim()),
                    u_hat_act_unit: Vector::zeros(sys.action_dim()),
                    u_hat_mirror_unit: Vector::zeros(sys.action_dim()),
                    u_hat_actuator: Vector::zeros(sys.action_dim()),
                    var_u_mean: 0.0,
                    var_d_mean: 0.0,
                    glb_u: 0.0,
                    glb_d: 0.0,
                    glb_ud: 0.0,
                    gamma_beta_u: 0.0,
                    gamma_beta_d: 0.0,
                    gamma_p_u: 0.0,
                    gamma_p_d: 0.0,
                    u_cmd: Vector::zeros(sys.action_dim()),
                });
                continue;
            }

            let x_pred = self.state_banks[i].predict_or_prior(view.slot);
            let u_pred_act = self.actuator_banks[i].predict_or_prior(view.slot);
            let u_pred_mirror = self.mirror_banks[i].predict_or_prior(view.slot);
            // prediction error covariances in plant units
            let j_u = x_pred.cov() * (self.amp_u * self.amp_u);
            let j_d = u_pred_mirror.cov() * (self.amp_d * self.amp_d);

            let (p_u, feas_u) =
                allocate_power(q.q_p_u, input.h_u, view.n0, view.snr_th_u, self.params.p_max_u);
            let (p_d, feas_d) =
                allocate_power(q.q_p_d, input.h_d, view.n0, view.snr_th_d, self.params.p_max_d);

            let sq_u = Matrix::identity(sys.state_dim(), sys.state_dim());
            let sq_d = Matrix::identity(sys.action_dim(), sys.action_dim());
            // candidate estimation error at the minimum feasible power, in
            // plant units (the amplitude normalization scales it back)
            let v_u = if p_u.is_finite() && p_u > 0.0 {
                estimation::mmse_error_cov(input.h_u, p_u, view.n0, &sq_u)
                    .unwrap_or_else(|_| sq_u.clone())
                    * (self.amp_u * self.amp_u)
            } else {
                sq_u.clone() * (self.amp_u * self.amp_u)
            };
            let v_d = if p_d.is_finite() && p_d > 0.0 {
                estimation::mmse_error_cov(input.h_d, p_d, view.n0, &sq_d)
                    .unwrap_or_else(|_| sq_d.clone())
                    * (self.amp_d * self.amp_d)
            } else {
                sq_d.clone() * (self.amp_d * self.amp_d)
            };

            let x_hat_plant = &x_pred.mean * self.amp_u;
            let bounds = stability::stability_bounds(sys, &x_hat_plant, &j_u, &j_d, &v_u, &v_d);

            let gamma_beta_u = aoi_auxiliary(q.q_beta_u, &self.params);
            let gamma_beta_d = aoi_auxiliary(q.q_beta_d, &self.params);
            let gamma_p_u = power_auxiliary(q.q_p_u, self.params.p_max_u, &self.params);
            let gamma_p_d = power_auxiliary(q.q_p_d, self.params.p_max_d, &self.params);

            costs.q1[i] = -q.q_beta_u * input.beta_u_prev as f64 - q.q_c_u + q.q_p_u * p_u;
            costs.q2[i] = -q.q_beta_d * input.beta_d_prev as f64 - q.q_c_d + q.q_p_d * p_d;
            costs.q3[i] = -q.q_c;
            costs.feasible_u[i] = feas_u;
            costs.feasible_d[i] = feas_d;
            powers[i] = (p_u, p_d);

            decision.gamma_beta_u[i] = gamma_beta_u;
            decision.gamma_beta_d[i] = gamma_beta_d;
            decision.gamma_p_u[i] = gamma_p_u;
            decision.gamma_p_d[i] = gamma_p_d;

            self.cache.push(SlotCache {
                x_hat: x_hat_plant,
                var_u_mean: x_pred.var.sum() / x_pred.var.len() as f64,
                var_d_mean: u_pred_mirror.var.sum() / u_pred_mirror.var.len() as f64,
                u_hat_actuator: &u_pred_act.mean * self.amp_d,
                x_hat_unit: x_pred.mean,
                u_hat_act_unit: u_pred_act.mean,
                u_hat_mirror_unit: u_pred_mirror.mean,
                glb_u: bounds.clamped_u,
                glb_d: bounds.clamped_d,
                glb_ud: bounds.clamped_ud,
                gamma_beta_u,
                gamma_beta_d,
                gamma_p_u,
                gamma_p_d,
                u_cmd: Vector::zeros(sys.action_dim()),
            });
        }

        let Assignment { ul, dl, .. } = assign_links(&costs);
        if let Some(u) = ul {
            decision.alpha_u[u] = true;
            decision.p_u[u] = powers[u].0;
        }
        if let Some(d) = dl {
            decision.alpha_d[d] = true;
            decision.p_d[d] = powers[d].1;
        }
        decision
    }

    fn controller_state(&self, i: usize) -> Vector {
        self.cache[i].x_hat.clone()
    }

    fn actuator_action(&self, i: usize) -> Vector {
        self.cache[i].u_hat_actuator.clone()
    }

    fn after_uplink(&mut self, i: usize, slot: i64, xi_u: bool, mmse: Option<&MmseResult>) {
        if xi_u {
            let est = &mmse.expect("uplink success carries an estimate").estimate / self.amp_u;
            self.state_banks[i]
                .ingest(slot, &est, SampleKind::Observed)
                .expect("slot times are strictly increasing");
        } else {
            let x_hat_unit = self.cache[i].x_hat_unit.clone();
            self.state_banks[i]
                .ingest(slot, &x_hat_unit, SampleKind::Predicted)
                .expect("slot times are strictly increasing");
        }
    }

    fn after_action(&mut self, i: usize, _slot: i64, u_cmd: &Vector) {
        self.cache[i].u_cmd = u_cmd.clone();
    }

    fn after_downlink(&mut self, i: usize, slot: i64, xi_d: bool, mmse: Option<&MmseResult>) {
        if xi_d {
            let res = mmse.expect("downlink success carries an estimate");
            let est = &res.estimate / self.amp_d;
            self.actuator_banks[i]
                .ingest(slot, &est, SampleKind::Observed)
                .expect("slot times are strictly increasing");
            // surrogate training datum: the computed action plus a fresh
            // error draw with the slot's estimation covariance
            let p = res.error_cov.nrows();
            let cov_unit = &res.error_cov / (self.amp_d * self.amp_d);
            let factor = numerics::psd_factor(&cov_unit).unwrap_or_else(|_| Matrix::zeros(p, p));
            let rng = &mut self.mirror_rngs[i];
            let z = Vector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let datum = mirror_action_datum(&(&self.cache[i].u_cmd / self.amp_d), &(factor * z));
            self.mirror_banks[i]
                .ingest(slot, &datum, SampleKind::Observed)
                .expect("slot times are strictly increasing");
        } else {
            let u_act = self.cache[i].u_hat_act_unit.clone();
            let u_mir = self.cache[i].u_hat_mirror_unit.clone();
            self.actuator_banks[i]
                .ingest(slot, &u_act, SampleKind::Predicted)
                .expect("slot times are strictly increasing");
            self.mirror_banks[i]
                .ingest(slot, &u_mir, SampleKind::Predicted)
                .expect("slot times are strictly increasing");
        }
    }

    fn end_slot(&mut self, outcome: &SlotOutcome) {
        for i in 0..self.queues.len() {
            if outcome.diverged[i] {
                continue;
            }
            let cache = &self.cache[i];
            let inputs = QueueInputs {
                beta_u: outcome.beta_u[i] as f64,
                beta_d: outcome.beta_d[i] as f64,
                p_hat_u: if outcome.alpha_u[i] { outcome.power_u[i] } else { 0.0 },
                p_hat_d: if outcome.alpha_d[i] { outcome.power_d[i] } else { 0.0 },
                alpha_u: outcome.alpha_u[i],
                alpha_d: outcome.alpha_d[i],
                glb_u: cache.glb_u,
                glb_d: cache.glb_d,
                glb_ud: cache.glb_ud,
                gamma_beta_u: cache.gamma_beta_u,
                gamma_beta_d: cache.gamma_beta_d,
                gamma_p_u: cache.gamma_p_u,
                gamma_p_d: cache.gamma_p_d,
            };
            update_queues(&mut self.queues[i], &inputs);
        }
    }

    fn queues(&self, i: usize) -> VirtualQueues {
        self.queues[i]
    }

    fn prediction_variances(&self, i: usize) -> (f64, f64) {
        (self.cache[i].var_u_mean, self.cache[i].var_d_mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::MmseResult;
    use crate::plant::pendulum_preset;
    use crate::prediction::GprMode;

    fn policy(m: usize) -> (StabilityAware, crate::plant::LtiSystem) {
        let sys = pendulum_preset().unwrap();
        let params = SchedulerParams {
            v: 1000.0,
            omega_beta: 1.0,
            omega_p: 1.0,
            b_max: 90.0,
            p_max_u: 100.0,
            p_max_d: 100.0,
        };
        let p = StabilityAware::new(
            m,
            &sys,
            params,
            KernelParams::default(),
            GprMode::Direct,
            None,
            1.0,
            1.0,
            7,
        );
        (p, sys)
    }

    fn drive_slot(
        policy: &mut StabilityAware,
        sys: &crate::plant::LtiSystem,
        slot: i64,
        xi_d: bool,
        u_cmd: f64,
        v_d: f64,
    ) {
        let h_u = Matrix::identity(4, 4);
        let h_d = Matrix::identity(1, 1);
        let x = Vector::zeros(4);
        let view = SlotView {
            slot,
            n0: 0.01,
            snr_th_u: 10.0,
            snr_th_d: 10.0,
            amp_u: 1.0,
            amp_d: 1.0,
            systems: vec![crate::scheduler::SystemSlotInput {
                sys,
                h_u: &h_u,
                h_d: &h_d,
                beta_u_prev: 1,
                beta_d_prev: 1,
                x_true: &x,
                diverged: false,
            }],
        };
        policy.decide(&view);
        policy.after_action(0, slot, &Vector::from_element(1, u_cmd));
        let mmse = xi_d.then(|| MmseResult {
            estimate: Vector::from_element(1, u_cmd + 0.01),
            error_cov: Matrix::from_element(1, 1, v_d),
            gain: Matrix::identity(1, 1),
        });
        policy.after_downlink(0, slot, xi_d, mmse.as_ref());
    }

    #[test]
    fn mirror_bank_shares_the_actuator_reception_times() {
        let (mut policy, sys) = policy(1);
        let trace = [true, false, true, true, false, false, true];
        for (slot, &xi_d) in trace.iter().enumerate() {
            drive_slot(&mut policy, &sys, slot as i64, xi_d, 0.3, 0.05);
        }
        assert_eq!(policy.mirror_banks[0].times(), policy.actuator_banks[0].times());
        assert_eq!(policy.mirror_banks[0].len(), 4);
    }

    #[test]
    fn mirror_error_samples_carry_the_estimation_covariance() {
        let sys = pendulum_preset().unwrap();
        let params = SchedulerParams {
            v: 1000.0,
            omega_beta: 1.0,
            omega_p: 1.0,
            b_max: 90.0,
            p_max_u: 100.0,
            p_max_d: 100.0,
        };
        let mut policy = StabilityAware::new(
            1,
            &sys,
            params,
            KernelParams::default(),
            GprMode::Direct,
            Some(4),
            1.0,
            1.0,
            7,
        );
        let v_d = 0.04;
        let u_cmd = 0.7;
        let n = 20_000usize;
        let mut acc = 0.0;
        for slot in 0..n {
            drive_slot(&mut policy, &sys, slot as i64, true, u_cmd, v_d);
            // newest surrogate datum minus the commanded action is one
            // draw of the downlink estimation error
            let stored = *policy.mirror_banks[0].values(0).last().unwrap();
            let diff = stored - u_cmd;
            acc += diff * diff;
        }
        let sample_var = acc / n as f64;
        assert!(
            (sample_var - v_d).abs() < 0.03 * v_d,
            "surrogate error variance {sample_var} vs V^d {v_d}"
        );
    }
}
