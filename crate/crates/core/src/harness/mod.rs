//! The per-slot simulation loop, metrics collection, seed sweeps and result
//! emission.

pub mod config;
pub mod output;

pub use config::RunConfig;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, Direction, LinkState};
use crate::control;
use crate::error::{Error, Result};
use crate::estimation::{self, MmseResult};
use crate::numerics::{Matrix, Vector};
use crate::plant;
use crate::rng::{stream, Purpose};
use crate::scheduler::{
    build_policy, SchedulerKind, SlotOutcome, SlotView, SystemSlotInput, VirtualQueues,
};

/// Error region on the pendulum angle used by the stability metrics.
pub const THETA_REGION: f64 = 0.05;

/// Tail window, in slots, over which the stability flag and tail mean are
/// evaluated.
pub const TAIL_WINDOW: usize = 30;

/// Which of the two indicators delivered in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopCase {
    Open,
    Sensing,
    Actuating,
    Closed,
}

impl LoopCase {
    pub fn from_indicators(xi_u: bool, xi_d: bool) -> Self {
        match (xi_u, xi_d) {
            (false, false) => LoopCase::Open,
            (true, false) => LoopCase::Sensing,
            (false, true) => LoopCase::Actuating,
            (true, true) => LoopCase::Closed,
        }
    }
}

/// One row of the per-slot record stream; column order is the documented
/// CSV layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub run_seed: u64,
    pub slot: i64,
    pub system: usize,
    pub x0: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub theta_abs: f64,
    pub action: f64,
    pub alpha_u: u8,
    pub alpha_d: u8,
    pub xi_u: u8,
    pub xi_d: u8,
    pub beta_u: u32,
    pub beta_d: u32,
    pub p_u: f64,
    pub p_d: f64,
    pub loop_case: LoopCase,
    pub q_beta_u: f64,
    pub q_beta_d: f64,
    pub q_p_u: f64,
    pub q_p_d: f64,
    pub q_c_u: f64,
    pub q_c_d: f64,
    pub q_c: f64,
    pub gpr_var_u_mean: f64,
    pub gpr_var_d_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSummary {
    pub system: usize,
    /// Delivered uplink/downlink transmissions over the horizon.
    pub comm_rate_u: f64,
    pub comm_rate_d: f64,
    pub mean_power_u: f64,
    pub mean_power_d: f64,
    pub mean_aoi_u: f64,
    pub mean_aoi_d: f64,
    /// Mean |theta| over the tail window.
    pub tail_mean_theta_abs: f64,
    /// Every tail slot inside the error region and never diverged.
    pub stable: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub systems: usize,
    pub slots: usize,
    pub tail_window: usize,
    pub theta_region: f64,
    pub per_system: Vec<SystemSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_traces: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aoi_u_traces: Option<Vec<Vec<u32>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aoi_d_traces: Option<Vec<Vec<u32>>>,
}

impl RunSummary {
    pub fn all_diverged(&self) -> bool {
        self.per_system.iter().all(|s| s.diverged)
    }
}

/// Undoes the transmit-side amplitude normalization on an MMSE result.
fn rescale_mmse(unit: MmseResult, amp: f64) -> MmseResult {
    MmseResult {
        estimate: unit.estimate * amp,
        error_cov: unit.error_cov * amp * amp,
        gain: unit.gain * amp,
    }
}

/// Runs one seeded simulation and returns the summary plus the full record
/// stream.
pub fn run(cfg: &RunConfig) -> Result<(RunSummary, Vec<StepRecord>)> {
    cfg.validate()?;
    let sys = cfg.build_system()?;
    let m = cfg.systems;
    let k_max = cfg.slots as i64;
    let seed = cfg.seed;
    let d = sys.state_dim();
    let p_dim = sys.action_dim();

    let n0 = cfg.n0_linear();
    let snr_th = cfg.snr_threshold_linear();
    let variance_scale = cfg.channel.variance_scale;
    let amp_u = cfg.channel.amp_state;
    let amp_d = cfg.channel.amp_action;
    let ideal = cfg.scheduler == SchedulerKind::Ideal;

    let mut policy = build_policy(
        cfg.scheduler,
        m,
        &sys,
        cfg.scheduler_params(),
        cfg.kernel_params(),
        cfg.gpr_mode()?,
        cfg.gpr_window(),
        amp_u,
        amp_d,
        cfg.scheduler_params.trigger_threshold,
        seed,
    );

    let x0 = cfg.initial_state(d)?;
    let mut x: Vec<Vector> = vec![x0; m];
    let mut diverged = vec![false; m];
    let mut links_u: Vec<LinkState> = (0..m)
        .map(|_| LinkState::new(Direction::Uplink, d, snr_th, n0))
        .collect();
    let mut links_d: Vec<LinkState> = (0..m)
        .map(|_| LinkState::new(Direction::Downlink, p_dim, snr_th, n0))
        .collect();

    let mut rng_plant: Vec<_> = (0..m).map(|i| stream(seed, i, Purpose::PlantNoise)).collect();
    let mut rng_hu: Vec<_> = (0..m).map(|i| stream(seed, i, Purpose::UplinkChannel)).collect();
    let mut rng_hd: Vec<_> = (0..m).map(|i| stream(seed, i, Purpose::DownlinkChannel)).collect();
    let mut rng_nu: Vec<_> = (0..m).map(|i| stream(seed, i, Purpose::UplinkRxNoise)).collect();
    let mut rng_nd: Vec<_> = (0..m).map(|i| stream(seed, i, Purpose::DownlinkRxNoise)).collect();

    let sq_u = Matrix::identity(d, d);
    let sq_d = Matrix::identity(p_dim, p_dim);

    let mut records = Vec::with_capacity(m * cfg.slots);
    let keep_traces = cfg.metrics.traces;
    let mut theta_traces = vec![Vec::with_capacity(cfg.slots); m];
    let mut aoi_u_traces = vec![Vec::with_capacity(cfg.slots); m];
    let mut aoi_d_traces = vec![Vec::with_capacity(cfg.slots); m];

    for slot in 0..k_max {
        // fading blocks are redrawn every slot for every system
        for i in 0..m {
            links_u[i].h = channel::draw_channel(d, variance_scale, &mut rng_hu[i]);
            links_d[i].h = channel::draw_channel(p_dim, variance_scale, &mut rng_hd[i]);
        }

        let view = SlotView {
            slot,
            n0,
            snr_th_u: snr_th,
            snr_th_d: snr_th,
            amp_u,
            amp_d,
            systems: (0..m)
                .map(|i| SystemSlotInput {
                    sys: &sys,
                    h_u: &links_u[i].h,
                    h_d: &links_d[i].h,
                    beta_u_prev: links_u[i].beta,
                    beta_d_prev: links_d[i].beta,
                    x_true: &x[i],
                    diverged: diverged[i],
                })
                .collect(),
        };
        let decision = policy.decide(&view);
        if cfg.scheduler.is_contention() {
            assert!(
                decision.scheduled_u() <= 1 && decision.scheduled_d() <= 1,
                "contention scheduler granted more than one system per direction"
            );
        }

        // uplink phase
        let mut xi_u = vec![false; m];
        let mut mmse_u: Vec<Option<MmseResult>> = vec![None; m];
        for i in 0..m {
            if diverged[i] {
                continue;
            }
            links_u[i].alpha = decision.alpha_u[i];
            links_u[i].power = decision.p_u[i];
            if ideal {
                xi_u[i] = decision.alpha_u[i];
            } else if decision.alpha_u[i] {
                // analog amplitude normalization: transmit near unit power,
                // undo the scale after estimation
                let signal = &x[i] / amp_u;
                let (y, ok) = channel::transmit(&links_u[i], &signal, &mut rng_nu[i])?;
                if ok {
                    let unit =
                        estimation::mmse_estimate(&y, &links_u[i].h, links_u[i].power, n0, &sq_u)?;
                    mmse_u[i] = Some(rescale_mmse(unit, amp_u));
                    xi_u[i] = true;
                }
            }
            links_u[i].xi = xi_u[i];
            policy.after_uplink(i, slot, xi_u[i], mmse_u[i].as_ref());
        }

        // controller phase
        let mut u_cmd: Vec<Vector> = vec![Vector::zeros(p_dim); m];
        for i in 0..m {
            if diverged[i] {
                continue;
            }
            let x_c = if ideal {
                x[i].clone()
            } else {
                let fallback = policy.controller_state(i);
                match &mmse_u[i] {
                    Some(res) => control::select_controller_state(xi_u[i], &res.estimate, &fallback),
                    None => fallback,
                }
            };
            u_cmd[i] = control::compute_action(&sys, &x_c);
            policy.after_action(i, slot, &u_cmd[i]);
        }

        // downlink phase
        let mut xi_d = vec![false; m];
        let mut mmse_d: Vec<Option<MmseResult>> = vec![None; m];
        let mut u_applied: Vec<Vector> = vec![Vector::zeros(p_dim); m];
        for i in 0..m {
            if diverged[i] {
                continue;
            }
            links_d[i].alpha = decision.alpha_d[i];
            links_d[i].power = decision.p_d[i];
            if ideal {
                xi_d[i] = decision.alpha_d[i];
            } else if decision.alpha_d[i] {
                let signal = &u_cmd[i] / amp_d;
                let (y, ok) = channel::transmit(&links_d[i], &signal, &mut rng_nd[i])?;
                if ok {
                    let unit =
                        estimation::mmse_estimate(&y, &links_d[i].h, links_d[i].power, n0, &sq_d)?;
                    mmse_d[i] = Some(rescale_mmse(unit, amp_d));
                    xi_d[i] = true;
                }
            }
            links_d[i].xi = xi_d[i];
            policy.after_downlink(i, slot, xi_d[i], mmse_d[i].as_ref());
            u_applied[i] = if ideal {
                u_cmd[i].clone()
            } else {
                let fallback = policy.actuator_action(i);
                match &mmse_d[i] {
                    Some(res) => control::select_actuator_action(xi_d[i], &res.estimate, &fallback),
                    None => fallback,
                }
            };
        }

        // AoI update before the records so the snapshot carries this slot's age
        for i in 0..m {
            if diverged[i] {
                continue;
            }
            channel::update_aoi(&mut links_u[i], slot);
            channel::update_aoi(&mut links_d[i], slot);
        }

        let outcome = SlotOutcome {
            slot,
            alpha_u: decision.alpha_u.clone(),
            alpha_d: decision.alpha_d.clone(),
            xi_u: xi_u.clone(),
            xi_d: xi_d.clone(),
            beta_u: links_u.iter().map(|l| l.beta).collect(),
            beta_d: links_d.iter().map(|l| l.beta).collect(),
            power_u: decision.p_u.clone(),
            power_d: decision.p_d.clone(),
            diverged: diverged.clone(),
        };
        policy.end_slot(&outcome);

        // records carry the state the sensors saw this slot
        for i in 0..m {
            let q: VirtualQueues = policy.queues(i);
            let (var_u, var_d) = if diverged[i] {
                (0.0, 0.0)
            } else {
                policy.prediction_variances(i)
            };
            let theta_abs = if d >= 3 { x[i][2].abs() } else { 0.0 };
            records.push(StepRecord {
                run_seed: seed,
                slot,
                system: i,
                x0: *x[i].get(0).unwrap_or(&0.0),
                x1: *x[i].get(1).unwrap_or(&0.0),
                x2: *x[i].get(2).unwrap_or(&0.0),
                x3: *x[i].get(3).unwrap_or(&0.0),
                theta_abs,
                action: *u_applied[i].get(0).unwrap_or(&0.0),
                alpha_u: u8::from(decision.alpha_u[i] && !diverged[i]),
                alpha_d: u8::from(decision.alpha_d[i] && !diverged[i]),
                xi_u: u8::from(xi_u[i]),
                xi_d: u8::from(xi_d[i]),
                beta_u: links_u[i].beta,
                beta_d: links_d[i].beta,
                p_u: if diverged[i] { 0.0 } else { decision.p_u[i] },
                p_d: if diverged[i] { 0.0 } else { decision.p_d[i] },
                loop_case: LoopCase::from_indicators(xi_u[i], xi_d[i]),
                q_beta_u: q.q_beta_u,
                q_beta_d: q.q_beta_d,
                q_p_u: q.q_p_u,
                q_p_d: q.q_p_d,
                q_c_u: q.q_c_u,
                q_c_d: q.q_c_d,
                q_c: q.q_c,
                gpr_var_u_mean: var_u,
                gpr_var_d_mean: var_d,
            });
            if keep_traces {
                theta_traces[i].push(theta_abs);
                aoi_u_traces[i].push(links_u[i].beta);
                aoi_d_traces[i].push(links_d[i].beta);
            }
        }

        // plant step
        for i in 0..m {
            if diverged[i] {
                continue;
            }
            let noise = plant::draw_plant_noise(&sys, &mut rng_plant[i]);
            x[i] = plant::step(&sys, &x[i], &u_applied[i], &noise)?;
            if plant::is_diverged(&x[i]) {
                diverged[i] = true;
            }
        }
    }

    let summary = summarize(cfg, &records, &diverged, keep_traces, theta_traces, aoi_u_traces, aoi_d_traces);
    Ok((summary, records))
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    cfg: &RunConfig,
    records: &[StepRecord],
    diverged: &[bool],
    keep_traces: bool,
    theta_traces: Vec<Vec<f64>>,
    aoi_u_traces: Vec<Vec<u32>>,
    aoi_d_traces: Vec<Vec<u32>>,
) -> RunSummary {
    let m = cfg.systems;
    let k = cfg.slots;
    let tail = TAIL_WINDOW.min(k);
    let mut per_system = Vec::with_capacity(m);
    for i in 0..m {
        let rows: Vec<&StepRecord> = records.iter().filter(|r| r.system == i).collect();
        let xi_u: usize = rows.iter().map(|r| r.xi_u as usize).sum();
        let xi_d: usize = rows.iter().map(|r| r.xi_d as usize).sum();
        let kf = k as f64;
        let tail_rows = &rows[k - tail..];
        let tail_mean = tail_rows.iter().map(|r| r.theta_abs).sum::<f64>() / tail as f64;
        let stable =
            !diverged[i] && tail_rows.iter().all(|r| r.theta_abs <= THETA_REGION);
        per_system.push(SystemSummary {
            system: i,
            comm_rate_u: xi_u as f64 / kf,
            comm_rate_d: xi_d as f64 / kf,
            mean_power_u: rows.iter().map(|r| r.p_u * r.alpha_u as f64).sum::<f64>() / kf,
            mean_power_d: rows.iter().map(|r| r.p_d * r.alpha_d as f64).sum::<f64>() / kf,
            mean_aoi_u: rows.iter().map(|r| r.beta_u as f64).sum::<f64>() / kf,
            mean_aoi_d: rows.iter().map(|r| r.beta_d as f64).sum::<f64>() / kf,
            tail_mean_theta_abs: tail_mean,
            stable,
            diverged: diverged[i],
        });
    }
    RunSummary {
        seed: cfg.seed,
        scheduler: cfg.scheduler,
        systems: m,
        slots: k,
        tail_window: tail,
        theta_region: THETA_REGION,
        per_system,
        theta_traces: keep_traces.then_some(theta_traces),
        aoi_u_traces: keep_traces.then_some(aoi_u_traces),
        aoi_d_traces: keep_traces.then_some(aoi_d_traces),
    }
}

/// Aggregates over independent seeded runs of one configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scheduler: SchedulerKind,
    pub systems: usize,
    pub slots: usize,
    pub seeds: Vec<u64>,
    /// Systems whose stability flag held in every seed.
    pub served_count: usize,
    /// Mean |theta| per system per slot across seeds.
    pub mean_theta_trace: Vec<Vec<f64>>,
    /// Histogram of per-(system, seed) delivered communication rates in ten
    /// bins of width 0.1 over [0, 1].
    pub rate_hist_u: Vec<u32>,
    pub rate_hist_d: Vec<u32>,
    /// Delivered communication rates indexed [seed][system].
    pub comm_rates_u: Vec<Vec<f64>>,
    pub comm_rates_d: Vec<Vec<f64>>,
    pub per_seed: Vec<RunSummary>,
}

/// Runs one configuration across seeds (in parallel) and aggregates.
pub fn sweep(cfg: &RunConfig, seeds: &[u64]) -> Result<SweepSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let summaries: Vec<RunSummary> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            c.metrics.traces = true;
            run(&c).map(|(summary, _)| summary)
        })
        .collect::<Result<Vec<_>>>()?;

    let m = cfg.systems;
    let k = cfg.slots;
    let served_count = (0..m)
        .filter(|&i| summaries.iter().all(|s| s.per_system[i].stable))
        .count();

    let mut mean_theta = vec![vec![0.0f64; k]; m];
    for s in &summaries {
        let traces = s.theta_traces.as_ref().expect("sweep keeps traces");
        for i in 0..m {
            for (slot, v) in traces[i].iter().enumerate() {
                mean_theta[i][slot] += v / seeds.len() as f64;
            }
        }
    }

    let mut rate_hist_u = vec![0u32; 10];
    let mut rate_hist_d = vec![0u32; 10];
    let mut comm_rates_u = Vec::with_capacity(seeds.len());
    let mut comm_rates_d = Vec::with_capacity(seeds.len());
    for s in &summaries {
        let ru: Vec<f64> = s.per_system.iter().map(|p| p.comm_rate_u).collect();
        let rd: Vec<f64> = s.per_system.iter().map(|p| p.comm_rate_d).collect();
        for &r in &ru {
            rate_hist_u[((r * 10.0).floor() as usize).min(9)] += 1;
        }
        for &r in &rd {
            rate_hist_d[((r * 10.0).floor() as usize).min(9)] += 1;
        }
        comm_rates_u.push(ru);
        comm_rates_d.push(rd);
    }

    Ok(SweepSummary {
        scheduler: cfg.scheduler,
        systems: m,
        slots: k,
        seeds: seeds.to_vec(),
        served_count,
        mean_theta_trace: mean_theta,
        rate_hist_u,
        rate_hist_d,
        comm_rates_u,
        comm_rates_d,
        per_seed: summaries,
    })
}
