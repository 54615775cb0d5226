//! Repetition counter.
//!
//! Gravity is tracked by an exponential moving average of the raw vector. The
//! detection signal is `|a| - |g_est|`, smoothed by a moving average. A rep is
//! a crossing above `theta_up_mg` followed by a drop below `theta_down_mg`
//! with the interval between them inside `[rep_min_s, rep_max_s]`. After each
//! rep a refractory period suppresses re-triggering. Cost is O(1) per sample.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{AccelSample, DspError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepCounterConfig {
    pub fs_hz: f64,
    pub gravity_ema_alpha: f64,
    pub smooth_window_s: f64,
    pub theta_up_mg: f64,
    pub theta_down_mg: f64,
    pub rep_min_s: f64,
    pub rep_max_s: f64,
    pub refractory_s: f64,
}

impl Default for RepCounterConfig {
    fn default() -> Self {
        Self {
            fs_hz: 50.0,
            gravity_ema_alpha: 0.02,
            smooth_window_s: 0.3,
            theta_up_mg: 150.0,
            theta_down_mg: -100.0,
            rep_min_s: 1.0,
            rep_max_s: 10.0,
            refractory_s: 0.5,
        }
    }
}

impl RepCounterConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        let err = |m: &str| Err(DspError::Parameter(m.to_string()));
        if !(self.fs_hz > 0.0) {
            return err("fs_hz must be positive");
        }
        if !(self.gravity_ema_alpha > 0.0 && self.gravity_ema_alpha <= 1.0) {
            return err("gravity_ema_alpha must be in (0, 1]");
        }
        if !(self.smooth_window_s >= 0.0) {
            return err("smooth_window_s must be non-negative");
        }
        if !(self.theta_up_mg > 0.0 && 0.0 > self.theta_down_mg) {
            return err("thresholds must satisfy theta_up > 0 > theta_down");
        }
        if !(self.rep_min_s < self.rep_max_s) {
            return err("rep_min_s must be below rep_max_s");
        }
        if !(self.refractory_s >= 0.0) {
            return err("refractory_s must be non-negative");
        }
        Ok(())
    }

    fn smooth_len(&self) -> usize {
        ((self.smooth_window_s * self.fs_hz).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepEvent {
    /// Timestamp of the sample that completed the rep.
    pub t_ms: u32,
    pub duration_s: f64,
    pub peak_mg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Armed,
    Above { t_up: u32, peak: f64 },
    Refractory { until: u32 },
}

#[derive(Debug, Clone)]
pub struct RepCounter {
    config: RepCounterConfig,
    gravity: Option<[f64; 3]>,
    window: VecDeque<f64>,
    window_sum: f64,
    window_len: usize,
    prev_signal: Option<f64>,
    last_t: Option<u32>,
    phase: Phase,
    count: u32,
}

impl RepCounter {
    pub fn new(config: RepCounterConfig) -> Result<Self, DspError> {
        config.validate()?;
        let window_len = config.smooth_len();
        Ok(Self {
            config,
            gravity: None,
            window: VecDeque::with_capacity(window_len),
            window_sum: 0.0,
            window_len,
            prev_signal: None,
            last_t: None,
            phase: Phase::Armed,
            count: 0,
        })
    }

    pub fn config(&self) -> &RepCounterConfig {
        &self.config
    }

    /// Cumulative reps detected so far.
    pub fn count(&self) -> u32 {
        self.count
    }

    /// Latest smoothed detection signal in milli-g.
    pub fn signal(&self) -> Option<f64> {
        self.prev_signal
    }

    pub fn step(&mut self, s: AccelSample) -> Result<Option<RepEvent>, DspError> {
        if let Some(prev) = self.last_t {
            if s.t_ms <= prev {
                return Err(DspError::InputOrder { prev, got: s.t_ms });
            }
        }
        self.last_t = Some(s.t_ms);

        let raw = [s.x as f64, s.y as f64, s.z as f64];
        let alpha = self.config.gravity_ema_alpha;
        let g = match self.gravity {
            None => raw,
            Some(g) => [
                g[0] + alpha * (raw[0] - g[0]),
                g[1] + alpha * (raw[1] - g[1]),
                g[2] + alpha * (raw[2] - g[2]),
            ],
        };
        self.gravity = Some(g);
        let dynamic = norm(raw) - norm(g);

        self.window.push_back(dynamic);
        self.window_sum += dynamic;
        if self.window.len() > self.window_len {
            self.window_sum -= self.window.pop_front().unwrap_or(0.0);
        }
        let signal = self.window_sum / self.window.len() as f64;
        let prev = self.prev_signal.replace(signal);

        let cfg = &self.config;
        let mut event = None;
        self.phase = match self.phase {
            Phase::Refractory { until } if s.t_ms < until => self.phase,
            Phase::Refractory { .. } | Phase::Armed => {
                let crossed = prev.is_some_and(|p| p <= cfg.theta_up_mg) && signal > cfg.theta_up_mg;
                if crossed {
                    Phase::Above {
                        t_up: s.t_ms,
                        peak: signal,
                    }
                } else {
                    Phase::Armed
                }
            }
            Phase::Above { t_up, peak } => {
                let elapsed_s = (s.t_ms - t_up) as f64 / 1000.0;
                let peak = peak.max(signal);
                if signal < cfg.theta_down_mg {
                    if elapsed_s >= cfg.rep_min_s && elapsed_s <= cfg.rep_max_s {
                        self.count += 1;
                        event = Some(RepEvent {
                            t_ms: s.t_ms,
                            duration_s: elapsed_s,
                            peak_mg: peak,
                        });
                        let refractory_ms = (cfg.refractory_s * 1000.0).round() as u32;
                        Phase::Refractory {
                            until: s.t_ms.saturating_add(refractory_ms),
                        }
                    } else {
                        Phase::Armed
                    }
                } else if elapsed_s > cfg.rep_max_s {
                    Phase::Armed
                } else {
                    Phase::Above { t_up, peak }
                }
            }
        };
        Ok(event)
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
