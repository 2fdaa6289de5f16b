//! Learning-rate schedules: third-order polynomial warmups with restarts,
//! and the two published training recipes in a desk-scalable form.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One warmup: lr climbs from 0 at `start` to `peak_lr` at
/// `start + warmup_len` along a cubic, then stays at `peak_lr` until the next
/// event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmupEvent {
    pub start: usize,
    pub peak_lr: f32,
    pub warmup_len: usize,
}

/// Which parameters a phase updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    All,
    AllExceptEmbeddings,
    EmbeddingsOnly,
}

impl Trainable {
    pub fn updates_network(self) -> bool {
        !matches!(self, Trainable::EmbeddingsOnly)
    }

    pub fn updates_embeddings(self) -> bool {
        !matches!(self, Trainable::AllExceptEmbeddings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub iterations: usize,
    pub trainable: Trainable,
    /// Absolute iteration indices.
    pub events: Vec<WarmupEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub phases: Vec<Phase>,
}

pub const PAPER_WARMUP_LEN: usize = 10_000;

/// Single-phase recipe for normally initialized embeddings: 500k iterations,
/// everything trainable, warmup restarts at 200k and 400k with decaying peaks.
pub fn normal_recipe() -> PhasePlan {
    PhasePlan {
        phases: vec![Phase {
            iterations: 500_000,
            trainable: Trainable::All,
            events: vec![
                WarmupEvent {
                    start: 0,
                    peak_lr: 3e-4,
                    warmup_len: PAPER_WARMUP_LEN,
                },
                WarmupEvent {
                    start: 200_000,
                    peak_lr: 7e-5,
                    warmup_len: PAPER_WARMUP_LEN,
                },
                WarmupEvent {
                    start: 400_000,
                    peak_lr: 1.75e-5,
                    warmup_len: PAPER_WARMUP_LEN,
                },
            ],
        }],
    }
}

/// Three-phase recipe for pre-trained embeddings: 400k iterations with the
/// embeddings frozen, 100k embeddings-only at the 7e-5 peak, then 175k of
/// joint finetuning with halving peaks (the fourth peak continues the
/// halving pattern).
pub fn pretrained_recipe() -> PhasePlan {
    let w = PAPER_WARMUP_LEN;
    PhasePlan {
        phases: vec![
            Phase {
                iterations: 400_000,
                trainable: Trainable::AllExceptEmbeddings,
                events: vec![
                    WarmupEvent {
                        start: 0,
                        peak_lr: 3e-4,
                        warmup_len: w,
                    },
                    WarmupEvent {
                        start: 200_000,
                        peak_lr: 1.5e-4,
                        warmup_len: w,
                    },
                    WarmupEvent {
                        start: 300_000,
                        peak_lr: 7e-5,
                        warmup_len: w,
                    },
                ],
            },
            Phase {
                iterations: 100_000,
                trainable: Trainable::EmbeddingsOnly,
                events: vec![
                    WarmupEvent {
                        start: 400_000,
                        peak_lr: 7e-5,
                        warmup_len: w,
                    },
                    WarmupEvent {
                        start: 450_000,
                        peak_lr: 7e-5,
                        warmup_len: w,
                    },
                ],
            },
            Phase {
                iterations: 175_000,
                trainable: Trainable::All,
                events: vec![
                    WarmupEvent {
                        start: 500_000,
                        peak_lr: 7e-5,
                        warmup_len: w,
                    },
                    WarmupEvent {
                        start: 550_000,
                        peak_lr: 3e-5,
                        warmup_len: w,
                    },
                    WarmupEvent {
                        start: 600_000,
                        peak_lr: 1.5e-5,
                        warmup_len: w,
                    },
                    WarmupEvent {
                        start: 650_000,
                        peak_lr: 7.5e-6,
                        warmup_len: w,
                    },
                ],
            },
        ],
    }
}

fn scale_len(v: usize, s: f64) -> usize {
    ((v as f64 * s).ceil() as usize).max(1)
}

impl PhasePlan {
    pub fn total_iterations(&self) -> usize {
        self.phases.iter().map(|p| p.iterations).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Config("plan has no phases".into()));
        }
        let mut start = 0usize;
        for (i, p) in self.phases.iter().enumerate() {
            if p.iterations == 0 {
                return Err(Error::Config(format!("phase {i} has zero iterations")));
            }
            let end = start + p.iterations;
            for e in &p.events {
                if e.start < start || e.start >= end {
                    return Err(Error::Config(format!(
                        "phase {i} event at {} outside [{start}, {end})",
                        e.start
                    )));
                }
                if e.warmup_len == 0 || e.peak_lr <= 0.0 {
                    return Err(Error::Config(format!("phase {i} has a degenerate event")));
                }
            }
            start = end;
        }
        Ok(())
    }

    pub fn phase_at(&self, iter: usize) -> Option<&Phase> {
        let mut start = 0usize;
        for p in &self.phases {
            if iter < start + p.iterations {
                return Some(p);
            }
            start += p.iterations;
        }
        None
    }

    /// Learning rate at an iteration: cubic within a warmup window,
    /// constant at the latest peak otherwise, 0 before the first event.
    pub fn lr_at(&self, iter: usize) -> f32 {
        let mut current: Option<&WarmupEvent> = None;
        for p in &self.phases {
            for e in &p.events {
                if e.start <= iter && current.map(|c| e.start >= c.start).unwrap_or(true) {
                    current = Some(e);
                }
            }
        }
        match current {
            None => 0.0,
            Some(e) => {
                if iter < e.start + e.warmup_len {
                    let t = (iter - e.start) as f64 / e.warmup_len as f64;
                    (e.peak_lr as f64 * t * t * t) as f32
                } else {
                    e.peak_lr
                }
            }
        }
    }

    /// Scales every iteration count (phase lengths, warmup lengths, event
    /// offsets within their phase) by `s`, rounding lengths up to at least 1.
    /// s = 1 reproduces the plan exactly.
    pub fn scaled(&self, s: f64) -> PhasePlan {
        if s == 1.0 {
            return self.clone();
        }
        let mut phases = Vec::new();
        let mut old_start = 0usize;
        let mut new_start = 0usize;
        for p in &self.phases {
            let new_len = scale_len(p.iterations, s);
            let events = p
                .events
                .iter()
                .map(|e| {
                    let offset = e.start - old_start;
                    let new_offset =
                        (((offset as f64) * s).ceil() as usize).min(new_len.saturating_sub(1));
                    WarmupEvent {
                        start: new_start + new_offset,
                        peak_lr: e.peak_lr,
                        warmup_len: scale_len(e.warmup_len, s),
                    }
                })
                .collect();
            phases.push(Phase {
                iterations: new_len,
                trainable: p.trainable,
                events,
            });
            old_start += p.iterations;
            new_start += new_len;
        }
        PhasePlan { phases }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_recipe_paper_values() {
        let plan = normal_recipe();
        plan.validate().unwrap();
        assert_eq!(plan.total_iterations(), 500_000);
        assert!((plan.lr_at(10_000) - 3e-4).abs() < 1e-10);
        assert!((plan.lr_at(210_000) - 7e-5).abs() < 1e-10);
        // halfway through a warmup: peak * 0.5^3
        assert!((plan.lr_at(5_000) - 3e-4 * 0.125).abs() < 1e-9);
        // plateau between events
        assert!((plan.lr_at(150_000) - 3e-4).abs() < 1e-10);
        assert!((plan.lr_at(399_999) - 7e-5).abs() < 1e-10);
        // restart resets towards the new peak
        assert!(plan.lr_at(400_000) == 0.0);
        assert!((plan.lr_at(410_000) - 1.75e-5).abs() < 1e-10);
    }

    #[test]
    fn pretrained_recipe_boundaries_and_masks() {
        let plan = pretrained_recipe();
        plan.validate().unwrap();
        assert_eq!(plan.total_iterations(), 675_000);
        assert_eq!(
            plan.phase_at(0).unwrap().trainable,
            Trainable::AllExceptEmbeddings
        );
        assert_eq!(
            plan.phase_at(399_999).unwrap().trainable,
            Trainable::AllExceptEmbeddings
        );
        assert_eq!(
            plan.phase_at(400_000).unwrap().trainable,
            Trainable::EmbeddingsOnly
        );
        assert_eq!(plan.phase_at(500_000).unwrap().trainable, Trainable::All);
        assert_eq!(plan.phase_at(674_999).unwrap().trainable, Trainable::All);
        assert!(plan.phase_at(675_000).is_none());
        // phase 2 keeps the 7e-5 peak
        assert!((plan.lr_at(420_000) - 7e-5).abs() < 1e-10);
        assert!((plan.lr_at(460_000) - 7e-5).abs() < 1e-10);
        // phase 3 fourth peak continues the halving pattern
        assert!((plan.lr_at(660_000) - 7.5e-6).abs() < 1e-10);
    }

    #[test]
    fn before_first_event_lr_is_zero() {
        let plan = PhasePlan {
            phases: vec![Phase {
                iterations: 100,
                trainable: Trainable::All,
                events: vec![WarmupEvent {
                    start: 50,
                    peak_lr: 1e-3,
                    warmup_len: 10,
                }],
            }],
        };
        assert_eq!(plan.lr_at(0), 0.0);
        assert_eq!(plan.lr_at(49), 0.0);
        assert!(plan.lr_at(55) > 0.0);
    }

    #[test]
    fn scaling_reproduces_ratios() {
        let s = 0.01;
        let plan = normal_recipe().scaled(s);
        plan.validate().unwrap();
        assert_eq!(plan.total_iterations(), 5_000);
        let e = &plan.phases[0].events;
        assert_eq!(e[0].warmup_len, 100);
        assert_eq!(e[1].start, 2_000);
        assert_eq!(e[2].start, 4_000);
        assert!((plan.lr_at(100) - 3e-4).abs() < 1e-10);

        let pre = pretrained_recipe().scaled(s);
        pre.validate().unwrap();
        assert_eq!(
            pre.phases.iter().map(|p| p.iterations).collect::<Vec<_>>(),
            vec![4_000, 1_000, 1_750]
        );

        // s = 1 is exact
        assert_eq!(normal_recipe().scaled(1.0), normal_recipe());
    }

    #[test]
    fn warmup_is_monotone_and_cubic() {
        let plan = normal_recipe();
        let mut prev = -1.0f32;
        for i in 0..=10_000usize {
            let lr = plan.lr_at(i);
            assert!(lr >= prev, "not monotone at {i}");
            let t = i as f64 / 10_000.0;
            let expected = (3e-4 * t * t * t) as f32;
            assert!((lr - expected).abs() < 1e-10, "not cubic at {i}");
            prev = lr;
        }
    }

    #[test]
    fn tiny_scale_rounds_lengths_up_to_one() {
        let plan = normal_recipe().scaled(1e-9);
        plan.validate().unwrap();
        assert_eq!(plan.total_iterations(), 1);
        assert_eq!(plan.phases[0].events[0].warmup_len, 1);
    }
}
