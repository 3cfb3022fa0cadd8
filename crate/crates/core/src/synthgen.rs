//! Synthetic pedestrian-vehicle episodes.
//!
//! A pedestrian moves along the lateral axis towards a curb at `x = 0`
//! while vehicles approach in the near (left) lane. Whether the pedestrian
//! crosses follows a gap-acceptance rule: they walk on only when the
//! nearest vehicle is farther than `gap_threshold_m` as they reach the curb.
//!
//! Each frame carries 34 features. The 27 motion features are quadratic
//! fits to the lateral displacement (in pixels) of nine box points over
//! the last `τ` frames. Three spatial flags say whether a point 0.25 m
//! behind, at, or 0.25 m ahead of the pedestrian lies on the road. The
//! last four are `(ncl, ncr, nclf, ncrf)`: the depth of the nearest vehicle
//! in each lane (−1 when none is within 80 m) and its image flow.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{fit_quadratic, label_with_pred_ahead, DEFAULT_TAU, MOTION_DIM, NUM_POINTS};
use crate::seqmodel::{Dataset, Frame, Sequence, SequenceType};

pub const MOTION_COLUMNS: Range<usize> = 0..MOTION_DIM;
pub const SPATIAL_COLUMNS: Range<usize> = MOTION_DIM..MOTION_DIM + 3;
pub const VEHICLE_COLUMNS: Range<usize> = MOTION_DIM + 3..MOTION_DIM + 7;
pub const FEATURE_DIM: usize = MOTION_DIM + 7;

const PX_PER_M: f64 = 30.0;
const FLOW_FOCAL_PX: f64 = 100.0;
const VISIBLE_RANGE_M: f64 = 80.0;
/// Crossers only see gaps this much wider than the acceptance threshold.
const CLEAR_MARGIN_M: f64 = 25.0;
const SPATIAL_OFFSETS_M: [f64; 3] = [-0.25, 0.0, 0.25];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub continuous_crossing: usize,
    pub stopping: usize,
    pub standing: usize,
    pub starting: usize,
}

impl TypeCounts {
    pub fn uniform(n: usize) -> Self {
        Self {
            continuous_crossing: n,
            stopping: n,
            standing: n,
            starting: n,
        }
    }

    pub fn total(&self) -> usize {
        self.continuous_crossing + self.stopping + self.standing + self.starting
    }

    fn entries(&self) -> [(SequenceType, usize); 4] {
        [
            (SequenceType::ContinuousCrossing, self.continuous_crossing),
            (SequenceType::Stopping, self.stopping),
            (SequenceType::Standing, self.standing),
            (SequenceType::Starting, self.starting),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub counts: TypeCounts,
    pub framerate_fps: f64,
    /// Inclusive range of episode lengths in frames.
    pub duration_frames: (usize, usize),
    pub gap_threshold_m: f64,
    /// Std of the per-point, per-frame displacement noise in pixels.
    pub motion_noise_px: f64,
    /// Std of the vehicle depth noise in metres.
    pub depth_noise_m: f64,
    pub pred_ahead: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            counts: TypeCounts::uniform(10),
            framerate_fps: 15.0,
            duration_frames: (60, 90),
            gap_threshold_m: 20.0,
            motion_noise_px: 0.3,
            depth_noise_m: 0.3,
            pred_ahead: 20,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.counts.total() == 0 {
            return bad("at least one episode count must be positive".into());
        }
        if !(self.framerate_fps > 0.0) {
            return bad(format!("framerate must be positive, got {}", self.framerate_fps));
        }
        if !(self.gap_threshold_m > 0.0) {
            return bad(format!("gap threshold must be positive, got {}", self.gap_threshold_m));
        }
        if !(self.motion_noise_px >= 0.0 && self.depth_noise_m >= 0.0) {
            return bad("noise scales must be non-negative".into());
        }
        let (lo, hi) = self.duration_frames;
        if lo < 40 || hi < lo {
            return bad(format!("duration range {lo}..={hi} must satisfy 40 <= lo <= hi"));
        }
        Ok(())
    }
}

/// A vehicle approaching the crossing line: distance at frame `k` is
/// `d0 − k·v/fps`.
#[derive(Clone, Copy, Debug)]
struct Vehicle {
    d0: f64,
    speed: f64,
}

impl Vehicle {
    fn distance(&self, k: f64, fps: f64) -> f64 {
        self.d0 - k * self.speed / fps
    }
}

/// Ground truth of one episode. Index `i` of the arrays is output frame
/// `i − preroll`.
struct Episode {
    x: Vec<f64>,
    left: Vec<Vec<Vehicle>>,
    right: Option<Vehicle>,
    event: usize,
    len: usize,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    rng: ChaCha8Rng,
    preroll: usize,
}

impl Sim<'_> {
    fn fps(&self) -> f64 {
        self.cfg.framerate_fps
    }

    fn walk_step(&mut self) -> f64 {
        self.rng.gen_range(1.1..1.6) / self.fps()
    }

    fn vehicle_speed(&mut self) -> f64 {
        self.rng.gen_range(6.0..12.0)
    }

    fn length(&mut self) -> usize {
        let (lo, hi) = self.cfg.duration_frames;
        self.rng.gen_range(lo..=hi)
    }

    /// Positions from per-frame steps, anchored so that `x[anchor] = at`.
    fn integrate(steps: &[f64], anchor: usize, at: f64) -> Vec<f64> {
        let mut x = vec![0.0; steps.len()];
        for i in 1..steps.len() {
            x[i] = x[i - 1] + steps[i];
        }
        let shift = at - x[anchor];
        x.iter().map(|v| v + shift).collect()
    }

    fn right_lane(&mut self) -> Option<Vehicle> {
        if self.rng.gen_bool(0.5) {
            Some(Vehicle {
                d0: self.rng.gen_range(20.0..100.0),
                speed: self.vehicle_speed(),
            })
        } else {
            None
        }
    }

    fn crossing(&mut self) -> Episode {
        let len = self.length();
        let p = self.preroll;
        let event = self.rng.gen_range(len * 2 / 5..=len * 3 / 4);
        let step = self.walk_step();
        let x = Self::integrate(&vec![step; p + len], p + event, 0.0);
        let fps = self.fps();
        let left = if self.rng.gen_bool(0.5) {
            let at_curb = self.rng.gen_range(self.cfg.gap_threshold_m + CLEAR_MARGIN_M..VISIBLE_RANGE_M);
            let speed = self.vehicle_speed();
            let v = Vehicle {
                d0: at_curb + (p + event) as f64 * speed / fps,
                speed,
            };
            vec![vec![v]; p + len]
        } else {
            vec![Vec::new(); p + len]
        };
        Episode {
            x,
            left,
            right: self.right_lane(),
            event,
            len,
        }
    }

    fn stopping(&mut self) -> Episode {
        let fps = self.fps();
        let p = self.preroll;
        let speed = self.vehicle_speed();
        let after = self.rng.gen_range(8..=14usize);
        let len = self.length().max(35 + after + 1);
        let event = len - 1 - after;
        let ramp = self.rng.gen_range(5..=8usize);
        let step = self.walk_step();
        let steps: Vec<f64> = (0..p + len)
            .map(|i| {
                let k = i as f64 - p as f64;
                let e = event as f64;
                if k <= e - ramp as f64 {
                    step
                } else if k <= e {
                    step * (e - k) / ramp as f64
                } else {
                    0.0
                }
            })
            .collect();
        let stop_at = -self.rng.gen_range(0.05..0.3);
        let x = Self::integrate(&steps, p + event, stop_at);
        // the vehicle is still short of the crossing line when the episode ends
        let min_gap = (after + 2) as f64 * speed / fps + 1.0;
        let at_event = self.rng.gen_range(min_gap.max(4.0)..self.cfg.gap_threshold_m - 1.0);
        let v = Vehicle {
            d0: at_event + (p + event) as f64 * speed / fps,
            speed,
        };
        Episode {
            x,
            left: vec![vec![v]; p + len],
            right: self.right_lane(),
            event,
            len,
        }
    }

    fn starting(&mut self) -> Episode {
        let fps = self.fps();
        let p = self.preroll;
        let len = self.length();
        let wait = self.rng.gen_range(1.0..1.7);
        let wait_frames = (wait * fps).round() as usize;
        let event = self.rng.gen_range((len / 2).max(wait_frames + 12)..=len - 12);
        let pass = event - wait_frames;
        let ramp = self.rng.gen_range(4..=7usize);
        let step = self.walk_step();
        let steps: Vec<f64> = (0..p + len)
            .map(|i| {
                let k = i as f64 - p as f64;
                let e = event as f64;
                if k <= e {
                    0.0
                } else if k < e + ramp as f64 {
                    step * (k - e) / ramp as f64
                } else {
                    step
                }
            })
            .collect();
        let x = Self::integrate(&steps, p + event, -self.rng.gen_range(0.05..0.3));
        let speed = self.vehicle_speed();
        let v = Vehicle {
            d0: (p + pass) as f64 * speed / fps,
            speed,
        };
        Episode {
            x,
            left: vec![vec![v]; p + len],
            right: self.right_lane(),
            event,
            len,
        }
    }

    fn standing(&mut self) -> Episode {
        let fps = self.fps();
        let p = self.preroll;
        let len = self.length();
        let x = vec![-self.rng.gen_range(0.05..0.5); p + len];
        let critical = self.rng.gen_range(len * 3 / 10..=len * 7 / 10);
        let speed = self.vehicle_speed();
        let first = Vehicle {
            d0: self.cfg.gap_threshold_m - 0.01 + (p + critical) as f64 * speed / fps,
            speed,
        };
        // a new vehicle enters as soon as the previous one passes
        let mut stream = vec![first];
        let mut frame_lists = Vec::with_capacity(p + len);
        let mut start = 0usize;
        for i in 0..p + len {
            let current = *stream.last().expect("non-empty stream");
            if current.distance((i - start) as f64, fps) <= 0.0 {
                let speed = self.vehicle_speed();
                stream.push(Vehicle {
                    d0: self.rng.gen_range(25.0..60.0),
                    speed,
                });
                start = i;
            }
            let v = *stream.last().expect("non-empty stream");
            frame_lists.push(vec![Vehicle {
                d0: v.d0 + start as f64 * v.speed / fps,
                speed: v.speed,
            }]);
        }
        Episode {
            x,
            left: frame_lists,
            right: self.right_lane(),
            event: critical,
            len,
        }
    }
}

/// `(depth, flow)` of the nearest visible vehicle among `vehicles`.
fn nearest(vehicles: &[Vehicle], k: f64, fps: f64) -> Option<(f64, f64)> {
    vehicles
        .iter()
        .map(|v| (v.distance(k, fps), v.speed))
        .filter(|(d, _)| *d > 0.0 && *d <= VISIBLE_RANGE_M)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(d, s)| (d, FLOW_FOCAL_PX * s / (fps * d.max(3.0))))
}

fn render(ep: &Episode, kind: SequenceType, id: String, cfg: &ScenarioConfig, preroll: usize, rng: &mut ChaCha8Rng) -> Result<Sequence> {
    let fps = cfg.framerate_fps;
    let motion_noise = Normal::new(0.0, cfg.motion_noise_px).expect("valid std");
    let depth_noise = Normal::new(0.0, cfg.depth_noise_m).expect("valid std");
    let n = ep.x.len();
    // measured displacement of every point, drawn once per frame
    let disp: Vec<[f64; NUM_POINTS]> = (0..n)
        .map(|i| {
            let true_px = if i == 0 { 0.0 } else { (ep.x[i] - ep.x[i - 1]) * PX_PER_M };
            std::array::from_fn(|_| true_px + motion_noise.sample(rng))
        })
        .collect();
    let tau = DEFAULT_TAU;
    let mut frames = Vec::with_capacity(ep.len);
    for k in 0..ep.len {
        let i = k + preroll;
        let mut x = vec![0.0; FEATURE_DIM];
        for p in 0..NUM_POINTS {
            let series: Vec<f64> = (i + 2 - tau..=i).map(|j| disp[j][p]).collect();
            let coeffs = fit_quadratic(&series)?;
            for (c, v) in coeffs.iter().enumerate() {
                x[c * NUM_POINTS + p] = *v;
            }
        }
        for (slot, off) in x[SPATIAL_COLUMNS].iter_mut().zip(SPATIAL_OFFSETS_M) {
            *slot = if ep.x[i] + off >= 0.0 { 1.0 } else { 0.0 };
        }
        let left = nearest(&ep.left[i], i as f64, fps);
        let right = ep.right.and_then(|v| nearest(&[v], i as f64, fps));
        let vehicle = &mut x[VEHICLE_COLUMNS];
        for (lane, near) in [left, right].into_iter().enumerate() {
            match near {
                Some((d, flow)) => {
                    vehicle[lane] = (d + depth_noise.sample(rng)).max(0.0);
                    vehicle[lane + 2] = flow;
                }
                None => {
                    vehicle[lane] = -1.0;
                    vehicle[lane + 2] = 0.0;
                }
            }
        }
        frames.push(Frame::unlabeled(k as i64, x));
    }
    let seq = Sequence::new(id, frames, kind, Some(ep.event))?;
    label_with_pred_ahead(&seq, cfg.pred_ahead)
}

/// Generates `config.counts` episodes of each type (crossing, stopping,
/// standing, starting, in that order), labeled with `config.pred_ahead`.
pub fn generate(config: &ScenarioConfig) -> Result<Dataset> {
    config.validate()?;
    let preroll = DEFAULT_TAU - 1;
    let mut sim = Sim {
        cfg: config,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        preroll,
    };
    let mut sequences = Vec::with_capacity(config.counts.total());
    for (kind, count) in config.counts.entries() {
        for n in 0..count {
            let ep = match kind {
                SequenceType::ContinuousCrossing => sim.crossing(),
                SequenceType::Stopping => sim.stopping(),
                SequenceType::Standing => sim.standing(),
                SequenceType::Starting => sim.starting(),
                SequenceType::Generic => unreachable!("generic episodes are never requested"),
            };
            let id = format!("{}-{n:03}", kind.as_str());
            sequences.push(render(&ep, kind, id, config, preroll, &mut sim.rng)?);
        }
    }
    Dataset::new(sequences, config.framerate_fps)
}

/// Adds `N(0, scales[j]²)` to feature column `j` of every frame.
pub fn inject_noise(dataset: &Dataset, scales: &[f64], seed: u64) -> Result<Dataset> {
    let dim = dataset.feature_dim().unwrap_or(0);
    if scales.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: scales.len(),
            context: "noise scales",
        });
    }
    if let Some(s) = scales.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::InvalidConfig(format!("noise scale {s} is negative")));
    }
    let dists: Vec<Normal<f64>> = scales.iter().map(|&s| Normal::new(0.0, s).expect("valid std")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequences = dataset
        .sequences()
        .iter()
        .map(|seq| {
            seq.map_features(|x| {
                x.iter()
                    .zip(&dists)
                    .zip(scales)
                    .map(|((v, d), &s)| if s == 0.0 { *v } else { v + d.sample(&mut rng) })
                    .collect()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sequences, dataset.framerate_fps())
}
